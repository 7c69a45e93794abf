#include "ctranatd/log.hpp"

#include <atomic>
#include <mutex>

namespace ctranatd::log {

namespace {
std::atomic<Level> g_level{Level::warn};
std::mutex g_mutex;

const char* tag(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "?";
}
}  // namespace

void set_level(Level l) { g_level.store(l); }
Level level() { return g_level.load(); }

void write(Level l, std::string_view msg) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag(l) << "] " << msg << '\n';
}

}  // namespace ctranatd::log
