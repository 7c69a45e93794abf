#pragma once

#include <iostream>
#include <sstream>
#include <string_view>

namespace ctranatd::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

void set_level(Level level);
Level level();
void write(Level level, std::string_view msg);

template <typename... Args>
void emit(Level lvl, const Args&... args) {
  if (lvl < level()) return;
  std::ostringstream os;
  (os << ... << args);
  write(lvl, os.str());
}

template <typename... Args>
void debug(const Args&... args) { emit(Level::debug, args...); }
template <typename... Args>
void info(const Args&... args) { emit(Level::info, args...); }
template <typename... Args>
void warn(const Args&... args) { emit(Level::warn, args...); }
template <typename... Args>
void error(const Args&... args) { emit(Level::error, args...); }

}  // namespace ctranatd::log
