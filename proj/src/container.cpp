#include "ctranatd/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ctranatd/errors.hpp"

namespace ctranatd {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
  return v;
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const nlohmann::json& header, std::span<const double> payload) {
  if (magic.size() != 8) throw InvalidArgument("container magic must be 8 bytes");
  const std::string head = header.dump();
  std::string out;
  out.reserve(16 + head.size() + payload.size() * 8);
  out.append(magic);
  put_u64(out, head.size());
  out.append(head);
  for (double d : payload) put_u64(out, std::bit_cast<std::uint64_t>(d));
  write_file_atomic(path, out);
}

Container read_container(const std::filesystem::path& path, std::string_view magic) {
  const std::string in = read_file(path);
  if (in.size() < 16 || std::string_view(in).substr(0, 8) != magic) {
    throw IoError(path.string() + ": not a '" + std::string(magic) + "' container");
  }
  const std::uint64_t head_len = get_u64(in, 8);
  if (16 + head_len > in.size() || (in.size() - 16 - head_len) % 8 != 0) {
    throw IoError(path.string() + ": truncated container");
  }
  Container c;
  try {
    c.header = nlohmann::json::parse(in.substr(16, head_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": bad header: " + e.what());
  }
  const std::size_t n = (in.size() - 16 - head_len) / 8;
  c.payload.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    c.payload[i] = std::bit_cast<double>(get_u64(in, 16 + head_len + 8 * i));
  return c;
}

}  // namespace ctranatd
