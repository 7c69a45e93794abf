#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ctranatd {

// Self-describing file: 8-byte magic, little-endian u64 header length, a JSON
// header, then a flat little-endian float64 payload.
struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

void write_container(const std::filesystem::path& path, std::string_view magic,
                     const nlohmann::json& header, std::span<const double> payload);
Container read_container(const std::filesystem::path& path, std::string_view magic);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace ctranatd
