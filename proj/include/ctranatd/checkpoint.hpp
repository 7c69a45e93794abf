#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ctranatd/tensor.hpp"
#include "json.hpp"

namespace ctranatd {

// Per-layer (name, shape, values) plus free-form metadata (model config,
// feature schema) and the RNG seed. Round-trips float64 values bit-exactly.
struct CheckpointData {
  nlohmann::json metadata;
  std::uint64_t seed = 0;
  std::vector<LayerParams> layers;
};

void write_checkpoint(const std::filesystem::path& path, std::span<const LayerParams* const> layers,
                      std::uint64_t seed, const nlohmann::json& metadata);
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Copies stored values into `targets`, matching by position and checking
// names and shapes.
void restore_params(const CheckpointData& data, std::span<LayerParams* const> targets);

}  // namespace ctranatd
