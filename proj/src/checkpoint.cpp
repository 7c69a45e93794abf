#include "ctranatd/checkpoint.hpp"

#include "ctranatd/container.hpp"
#include "ctranatd/errors.hpp"

namespace ctranatd {

namespace {
constexpr std::string_view kMagic = "CTRCKPT1";
}

void write_checkpoint(const std::filesystem::path& path, std::span<const LayerParams* const> layers,
                      std::uint64_t seed, const nlohmann::json& metadata) {
  nlohmann::json header;
  header["format"] = "ctranatd-checkpoint";
  header["version"] = 1;
  header["seed"] = seed;
  header["metadata"] = metadata;
  header["layers"] = nlohmann::json::array();
  std::vector<double> payload;
  for (const auto* p : layers) {
    header["layers"].push_back(
        {{"name", p->name}, {"weight_shape", p->weight_shape}, {"bias_len", p->bias.size()}});
    payload.insert(payload.end(), p->weights.begin(), p->weights.end());
    payload.insert(payload.end(), p->bias.begin(), p->bias.end());
  }
  write_container(path, kMagic, header, payload);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  Container c = read_container(path, kMagic);
  CheckpointData data;
  try {
    data.seed = c.header.at("seed").get<std::uint64_t>();
    data.metadata = c.header.value("metadata", nlohmann::json::object());
    std::size_t off = 0;
    for (const auto& entry : c.header.at("layers")) {
      LayerParams p(entry.at("name").get<std::string>(),
                    entry.at("weight_shape").get<std::vector<std::size_t>>(),
                    entry.at("bias_len").get<std::size_t>());
      if (off + p.count() > c.payload.size()) throw IoError(path.string() + ": payload too short");
      std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(off), p.weights.size(), p.weights.begin());
      off += p.weights.size();
      std::copy_n(c.payload.begin() + static_cast<std::ptrdiff_t>(off), p.bias.size(), p.bias.begin());
      off += p.bias.size();
      data.layers.push_back(std::move(p));
    }
    if (off != c.payload.size()) throw IoError(path.string() + ": trailing payload values");
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  }
  return data;
}

void restore_params(const CheckpointData& data, std::span<LayerParams* const> targets) {
  if (data.layers.size() != targets.size()) {
    throw ConfigError("checkpoint has " + std::to_string(data.layers.size()) +
                      " parameter blocks, model has " + std::to_string(targets.size()));
  }
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& src = data.layers[i];
    auto* dst = targets[i];
    if (src.name != dst->name || src.weight_shape != dst->weight_shape ||
        src.bias.size() != dst->bias.size()) {
      throw ConfigError("checkpoint block '" + src.name + "' does not match model block '" +
                        dst->name + "'");
    }
    dst->weights = src.weights;
    dst->bias = src.bias;
    dst->zero_grads();
  }
}

}  // namespace ctranatd
