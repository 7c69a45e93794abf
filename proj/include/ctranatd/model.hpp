#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ctranatd/layers.hpp"
#include "json.hpp"

namespace ctranatd {

enum class Architecture { ctranatd, cnn, transformer, lstm };
enum class AttackPreset { dos, ddos, portscan };

std::string to_string(Architecture a);
std::string to_string(AttackPreset p);
Architecture parse_architecture(std::string_view s);
AttackPreset parse_preset(std::string_view s);

struct ModelConfig {
  Architecture architecture = Architecture::ctranatd;
  AttackPreset attack_preset = AttackPreset::dos;
  std::size_t window = 60;
  std::size_t input_features = 71;
  std::size_t cnn_filters = 64;
  std::size_t cnn_kernel = 5;
  std::size_t pool_size = 2;
  std::size_t head_size = 4;
  std::size_t head_number = 2;
  std::size_t ff_dim = 64;
  std::size_t transformer_blocks = 1;
  std::size_t mlp_hidden = 64;
  double dropout_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t lstm_hidden = 64;
  std::uint64_t seed = 0;

  // Per-attack hyperparameter rows: DoS uses a 5-tap kernel, DDoS and
  // PortScan a 3-tap kernel; everything else is shared.
  static ModelConfig preset(AttackPreset preset, Architecture arch = Architecture::ctranatd,
                            std::uint64_t seed = 0);

  // Throws ConfigError on zero sizes or out-of-range dropout.
  void validate() const;

  // Time length entering the transformer block (or the pooled CNN output).
  std::size_t pooled_time() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

std::size_t parameter_count(const ModelConfig& config);

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }

  // Returns one probability per batch element. The input is cached for backward().
  std::vector<double> forward(const Tensor3& batch, bool training);
  // Backpropagates d loss / d score through the last forward() call,
  // accumulating into parameter gradients.
  void backward(std::span<const double> score_grad);

  std::vector<LayerParams*> params() { return net_.params(); }
  std::vector<const LayerParams*> params() const;
  std::size_t parameter_count() const;
  void zero_grads();

  // The whole network as a single differentiable stage mapping (B,T,F) to
  // (B,1,1) scores.
  Sequential& network() { return net_; }
  RngState& rng() { return rng_; }

  // Deep copy with identical parameters (for inference on another thread).
  Model clone() const;

  void copy_params_from(const Model& other);

 private:
  ModelConfig config_;
  Sequential net_;
  RngState rng_;
  Tensor3 input_;
  Tensor3 output_;
};

Model build(const ModelConfig& config);

// Checkpoint = layer tensors + ModelConfig + seed, with an optional feature
// schema (JSON) so a detector can encode raw records on its own.
void save_model(const std::filesystem::path& path, const Model& model,
                const nlohmann::json& schema = nullptr);
struct LoadedModel {
  Model model;
  nlohmann::json schema;  // null when the checkpoint carried none
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace ctranatd
