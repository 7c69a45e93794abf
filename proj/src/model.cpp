#include "ctranatd/model.hpp"

#include <algorithm>

#include "ctranatd/checkpoint.hpp"
#include "ctranatd/errors.hpp"

namespace ctranatd {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::ctranatd: return "ctranatd";
    case Architecture::cnn: return "cnn";
    case Architecture::transformer: return "transformer";
    case Architecture::lstm: return "lstm";
  }
  return "?";
}

std::string to_string(AttackPreset p) {
  switch (p) {
    case AttackPreset::dos: return "dos";
    case AttackPreset::ddos: return "ddos";
    case AttackPreset::portscan: return "portscan";
  }
  return "?";
}

namespace {
std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}
}  // namespace

Architecture parse_architecture(std::string_view s) {
  const auto v = lower(s);
  if (v == "ctranatd") return Architecture::ctranatd;
  if (v == "cnn") return Architecture::cnn;
  if (v == "transformer") return Architecture::transformer;
  if (v == "lstm") return Architecture::lstm;
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

AttackPreset parse_preset(std::string_view s) {
  const auto v = lower(s);
  if (v == "dos") return AttackPreset::dos;
  if (v == "ddos") return AttackPreset::ddos;
  if (v == "portscan") return AttackPreset::portscan;
  throw ConfigError("unknown attack preset '" + std::string(s) + "'");
}

ModelConfig ModelConfig::preset(AttackPreset preset, Architecture arch, std::uint64_t seed) {
  ModelConfig c;
  c.architecture = arch;
  c.attack_preset = preset;
  c.cnn_kernel = preset == AttackPreset::dos ? 5 : 3;
  c.seed = seed;
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(std::string("model config: ") + field + " must be >= 1");
  };
  positive(window, "window");
  positive(input_features, "input_features");
  positive(mlp_hidden, "mlp_hidden");
  positive(batch_size, "batch_size");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("model config: dropout_rate must be in [0, 1)");
  const bool conv = architecture == Architecture::ctranatd || architecture == Architecture::cnn;
  const bool attn = architecture == Architecture::ctranatd || architecture == Architecture::transformer;
  if (conv) {
    positive(cnn_filters, "cnn_filters");
    positive(cnn_kernel, "cnn_kernel");
    positive(pool_size, "pool_size");
    if (cnn_kernel > window) throw ConfigError("model config: cnn_kernel exceeds window");
    if (pooled_time() == 0) throw ConfigError("model config: pooling leaves no time steps");
  }
  if (attn) {
    positive(head_size, "head_size");
    positive(head_number, "head_number");
    positive(ff_dim, "ff_dim");
  }
  if (architecture == Architecture::lstm) positive(lstm_hidden, "lstm_hidden");
}

std::size_t ModelConfig::pooled_time() const {
  switch (architecture) {
    case Architecture::ctranatd:
    case Architecture::cnn:
      return cnn_kernel > window ? 0 : (window - cnn_kernel + 1) / pool_size;
    case Architecture::transformer:
    case Architecture::lstm:
      return window;
  }
  return 0;
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"architecture", to_string(c.architecture)},
       {"attack_preset", to_string(c.attack_preset)},
       {"window", c.window},
       {"input_features", c.input_features},
       {"cnn_filters", c.cnn_filters},
       {"cnn_kernel", c.cnn_kernel},
       {"pool_size", c.pool_size},
       {"head_size", c.head_size},
       {"head_number", c.head_number},
       {"ff_dim", c.ff_dim},
       {"transformer_blocks", c.transformer_blocks},
       {"mlp_hidden", c.mlp_hidden},
       {"dropout_rate", c.dropout_rate},
       {"batch_size", c.batch_size},
       {"lstm_hidden", c.lstm_hidden},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.architecture = parse_architecture(j.at("architecture").get<std::string>());
  c.attack_preset = parse_preset(j.at("attack_preset").get<std::string>());
  j.at("window").get_to(c.window);
  j.at("input_features").get_to(c.input_features);
  j.at("cnn_filters").get_to(c.cnn_filters);
  j.at("cnn_kernel").get_to(c.cnn_kernel);
  j.at("pool_size").get_to(c.pool_size);
  j.at("head_size").get_to(c.head_size);
  j.at("head_number").get_to(c.head_number);
  j.at("ff_dim").get_to(c.ff_dim);
  j.at("transformer_blocks").get_to(c.transformer_blocks);
  j.at("mlp_hidden").get_to(c.mlp_hidden);
  j.at("dropout_rate").get_to(c.dropout_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("lstm_hidden").get_to(c.lstm_hidden);
  j.at("seed").get_to(c.seed);
}

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  auto linear = [](std::size_t in, std::size_t out) { return out * in + out; };
  auto encoder = [&](std::size_t d) {
    const std::size_t mha = c.head_number * 3 * linear(d, c.head_size) +
                            linear(c.head_number * c.head_size, d);
    const std::size_t norms = 2 * 2 * d;
    const std::size_t ffn = linear(d, c.ff_dim) + linear(c.ff_dim, d);
    return mha + norms + ffn;
  };
  auto head = [&](std::size_t d) { return linear(d, c.mlp_hidden) + linear(c.mlp_hidden, 1); };
  const std::size_t conv = c.cnn_filters * c.input_features * c.cnn_kernel + c.cnn_filters;
  switch (c.architecture) {
    case Architecture::ctranatd:
      return conv + c.transformer_blocks * encoder(c.cnn_filters) + head(c.cnn_filters);
    case Architecture::cnn:
      return conv + head(c.cnn_filters);
    case Architecture::transformer:
      return c.transformer_blocks * encoder(c.input_features) + head(c.input_features);
    case Architecture::lstm:
      return 4 * (c.lstm_hidden * (c.input_features + c.lstm_hidden) + c.lstm_hidden) +
             head(c.lstm_hidden);
  }
  return 0;
}

namespace {

void add_encoders(Sequential& net, const ModelConfig& c, std::size_t width) {
  for (std::size_t i = 0; i < c.transformer_blocks; ++i) {
    net.add(std::make_unique<EncoderBlock>("encoder" + std::to_string(i), width, c.head_number,
                                           c.head_size, c.ff_dim, c.dropout_rate));
  }
}

void initialize(std::vector<LayerParams*> params, RngState& rng) {
  for (auto* p : params) {
    const auto& s = p->weight_shape;
    if (s.size() == 2) {
      glorot_init(*p, s[1], s[0], rng);
    } else if (s.size() == 3) {
      glorot_init(*p, s[1] * s[2], s[0] * s[2], rng);
    }
    // Rank-1 blocks are layer-norm gain/bias and keep their 1/0 defaults.
  }
}

}  // namespace

Model::Model(const ModelConfig& config)
    : config_(config), net_(to_string(config.architecture)), rng_(derive_seed(config.seed, "dropout")) {
  config_.validate();
  const auto& c = config_;
  switch (c.architecture) {
    case Architecture::ctranatd:
    case Architecture::cnn:
      net_.add(std::make_unique<Conv1d>("conv", c.input_features, c.cnn_filters, c.cnn_kernel));
      net_.add(std::make_unique<MaxPool1d>(c.pool_size));
      net_.add(std::make_unique<Dropout>(c.dropout_rate));
      if (c.architecture == Architecture::ctranatd) add_encoders(net_, c, c.cnn_filters);
      net_.add(std::make_unique<GlobalAvgPool>());
      net_.add(std::make_unique<MlpHead>("mlp", c.cnn_filters, c.mlp_hidden));
      break;
    case Architecture::transformer:
      add_encoders(net_, c, c.input_features);
      net_.add(std::make_unique<GlobalAvgPool>());
      net_.add(std::make_unique<MlpHead>("mlp", c.input_features, c.mlp_hidden));
      break;
    case Architecture::lstm:
      net_.add(std::make_unique<Lstm>("lstm", c.input_features, c.lstm_hidden));
      net_.add(std::make_unique<LastStep>());
      net_.add(std::make_unique<MlpHead>("mlp", c.lstm_hidden, c.mlp_hidden));
      break;
  }
  RngState init_rng(derive_seed(c.seed, "init"));
  initialize(net_.params(), init_rng);
}

Model build(const ModelConfig& config) { return Model(config); }

std::vector<const LayerParams*> Model::params() const {
  auto ps = const_cast<Sequential&>(net_).params();
  return {ps.begin(), ps.end()};
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->count();
  return n;
}

void Model::zero_grads() {
  for (auto* p : net_.params()) p->zero_grads();
}

std::vector<double> Model::forward(const Tensor3& batch, bool training) {
  if (batch.feature() != config_.input_features) {
    throw DimensionError("feature", "model: expected " + std::to_string(config_.input_features) +
                                        " features per time step, got " +
                                        std::to_string(batch.feature()));
  }
  if (batch.time() != config_.window) {
    throw DimensionError("time", "model: expected window of " + std::to_string(config_.window) +
                                     " time steps, got " + std::to_string(batch.time()));
  }
  input_ = Tensor3(batch.shape(), std::vector<double>(batch.data().begin(), batch.data().end()));
  RunMode mode{training, &rng_};
  output_ = net_.forward(input_, mode);
  return {output_.data().begin(), output_.data().end()};
}

void Model::backward(std::span<const double> score_grad) {
  if (score_grad.size() != output_.size()) {
    throw DimensionError("batch", "model backward: gradient length does not match last batch");
  }
  output_.zero_grad();
  std::copy(score_grad.begin(), score_grad.end(), output_.grad().begin());
  input_.zero_grad();
  net_.backward(input_, output_);
}

void Model::copy_params_from(const Model& other) {
  auto dst = params();
  auto src = other.params();
  if (dst.size() != src.size()) throw ConfigError("copy_params_from: architectures differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i]->weights = src[i]->weights;
    dst[i]->bias = src[i]->bias;
  }
}

Model Model::clone() const {
  Model m(config_);
  m.copy_params_from(*this);
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model, const nlohmann::json& schema) {
  nlohmann::json meta;
  meta["config"] = model.config();
  if (!schema.is_null()) meta["schema"] = schema;
  auto ps = model.params();
  write_checkpoint(path, ps, model.config().seed, meta);
}

LoadedModel load_model(const std::filesystem::path& path) {
  CheckpointData data = read_checkpoint(path);
  if (!data.metadata.contains("config")) throw ConfigError(path.string() + ": checkpoint has no model config");
  ModelConfig cfg = data.metadata.at("config").get<ModelConfig>();
  Model m(cfg);
  auto ps = m.params();
  restore_params(data, ps);
  return LoadedModel{std::move(m), data.metadata.value("schema", nlohmann::json())};
}

}  // namespace ctranatd
