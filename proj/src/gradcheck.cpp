#include "ctranatd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace ctranatd {

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-5});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double projected_loss(Layer& fragment, const Tensor3& input, const std::vector<double>& r) {
  const RunMode mode{};
  Tensor3 y = fragment.forward(input, mode);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += r[i] * y.data()[i];
  return loss;
}

}  // namespace

GradCheckReport grad_check(Layer& fragment, const Tensor3& input, double tolerance,
                           std::uint64_t seed, double step) {
  GradCheckReport report;
  Tensor3 x(input.shape(), std::vector<double>(input.data().begin(), input.data().end()));
  auto params = fragment.params();
  zero_grads(params);

  const RunMode mode{};
  Tensor3 y = fragment.forward(x, mode);
  RngState rng(seed);
  std::vector<double> r(y.size());
  for (auto& v : r) v = rng.normal();
  for (std::size_t i = 0; i < y.size(); ++i) y.grad()[i] = r[i];
  fragment.backward(x, y);

  auto record = [&](const std::string& target, const char* part, std::size_t i, double analytic,
                    double numeric) {
    GradCheckEntry e{target, part, i, analytic, numeric, gradient_rel_error(analytic, numeric)};
    if (report.checked++ == 0 || e.rel_error > report.max_rel_error) {
      report.max_rel_error = e.rel_error;
      report.worst = e;
    }
    if (!(e.rel_error < tolerance)) report.failures.push_back(e);
  };

  auto probe = [&](std::vector<double>& values, std::size_t i) {
    const double orig = values[i];
    values[i] = orig + step;
    const double up = projected_loss(fragment, x, r);
    values[i] = orig - step;
    const double down = projected_loss(fragment, x, r);
    values[i] = orig;
    return (up - down) / (2.0 * step);
  };

  for (auto* p : params) {
    const auto wg = p->weight_grad;
    const auto bg = p->bias_grad;
    for (std::size_t i = 0; i < p->weights.size(); ++i)
      record(p->name, "weights", i, wg[i], probe(p->weights, i));
    for (std::size_t i = 0; i < p->bias.size(); ++i)
      record(p->name, "bias", i, bg[i], probe(p->bias, i));
  }

  std::vector<double> xg(x.grad().begin(), x.grad().end());
  std::vector<double> xv(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double orig = xv[i];
    x.data()[i] = orig + step;
    const double up = projected_loss(fragment, x, r);
    x.data()[i] = orig - step;
    const double down = projected_loss(fragment, x, r);
    x.data()[i] = orig;
    record("input", "data", i, xg[i], (up - down) / (2.0 * step));
  }

  report.passed = report.failures.empty() && report.checked > 0;
  return report;
}

}  // namespace ctranatd

#include "ctranatd/model.hpp"

namespace ctranatd {

namespace {

Tensor3 random_input(Shape3 s, RngState& rng) {
  Tensor3 t(s);
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void randomize(Layer& layer, RngState& rng) {
  for (auto* p : layer.params()) {
    for (auto& w : p->weights) w = rng.normal(0.0, 0.5);
    for (auto& b : p->bias) b = rng.normal(0.0, 0.5);
  }
}

}  // namespace

std::vector<NamedGradCheck> standard_grad_checks(double tolerance, std::uint64_t seed) {
  RngState rng(seed);
  std::vector<NamedGradCheck> out;
  auto run = [&](const std::string& name, Layer& layer, Shape3 shape) {
    randomize(layer, rng);
    out.push_back({name, grad_check(layer, random_input(shape, rng), tolerance, rng.next_u64())});
  };
  {
    Conv1d l("conv", 4, 5, 3);
    run("conv1d", l, {2, 8, 4});
  }
  {
    MaxPool1d l(2);
    run("maxpool1d", l, {2, 7, 3});
  }
  {
    MultiHeadAttention l("mha", 6, 2, 4);
    run("multi_head_attention", l, {2, 5, 6});
  }
  {
    FeedForward l("ffn", 6, 8);
    run("feed_forward", l, {2, 4, 6});
  }
  {
    LayerNorm l("ln", 6);
    run("layer_norm", l, {2, 4, 6});
  }
  {
    EncoderBlock l("enc", 6, 2, 4, 8, 0.1);
    run("encoder_block", l, {2, 5, 6});
  }
  {
    MlpHead l("mlp", 6, 8);
    run("mlp_head", l, {2, 1, 6});
  }
  {
    Lstm l("lstm", 6, 5);
    run("lstm", l, {2, 6, 6});
  }
  for (auto arch : {Architecture::ctranatd, Architecture::cnn, Architecture::transformer, Architecture::lstm}) {
    ModelConfig c = ModelConfig::preset(AttackPreset::ddos, arch, seed);
    c.window = 8;
    c.input_features = 6;
    c.cnn_filters = 6;
    c.ff_dim = 8;
    c.mlp_hidden = 8;
    c.lstm_hidden = 5;
    Model m = build(c);
    run("model_" + to_string(arch), m.network(), {2, 8, 6});
  }
  return out;
}

}  // namespace ctranatd
