#include "ctranatd/optim.hpp"

#include <cmath>

#include "ctranatd/errors.hpp"

namespace ctranatd {

namespace {

bool finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void update(std::vector<double>& theta, const std::vector<double>& grad, std::vector<double>& m,
            std::vector<double>& v, const AdamConfig& c, double bc1, double bc2) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace

void Adam::step(std::span<LayerParams* const> params, std::size_t step) {
  if (step == 0) throw InvalidArgument("adam: step count starts at 1");
  for (const auto* p : params) {
    if (!finite(p->weight_grad) || !finite(p->bias_grad)) {
      throw NumericError("adam: non-finite gradient in layer '" + p->name + "'");
    }
  }
  if (moments_.size() != params.size()) {
    moments_.clear();
    for (const auto* p : params) {
      moments_.push_back(Moments{std::vector<double>(p->weights.size(), 0.0),
                                 std::vector<double>(p->weights.size(), 0.0),
                                 std::vector<double>(p->bias.size(), 0.0),
                                 std::vector<double>(p->bias.size(), 0.0)});
    }
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto* p = params[i];
    auto& mo = moments_[i];
    if (mo.m_w.size() != p->weights.size() || mo.m_b.size() != p->bias.size()) {
      throw ConfigError("adam: parameter list changed shape between steps at '" + p->name + "'");
    }
    update(p->weights, p->weight_grad, mo.m_w, mo.v_w, config_, bc1, bc2);
    update(p->bias, p->bias_grad, mo.m_b, mo.v_b, config_, bc1, bc2);
  }
}

}  // namespace ctranatd
