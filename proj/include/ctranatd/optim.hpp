#pragma once

#include <span>
#include <vector>

#include "ctranatd/tensor.hpp"

namespace ctranatd {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are bound to the position of each
// parameter block in the list passed to step(), so callers must pass the same
// list (same order) every time.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update in place. `step` is the 1-based update count. Throws
  // NumericError naming the layer if any gradient is non-finite; in that case
  // no parameter is modified.
  void step(std::span<LayerParams* const> params, std::size_t step);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  struct Moments {
    std::vector<double> m_w, v_w, m_b, v_b;
  };
  AdamConfig config_;
  std::vector<Moments> moments_;
};

}  // namespace ctranatd
