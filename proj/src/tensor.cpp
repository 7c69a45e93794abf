#include "ctranatd/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "ctranatd/errors.hpp"

namespace ctranatd {

std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s.batch) + "," + std::to_string(s.time) + "," +
         std::to_string(s.feature) + ")";
}

Tensor3::Tensor3(std::size_t batch, std::size_t time, std::size_t feature, double fill)
    : Tensor3(Shape3{batch, time, feature}, fill) {}

Tensor3::Tensor3(Shape3 shape, double fill)
    : shape_(shape), data_(shape.size(), fill), grad_(shape.size(), 0.0) {}

Tensor3::Tensor3(Shape3 shape, std::vector<double> values)
    : shape_(shape), data_(std::move(values)), grad_(shape.size(), 0.0) {
  if (data_.size() != shape.size()) {
    throw DimensionError("size", "Tensor3: " + std::to_string(data_.size()) +
                                     " values do not fill shape " + to_string(shape));
  }
}

void Tensor3::zero_grad() { std::fill(grad_.begin(), grad_.end(), 0.0); }

bool Tensor3::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(data_.begin(), data_.end(), finite) &&
         std::all_of(grad_.begin(), grad_.end(), finite);
}

void require_same_shape(const Tensor3& a, const Tensor3& b, const char* op) {
  const char* axis = nullptr;
  if (a.batch() != b.batch()) axis = "batch";
  else if (a.time() != b.time()) axis = "time";
  else if (a.feature() != b.feature()) axis = "feature";
  if (axis) {
    throw DimensionError(axis, std::string(op) + ": shape mismatch on " + axis + " axis, " +
                                   to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

LayerParams::LayerParams(std::string n, std::vector<std::size_t> shape, std::size_t bias_len)
    : name(std::move(n)), weight_shape(std::move(shape)) {
  std::size_t total = 1;
  for (auto d : weight_shape) total *= d;
  weights.assign(total, 0.0);
  weight_grad.assign(total, 0.0);
  bias.assign(bias_len, 0.0);
  bias_grad.assign(bias_len, 0.0);
}

void LayerParams::zero_grads() {
  std::fill(weight_grad.begin(), weight_grad.end(), 0.0);
  std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
}

double RngState::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double RngState::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::size_t RngState::below(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  // FNV-1a over the label, then a splitmix64 finalizer over base ^ hash.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = base ^ h;
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void glorot_init(LayerParams& p, std::size_t fan_in, std::size_t fan_out, RngState& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& w : p.weights) w = rng.uniform(-limit, limit);
  std::fill(p.bias.begin(), p.bias.end(), 0.0);
  p.zero_grads();
}

}  // namespace ctranatd
