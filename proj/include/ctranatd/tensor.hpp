#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ctranatd {

struct Shape3 {
  std::size_t batch = 0;
  std::size_t time = 0;
  std::size_t feature = 0;

  std::size_t size() const { return batch * time * feature; }
  bool operator==(const Shape3&) const = default;
};

std::string to_string(const Shape3& s);

// Dense batch x time x feature array of doubles with a same-shape gradient
// buffer. Row-major: feature is the fastest-varying axis.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t batch, std::size_t time, std::size_t feature, double fill = 0.0);
  explicit Tensor3(Shape3 shape, double fill = 0.0);
  Tensor3(Shape3 shape, std::vector<double> values);

  const Shape3& shape() const { return shape_; }
  std::size_t batch() const { return shape_.batch; }
  std::size_t time() const { return shape_.time; }
  std::size_t feature() const { return shape_.feature; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t b, std::size_t t, std::size_t f) const {
    return (b * shape_.time + t) * shape_.feature + f;
  }
  double& at(std::size_t b, std::size_t t, std::size_t f) { return data_[index(b, t, f)]; }
  double at(std::size_t b, std::size_t t, std::size_t f) const { return data_[index(b, t, f)]; }
  double& grad_at(std::size_t b, std::size_t t, std::size_t f) { return grad_[index(b, t, f)]; }
  double grad_at(std::size_t b, std::size_t t, std::size_t f) const { return grad_[index(b, t, f)]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }

  // Contiguous feature row at (b, t).
  std::span<const double> row(std::size_t b, std::size_t t) const {
    return std::span<const double>(data_).subspan(index(b, t, 0), shape_.feature);
  }
  std::span<double> row(std::size_t b, std::size_t t) {
    return std::span<double>(data_).subspan(index(b, t, 0), shape_.feature);
  }

  void zero_grad();
  bool all_finite() const;

 private:
  Shape3 shape_{};
  std::vector<double> data_;
  std::vector<double> grad_;
};

// Throws DimensionError naming the first mismatching axis.
void require_same_shape(const Tensor3& a, const Tensor3& b, const char* op);

// Learnable weight matrix/kernel plus bias. weight_shape describes how the
// flat weights array is laid out (e.g. {out, in} or {filters, in, kernel}).
struct LayerParams {
  std::string name;
  std::vector<std::size_t> weight_shape;
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> weight_grad;
  std::vector<double> bias_grad;

  LayerParams() = default;
  LayerParams(std::string name, std::vector<std::size_t> weight_shape, std::size_t bias_len);

  std::size_t count() const { return weights.size() + bias.size(); }
  void zero_grads();
};

// Seeded generator used for initialization and dropout masks. Same seed gives
// the same draw sequence.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  std::uint64_t next_u64() { return engine_(); }
  std::size_t below(std::size_t n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Derives an independent seed for a named subsystem from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

// Glorot-uniform weights, zero biases.
void glorot_init(LayerParams& p, std::size_t fan_in, std::size_t fan_out, RngState& rng);

}  // namespace ctranatd
