#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ctranatd/tensor.hpp"

namespace ctranatd {

struct RunMode {
  bool training = false;
  RngState* rng = nullptr;  // required when training with dropout > 0
};

// A differentiable stage of a fixed architecture. backward() reads y.grad and
// accumulates (+=) into x.grad and the parameter gradients; x and y must be the
// input and output of the most recent forward() call.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string name() const = 0;
  virtual Tensor3 forward(const Tensor3& x, const RunMode& mode) = 0;
  virtual void backward(Tensor3& x, const Tensor3& y) = 0;
  virtual std::vector<LayerParams*> params() { return {}; }
};

void zero_grads(std::span<LayerParams* const> params);

// Position-wise affine map over the feature axis. Weights are {out, in}.
class Linear : public Layer {
 public:
  Linear(std::string name, std::size_t in, std::size_t out);
  explicit Linear(LayerParams params);

  std::string name() const override { return params_.name; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override { return {&params_}; }

  std::size_t in_features() const { return params_.weight_shape[1]; }
  std::size_t out_features() const { return params_.weight_shape[0]; }
  LayerParams& layer_params() { return params_; }
  const LayerParams& layer_params() const { return params_; }

 private:
  LayerParams params_;
};

// Valid-mode multi-channel 1D convolution along time followed by ReLU.
// Weights are {filters, in_features, kernel_size}.
class Conv1d : public Layer {
 public:
  Conv1d(std::string name, std::size_t in_features, std::size_t filters, std::size_t kernel_size);
  Conv1d(LayerParams params, std::size_t kernel_size, std::size_t filters);

  std::string name() const override { return params_.name; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override { return {&params_}; }

  LayerParams& layer_params() { return params_; }
  std::size_t kernel_size() const { return kernel_; }
  std::size_t filters() const { return filters_; }

 private:
  LayerParams params_;
  std::size_t kernel_;
  std::size_t filters_;
  std::size_t in_features_;
};

// Non-overlapping max over windows of pool_size time steps; the trailing
// remainder is discarded. Ties route gradient to the first occurrence.
class MaxPool1d : public Layer {
 public:
  explicit MaxPool1d(std::size_t pool_size);

  std::string name() const override { return "maxpool1d"; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;

 private:
  std::size_t pool_;
  std::vector<std::size_t> argmax_;
};

// Inverted dropout: survivors are scaled by 1/(1-rate); identity at inference.
class Dropout : public Layer {
 public:
  explicit Dropout(double rate);

  std::string name() const override { return "dropout"; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<double> mask_;  // empty when the last forward was an identity
};

// softmax(Q K^T / sqrt(d_k)) V per batch element.
class ScaledDotAttention {
 public:
  Tensor3 forward(const Tensor3& q, const Tensor3& k, const Tensor3& v, std::size_t d_k);
  void backward(Tensor3& q, Tensor3& k, Tensor3& v, const Tensor3& out);

  // Row-softmaxed attention weights from the last forward, (batch, tq, tk).
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  std::size_t d_k_ = 0;
};

Tensor3 scaled_dot_attention(const Tensor3& q, const Tensor3& k, const Tensor3& v, std::size_t d_k);

// Self-attention with `heads` independent Q/K/V projections of width head_size,
// concatenated and projected back to the input width by W_O.
// The parameter set is ordered q0,k0,v0,q1,k1,v1,...,out.
class MultiHeadAttention : public Layer {
 public:
  MultiHeadAttention(std::string name, std::size_t features, std::size_t heads,
                     std::size_t head_size);
  MultiHeadAttention(std::vector<LayerParams> param_set, std::size_t heads, std::size_t head_size);

  std::string name() const override { return name_; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override;

  std::size_t heads() const { return heads_; }
  std::size_t head_size() const { return head_size_; }
  // Width of the concatenated head outputs from the last forward.
  std::size_t concat_width() const { return concat_.feature(); }

 private:
  struct Head {
    Linear q, k, v;
    ScaledDotAttention attention;
    Tensor3 qv, kv, vv, out;
  };

  std::string name_;
  std::size_t heads_;
  std::size_t head_size_;
  std::vector<Head> head_;
  std::unique_ptr<Linear> out_;
  Tensor3 concat_;
};

// Linear(feature->hidden) -> ReLU -> Linear(hidden->feature) at each time step.
class FeedForward : public Layer {
 public:
  FeedForward(std::string name, std::size_t features, std::size_t hidden);
  FeedForward(LayerParams first, LayerParams second);

  std::string name() const override { return name_; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override;
  std::size_t hidden() const { return first_.out_features(); }

 private:
  std::string name_;
  Linear first_;
  Linear second_;
  Tensor3 pre_;
  Tensor3 act_;
};

Tensor3 residual_add(const Tensor3& x, const Tensor3& sublayer_out);
// Adds out.grad to both operands' gradients.
void residual_add_backward(Tensor3& x, Tensor3& sublayer_out, const Tensor3& out);

// Per-position normalization across features with learned gain (weights) and bias.
class LayerNorm : public Layer {
 public:
  LayerNorm(std::string name, std::size_t features, double epsilon = 1e-5);

  std::string name() const override { return params_.name; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override { return {&params_}; }
  LayerParams& layer_params() { return params_; }

 private:
  LayerParams params_;
  double epsilon_;
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
};

// Mean over the time axis: (B, T, F) -> (B, 1, F).
class GlobalAvgPool : public Layer {
 public:
  std::string name() const override { return "global_avg_pool"; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
};

// Final time step of a sequence: (B, T, F) -> (B, 1, F).
class LastStep : public Layer {
 public:
  std::string name() const override { return "last_step"; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
};

// Linear -> ReLU -> Linear(->1) -> sigmoid on a pooled (B, 1, F) input.
// Output is (B, 1, 1) holding one probability per batch element.
class MlpHead : public Layer {
 public:
  MlpHead(std::string name, std::size_t features, std::size_t hidden);

  std::string name() const override { return name_; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override;
  Linear& hidden_layer() { return hidden_; }
  Linear& output_layer() { return output_; }

 private:
  std::string name_;
  Linear hidden_;
  Linear output_;
  Tensor3 pre_;
  Tensor3 act_;
  Tensor3 logit_;
};

double sigmoid(double x);

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d score
};

// Mean binary cross-entropy; scores are clamped to [1e-12, 1 - 1e-12].
BceResult bce_loss(std::span<const double> scores, std::span<const double> labels);

// Single-layer LSTM returning the full hidden-state sequence (B, T, hidden).
// Weights are {4*hidden, in+hidden} with gate blocks ordered input, forget,
// candidate, output; one bias per gate unit.
class Lstm : public Layer {
 public:
  Lstm(std::string name, std::size_t in_features, std::size_t hidden);

  std::string name() const override { return params_.name; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override { return {&params_}; }
  LayerParams& layer_params() { return params_; }
  std::size_t hidden() const { return hidden_; }

 private:
  LayerParams params_;
  std::size_t in_;
  std::size_t hidden_;
  // Per (b, t): activated gates [i f g o] and cell state.
  std::vector<double> gates_;
  std::vector<double> cells_;
};

// Post-norm encoder block: x -> MHA -> dropout -> +x -> norm -> FFN -> dropout -> + -> norm.
class EncoderBlock : public Layer {
 public:
  EncoderBlock(std::string name, std::size_t features, std::size_t heads, std::size_t head_size,
               std::size_t ff_dim, double dropout);

  std::string name() const override { return name_; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override;

 private:
  std::string name_;
  MultiHeadAttention attention_;
  Dropout attention_dropout_;
  LayerNorm norm1_;
  FeedForward ffn_;
  Dropout ffn_dropout_;
  LayerNorm norm2_;
  Tensor3 attn_, attn_drop_, res1_, norm1_out_, ffn_out_, ffn_drop_, res2_;
};

// Chain of layers; intermediate activations are kept for backward.
class Sequential : public Layer {
 public:
  explicit Sequential(std::string name = "sequential") : name_(std::move(name)) {}

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  std::string name() const override { return name_; }
  Tensor3 forward(const Tensor3& x, const RunMode& mode) override;
  void backward(Tensor3& x, const Tensor3& y) override;
  std::vector<LayerParams*> params() override;

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  // Output of layer i from the last forward (valid for i < size()-1).
  const Tensor3& activation(std::size_t i) const { return acts_[i]; }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Tensor3> acts_;
};

}  // namespace ctranatd
