#include "ctranatd/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctranatd/errors.hpp"

namespace ctranatd {

void zero_grads(std::span<LayerParams* const> params) {
  for (auto* p : params) p->zero_grads();
}

namespace {

void require_features(const Tensor3& x, std::size_t expected, const std::string& op) {
  if (x.feature() != expected) {
    throw DimensionError("feature", op + ": expected feature width " + std::to_string(expected) +
                                        ", got " + std::to_string(x.feature()));
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(std::string name, std::size_t in, std::size_t out)
    : params_(std::move(name), {out, in}, out) {}

Linear::Linear(LayerParams params) : params_(std::move(params)) {
  if (params_.weight_shape.size() != 2 || params_.bias.size() != params_.weight_shape[0] ||
      params_.weights.size() != params_.weight_shape[0] * params_.weight_shape[1]) {
    throw ConfigError("linear '" + params_.name + "': parameters are not an {out, in} matrix + bias");
  }
}

Tensor3 Linear::forward(const Tensor3& x, const RunMode&) {
  const std::size_t in = in_features(), out = out_features();
  require_features(x, in, "linear '" + params_.name + "'");
  Tensor3 y(x.batch(), x.time(), out);
  const double* w = params_.weights.data();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < x.time(); ++t) {
      auto xr = x.row(b, t);
      auto yr = y.row(b, t);
      for (std::size_t o = 0; o < out; ++o) {
        const double* wr = w + o * in;
        double acc = params_.bias[o];
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
        yr[o] = acc;
      }
    }
  }
  return y;
}

void Linear::backward(Tensor3& x, const Tensor3& y) {
  const std::size_t in = in_features(), out = out_features();
  const double* w = params_.weights.data();
  double* gw = params_.weight_grad.data();
  auto xg = x.grad();
  auto yg = y.grad();
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < x.time(); ++t) {
      auto xr = x.row(b, t);
      const std::size_t xoff = x.index(b, t, 0);
      const std::size_t yoff = y.index(b, t, 0);
      for (std::size_t o = 0; o < out; ++o) {
        const double g = yg[yoff + o];
        if (g == 0.0) continue;
        params_.bias_grad[o] += g;
        double* gwr = gw + o * in;
        const double* wr = w + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          gwr[i] += g * xr[i];
          xg[xoff + i] += g * wr[i];
        }
      }
    }
  }
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::string name, std::size_t in_features, std::size_t filters,
               std::size_t kernel_size)
    : params_(std::move(name), {filters, in_features, kernel_size}, filters),
      kernel_(kernel_size),
      filters_(filters),
      in_features_(in_features) {
  if (kernel_size == 0) throw InvalidArgument("conv1d: kernel_size must be >= 1");
  if (filters == 0) throw InvalidArgument("conv1d: filters must be >= 1");
}

Conv1d::Conv1d(LayerParams params, std::size_t kernel_size, std::size_t filters)
    : params_(std::move(params)), kernel_(kernel_size), filters_(filters), in_features_(0) {
  if (kernel_size == 0) throw InvalidArgument("conv1d: kernel_size must be >= 1");
  const auto& s = params_.weight_shape;
  if (s.size() != 3) throw DimensionError("weights", "conv1d: weights must be rank 3");
  if (s[0] != filters) {
    throw DimensionError("filters", "conv1d: weight shape has " + std::to_string(s[0]) +
                                        " filters, expected " + std::to_string(filters));
  }
  if (s[2] != kernel_size) {
    throw DimensionError("kernel", "conv1d: weight shape has kernel " + std::to_string(s[2]) +
                                       ", expected " + std::to_string(kernel_size));
  }
  if (params_.bias.size() != filters) {
    throw DimensionError("bias", "conv1d: bias length " + std::to_string(params_.bias.size()) +
                                     " != filters " + std::to_string(filters));
  }
  in_features_ = s[1];
}

Tensor3 Conv1d::forward(const Tensor3& x, const RunMode&) {
  require_features(x, in_features_, "conv1d '" + params_.name + "'");
  if (x.time() < kernel_) {
    throw InvalidWindow("conv1d: kernel_size " + std::to_string(kernel_) +
                        " exceeds time length " + std::to_string(x.time()));
  }
  const std::size_t tout = x.time() - kernel_ + 1;
  const std::size_t c_in = in_features_;
  // Repack weights as {filter, tap, channel} so the channel loop is contiguous.
  std::vector<double> wt(params_.weights.size());
  for (std::size_t f = 0; f < filters_; ++f)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < kernel_; ++j)
        wt[(f * kernel_ + j) * c_in + c] = params_.weights[(f * c_in + c) * kernel_ + j];

  Tensor3 y(x.batch(), tout, filters_);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      // Taps t..t+k-1 are contiguous rows, so the window is one flat span.
      const double* win = x.data().data() + x.index(b, t, 0);
      auto yr = y.row(b, t);
      for (std::size_t f = 0; f < filters_; ++f) {
        const double* wf = wt.data() + f * kernel_ * c_in;
        double acc = params_.bias[f];
        for (std::size_t n = 0; n < kernel_ * c_in; ++n) acc += wf[n] * win[n];
        yr[f] = acc < 0.0 ? 0.0 : acc;
      }
    }
  }
  return y;
}

void Conv1d::backward(Tensor3& x, const Tensor3& y) {
  const std::size_t c_in = in_features_;
  const std::size_t span = kernel_ * c_in;
  std::vector<double> wt(params_.weights.size());
  std::vector<double> gwt(params_.weights.size(), 0.0);
  for (std::size_t f = 0; f < filters_; ++f)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < kernel_; ++j)
        wt[(f * kernel_ + j) * c_in + c] = params_.weights[(f * c_in + c) * kernel_ + j];

  auto yg = y.grad();
  auto yd = y.data();
  for (std::size_t b = 0; b < y.batch(); ++b) {
    for (std::size_t t = 0; t < y.time(); ++t) {
      const double* win = x.data().data() + x.index(b, t, 0);
      double* gwin = x.grad().data() + x.index(b, t, 0);
      const std::size_t yoff = y.index(b, t, 0);
      for (std::size_t f = 0; f < filters_; ++f) {
        // ReLU passes gradient only where the output is positive.
        if (yd[yoff + f] <= 0.0) continue;
        const double g = yg[yoff + f];
        if (g == 0.0) continue;
        params_.bias_grad[f] += g;
        const double* wf = wt.data() + f * span;
        double* gwf = gwt.data() + f * span;
        for (std::size_t n = 0; n < span; ++n) {
          gwf[n] += g * win[n];
          gwin[n] += g * wf[n];
        }
      }
    }
  }
  for (std::size_t f = 0; f < filters_; ++f)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t j = 0; j < kernel_; ++j)
        params_.weight_grad[(f * c_in + c) * kernel_ + j] += gwt[(f * kernel_ + j) * c_in + c];
}

// ---------------------------------------------------------------- MaxPool1d

MaxPool1d::MaxPool1d(std::size_t pool_size) : pool_(pool_size) {
  if (pool_size == 0) throw InvalidArgument("maxpool1d: pool_size must be >= 1");
}

Tensor3 MaxPool1d::forward(const Tensor3& x, const RunMode&) {
  const std::size_t tout = x.time() / pool_;
  Tensor3 y(x.batch(), tout, x.feature());
  argmax_.assign(y.size(), 0);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < tout; ++t) {
      for (std::size_t f = 0; f < x.feature(); ++f) {
        std::size_t best = x.index(b, t * pool_, f);
        for (std::size_t i = 1; i < pool_; ++i) {
          const std::size_t idx = x.index(b, t * pool_ + i, f);
          if (x.data()[idx] > x.data()[best]) best = idx;
        }
        const std::size_t yi = y.index(b, t, f);
        y.data()[yi] = x.data()[best];
        argmax_[yi] = best;
      }
    }
  }
  return y;
}

void MaxPool1d::backward(Tensor3& x, const Tensor3& y) {
  auto yg = y.grad();
  auto xg = x.grad();
  for (std::size_t i = 0; i < yg.size(); ++i) xg[argmax_[i]] += yg[i];
}

// ---------------------------------------------------------------- Dropout

Dropout::Dropout(double rate) : rate_(rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
}

Tensor3 Dropout::forward(const Tensor3& x, const RunMode& mode) {
  mask_.clear();
  if (!mode.training || rate_ == 0.0) return Tensor3(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  if (!mode.rng) throw ConfigError("dropout: training mode requires an RngState");
  const double scale = 1.0 / (1.0 - rate_);
  mask_.resize(x.size());
  Tensor3 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = mode.rng->uniform() < rate_ ? 0.0 : scale;
    y.data()[i] = x.data()[i] * mask_[i];
  }
  return y;
}

void Dropout::backward(Tensor3& x, const Tensor3& y) {
  auto yg = y.grad();
  auto xg = x.grad();
  if (mask_.empty()) {
    for (std::size_t i = 0; i < yg.size(); ++i) xg[i] += yg[i];
  } else {
    for (std::size_t i = 0; i < yg.size(); ++i) xg[i] += yg[i] * mask_[i];
  }
}

// ---------------------------------------------------------------- Attention

Tensor3 ScaledDotAttention::forward(const Tensor3& q, const Tensor3& k, const Tensor3& v,
                                    std::size_t d_k) {
  if (q.batch() != k.batch() || q.batch() != v.batch()) {
    throw DimensionError("batch", "attention: q, k, v batch sizes differ");
  }
  if (q.feature() != d_k || k.feature() != d_k) {
    throw DimensionError("feature", "attention: q and k must have feature width d_k=" +
                                        std::to_string(d_k) + ", got " +
                                        std::to_string(q.feature()) + " and " +
                                        std::to_string(k.feature()));
  }
  if (k.time() != v.time()) {
    throw DimensionError("time", "attention: k and v time lengths differ");
  }
  d_k_ = d_k;
  const std::size_t B = q.batch(), tq = q.time(), tk = k.time(), dv = v.feature();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  weights_.assign(B * tq * tk, 0.0);
  Tensor3 out(B, tq, dv);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < tq; ++i) {
      double* w = weights_.data() + (b * tq + i) * tk;
      auto qi = q.row(b, i);
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < tk; ++j) {
        auto kj = k.row(b, j);
        double s = 0.0;
        for (std::size_t d = 0; d < d_k; ++d) s += qi[d] * kj[d];
        w[j] = s * scale;
        mx = std::max(mx, w[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        w[j] = std::exp(w[j] - mx);
        z += w[j];
      }
      for (std::size_t j = 0; j < tk; ++j) w[j] /= z;
      auto oi = out.row(b, i);
      for (std::size_t j = 0; j < tk; ++j) {
        auto vj = v.row(b, j);
        for (std::size_t d = 0; d < dv; ++d) oi[d] += w[j] * vj[d];
      }
    }
  }
  return out;
}

void ScaledDotAttention::backward(Tensor3& q, Tensor3& k, Tensor3& v, const Tensor3& out) {
  const std::size_t B = q.batch(), tq = q.time(), tk = k.time(), dv = v.feature();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k_));
  std::vector<double> dw(tk), ds(tk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < tq; ++i) {
      const double* w = weights_.data() + (b * tq + i) * tk;
      const double* go = out.grad().data() + out.index(b, i, 0);
      // dV += w^T dO ; dW = dO V^T
      double dot = 0.0;
      for (std::size_t j = 0; j < tk; ++j) {
        auto vj = v.row(b, j);
        double* gvj = v.grad().data() + v.index(b, j, 0);
        double acc = 0.0;
        for (std::size_t d = 0; d < dv; ++d) {
          gvj[d] += w[j] * go[d];
          acc += go[d] * vj[d];
        }
        dw[j] = acc;
        dot += acc * w[j];
      }
      // Softmax Jacobian.
      for (std::size_t j = 0; j < tk; ++j) ds[j] = w[j] * (dw[j] - dot) * scale;
      auto qi = q.row(b, i);
      double* gqi = q.grad().data() + q.index(b, i, 0);
      for (std::size_t j = 0; j < tk; ++j) {
        if (ds[j] == 0.0) continue;
        auto kj = k.row(b, j);
        double* gkj = k.grad().data() + k.index(b, j, 0);
        for (std::size_t d = 0; d < d_k_; ++d) {
          gqi[d] += ds[j] * kj[d];
          gkj[d] += ds[j] * qi[d];
        }
      }
    }
  }
}

Tensor3 scaled_dot_attention(const Tensor3& q, const Tensor3& k, const Tensor3& v,
                             std::size_t d_k) {
  ScaledDotAttention attention;
  return attention.forward(q, k, v, d_k);
}

// ---------------------------------------------------------------- MultiHeadAttention

MultiHeadAttention::MultiHeadAttention(std::string name, std::size_t features, std::size_t heads,
                                       std::size_t head_size)
    : name_(std::move(name)), heads_(heads), head_size_(head_size) {
  if (heads == 0 || head_size == 0) {
    throw InvalidArgument("multi_head_attention: heads and head_size must be >= 1");
  }
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string p = name_ + ".head" + std::to_string(h);
    head_.push_back(Head{Linear(p + ".q", features, head_size), Linear(p + ".k", features, head_size),
                         Linear(p + ".v", features, head_size), {}, {}, {}, {}, {}});
  }
  out_ = std::make_unique<Linear>(name_ + ".out", heads * head_size, features);
}

MultiHeadAttention::MultiHeadAttention(std::vector<LayerParams> param_set, std::size_t heads,
                                       std::size_t head_size)
    : name_("mha"), heads_(heads), head_size_(head_size) {
  if (heads == 0 || head_size == 0) {
    throw InvalidArgument("multi_head_attention: heads and head_size must be >= 1");
  }
  if (param_set.size() != 3 * heads + 1) {
    throw ConfigError("multi_head_attention: expected " + std::to_string(3 * heads + 1) +
                      " projection matrices (3 per head + output), got " +
                      std::to_string(param_set.size()));
  }
  auto check = [](const LayerParams& p, std::size_t out, const char* role) {
    if (p.weight_shape.size() != 2 || p.weight_shape[0] != out) {
      throw ConfigError("multi_head_attention: " + std::string(role) + " projection '" + p.name +
                        "' has the wrong output width");
    }
  };
  for (std::size_t h = 0; h < heads; ++h) {
    check(param_set[3 * h], head_size, "query");
    check(param_set[3 * h + 1], head_size, "key");
    check(param_set[3 * h + 2], head_size, "value");
    head_.push_back(Head{Linear(std::move(param_set[3 * h])), Linear(std::move(param_set[3 * h + 1])),
                         Linear(std::move(param_set[3 * h + 2])), {}, {}, {}, {}, {}});
  }
  auto& out = param_set.back();
  if (out.weight_shape.size() != 2 || out.weight_shape[1] != heads * head_size) {
    throw ConfigError("multi_head_attention: output projection must accept " +
                      std::to_string(heads * head_size) + " features");
  }
  out_ = std::make_unique<Linear>(std::move(out));
}

std::vector<LayerParams*> MultiHeadAttention::params() {
  std::vector<LayerParams*> ps;
  for (auto& h : head_) {
    ps.push_back(&h.q.layer_params());
    ps.push_back(&h.k.layer_params());
    ps.push_back(&h.v.layer_params());
  }
  ps.push_back(&out_->layer_params());
  return ps;
}

Tensor3 MultiHeadAttention::forward(const Tensor3& x, const RunMode& mode) {
  concat_ = Tensor3(x.batch(), x.time(), heads_ * head_size_);
  for (std::size_t h = 0; h < heads_; ++h) {
    auto& hd = head_[h];
    hd.qv = hd.q.forward(x, mode);
    hd.kv = hd.k.forward(x, mode);
    hd.vv = hd.v.forward(x, mode);
    hd.out = hd.attention.forward(hd.qv, hd.kv, hd.vv, head_size_);
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t t = 0; t < x.time(); ++t) {
        auto src = hd.out.row(b, t);
        std::copy(src.begin(), src.end(), concat_.row(b, t).begin() + h * head_size_);
      }
  }
  return out_->forward(concat_, mode);
}

void MultiHeadAttention::backward(Tensor3& x, const Tensor3& y) {
  concat_.zero_grad();
  out_->backward(concat_, y);
  for (std::size_t h = 0; h < heads_; ++h) {
    auto& hd = head_[h];
    hd.out.zero_grad();
    hd.qv.zero_grad();
    hd.kv.zero_grad();
    hd.vv.zero_grad();
    for (std::size_t b = 0; b < x.batch(); ++b)
      for (std::size_t t = 0; t < x.time(); ++t)
        for (std::size_t d = 0; d < head_size_; ++d)
          hd.out.grad_at(b, t, d) = concat_.grad_at(b, t, h * head_size_ + d);
    hd.attention.backward(hd.qv, hd.kv, hd.vv, hd.out);
    hd.q.backward(x, hd.qv);
    hd.k.backward(x, hd.kv);
    hd.v.backward(x, hd.vv);
  }
}

// ---------------------------------------------------------------- FeedForward

FeedForward::FeedForward(std::string name, std::size_t features, std::size_t hidden)
    : name_(name), first_(name + ".fc1", features, hidden), second_(name + ".fc2", hidden, features) {
  if (hidden == 0) throw InvalidArgument("feedforward: hidden must be >= 1");
}

FeedForward::FeedForward(LayerParams first, LayerParams second)
    : name_("ffn"), first_(std::move(first)), second_(std::move(second)) {
  if (second_.in_features() != first_.out_features() ||
      second_.out_features() != first_.in_features()) {
    throw DimensionError("feature", "feedforward: layer widths do not chain back to the input width");
  }
}

std::vector<LayerParams*> FeedForward::params() {
  return {&first_.layer_params(), &second_.layer_params()};
}

Tensor3 FeedForward::forward(const Tensor3& x, const RunMode& mode) {
  pre_ = first_.forward(x, mode);
  act_ = Tensor3(pre_.shape());
  for (std::size_t i = 0; i < pre_.size(); ++i) act_.data()[i] = pre_.data()[i] < 0.0 ? 0.0 : pre_.data()[i];
  return second_.forward(act_, mode);
}

void FeedForward::backward(Tensor3& x, const Tensor3& y) {
  act_.zero_grad();
  pre_.zero_grad();
  second_.backward(act_, y);
  for (std::size_t i = 0; i < pre_.size(); ++i)
    pre_.grad()[i] = pre_.data()[i] > 0.0 ? act_.grad()[i] : 0.0;
  first_.backward(x, pre_);
}

// ---------------------------------------------------------------- residual

Tensor3 residual_add(const Tensor3& x, const Tensor3& sublayer_out) {
  require_same_shape(x, sublayer_out, "residual_add");
  Tensor3 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] + sublayer_out.data()[i];
  return y;
}

void residual_add_backward(Tensor3& x, Tensor3& sublayer_out, const Tensor3& out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    x.grad()[i] += out.grad()[i];
    sublayer_out.grad()[i] += out.grad()[i];
  }
}

// ---------------------------------------------------------------- LayerNorm

LayerNorm::LayerNorm(std::string name, std::size_t features, double epsilon)
    : params_(std::move(name), {features}, features), epsilon_(epsilon) {
  if (features == 0) throw InvalidArgument("layer_norm: feature width must be >= 1");
  std::fill(params_.weights.begin(), params_.weights.end(), 1.0);
}

Tensor3 LayerNorm::forward(const Tensor3& x, const RunMode&) {
  const std::size_t F = params_.weights.size();
  require_features(x, F, "layer_norm '" + params_.name + "'");
  Tensor3 y(x.shape());
  xhat_.assign(x.size(), 0.0);
  inv_std_.assign(x.batch() * x.time(), 0.0);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < x.time(); ++t) {
      auto xr = x.row(b, t);
      double mean = 0.0;
      for (double v : xr) mean += v;
      mean /= static_cast<double>(F);
      double var = 0.0;
      for (double v : xr) var += (v - mean) * (v - mean);
      var /= static_cast<double>(F);
      const double inv = 1.0 / std::sqrt(var + epsilon_);
      inv_std_[b * x.time() + t] = inv;
      const std::size_t off = x.index(b, t, 0);
      auto yr = y.row(b, t);
      for (std::size_t f = 0; f < F; ++f) {
        const double h = (xr[f] - mean) * inv;
        xhat_[off + f] = h;
        yr[f] = h * params_.weights[f] + params_.bias[f];
      }
    }
  }
  return y;
}

void LayerNorm::backward(Tensor3& x, const Tensor3& y) {
  const std::size_t F = params_.weights.size();
  const double n = static_cast<double>(F);
  std::vector<double> dxhat(F);
  for (std::size_t b = 0; b < x.batch(); ++b) {
    for (std::size_t t = 0; t < x.time(); ++t) {
      const std::size_t off = x.index(b, t, 0);
      double sum_d = 0.0, sum_dx = 0.0;
      for (std::size_t f = 0; f < F; ++f) {
        const double g = y.grad()[off + f];
        params_.weight_grad[f] += g * xhat_[off + f];
        params_.bias_grad[f] += g;
        dxhat[f] = g * params_.weights[f];
        sum_d += dxhat[f];
        sum_dx += dxhat[f] * xhat_[off + f];
      }
      const double inv = inv_std_[b * x.time() + t];
      for (std::size_t f = 0; f < F; ++f) {
        x.grad()[off + f] += inv / n * (n * dxhat[f] - sum_d - xhat_[off + f] * sum_dx);
      }
    }
  }
}

// ---------------------------------------------------------------- pooling

Tensor3 GlobalAvgPool::forward(const Tensor3& x, const RunMode&) {
  if (x.time() == 0) throw EmptyDataError("global_avg_pool: time length is 0");
  Tensor3 y(x.batch(), 1, x.feature());
  const double inv = 1.0 / static_cast<double>(x.time());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    auto yr = y.row(b, 0);
    for (std::size_t t = 0; t < x.time(); ++t) {
      auto xr = x.row(b, t);
      for (std::size_t f = 0; f < x.feature(); ++f) yr[f] += xr[f];
    }
    for (auto& v : yr) v *= inv;
  }
  return y;
}

void GlobalAvgPool::backward(Tensor3& x, const Tensor3& y) {
  const double inv = 1.0 / static_cast<double>(x.time());
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t t = 0; t < x.time(); ++t)
      for (std::size_t f = 0; f < x.feature(); ++f) x.grad_at(b, t, f) += y.grad_at(b, 0, f) * inv;
}

Tensor3 LastStep::forward(const Tensor3& x, const RunMode&) {
  if (x.time() == 0) throw EmptyDataError("last_step: time length is 0");
  Tensor3 y(x.batch(), 1, x.feature());
  for (std::size_t b = 0; b < x.batch(); ++b) {
    auto src = x.row(b, x.time() - 1);
    std::copy(src.begin(), src.end(), y.row(b, 0).begin());
  }
  return y;
}

void LastStep::backward(Tensor3& x, const Tensor3& y) {
  for (std::size_t b = 0; b < x.batch(); ++b)
    for (std::size_t f = 0; f < x.feature(); ++f)
      x.grad_at(b, x.time() - 1, f) += y.grad_at(b, 0, f);
}

// ---------------------------------------------------------------- MLP head

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

MlpHead::MlpHead(std::string name, std::size_t features, std::size_t hidden)
    : name_(name), hidden_(name + ".fc1", features, hidden), output_(name + ".fc2", hidden, 1) {
  if (hidden == 0) throw InvalidArgument("mlp_head: hidden must be >= 1");
}

std::vector<LayerParams*> MlpHead::params() {
  return {&hidden_.layer_params(), &output_.layer_params()};
}

Tensor3 MlpHead::forward(const Tensor3& x, const RunMode& mode) {
  if (x.time() != 1) {
    throw DimensionError("time", "mlp_head: expects pooled input with time length 1, got " +
                                     std::to_string(x.time()));
  }
  pre_ = hidden_.forward(x, mode);
  act_ = Tensor3(pre_.shape());
  for (std::size_t i = 0; i < pre_.size(); ++i) act_.data()[i] = pre_.data()[i] < 0.0 ? 0.0 : pre_.data()[i];
  logit_ = output_.forward(act_, mode);
  Tensor3 y(logit_.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = sigmoid(logit_.data()[i]);
  return y;
}

void MlpHead::backward(Tensor3& x, const Tensor3& y) {
  logit_.zero_grad();
  act_.zero_grad();
  pre_.zero_grad();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = y.data()[i];
    logit_.grad()[i] = y.grad()[i] * s * (1.0 - s);
  }
  output_.backward(act_, logit_);
  for (std::size_t i = 0; i < pre_.size(); ++i)
    pre_.grad()[i] = pre_.data()[i] > 0.0 ? act_.grad()[i] : 0.0;
  hidden_.backward(x, pre_);
}

BceResult bce_loss(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("batch", "bce_loss: " + std::to_string(scores.size()) + " scores vs " +
                                      std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw EmptyDataError("bce_loss: empty batch");
  constexpr double lo = 1e-12, hi = 1.0 - 1e-12;
  const double n = static_cast<double>(scores.size());
  BceResult r;
  r.grad.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores[i], lo, hi);
    const double y = labels[i];
    r.loss -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
    r.grad[i] = (s - y) / (s * (1.0 - s) * n);
  }
  r.loss /= n;
  return r;
}

// ---------------------------------------------------------------- LSTM

Lstm::Lstm(std::string name, std::size_t in_features, std::size_t hidden)
    : params_(std::move(name), {4 * hidden, in_features + hidden}, 4 * hidden),
      in_(in_features),
      hidden_(hidden) {
  if (hidden == 0) throw InvalidArgument("lstm: hidden must be >= 1");
}

Tensor3 Lstm::forward(const Tensor3& x, const RunMode&) {
  require_features(x, in_, "lstm '" + params_.name + "'");
  const std::size_t H = hidden_, B = x.batch(), T = x.time(), width = in_ + H;
  Tensor3 y(B, T, H);
  gates_.assign(B * T * 4 * H, 0.0);
  cells_.assign(B * T * H, 0.0);
  std::vector<double> z(width), h_prev(H), c_prev(H);
  const double* w = params_.weights.data();
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(h_prev.begin(), h_prev.end(), 0.0);
    std::fill(c_prev.begin(), c_prev.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      auto xr = x.row(b, t);
      std::copy(xr.begin(), xr.end(), z.begin());
      std::copy(h_prev.begin(), h_prev.end(), z.begin() + in_);
      double* g = gates_.data() + (b * T + t) * 4 * H;
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const double* wr = w + r * width;
        double acc = params_.bias[r];
        for (std::size_t i = 0; i < width; ++i) acc += wr[i] * z[i];
        const bool candidate = r >= 2 * H && r < 3 * H;
        g[r] = candidate ? std::tanh(acc) : sigmoid(acc);
      }
      double* c = cells_.data() + (b * T + t) * H;
      auto hr = y.row(b, t);
      for (std::size_t j = 0; j < H; ++j) {
        c[j] = g[H + j] * c_prev[j] + g[j] * g[2 * H + j];
        hr[j] = g[3 * H + j] * std::tanh(c[j]);
      }
      std::copy(c, c + H, c_prev.begin());
      std::copy(hr.begin(), hr.end(), h_prev.begin());
    }
  }
  return y;
}

void Lstm::backward(Tensor3& x, const Tensor3& y) {
  const std::size_t H = hidden_, B = x.batch(), T = x.time(), width = in_ + H;
  const double* w = params_.weights.data();
  double* gw = params_.weight_grad.data();
  std::vector<double> dh_next(H), dc_next(H), dpre(4 * H), z(width), dz(width);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    std::fill(dc_next.begin(), dc_next.end(), 0.0);
    for (std::size_t t = T; t-- > 0;) {
      const double* g = gates_.data() + (b * T + t) * 4 * H;
      const double* c = cells_.data() + (b * T + t) * H;
      for (std::size_t j = 0; j < H; ++j) {
        const double c_prev = t > 0 ? cells_[(b * T + t - 1) * H + j] : 0.0;
        const double dh = y.grad_at(b, t, j) + dh_next[j];
        const double tc = std::tanh(c[j]);
        const double dc = dc_next[j] + dh * g[3 * H + j] * (1.0 - tc * tc);
        const double di = dc * g[2 * H + j];
        const double df = dc * c_prev;
        const double dg = dc * g[j];
        const double dout = dh * tc;
        dpre[j] = di * g[j] * (1.0 - g[j]);
        dpre[H + j] = df * g[H + j] * (1.0 - g[H + j]);
        dpre[2 * H + j] = dg * (1.0 - g[2 * H + j] * g[2 * H + j]);
        dpre[3 * H + j] = dout * g[3 * H + j] * (1.0 - g[3 * H + j]);
        dc_next[j] = dc * g[H + j];
      }
      auto xr = x.row(b, t);
      std::copy(xr.begin(), xr.end(), z.begin());
      for (std::size_t j = 0; j < H; ++j) z[in_ + j] = t > 0 ? y.at(b, t - 1, j) : 0.0;
      std::fill(dz.begin(), dz.end(), 0.0);
      for (std::size_t r = 0; r < 4 * H; ++r) {
        const double d = dpre[r];
        if (d == 0.0) continue;
        params_.bias_grad[r] += d;
        const double* wr = w + r * width;
        double* gwr = gw + r * width;
        for (std::size_t i = 0; i < width; ++i) {
          gwr[i] += d * z[i];
          dz[i] += d * wr[i];
        }
      }
      for (std::size_t i = 0; i < in_; ++i) x.grad_at(b, t, i) += dz[i];
      for (std::size_t j = 0; j < H; ++j) dh_next[j] = dz[in_ + j];
    }
  }
}

// ---------------------------------------------------------------- EncoderBlock

EncoderBlock::EncoderBlock(std::string name, std::size_t features, std::size_t heads,
                           std::size_t head_size, std::size_t ff_dim, double dropout)
    : name_(name),
      attention_(name + ".mha", features, heads, head_size),
      attention_dropout_(dropout),
      norm1_(name + ".norm1", features),
      ffn_(name + ".ffn", features, ff_dim),
      ffn_dropout_(dropout),
      norm2_(name + ".norm2", features) {}

std::vector<LayerParams*> EncoderBlock::params() {
  std::vector<LayerParams*> ps = attention_.params();
  ps.push_back(&norm1_.layer_params());
  for (auto* p : ffn_.params()) ps.push_back(p);
  ps.push_back(&norm2_.layer_params());
  return ps;
}

Tensor3 EncoderBlock::forward(const Tensor3& x, const RunMode& mode) {
  attn_ = attention_.forward(x, mode);
  attn_drop_ = attention_dropout_.forward(attn_, mode);
  res1_ = residual_add(x, attn_drop_);
  norm1_out_ = norm1_.forward(res1_, mode);
  ffn_out_ = ffn_.forward(norm1_out_, mode);
  ffn_drop_ = ffn_dropout_.forward(ffn_out_, mode);
  res2_ = residual_add(norm1_out_, ffn_drop_);
  return norm2_.forward(res2_, mode);
}

void EncoderBlock::backward(Tensor3& x, const Tensor3& y) {
  for (auto* t : {&attn_, &attn_drop_, &res1_, &norm1_out_, &ffn_out_, &ffn_drop_, &res2_})
    t->zero_grad();
  norm2_.backward(res2_, y);
  residual_add_backward(norm1_out_, ffn_drop_, res2_);
  ffn_dropout_.backward(ffn_out_, ffn_drop_);
  ffn_.backward(norm1_out_, ffn_out_);
  norm1_.backward(res1_, norm1_out_);
  residual_add_backward(x, attn_drop_, res1_);
  attention_dropout_.backward(attn_, attn_drop_);
  attention_.backward(x, attn_);
}

// ---------------------------------------------------------------- Sequential

std::vector<LayerParams*> Sequential::params() {
  std::vector<LayerParams*> ps;
  for (auto& l : layers_)
    for (auto* p : l->params()) ps.push_back(p);
  return ps;
}

Tensor3 Sequential::forward(const Tensor3& x, const RunMode& mode) {
  if (layers_.empty()) return Tensor3(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  acts_.resize(layers_.size() - 1);
  const Tensor3* in = &x;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    acts_[i] = layers_[i]->forward(*in, mode);
    in = &acts_[i];
  }
  return layers_.back()->forward(*in, mode);
}

void Sequential::backward(Tensor3& x, const Tensor3& y) {
  if (layers_.empty()) {
    for (std::size_t i = 0; i < y.size(); ++i) x.grad()[i] += y.grad()[i];
    return;
  }
  for (auto& a : acts_) a.zero_grad();
  const std::size_t n = layers_.size();
  for (std::size_t i = n; i-- > 0;) {
    Tensor3& in = i == 0 ? x : acts_[i - 1];
    const Tensor3& out = i == n - 1 ? y : acts_[i];
    layers_[i]->backward(in, out);
  }
}

}  // namespace ctranatd
