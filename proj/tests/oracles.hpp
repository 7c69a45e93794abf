#pragma once

// Independent reference computations used only by tests. These are written
// from the textbook definitions with plain loops and deliberately share no
// code with the library's implementations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

// x[t][c], w[f][c][j]; returns pre-activation y[t][f] for valid convolution.
inline std::vector<std::vector<double>> conv1d_pre_activation(
    const std::vector<std::vector<double>>& x, const std::vector<std::vector<std::vector<double>>>& w,
    const std::vector<double>& bias) {
  const std::size_t T = x.size(), F = w.size(), K = w[0][0].size(), C = w[0].size();
  std::vector<std::vector<double>> y(T - K + 1, std::vector<double>(F, 0.0));
  for (std::size_t t = 0; t + K <= T; ++t)
    for (std::size_t f = 0; f < F; ++f) {
      double s = bias[f];
      for (std::size_t i = 1; i <= K; ++i)
        for (std::size_t c = 0; c < C; ++c) s += w[f][c][i - 1] * x[t + i - 1][c];
      y[t][f] = s;
    }
  return y;
}

// q[i][d], k[j][d], v[j][e] for a single batch element.
inline std::vector<std::vector<double>> attention(const std::vector<std::vector<double>>& q,
                                                  const std::vector<std::vector<double>>& k,
                                                  const std::vector<std::vector<double>>& v) {
  const std::size_t tq = q.size(), tk = k.size(), dk = q[0].size(), dv = v[0].size();
  std::vector<std::vector<double>> out(tq, std::vector<double>(dv, 0.0));
  for (std::size_t i = 0; i < tq; ++i) {
    std::vector<double> logits(tk);
    for (std::size_t j = 0; j < tk; ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dk; ++d) s += q[i][d] * k[j][d];
      logits[j] = s / std::sqrt(static_cast<double>(dk));
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (auto& l : logits) z += std::exp(l - mx);
    for (std::size_t j = 0; j < tk; ++j) {
      const double w = std::exp(logits[j] - mx) / z;
      for (std::size_t e = 0; e < dv; ++e) out[i][e] += w * v[j][e];
    }
  }
  return out;
}

struct Sample {
  double score;
  int label;
};

// P(score_pos > score_neg) + 0.5 * P(tie) over all positive/negative pairs.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

struct RocPoint {
  double fpr, tpr, threshold;
};

// Recounts the confusion matrix from scratch at every distinct threshold.
inline std::vector<RocPoint> threshold_sweep(const std::vector<double>& scores,
                                             const std::vector<int>& labels) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  thresholds.insert(thresholds.begin(), std::numeric_limits<double>::infinity());
  std::size_t P = 0, N = 0;
  for (int l : labels) (l == 1 ? P : N)++;
  std::vector<RocPoint> pts;
  for (double th : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= th) (labels[i] == 1 ? tp : fp)++;
    }
    pts.push_back({static_cast<double>(fp) / static_cast<double>(N),
                   static_cast<double>(tp) / static_cast<double>(P), th});
  }
  return pts;
}

}  // namespace oracle

namespace oracle {

// Plain batch gradient-descent logistic regression; returns training accuracy.
inline double logistic_regression_accuracy(const std::vector<std::vector<double>>& x,
                                           const std::vector<int>& y, int iterations = 2000,
                                           double lr = 0.5) {
  const std::size_t n = x.size(), d = x[0].size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double z = b;
      for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double e = p - y[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += e * x[i][j];
      gb += e;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(n);
    b -= lr * gb / static_cast<double>(n);
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = b;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[i][j];
    correct += (z >= 0.0) == (y[i] == 1);
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace oracle
