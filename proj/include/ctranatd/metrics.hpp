#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctranatd {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

// Positive iff score >= threshold.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold = 0.5);

// These throw UndefinedMetric on a zero denominator.
double accuracy(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);

struct PrecisionF1 {
  std::optional<double> precision;  // empty when nothing was predicted positive
  double f1 = 0.0;
};
// F1 is 0 when tp == 0 and fp + fn > 0; throws when tp + fp == 0 and tp + fn == 0.
PrecisionF1 precision_f1(const ConfusionCounts& c);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // first point uses +infinity
};
using RocCurve = std::vector<RocPoint>;

// One point per distinct score (descending) plus +infinity. Throws
// UndefinedMetric unless both classes are present.
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);
double auc(const RocCurve& curve);

struct MetricSummary {
  double accuracy = 0.0;
  double recall = 0.0;
  std::optional<double> precision;
  double f1 = 0.0;
  double auc = 0.0;
};
MetricSummary summarize(std::span<const double> scores, std::span<const int> labels,
                        double threshold = 0.5);

std::string roc_to_csv(const RocCurve& curve);
// Columns rep,accuracy,recall,precision,f1,auc plus a final "mean" row.
std::string metrics_to_csv(std::span<const MetricSummary> reps);
MetricSummary mean_summary(std::span<const MetricSummary> reps);

// Shortest round-trip text for a double ("inf" for infinity).
std::string format_number(double v);

}  // namespace ctranatd
