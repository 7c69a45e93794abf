#include "ctranatd/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctranatd/errors.hpp"

namespace ctranatd {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                          std::to_string(labels.size()) + ")");
  for (int l : labels)
    if (l != 0 && l != 1) throw InvalidArgument("labels must be 0 or 1, got " + std::to_string(l));
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels);
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pos = scores[i] >= threshold;
    if (labels[i] == 1) (pos ? c.tp : c.fn)++;
    else (pos ? c.fp : c.tn)++;
  }
  return c;
}

double accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) throw UndefinedMetric("accuracy: no samples");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double recall(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0) throw UndefinedMetric("recall: no positive samples");
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

PrecisionF1 precision_f1(const ConfusionCounts& c) {
  if (c.tp + c.fp == 0 && c.tp + c.fn == 0)
    throw UndefinedMetric("precision/f1: no predicted and no actual positives");
  PrecisionF1 out;
  if (c.tp + c.fp > 0) out.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp == 0) {
    out.f1 = 0.0;
    return out;
  }
  // 2pr/(p+r) simplifies to 2tp/(2tp+fp+fn); one division keeps it exact-ish.
  out.f1 = static_cast<double>(2 * c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
  return out;
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetric("roc: both classes must be present");
  for (double s : scores)
    if (std::isnan(s)) throw InvalidArgument("roc: NaN score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0, i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos), thr});
  }
  return curve;
}

double auc(const RocCurve& curve) {
  if (curve.size() < 2) throw UndefinedMetric("auc: curve needs at least two points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1];
    const auto& b = curve[i];
    if (b.fpr < a.fpr || b.tpr < a.tpr) throw InvalidArgument("auc: curve is not monotone");
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

MetricSummary summarize(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const auto c = confusion(scores, labels, threshold);
  MetricSummary m;
  m.accuracy = accuracy(c);
  m.recall = recall(c);
  const auto pf = precision_f1(c);
  m.precision = pf.precision;
  m.f1 = pf.f1;
  m.auc = auc(roc_curve(scores, labels));
  return m;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string roc_to_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr,threshold\n";
  for (const auto& p : curve)
    out += format_number(p.fpr) + "," + format_number(p.tpr) + "," + format_number(p.threshold) + "\n";
  return out;
}

MetricSummary mean_summary(std::span<const MetricSummary> reps) {
  if (reps.empty()) throw EmptyDataError("mean of zero repetitions");
  MetricSummary m;
  double prec = 0.0;
  std::size_t prec_n = 0;
  for (const auto& r : reps) {
    m.accuracy += r.accuracy;
    m.recall += r.recall;
    m.f1 += r.f1;
    m.auc += r.auc;
    if (r.precision) {
      prec += *r.precision;
      ++prec_n;
    }
  }
  const double n = static_cast<double>(reps.size());
  m.accuracy /= n;
  m.recall /= n;
  m.f1 /= n;
  m.auc /= n;
  if (prec_n > 0) m.precision = prec / static_cast<double>(prec_n);
  return m;
}

std::string metrics_to_csv(std::span<const MetricSummary> reps) {
  auto line = [](const std::string& tag, const MetricSummary& m) {
    return tag + "," + format_number(m.accuracy) + "," + format_number(m.recall) + "," +
           (m.precision ? format_number(*m.precision) : std::string("")) + "," + format_number(m.f1) + "," +
           format_number(m.auc) + "\n";
  };
  std::string out = "rep,accuracy,recall,precision,f1,auc\n";
  for (std::size_t i = 0; i < reps.size(); ++i) out += line(std::to_string(i), reps[i]);
  out += line("mean", mean_summary(reps));
  return out;
}

}  // namespace ctranatd
