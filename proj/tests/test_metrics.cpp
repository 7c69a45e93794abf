#include <gtest/gtest.h>

#include <boost/rational.hpp>
#include <cmath>
#include <limits>

#include "ctranatd/errors.hpp"
#include "ctranatd/metrics.hpp"
#include "ctranatd/tensor.hpp"
#include "oracles.hpp"

using namespace ctranatd;
using Q = boost::rational<long long>;

namespace {

double to_double(const Q& q) { return static_cast<double>(q.numerator()) / static_cast<double>(q.denominator()); }

ConfusionCounts counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  ConfusionCounts c;
  c.tp = tp;
  c.fp = fp;
  c.tn = tn;
  c.fn = fn;
  return c;
}

}  // namespace

TEST(Confusion, Examples) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<int> l{1, 0};
  const auto c = confusion(s, l);
  EXPECT_EQ(c.tp, 1u);
  EXPECT_EQ(c.tn, 1u);
  EXPECT_EQ(c.fp, 0u);
  EXPECT_EQ(c.fn, 0u);

  const std::vector<double> half{0.5};
  const std::vector<int> pos{1};
  EXPECT_EQ(confusion(half, pos).tp, 1u);

  const std::vector<double> high(7, 0.9);
  const std::vector<int> zeros(7, 0);
  const auto all_fp = confusion(high, zeros);
  EXPECT_EQ(all_fp.fp, 7u);
  EXPECT_EQ(all_fp.tp + all_fp.tn + all_fp.fn, 0u);

  EXPECT_THROW(confusion(s, pos), InvalidArgument);
}

TEST(Scalars, Examples) {
  EXPECT_EQ(accuracy(counts(1, 0, 1, 0)), 1.0);
  EXPECT_EQ(accuracy(counts(50, 5, 40, 5)), 0.9);
  EXPECT_EQ(accuracy(counts(0, 1, 0, 1)), 0.0);
  EXPECT_THROW(accuracy(counts(0, 0, 0, 0)), UndefinedMetric);

  EXPECT_EQ(recall(counts(8, 0, 0, 2)), 0.8);
  EXPECT_EQ(recall(counts(3, 1, 1, 0)), 1.0);
  EXPECT_EQ(recall(counts(0, 1, 1, 4)), 0.0);
  EXPECT_THROW(recall(counts(0, 3, 3, 0)), UndefinedMetric);

  const auto pf = precision_f1(counts(8, 2, 0, 4));
  EXPECT_DOUBLE_EQ(*pf.precision, 0.8);
  EXPECT_NEAR(pf.f1, 8.0 / 11.0, 1e-15);
  EXPECT_NEAR(pf.f1, 0.7273, 1e-4);
  // precision == recall == 0.75
  EXPECT_DOUBLE_EQ(precision_f1(counts(3, 1, 0, 1)).f1, 0.75);
  EXPECT_EQ(precision_f1(counts(0, 1, 0, 1)).f1, 0.0);
  EXPECT_FALSE(precision_f1(counts(0, 0, 5, 2)).precision.has_value());
  EXPECT_THROW(precision_f1(counts(0, 0, 4, 0)), UndefinedMetric);
}

TEST(Scalars, AgreeWithRationalArithmetic) {
  RngState rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = counts(rng.below(1000), rng.below(1000), rng.below(1000), rng.below(1000));
    const auto tp = static_cast<long long>(c.tp), fp = static_cast<long long>(c.fp),
               tn = static_cast<long long>(c.tn), fn = static_cast<long long>(c.fn);
    if (c.total() > 0) {
      const double a = accuracy(c);
      EXPECT_NEAR(a, to_double(Q(tp + tn, tp + tn + fp + fn)), 1e-15);
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
    if (tp + fn > 0) EXPECT_NEAR(recall(c), to_double(Q(tp, tp + fn)), 1e-15);
    if (tp + fp > 0 && tp + fn > 0) {
      const auto pf = precision_f1(c);
      const Q p(tp, tp + fp), r(tp, tp + fn);
      EXPECT_NEAR(*pf.precision, to_double(p), 1e-15);
      const double f1 = tp == 0 ? 0.0 : to_double(Q(2) * p * r / (p + r));
      EXPECT_NEAR(pf.f1, f1, 1e-15);
    }
  }
}

TEST(Roc, SeparatedAndConstant) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> l{1, 1, 0, 0};
  const auto c = roc_curve(s, l);
  bool corner = false;
  for (const auto& p : c) corner |= p.fpr == 0.0 && p.tpr == 1.0;
  EXPECT_TRUE(corner);
  EXPECT_EQ(auc(c), 1.0);

  const std::vector<double> same(6, 0.4);
  const std::vector<int> mix{1, 0, 1, 0, 0, 1};
  const auto d = roc_curve(same, mix);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d[0].fpr, 0.0);
  EXPECT_EQ(d[0].tpr, 0.0);
  EXPECT_TRUE(std::isinf(d[0].threshold));
  EXPECT_EQ(d[1].fpr, 1.0);
  EXPECT_EQ(d[1].tpr, 1.0);
  EXPECT_EQ(auc(d), 0.5);

  const std::vector<int> one_class(4, 1);
  EXPECT_THROW(roc_curve(s, one_class), UndefinedMetric);
}

TEST(Roc, MatchesThresholdSweepOracle) {
  RngState rng(50);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> s(50);
    std::vector<int> l(50);
    for (std::size_t i = 0; i < 50; ++i) {
      s[i] = std::round(rng.uniform() * 20.0) / 20.0;  // forces ties
      l[i] = static_cast<int>(i % 3 == 0);
    }
    const auto got = roc_curve(s, l);
    const auto want = oracle::threshold_sweep(s, l);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].fpr, want[i].fpr);
      EXPECT_EQ(got[i].tpr, want[i].tpr);
      EXPECT_EQ(got[i].threshold, want[i].threshold);
      if (i > 0) {
        EXPECT_GE(got[i].fpr, got[i - 1].fpr);
        EXPECT_GE(got[i].tpr, got[i - 1].tpr);
      }
    }
    EXPECT_EQ(got.back().fpr, 1.0);
    EXPECT_EQ(got.back().tpr, 1.0);
  }
}

TEST(Auc, MatchesPairwiseOracle) {
  RngState rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = static_cast<int>(rng.below(2));
      s[i] = trial % 2 ? rng.uniform() : std::round(rng.uniform() * 10) / 10;
    }
    l[0] = 1;
    l[1] = 0;
    const double a = auc(roc_curve(s, l));
    EXPECT_NEAR(a, oracle::pairwise_auc(s, l), 1e-9);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = 3.0 * s[i] + 7.0;
    EXPECT_NEAR(auc(roc_curve(t, l)), a, 1e-12);
  }
}

TEST(Csv, RocAndMetricsFormat) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<int> l{1, 0};
  EXPECT_EQ(roc_to_csv(roc_curve(s, l)), "fpr,tpr,threshold\n0,0,inf\n0,1,0.9\n1,1,0.1\n");
  const std::vector<MetricSummary> reps{summarize(s, l)};
  EXPECT_EQ(metrics_to_csv(reps), "rep,accuracy,recall,precision,f1,auc\n0,1,1,1,1,1\nmean,1,1,1,1,1\n");
}
