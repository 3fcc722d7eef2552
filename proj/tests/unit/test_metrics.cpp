#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "retain/evaluation/metrics.hpp"
#include "retain/common.hpp"

using namespace retain;

namespace {

// O(n^2) pair count.
double pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < y.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      if (s[i] > s[j]) wins += 1;
      if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Metrics, HandCountedExample) {
  const std::vector<int> y = {1, 1, 0, 0}, c = {1, 0, 0, 0};
  const MetricSet m = compute_metrics(y, c, {});
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 2u);
  EXPECT_EQ(m.fp, 0u);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_NEAR(m.f1, 2.0 / 3.0, 1e-12);
  EXPECT_FALSE(m.auc.has_value());
}

TEST(Metrics, ZeroDenominatorsGiveZero) {
  const MetricSet none = metrics_from_counts(0, 0, 5, 3);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_DOUBLE_EQ(none.accuracy, 5.0 / 8.0);
  const MetricSet empty = metrics_from_counts(0, 0, 0, 0);
  EXPECT_EQ(empty.accuracy, 0.0);
  EXPECT_EQ(empty.n(), 0u);
}

TEST(Metrics, RandomConfusionsMatchClosedForm) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> len(1, 300);
    const int n = len(gen);
    std::vector<int> y(n), c(n);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(gen() % 2);
      c[i] = static_cast<int>(gen() % 2);
      if (y[i] && c[i]) ++tp;
      if (!y[i] && c[i]) ++fp;
      if (!y[i] && !c[i]) ++tn;
      if (y[i] && !c[i]) ++fn;
    }
    const MetricSet m = compute_metrics(y, c, {});
    ASSERT_EQ(m.tp, tp);
    ASSERT_EQ(m.fp, fp);
    ASSERT_EQ(m.tn, tn);
    ASSERT_EQ(m.fn, fn);
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    EXPECT_NEAR(m.accuracy, double(tp + tn) / n, 1e-12);
    EXPECT_NEAR(m.precision, p, 1e-12);
    EXPECT_NEAR(m.recall, r, 1e-12);
    EXPECT_NEAR(m.f1, p + r > 0 ? 2 * p * r / (p + r) : 0.0, 1e-12);
  }
}

TEST(Metrics, AucMatchesPairwiseOracleWithTies) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<int> y(1000);
    std::vector<double> s(1000);
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = u(gen) < 0.4 ? 1 : 0;
      // Coarse rounding forces many ties.
      s[i] = std::round((u(gen) + 0.3 * y[i]) * (trial == 0 ? 1e6 : 20.0)) / 20.0;
    }
    EXPECT_NEAR(*auc(y, s), pairwise_auc(y, s), 1e-9);
  }
}

TEST(Metrics, AucEdgeCases) {
  const std::vector<int> y = {1, 0, 1, 0, 0};
  const std::vector<double> perfect = {1, 0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(*auc(y, perfect), 1.0);
  const std::vector<double> inverted = {0, 1, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*auc(y, inverted), 0.0);
  const std::vector<double> flat(5, 0.3);
  EXPECT_DOUBLE_EQ(*auc(y, flat), 0.5);
  const std::vector<int> ones(5, 1);
  EXPECT_FALSE(auc(ones, flat).has_value());
  EXPECT_FALSE(compute_metrics(ones, ones, flat).auc.has_value());
}

TEST(Metrics, AucInvariantUnderIncreasingTransform) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> nd;
  std::vector<int> y(400);
  std::vector<double> s(400), t(400);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<int>(gen() % 2);
    s[i] = nd(gen) + y[i];
    t[i] = std::exp(3 * s[i]) + 7;
  }
  EXPECT_DOUBLE_EQ(*auc(y, s), *auc(y, t));
}

TEST(Metrics, RocCurveShapeAndArea) {
  std::mt19937_64 gen(3);
  std::vector<int> y(500);
  std::vector<double> s(500);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = static_cast<int>(gen() % 3 == 0);
    s[i] = static_cast<double>(gen() % 50) + 10.0 * y[i];
  }
  const auto curve = roc_curve(y, s);
  ASSERT_GE(curve.size(), 2u);
  EXPECT_TRUE(std::isinf(curve.front().threshold));
  EXPECT_EQ(curve.front().fpr, 0.0);
  EXPECT_EQ(curve.front().tpr, 0.0);
  EXPECT_DOUBLE_EQ(curve.back().fpr, 1.0);
  EXPECT_DOUBLE_EQ(curve.back().tpr, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].fpr, curve[i - 1].fpr);
    EXPECT_GE(curve[i].tpr, curve[i - 1].tpr);
    EXPECT_LT(curve[i].threshold, curve[i - 1].threshold);
  }
  EXPECT_NEAR(trapezoid_area(curve), *auc(y, s), 1e-12);
}

TEST(Metrics, RejectsBadInput) {
  const std::vector<int> y = {1, 0}, c = {1}, bad = {2, 0};
  const std::vector<double> s = {0.1};
  EXPECT_THROW(compute_metrics(y, c, {}), InputError);
  EXPECT_THROW(compute_metrics(bad, y, {}), InputError);
  EXPECT_THROW(auc(y, s), InputError);
  EXPECT_THROW(roc_curve(y, s), InputError);
}
