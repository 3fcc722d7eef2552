#include <gtest/gtest.h>

#include <cmath>

#include "retain/common.hpp"
#include "retain/evaluation/analysis.hpp"
#include "support.hpp"

using namespace retain;
using namespace retain::testing;

namespace {

void play(LogBuilder& b, const std::string& id, const std::string& sid, std::int64_t ts) {
  b.session(id, sid, ts, ts + 600).round(id, sid, ts + 10);
}

// a: long only; b: short only; c: both; d: neither. d's late session keeps
// the log span beyond 67 days.
EventLog hand_log() {
  LogBuilder b;
  for (const char* id : {"a", "b", "c", "d"}) b.install(id, kT0);
  play(b, "a", "a0", kT0 + 100);
  play(b, "a", "a1", kT0 + 61 * kDay);
  play(b, "b", "b0", kT0 + 100);
  play(b, "b", "b1", kT0 + 10 * kDay);
  play(b, "c", "c0", kT0 + 100);
  play(b, "c", "c1", kT0 + 9 * kDay);
  play(b, "c", "c2", kT0 + 66 * kDay);
  play(b, "d", "d0", kT0 + 100);
  b.session("d", "d1", kT0 + 70 * kDay, kT0 + 70 * kDay + 60);
  return b.build();
}

// Pearson correlation by the textbook two-pass formula.
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

const Correlation& find(const std::vector<Correlation>& cs, const std::string& name) {
  for (const auto& c : cs) {
    if (c.feature == name) return c;
  }
  throw std::runtime_error("missing " + name);
}

}  // namespace

TEST(Longterm, HandCountedLog) {
  const EventLog log = hand_log();
  const std::map<std::string, std::map<std::string, int>> preds = {
      {"m", {{"a", 1}, {"b", 1}, {"c", 0}, {"d", 0}}}, {"none", {{"a", 0}, {"b", 0}, {"c", 0}, {"d", 0}}}};
  const LongtermReport r = longterm_analysis(log, preds);
  EXPECT_EQ(r.players, 4u);
  EXPECT_DOUBLE_EQ(r.base_rate, 0.5);
  EXPECT_EQ(r.short_retained, 2u);
  ASSERT_TRUE(r.long_given_actual_short.has_value());
  EXPECT_DOUBLE_EQ(*r.long_given_actual_short, 0.5);
  ASSERT_EQ(r.models.size(), 2u);
  EXPECT_EQ(r.models[0].model, "m");
  EXPECT_EQ(r.models[0].predicted_retained, 2u);
  EXPECT_DOUBLE_EQ(*r.models[0].long_given_predicted, 0.5);
  EXPECT_EQ(r.models[1].predicted_retained, 0u);
  EXPECT_FALSE(r.models[1].long_given_predicted.has_value());
}

TEST(Longterm, IdentityAndAllPositivePredictors) {
  const EventLog log = apply_cohort_filter(synthetic(3000, 5).log);
  std::map<std::string, std::map<std::string, int>> preds;
  preds["truth"] = label(log, EvalWindow::short_term());
  for (const auto& [id, y] : preds["truth"]) preds["all"][id] = 1;
  const LongtermReport r = longterm_analysis(log, preds);
  ASSERT_EQ(r.models.size(), 2u);
  EXPECT_EQ(r.models[0].model, "all");
  EXPECT_DOUBLE_EQ(*r.models[0].long_given_predicted, r.base_rate);
  EXPECT_EQ(r.models[0].predicted_retained, r.players);
  EXPECT_EQ(r.models[1].model, "truth");
  EXPECT_DOUBLE_EQ(*r.models[1].long_given_predicted, *r.long_given_actual_short);
  EXPECT_EQ(r.models[1].predicted_retained, r.short_retained);
  // Long-term retention implies nothing about short-term, but the generator
  // makes it much likelier among the short-term retained.
  EXPECT_GT(*r.long_given_actual_short, r.base_rate);
}

TEST(Longterm, CalibratedCohortBaseRate) {
  const EventLog log = apply_cohort_filter(synthetic(8000, 13).log);
  const LongtermReport r = longterm_analysis(log, {});
  EXPECT_NEAR(r.base_rate, 0.152, 0.02);
}

TEST(Longterm, Errors) {
  LogBuilder b;
  b.install("a", kT0);
  play(b, "a", "a0", kT0 + 100);
  play(b, "a", "a1", kT0 + 20 * kDay);
  try {
    longterm_analysis(b.build(), {});
    FAIL() << "expected InputError";
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("67"), std::string::npos) << e.what();
  }
  const std::map<std::string, std::map<std::string, int>> partial = {{"m", {{"a", 1}}}};
  EXPECT_THROW(longterm_analysis(hand_log(), partial), InputError);
  EXPECT_THROW(longterm_analysis(LogBuilder().build(), {}), InputError);
}

TEST(Correlations, LabelCopyIsOneAndConstantIsFlagged) {
  auto rows = random_features(500, 1);
  for (auto& r : rows) {
    r.max_level = r.retained_short;
    r.avg_stars = 2.0;
  }
  const auto cs = feature_correlations(rows);
  ASSERT_EQ(cs.size(), kNumericFeatures.size());
  EXPECT_NEAR(find(cs, "max_level").r, 1.0, 1e-12);
  EXPECT_FALSE(find(cs, "max_level").constant);
  EXPECT_EQ(find(cs, "avg_stars").r, 0.0);
  EXPECT_TRUE(find(cs, "avg_stars").constant);
  for (const auto& c : cs) {
    EXPECT_LE(std::abs(c.r), 1.0 + 1e-12);
  }
}

TEST(Correlations, MatchTwoPassFormula) {
  const auto rows = random_features(2000, 2);
  for (Target t : {Target::retained_short, Target::retained_long}) {
    const auto cs = feature_correlations(rows, t);
    std::vector<double> y;
    for (const auto& r : rows) y.push_back(t == Target::retained_short ? r.retained_short : r.retained_long);
    for (std::size_t j = 0; j < kNumericFeatures.size(); ++j) {
      std::vector<double> x;
      for (const auto& r : rows) x.push_back(r.numeric()[j]);
      EXPECT_EQ(cs[j].feature, kNumericFeatures[j]);
      EXPECT_NEAR(cs[j].r, pearson(x, y), 1e-12) << kNumericFeatures[j];
    }
  }
  // Negated label flips every sign.
  auto flipped = rows;
  for (auto& r : flipped) r.retained_short = 1 - r.retained_short;
  const auto a = feature_correlations(rows), b = feature_correlations(flipped);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j].r, -b[j].r, 1e-12);
}

TEST(FeatureReport, TablesFollowModels) {
  const auto rows = random_features(1500, 3);
  const Dataset data = encode(rows, rows);
  LogisticParams lp;
  lp.max_steps = 4;
  const LinearModel lr = train_logistic(data.design, lp);
  ForestParams fp;
  fp.n_trees = 16;
  const Forest rf = train_forest(data.design, fp);
  const FeatureReport rep = feature_report("first_day", rows, lr, rf);
  EXPECT_EQ(rep.window, "first_day");
  ASSERT_EQ(rep.coefficients.size(), lr.terms.size() + 1);
  EXPECT_EQ(rep.coefficients[0].term, "(intercept)");
  for (std::size_t i = 0; i < rep.coefficients.size(); ++i) {
    EXPECT_EQ(rep.coefficients[i].weight, lr.weights[i]);
    EXPECT_EQ(rep.coefficients[i].std_error, lr.std_errors[i]);
  }
  ASSERT_EQ(rep.importance.size(), rf.columns.size());
  for (std::size_t i = 1; i < rep.importance.size(); ++i) EXPECT_GE(rep.importance[i - 1].second, rep.importance[i].second);
  EXPECT_EQ(rep.importance[0].first, "current_absence_time");
  EXPECT_EQ(rep.correlations.size(), kNumericFeatures.size());
}
