#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "retain/common.hpp"
#include "retain/featurize.hpp"
#include "retain/learners/rule_tree.hpp"
#include "support.hpp"

using namespace retain;
using namespace retain::testing;

namespace {

Design micro_design(const Matrix& x, const std::vector<int>& y) {
  Design d;
  for (std::size_t c = 0; c < x.cols(); ++c) d.columns.push_back("f" + std::to_string(c));
  d.scaled = x;
  d.unscaled = x;
  d.labels = y;
  return d;
}

std::size_t column_of(const Design& d, const std::string& name) {
  for (std::size_t c = 0; c < d.columns.size(); ++c) {
    if (d.columns[c] == name) return c;
  }
  throw std::runtime_error("no column " + name);
}

}  // namespace

TEST(RuleTree, RootSplitMatchesOracleOnTwoFeatureMicroData) {
  Rng rng(31);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t rows = 2 + rng.below(7);
    Matrix x(rows, 2);
    std::vector<int> y(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      x(r, 0) = rng.uniform(-10, 10);
      x(r, 1) = static_cast<double>(rng.below(4));
      y[r] = static_cast<int>(rng.below(2));
    }
    RuleTreeParams p;
    p.max_rules = 1;
    const RuleTree t = train_rule_tree(micro_design(x, y), p);
    const auto expected = oracle::exhaustive_root_split(x, y);
    ASSERT_EQ(t.nodes[0].is_leaf(), !expected.has_value());
    if (!expected) continue;
    ASSERT_EQ(static_cast<std::size_t>(t.nodes[0].column), expected->feature);
    ASSERT_EQ(t.nodes[0].threshold, expected->threshold);
    ASSERT_EQ(t.nodes[0].kind, SplitKind::numeric);
  }
}

TEST(RuleTree, AbsenceThresholdEmergesNear72000) {
  auto rows = random_features(3000, 5);
  for (auto& r : rows) r.retained_short = r.current_absence_time <= 72000 ? 1 : 0;
  const Dataset data = encode(rows, rows);
  RuleTreeParams p;
  p.max_rules = 1;
  const RuleTree t = train_rule_tree(data.design, p);
  ASSERT_EQ(t.rule_count(), 1u);
  EXPECT_EQ(t.nodes[0].feature, "current_absence_time");
  EXPECT_NEAR(t.nodes[0].threshold, 72000, 500);
  EXPECT_EQ(t.nodes[static_cast<std::size_t>(t.nodes[0].left)].probability, 1.0);
  EXPECT_EQ(t.nodes[static_cast<std::size_t>(t.nodes[0].right)].probability, 0.0);
}

TEST(RuleTree, PureDataGivesOneLeafPredictingRetained) {
  auto rows = random_features(50, 2);
  for (auto& r : rows) r.retained_short = 1;
  const Dataset data = encode(rows, rows);
  const RuleTree t = train_rule_tree(data.design);
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_EQ(t.rule_count(), 0u);
  EXPECT_EQ(t.nodes[0].probability, 1.0);
  EXPECT_EQ(t.nodes[0].predicted_class(), 1);
  EXPECT_EQ(t.nodes[0].support, 50u);
  const auto doc = export_rules(t);
  ASSERT_EQ(doc["rules"].size(), 1u);
  EXPECT_TRUE(doc["rules"][0]["if"].empty());
}

TEST(RuleTree, RuleBudgetAndLeafInvariants) {
  const auto rows = random_features(2000, 7);
  const Dataset data = encode(rows, rows);
  for (std::size_t k : {1u, 2u, 3u, 4u, 6u}) {
    RuleTreeParams p;
    p.max_rules = k;
    p.min_leaf = 10;
    const RuleTree t = train_rule_tree(data.design, p);
    EXPECT_LE(t.rule_count(), k);
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) continue;
      EXPECT_GE(n.probability, 0.0);
      EXPECT_LE(n.probability, 1.0);
      EXPECT_GE(n.support, 10u);
    }
    const auto doc = export_rules(t);
    EXPECT_EQ(doc["format"], "retain-rules/1");
    EXPECT_EQ(doc["rules"].size(), t.rule_count() + 1);
  }
  RuleTreeParams zero;
  zero.max_rules = 0;
  EXPECT_THROW(train_rule_tree(data.design, zero), InputError);
  EXPECT_THROW(train_rule_tree(data.design.select_rows(std::vector<std::size_t>{})), InputError);
}

TEST(RuleTree, ThreeRuleTreeExportsFourClauses) {
  const auto rows = random_features(2000, 8);
  const Dataset data = encode(rows, rows);
  RuleTreeParams p;
  p.max_rules = 3;
  const RuleTree t = train_rule_tree(data.design, p);
  ASSERT_EQ(t.rule_count(), 3u);
  const auto doc = export_rules(t);
  ASSERT_EQ(doc["rules"].size(), 4u);
  for (const auto& rule : doc["rules"]) {
    EXPECT_GE(rule["if"].size(), 1u);
    EXPECT_LE(rule["if"].size(), 3u);
    EXPECT_TRUE(rule["then"].contains("class"));
  }
}

TEST(RuleTree, ExportRoundTripOnRandomVectors) {
  const auto train = random_features(3000, 11);
  const Dataset data = encode(train, train);
  RuleTreeParams p;
  p.max_rules = 8;
  const RuleTree t = train_rule_tree(data.design, p);
  bool categorical = false;
  for (const auto& n : t.nodes) categorical = categorical || (!n.is_leaf() && n.kind == SplitKind::categorical);
  EXPECT_TRUE(categorical);

  const RuleSet rules = RuleSet::from_json(nlohmann::json::parse(export_rules(t).dump()));
  auto probe = random_features(1000, 12);
  probe[0].country = "ZZ";  // level unseen in training
  const Design pd = data.encoder.transform(probe);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const RuleNode& leaf = t.leaf(pd.unscaled.row(i));
    mismatches += rules.classify(probe[i]) != leaf.predicted_class();
    EXPECT_EQ(rules.score(probe[i]), leaf.probability);
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(RuleTree, JsonRoundTripIsExact) {
  const auto rows = random_features(500, 13);
  const Dataset data = encode(rows, rows);
  const RuleTree t = train_rule_tree(data.design);
  EXPECT_EQ(RuleTree::from_json(nlohmann::json::parse(t.to_json().dump())), t);
}

TEST(RuleTree, InvariantUnderMonotoneTransform) {
  const auto rows = random_features(1500, 14);
  const Dataset data = encode(rows, rows);
  const std::size_t col = column_of(data.design, "current_absence_time");
  Design warped = data.design;
  for (std::size_t r = 0; r < warped.rows(); ++r) {
    double& v = warped.unscaled(r, col);
    v = std::cbrt(v - 5000.0) * 3.0 + 1.0;  // strictly increasing
  }
  RuleTreeParams p;
  p.max_rules = 4;
  const RuleTree a = train_rule_tree(data.design, p), b = train_rule_tree(warped, p);
  for (std::size_t r = 0; r < data.design.rows(); ++r) {
    ASSERT_EQ(a.leaf(data.design.unscaled.row(r)).predicted_class(),
              b.leaf(warped.unscaled.row(r)).predicted_class());
  }
}

TEST(RuleTree, MalformedRuleDocumentsAreRejected) {
  EXPECT_THROW(RuleSet::from_json(nlohmann::json::object()), InputError);
  EXPECT_THROW(RuleSet::from_json({{"format", "other"}, {"rules", nlohmann::json::array()}}), InputError);
  const nlohmann::json bad_op = {
      {"format", "retain-rules/1"},
      {"rules", {{{"if", {{{"feature", "total_rounds"}, {"op", "=="}, {"value", 1}}}},
                  {"then", {{"class", 1}, {"probability", 1.0}, {"support", 1}}}}}}};
  EXPECT_THROW(RuleSet::from_json(bad_op), InputError);
  EXPECT_THROW(feature_value(FeatureVector{}, "no_such_feature"), InputError);
}
