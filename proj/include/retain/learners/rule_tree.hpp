#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "retain/featurize.hpp"
#include "retain/learners/cart.hpp"

namespace retain {

struct RuleTreeParams {
  std::size_t max_rules = 4;  // internal nodes
  std::int64_t min_leaf = 1;
};

enum class SplitKind { numeric, categorical };

// Internal nodes send "x <= threshold" (numeric) or "value in levels"
// (categorical) to the left child. Leaves carry the retained fraction of the
// training rows that reached them.
struct RuleNode {
  int column = -1;  // design column; -1 marks a leaf
  SplitKind kind = SplitKind::numeric;
  std::string feature;              // source feature name
  double threshold = 0.0;           // numeric splits
  std::vector<std::string> levels;  // categorical splits
  int left = -1;
  int right = -1;
  double probability = 0.0;
  std::size_t support = 0;

  bool is_leaf() const { return column < 0; }
  int predicted_class() const { return probability >= 0.5 ? 1 : 0; }
  bool operator==(const RuleNode&) const = default;
};

struct RuleTree {
  std::vector<std::string> columns;
  std::vector<RuleNode> nodes;
  std::size_t max_rules = 4;

  std::size_t rule_count() const;
  const RuleNode& leaf(std::span<const double> unscaled_row) const;
  double score(std::span<const double> unscaled_row) const { return leaf(unscaled_row).probability; }

  nlohmann::json to_json() const;
  static RuleTree from_json(const nlohmann::json& j);
  bool operator==(const RuleTree&) const = default;
};

// Trains on design.unscaled so that thresholds stay in raw feature units.
RuleTree train_rule_tree(const Design& design, const RuleTreeParams& params = {});

// Portable rule document: one entry per leaf in depth-first (left first)
// order, each a conjunction of predicates on raw feature values.
//   {"format": "retain-rules/1",
//    "rules": [{"if": [{"feature": f, "op": "<=", "value": v} ...],
//               "then": {"class": c, "probability": p, "support": n}}]}
// Numeric ops are "<=" and ">"; categorical ops are "in" and "not_in" with a
// "values" list.
nlohmann::json export_rules(const RuleTree& tree);

// Evaluates an exported rule document directly on feature vectors, without
// the encoder or the tree.
class RuleSet {
 public:
  static RuleSet from_json(const nlohmann::json& doc);

  int classify(const FeatureVector& row) const;
  double score(const FeatureVector& row) const;
  std::size_t size() const { return rules_.size(); }

 private:
  struct Predicate {
    std::string feature;
    std::string op;
    double value = 0.0;
    std::vector<std::string> values;
  };
  struct Rule {
    std::vector<Predicate> conditions;
    int cls = 0;
    double probability = 0.0;
  };
  const Rule& match(const FeatureVector& row) const;

  std::vector<Rule> rules_;
};

// Raw value of a named numeric feature ("acquired" as 0/1).
double feature_value(const FeatureVector& row, std::string_view name);

}  // namespace retain
