#include "retain/learners/rule_tree.hpp"

#include <algorithm>
#include <functional>

namespace retain {

using nlohmann::json;

namespace {

constexpr const char* kRuleFormat = "retain-rules/1";

// One-hot columns are named "<source>=<level>".
bool split_one_hot(const std::string& column, std::string& source, std::string& level) {
  const auto eq = column.find('=');
  if (eq == std::string::npos) return false;
  source = column.substr(0, eq);
  level = column.substr(eq + 1);
  return true;
}

std::string categorical_value(const FeatureVector& row, std::string_view name) {
  if (name == "device_type") return std::string(to_string(row.device_type));
  if (name == "country") return row.country;
  throw InputError("unknown categorical feature '" + std::string(name) + "'");
}

}  // namespace

double feature_value(const FeatureVector& row, std::string_view name) {
  const auto values = row.numeric();
  for (std::size_t i = 0; i < kNumericFeatures.size(); ++i) {
    if (name == kNumericFeatures[i]) return values[i];
  }
  throw InputError("unknown numeric feature '" + std::string(name) + "'");
}

std::size_t RuleTree::rule_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const RuleNode& n) { return !n.is_leaf(); }));
}

const RuleNode& RuleTree::leaf(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const RuleNode& n = nodes[i];
    const double v = x[static_cast<std::size_t>(n.column)];
    const bool go_left = n.kind == SplitKind::numeric ? v <= n.threshold : v > 0.5;
    i = static_cast<std::size_t>(go_left ? n.left : n.right);
  }
  return nodes[i];
}

RuleTree train_rule_tree(const Design& design, const RuleTreeParams& params) {
  if (design.rows() == 0) throw InputError("cannot train a rule tree on an empty dataset");
  if (params.max_rules < 1) throw InputError("max_rules must be at least 1");
  CartParams cp;
  cp.max_splits = params.max_rules;
  cp.min_leaf = params.min_leaf;
  const CartTree cart = grow_cart(design.unscaled, design.labels, {}, cp);

  RuleTree tree;
  tree.columns = design.columns;
  tree.max_rules = params.max_rules;
  tree.nodes.resize(cart.nodes.size());
  for (std::size_t i = 0; i < cart.nodes.size(); ++i) {
    const CartNode& c = cart.nodes[i];
    RuleNode& r = tree.nodes[i];
    r.probability = c.probability();
    r.support = static_cast<std::size_t>(c.pos + c.neg);
    if (c.is_leaf()) continue;
    r.column = c.feature;
    std::string source, level;
    const std::string& name = design.columns[static_cast<std::size_t>(c.feature)];
    if (split_one_hot(name, source, level)) {
      // x > 0.5 means the level matches; that side becomes the "in" branch.
      r.kind = SplitKind::categorical;
      r.feature = source;
      r.levels = {level};
      r.left = c.right;
      r.right = c.left;
    } else {
      r.kind = SplitKind::numeric;
      r.feature = name;
      r.threshold = c.threshold;
      r.left = c.left;
      r.right = c.right;
    }
  }
  return tree;
}

json RuleTree::to_json() const {
  json nodes_j = json::array();
  for (const RuleNode& n : nodes) {
    json j = {{"probability", n.probability}, {"support", n.support}};
    if (!n.is_leaf()) {
      j["column"] = n.column;
      j["feature"] = n.feature;
      j["left"] = n.left;
      j["right"] = n.right;
      if (n.kind == SplitKind::numeric) {
        j["threshold"] = n.threshold;
      } else {
        j["levels"] = n.levels;
      }
    }
    nodes_j.push_back(std::move(j));
  }
  return {{"columns", columns}, {"max_rules", max_rules}, {"nodes", std::move(nodes_j)}};
}

RuleTree RuleTree::from_json(const json& j) {
  RuleTree t;
  t.columns = j.at("columns").get<std::vector<std::string>>();
  t.max_rules = j.at("max_rules").get<std::size_t>();
  for (const json& nj : j.at("nodes")) {
    RuleNode n;
    n.probability = nj.at("probability").get<double>();
    n.support = nj.at("support").get<std::size_t>();
    if (nj.contains("column")) {
      n.column = nj.at("column").get<int>();
      n.feature = nj.at("feature").get<std::string>();
      n.left = nj.at("left").get<int>();
      n.right = nj.at("right").get<int>();
      if (nj.contains("levels")) {
        n.kind = SplitKind::categorical;
        n.levels = nj.at("levels").get<std::vector<std::string>>();
      } else {
        n.threshold = nj.at("threshold").get<double>();
      }
    }
    t.nodes.push_back(std::move(n));
  }
  const int count = static_cast<int>(t.nodes.size());
  for (const RuleNode& n : t.nodes) {
    if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                         n.column >= static_cast<int>(t.columns.size()))) {
      throw InputError("rule tree node references are out of range");
    }
  }
  if (t.nodes.empty()) throw InputError("rule tree has no nodes");
  return t;
}

json export_rules(const RuleTree& tree) {
  json rules = json::array();
  std::vector<json> path;
  std::function<void(std::size_t)> walk = [&](std::size_t i) {
    const RuleNode& n = tree.nodes[i];
    if (n.is_leaf()) {
      rules.push_back({{"if", path},
                       {"then", {{"class", n.predicted_class()}, {"probability", n.probability}, {"support", n.support}}}});
      return;
    }
    json yes, no;
    if (n.kind == SplitKind::numeric) {
      yes = {{"feature", n.feature}, {"op", "<="}, {"value", n.threshold}};
      no = {{"feature", n.feature}, {"op", ">"}, {"value", n.threshold}};
    } else {
      yes = {{"feature", n.feature}, {"op", "in"}, {"values", n.levels}};
      no = {{"feature", n.feature}, {"op", "not_in"}, {"values", n.levels}};
    }
    path.push_back(yes);
    walk(static_cast<std::size_t>(n.left));
    path.back() = no;
    walk(static_cast<std::size_t>(n.right));
    path.pop_back();
  };
  walk(0);
  return {{"format", kRuleFormat}, {"rules", std::move(rules)}};
}

RuleSet RuleSet::from_json(const json& doc) {
  if (!doc.is_object() || doc.value("format", "") != kRuleFormat) {
    throw InputError(std::string("rule document must have format '") + kRuleFormat + "'");
  }
  RuleSet set;
  try {
    for (const json& rj : doc.at("rules")) {
      Rule rule;
      for (const json& pj : rj.at("if")) {
        Predicate p;
        p.feature = pj.at("feature").get<std::string>();
        p.op = pj.at("op").get<std::string>();
        if (p.op == "<=" || p.op == ">") {
          p.value = pj.at("value").get<double>();
        } else if (p.op == "in" || p.op == "not_in") {
          p.values = pj.at("values").get<std::vector<std::string>>();
        } else {
          throw InputError("unknown rule operator '" + p.op + "'");
        }
        rule.conditions.push_back(std::move(p));
      }
      const json& then = rj.at("then");
      rule.cls = then.at("class").get<int>();
      rule.probability = then.at("probability").get<double>();
      set.rules_.push_back(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed rule document: ") + e.what());
  }
  if (set.rules_.empty()) throw InputError("rule document has no rules");
  return set;
}

const RuleSet::Rule& RuleSet::match(const FeatureVector& row) const {
  for (const Rule& rule : rules_) {
    const bool all = std::all_of(rule.conditions.begin(), rule.conditions.end(), [&](const Predicate& p) {
      if (p.op == "<=") return feature_value(row, p.feature) <= p.value;
      if (p.op == ">") return feature_value(row, p.feature) > p.value;
      const std::string v = categorical_value(row, p.feature);
      const bool in = std::find(p.values.begin(), p.values.end(), v) != p.values.end();
      return p.op == "in" ? in : !in;
    });
    if (all) return rule;
  }
  throw InputError("no rule matches player '" + row.player_id + "'");
}

int RuleSet::classify(const FeatureVector& row) const { return match(row).cls; }

double RuleSet::score(const FeatureVector& row) const { return match(row).probability; }

}  // namespace retain
