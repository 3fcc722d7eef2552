#include "retain/learners/forest.hpp"

#include <algorithm>
#include <cmath>

namespace retain {

using nlohmann::json;

std::size_t default_m_try(std::size_t columns) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(columns)))));
}

double Forest::score(std::span<const double> row, std::size_t n_trees) const {
  const std::size_t n = n_trees == 0 ? trees.size() : std::min(n_trees, trees.size());
  if (n == 0) return 0.0;
  std::size_t votes = 0;
  for (std::size_t t = 0; t < n; ++t) votes += trees[t].leaf(row).probability() >= 0.5 ? 1 : 0;
  return static_cast<double>(votes) / static_cast<double>(n);
}

Forest train_forest(const Design& design, const ForestParams& params) {
  const std::size_t p = design.columns.size();
  const std::size_t n = design.rows();
  if (n == 0) throw InputError("cannot train a forest on an empty dataset");
  if (params.n_trees == 0) throw InputError("n_trees must be at least 1");
  const std::size_t m_try = params.m_try == 0 ? default_m_try(p) : params.m_try;
  if (m_try < 1 || m_try > p) {
    throw InputError("m_try must lie in [1, " + std::to_string(p) + "], got " + std::to_string(m_try));
  }

  Forest f;
  f.columns = design.columns;
  f.m_try = m_try;
  f.trees.resize(params.n_trees);
  const SortedColumns sorted = SortedColumns::build(design.unscaled);
  parallel_for(params.n_trees, params.threads, [&](std::size_t t) {
    const std::uint64_t seed = mix_seed(params.seed, t);
    std::vector<std::uint32_t> weights;
    if (params.bootstrap) {
      Rng rng(seed);
      weights.assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) ++weights[rng.below(n)];
    }
    CartParams cp;
    cp.m_try = m_try;
    cp.seed = mix_seed(seed, 1);
    f.trees[t] = grow_cart(design.unscaled, design.labels, weights, cp, &sorted);
  });
  f.importance.assign(p, 0.0);
  for (const CartTree& t : f.trees) {
    for (std::size_t c = 0; c < p; ++c) f.importance[c] += t.importance[c];
  }
  for (double& v : f.importance) v /= static_cast<double>(f.trees.size());
  return f;
}

json Forest::to_json() const {
  json trees_j = json::array();
  for (const CartTree& t : trees) {
    json nodes = json::array();
    for (const CartNode& n : t.nodes) {
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.pos, n.neg});
    }
    trees_j.push_back(std::move(nodes));
  }
  return {{"columns", columns}, {"m_try", m_try}, {"importance", importance}, {"trees", std::move(trees_j)}};
}

Forest Forest::from_json(const json& j) {
  Forest f;
  f.columns = j.at("columns").get<std::vector<std::string>>();
  f.m_try = j.at("m_try").get<std::size_t>();
  f.importance = j.at("importance").get<std::vector<double>>();
  for (const json& tj : j.at("trees")) {
    CartTree t;
    for (const json& nj : tj) {
      CartNode n;
      n.feature = nj.at(0).get<int>();
      n.threshold = nj.at(1).get<double>();
      n.left = nj.at(2).get<int>();
      n.right = nj.at(3).get<int>();
      n.pos = nj.at(4).get<std::int64_t>();
      n.neg = nj.at(5).get<std::int64_t>();
      t.nodes.push_back(n);
    }
    const int count = static_cast<int>(t.nodes.size());
    for (const CartNode& n : t.nodes) {
      if (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count ||
                           n.feature >= static_cast<int>(f.columns.size()))) {
        throw InputError("forest node references are out of range");
      }
    }
    if (t.nodes.empty()) throw InputError("forest tree has no nodes");
    f.trees.push_back(std::move(t));
  }
  return f;
}

}  // namespace retain
