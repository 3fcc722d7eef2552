#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "retain/featurize.hpp"
#include "retain/learners/cart.hpp"

namespace retain {

struct ForestParams {
  std::size_t n_trees = 128;
  std::size_t m_try = 0;  // 0 means floor(sqrt(columns))
  bool bootstrap = true;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct Forest {
  std::vector<std::string> columns;
  std::vector<CartTree> trees;
  std::size_t m_try = 0;
  std::vector<double> importance;  // per column, mean over trees

  // Fraction of trees voting "retained" among the first `n_trees` trees
  // (all when 0).
  double score(std::span<const double> unscaled_row, std::size_t n_trees = 0) const;

  nlohmann::json to_json() const;
  static Forest from_json(const nlohmann::json& j);
};

std::size_t default_m_try(std::size_t columns);

// Tree t uses seed mix_seed(params.seed, t) for both its bootstrap and its
// feature sampling, so the forest is the same for any thread count and the
// first k trees of a larger forest equal a k-tree forest.
Forest train_forest(const Design& design, const ForestParams& params = {});

}  // namespace retain
