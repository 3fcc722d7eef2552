#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "retain/common.hpp"
#include "retain/featurize.hpp"
#include "retain/learners/rule_tree.hpp"

namespace retain {

// For every query row, the k nearest candidate rows by Euclidean distance on
// `x`, nearest first; equal distances are ordered by `keys` (then index).
std::vector<std::vector<std::size_t>> nearest_neighbors(const Matrix& x, std::span<const std::size_t> queries,
                                                        std::span<const std::size_t> candidates,
                                                        std::span<const std::string> keys, std::size_t k,
                                                        std::size_t threads = 1);

struct LevelStats {
  std::size_t level = 0;  // 0 is the raw hold-out
  std::vector<double> rates;  // one misclassification rate per chunk tree
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

struct RobustnessReport {
  std::uint64_t seed = 0;
  std::size_t n_chunks = 0;
  bool rotated = false;
  std::size_t holdout_rows = 0;  // rows in chunk 0
  std::vector<LevelStats> levels;
};

struct RobustnessParams {
  RuleTreeParams tree;
  std::size_t n_chunks = 10;
  std::size_t max_level = 9;
  std::uint64_t seed = 1;
  // Every chunk takes a turn as the hold-out; each level then pools the
  // rates of all rotations.
  bool rotate = false;
  std::size_t threads = 1;
};

// Players are shuffled (from id order) into n_chunks chunks; chunk 0 is held
// out and one rule tree is trained per remaining chunk. At level i every
// hold-out row is replaced by its i-th nearest neighbour of the same class
// outside the hold-out, measured on the standardized design.
RobustnessReport robustness_study(const Dataset& data, const RobustnessParams& params = {});

}  // namespace retain
