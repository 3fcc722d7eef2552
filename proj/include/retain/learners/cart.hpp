#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "retain/common.hpp"

namespace retain {

// Binary classification tree grown on Gini impurity. Shared by the rule tree
// (few splits, every row weight 1) and the forest (unlimited splits,
// bootstrap counts as weights).
struct CartNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x <= threshold go left
  int left = -1;
  int right = -1;
  std::int64_t pos = 0;  // weighted class counts reaching the node
  std::int64_t neg = 0;
  double decrease = 0.0;  // weighted Gini decrease of the split

  bool is_leaf() const { return feature < 0; }
  double probability() const { return pos + neg > 0 ? static_cast<double>(pos) / static_cast<double>(pos + neg) : 0.0; }
};

struct CartTree {
  std::vector<CartNode> nodes;  // nodes[0] is the root
  std::vector<double> importance;  // per column, summed decrease / root weight

  std::size_t leaf_index(std::span<const double> x) const;
  const CartNode& leaf(std::span<const double> x) const { return nodes[leaf_index(x)]; }
  std::size_t internal_count() const;
};

struct CartParams {
  std::size_t max_splits = std::numeric_limits<std::size_t>::max();
  std::int64_t min_leaf = 1;  // minimum weighted count in each child
  std::size_t m_try = 0;      // features tried per node; 0 means all
  std::uint64_t seed = 0;     // only used when m_try < column count
};

// Per-column row order (ascending value, ties by row index), computed once
// and reused across trees grown on the same matrix.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;
  static SortedColumns build(const Matrix& x);
};

// Best-first growth: the frontier leaf with the largest impurity decrease is
// split next (ties to the lower node id). Split candidates are midpoints
// between consecutive distinct values; ties go to the lowest column, then
// the lowest threshold. Split scores are compared exactly in integers.
// `weights` holds a non-negative count per row (empty means all 1).
CartTree grow_cart(const Matrix& x, std::span<const int> labels, std::span<const std::uint32_t> weights,
                   const CartParams& params, const SortedColumns* presorted = nullptr);

}  // namespace retain
