#include <gtest/gtest.h>

#include "oracles.hpp"
#include "retain/common.hpp"
#include "retain/learners/cart.hpp"

using namespace retain;

namespace {

struct Micro {
  Matrix x;
  std::vector<int> y;
};

// Small integer values force duplicate values and impurity ties.
Micro random_micro(Rng& rng, std::size_t max_rows, std::size_t max_cols) {
  const std::size_t rows = 2 + rng.below(max_rows - 1);
  const std::size_t cols = 1 + rng.below(max_cols);
  Micro m{Matrix(rows, cols), std::vector<int>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.x(r, c) = static_cast<double>(rng.below(5)) - 1.5;
    m.y[r] = static_cast<int>(rng.below(2));
  }
  return m;
}

Micro noisy_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Micro m{Matrix(n, 4), std::vector<int>(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < 4; ++c) m.x(r, c) = rng.normal();
    const double z = m.x(r, 0) - 0.5 * m.x(r, 2) + 0.7 * rng.normal();
    m.y[r] = z > 0 ? 1 : 0;
  }
  return m;
}

}  // namespace

TEST(Cart, RootSplitMatchesExhaustiveOracle) {
  Rng rng(2024);
  std::size_t splits = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Micro m = random_micro(rng, 8, 3);
    CartParams p;
    p.max_splits = 1;
    const CartTree t = grow_cart(m.x, m.y, {}, p);
    const auto expected = oracle::exhaustive_root_split(m.x, m.y);
    ASSERT_EQ(t.nodes[0].is_leaf(), !expected.has_value()) << "trial " << trial;
    if (!expected) continue;
    ++splits;
    ASSERT_EQ(static_cast<std::size_t>(t.nodes[0].feature), expected->feature) << "trial " << trial;
    ASSERT_EQ(t.nodes[0].threshold, expected->threshold) << "trial " << trial;
  }
  EXPECT_GT(splits, 500u);
}

TEST(Cart, RootSplitRespectsMinLeafLikeOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const Micro m = random_micro(rng, 12, 3);
    CartParams p;
    p.max_splits = 1;
    p.min_leaf = 3;
    const CartTree t = grow_cart(m.x, m.y, {}, p);
    const auto expected = oracle::exhaustive_root_split(m.x, m.y, 3);
    ASSERT_EQ(t.nodes[0].is_leaf(), !expected.has_value());
    if (expected) {
      ASSERT_EQ(static_cast<std::size_t>(t.nodes[0].feature), expected->feature);
      ASSERT_EQ(t.nodes[0].threshold, expected->threshold);
    }
  }
}

TEST(Cart, PureDataGivesSingleLeaf) {
  Matrix x(5, 2);
  for (std::size_t r = 0; r < 5; ++r) x(r, 0) = static_cast<double>(r);
  const std::vector<int> y(5, 1);
  const CartTree t = grow_cart(x, y, {}, {});
  ASSERT_EQ(t.nodes.size(), 1u);
  EXPECT_TRUE(t.nodes[0].is_leaf());
  EXPECT_EQ(t.nodes[0].probability(), 1.0);
  EXPECT_EQ(t.internal_count(), 0u);
}

TEST(Cart, ConstantFeaturesGiveSingleLeaf) {
  Matrix x(6, 2, 3.0);
  const std::vector<int> y = {0, 1, 0, 1, 1, 0};
  const CartTree t = grow_cart(x, y, {}, {});
  EXPECT_EQ(t.nodes.size(), 1u);
  EXPECT_DOUBLE_EQ(t.nodes[0].probability(), 0.5);
}

TEST(Cart, UnlimitedTreeFitsDistinctRowsExactly) {
  const Micro m = noisy_data(300, 4);
  const CartTree t = grow_cart(m.x, m.y, {}, {});
  for (std::size_t r = 0; r < m.x.rows(); ++r) {
    const CartNode& leaf = t.leaf(m.x.row(r));
    ASSERT_EQ(leaf.probability() >= 0.5 ? 1 : 0, m.y[r]);
  }
}

TEST(Cart, SplitBudgetAndLeafCounts) {
  const Micro m = noisy_data(500, 5);
  double previous_error = 1.0;
  for (std::size_t k : {1u, 2u, 4u, 8u, 16u}) {
    CartParams p;
    p.max_splits = k;
    p.min_leaf = 5;
    const CartTree t = grow_cart(m.x, m.y, {}, p);
    EXPECT_LE(t.internal_count(), k);
    std::vector<std::int64_t> pos(t.nodes.size(), 0), neg(t.nodes.size(), 0);
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < m.x.rows(); ++r) {
      const std::size_t leaf = t.leaf_index(m.x.row(r));
      (m.y[r] ? pos : neg)[leaf] += 1;
      wrong += (t.nodes[leaf].probability() >= 0.5 ? 1 : 0) != m.y[r];
    }
    for (std::size_t i = 0; i < t.nodes.size(); ++i) {
      if (!t.nodes[i].is_leaf()) continue;
      EXPECT_EQ(pos[i], t.nodes[i].pos);
      EXPECT_EQ(neg[i], t.nodes[i].neg);
      EXPECT_GE(pos[i] + neg[i], 5);
    }
    const double error = static_cast<double>(wrong) / static_cast<double>(m.x.rows());
    EXPECT_LE(error, previous_error + 1e-12);
    previous_error = error;
  }
}

TEST(Cart, IntegerWeightsEqualRowDuplication) {
  const Micro m = noisy_data(120, 6);
  Rng rng(1);
  std::vector<std::uint32_t> w(m.x.rows());
  std::vector<std::size_t> expanded;
  for (std::size_t r = 0; r < w.size(); ++r) {
    w[r] = static_cast<std::uint32_t>(rng.below(3));
    for (std::uint32_t k = 0; k < w[r]; ++k) expanded.push_back(r);
  }
  std::vector<int> y2;
  for (std::size_t r : expanded) y2.push_back(m.y[r]);
  const CartTree a = grow_cart(m.x, m.y, w, {});
  const CartTree b = grow_cart(m.x.select_rows(expanded), y2, {}, {});
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].feature, b.nodes[i].feature);
    EXPECT_EQ(a.nodes[i].pos, b.nodes[i].pos);
    EXPECT_EQ(a.nodes[i].neg, b.nodes[i].neg);
  }
}

TEST(Cart, ImportanceIsNonNegativeAndTracksSignal) {
  const Micro m = noisy_data(1000, 8);
  CartParams p;
  p.max_splits = 10;
  const CartTree t = grow_cart(m.x, m.y, {}, p);
  ASSERT_EQ(t.importance.size(), 4u);
  for (double v : t.importance) EXPECT_GE(v, 0.0);
  EXPECT_GT(t.importance[0], t.importance[1]);
  EXPECT_GT(t.importance[0], t.importance[3]);
}

TEST(Cart, FeatureSamplingIsSeeded) {
  const Micro m = noisy_data(400, 9);
  CartParams p;
  p.m_try = 2;
  p.seed = 5;
  const CartTree a = grow_cart(m.x, m.y, {}, p), b = grow_cart(m.x, m.y, {}, p);
  ASSERT_EQ(a.nodes.size(), b.nodes.size());
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    EXPECT_EQ(a.nodes[i].feature, b.nodes[i].feature);
    EXPECT_EQ(a.nodes[i].threshold, b.nodes[i].threshold);
  }
  const SortedColumns sorted = SortedColumns::build(m.x);
  const CartTree c = grow_cart(m.x, m.y, {}, p, &sorted);
  EXPECT_EQ(c.nodes.size(), a.nodes.size());
}

TEST(Cart, RejectsBadInput) {
  Matrix x(3, 1);
  const std::vector<int> short_y = {0, 1}, bad_y = {0, 2, 1}, y = {0, 1, 1};
  EXPECT_THROW(grow_cart(x, short_y, {}, {}), InputError);
  EXPECT_THROW(grow_cart(x, bad_y, {}, {}), InputError);
  const std::vector<std::uint32_t> w = {1, 1};
  EXPECT_THROW(grow_cart(x, y, w, {}), InputError);
  CartParams p;
  p.min_leaf = 0;
  EXPECT_THROW(grow_cart(x, y, {}, p), InputError);
}
