#include "retain/learners/cart.hpp"

#include <algorithm>
#include <numeric>

namespace retain {

std::size_t CartTree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const CartNode& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t CartTree::internal_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const CartNode& n) { return !n.is_leaf(); }));
}

SortedColumns SortedColumns::build(const Matrix& x) {
  SortedColumns s;
  s.order.resize(x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    auto& o = s.order[c];
    o.resize(x.rows());
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, c) < x(b, c); });
  }
  return s;
}

namespace {

using i128 = __int128;

// Split quality as an exact fraction. For children (pL, nL) and (pR, nR),
// the weighted Gini decrease is
//   A/WL + B/WR - C/W,  A = pL^2 + nL^2, B = pR^2 + nR^2, C = p^2 + n^2,
// kept here as num/den with den = WL*WR*W.
struct Gain {
  i128 num = 0;
  i128 den = 1;
  bool operator>(const Gain& o) const { return num * o.den > o.num * den; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Gain split_gain(std::int64_t pl, std::int64_t nl, std::int64_t pr, std::int64_t nr) {
  const i128 wl = pl + nl, wr = pr + nr, w = wl + wr;
  const i128 a = i128(pl) * pl + i128(nl) * nl;
  const i128 b = i128(pr) * pr + i128(nr) * nr;
  const i128 p = pl + pr, n = nl + nr;
  const i128 c = p * p + n * n;
  return {(a * wr + b * wl) * w - c * wl * wr, wl * wr * w};
}

struct Candidate {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left_rows = 0;  // rows (not weight) on the left within the segment
  Gain gain;
};

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Builder {
 public:
  Builder(const Matrix& x, std::span<const int> y, std::span<const std::uint32_t> w, const CartParams& p,
          const SortedColumns& sorted)
      : x_(x), y_(y), p_(p), rng_(p.seed), go_left_(x.rows(), 0) {
    const std::size_t n = x.rows();
    weight_.assign(n, 1);
    if (!w.empty()) {
      for (std::size_t i = 0; i < n; ++i) weight_[i] = w[i];
    }
    order_.resize(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
      auto& o = order_[c];
      o.reserve(n);
      for (std::uint32_t r : sorted.order[c]) {
        if (weight_[r] > 0) o.push_back(r);
      }
    }
    if (x.cols() == 0) {
      for (std::uint32_t r = 0; r < n; ++r) {
        if (weight_[r] > 0) rows_.push_back(r);
      }
    }
    features_.resize(x.cols());
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    buffer_.resize(n);
  }

  CartTree run() {
    tree_.importance.assign(x_.cols(), 0.0);
    const std::size_t active = x_.cols() > 0 ? order_[0].size() : rows_.size();
    if (active == 0) throw InputError("cannot grow a tree on zero rows");
    add_node({0, active});
    root_weight_ = static_cast<double>(tree_.nodes[0].pos + tree_.nodes[0].neg);

    std::size_t splits = 0;
    while (!frontier_.empty() && splits < p_.max_splits) {
      const auto [id, seg] = pop_best();
      split(id, seg);
      ++splits;
    }
    for (double& v : tree_.importance) v /= root_weight_;
    return std::move(tree_);
  }

 private:
  struct Pending {
    int id;
    Segment seg;
    Candidate cand;
  };

  // Heap order: larger gain first, then lower node id.
  static bool lower_priority(const Pending& a, const Pending& b) {
    if (b.cand.gain > a.cand.gain) return true;
    if (a.cand.gain > b.cand.gain) return false;
    return a.id > b.id;
  }

  std::pair<int, Segment> pop_best() {
    std::pop_heap(frontier_.begin(), frontier_.end(), lower_priority);
    Pending p = frontier_.back();
    frontier_.pop_back();
    pending_cand_ = p.cand;
    return {p.id, p.seg};
  }

  int add_node(Segment seg) {
    CartNode node;
    const auto& rows = x_.cols() > 0 ? order_[0] : rows_;
    for (std::size_t k = seg.begin; k < seg.end; ++k) {
      const std::uint32_t r = rows[k];
      (y_[r] == 1 ? node.pos : node.neg) += weight_[r];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(node);
    if (node.pos > 0 && node.neg > 0 && node.pos + node.neg >= 2 * p_.min_leaf) {
      Candidate c = best_split(seg, node.pos, node.neg);
      if (c.found) {
        frontier_.push_back({id, seg, c});
        std::push_heap(frontier_.begin(), frontier_.end(), lower_priority);
      }
    }
    return id;
  }

  Candidate best_split(Segment seg, std::int64_t pos, std::int64_t neg) {
    const std::size_t p = x_.cols();
    std::size_t m = p_.m_try == 0 || p_.m_try >= p ? p : p_.m_try;
    if (m < p) {
      // Partial Fisher-Yates over a persistent permutation, then sorted so the
      // scan (and its tie rule) runs in column order.
      for (std::size_t i = 0; i < m; ++i) {
        std::swap(features_[i], features_[i + rng_.below(p - i)]);
      }
      tried_.assign(features_.begin(), features_.begin() + static_cast<std::ptrdiff_t>(m));
      std::sort(tried_.begin(), tried_.end());
    } else {
      tried_ = features_;
      std::sort(tried_.begin(), tried_.end());
    }

    Candidate best;
    for (std::size_t f : tried_) {
      const auto& o = order_[f];
      std::int64_t pl = 0, nl = 0;
      for (std::size_t k = seg.begin; k + 1 < seg.end; ++k) {
        const std::uint32_t r = o[k];
        (y_[r] == 1 ? pl : nl) += weight_[r];
        const double v = x_(r, f);
        const double next = x_(o[k + 1], f);
        if (!(v < next)) continue;
        const std::int64_t wl = pl + nl;
        const std::int64_t wr = pos + neg - wl;
        if (wl < p_.min_leaf || wr < p_.min_leaf) continue;
        const Gain g = split_gain(pl, nl, pos - pl, neg - nl);
        if (g.num <= 0) continue;
        if (!best.found || g > best.gain) {
          double t = v + (next - v) / 2.0;
          if (!(t < next)) t = v;
          best = {true, f, t, k + 1 - seg.begin, g};
        }
      }
    }
    return best;
  }

  void split(int id, Segment seg) {
    const Candidate c = pending_cand_;
    const auto& chosen = order_[c.feature];
    for (std::size_t k = seg.begin; k < seg.end; ++k) go_left_[chosen[k]] = k < seg.begin + c.left_rows ? 1 : 0;
    for (auto& o : order_) {
      if (&o == &chosen) continue;
      std::size_t l = seg.begin, rcount = 0;
      for (std::size_t k = seg.begin; k < seg.end; ++k) {
        const std::uint32_t r = o[k];
        if (go_left_[r]) {
          o[l++] = r;
        } else {
          buffer_[rcount++] = r;
        }
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(rcount), o.begin() + static_cast<std::ptrdiff_t>(l));
    }
    const std::size_t mid = seg.begin + c.left_rows;
    const double decrease = c.gain.value();
    tree_.importance[c.feature] += decrease;
    const int left = add_node({seg.begin, mid});
    const int right = add_node({mid, seg.end});
    CartNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.feature = static_cast<int>(c.feature);
    node.threshold = c.threshold;
    node.left = left;
    node.right = right;
    node.decrease = decrease;
  }

  const Matrix& x_;
  std::span<const int> y_;
  CartParams p_;
  Rng rng_;
  std::vector<std::int64_t> weight_;
  std::vector<std::vector<std::uint32_t>> order_;
  std::vector<std::uint32_t> rows_;  // only used when there are no columns
  std::vector<std::uint8_t> go_left_;
  std::vector<std::uint32_t> buffer_;
  std::vector<std::size_t> features_;
  std::vector<std::size_t> tried_;
  std::vector<Pending> frontier_;
  Candidate pending_cand_;
  CartTree tree_;
  double root_weight_ = 1.0;
};

}  // namespace

CartTree grow_cart(const Matrix& x, std::span<const int> labels, std::span<const std::uint32_t> weights,
                   const CartParams& params, const SortedColumns* presorted) {
  if (labels.size() != x.rows()) throw InputError("label count does not match row count");
  if (!weights.empty() && weights.size() != x.rows()) throw InputError("weight count does not match row count");
  if (params.min_leaf < 1) throw InputError("min_leaf must be at least 1");
  for (int v : labels) {
    if (v != 0 && v != 1) throw InputError("tree labels must be 0 or 1");
  }
  if (presorted) return Builder(x, labels, weights, params, *presorted).run();
  const SortedColumns sorted = SortedColumns::build(x);
  return Builder(x, labels, weights, params, sorted).run();
}

}  // namespace retain
