#include "retain/evaluation/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace retain {

std::vector<std::vector<std::size_t>> nearest_neighbors(const Matrix& x, std::span<const std::size_t> queries,
                                                        std::span<const std::size_t> candidates,
                                                        std::span<const std::string> keys, std::size_t k,
                                                        std::size_t threads) {
  std::vector<std::vector<std::size_t>> out(queries.size());
  const std::size_t take = std::min(k, candidates.size());
  parallel_for(queries.size(), threads, [&](std::size_t qi) {
    const auto q = x.row(queries[qi]);
    std::vector<std::pair<double, std::size_t>> d(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      const auto r = x.row(candidates[c]);
      double s = 0.0;
      for (std::size_t j = 0; j < q.size(); ++j) {
        const double diff = q[j] - r[j];
        s += diff * diff;
      }
      d[c] = {s, candidates[c]};
    }
    auto closer = [&](const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) {
      if (a.first != b.first) return a.first < b.first;
      if (keys[a.second] != keys[b.second]) return keys[a.second] < keys[b.second];
      return a.second < b.second;
    };
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(take), d.end(), closer);
    out[qi].reserve(take);
    for (std::size_t i = 0; i < take; ++i) out[qi].push_back(d[i].second);
  });
  return out;
}

namespace {

LevelStats summarize(std::size_t level, std::vector<double> rates) {
  LevelStats s;
  s.level = level;
  s.rates = std::move(rates);
  if (s.rates.empty()) return s;
  s.min = *std::min_element(s.rates.begin(), s.rates.end());
  s.max = *std::max_element(s.rates.begin(), s.rates.end());
  s.mean = std::accumulate(s.rates.begin(), s.rates.end(), 0.0) / static_cast<double>(s.rates.size());
  if (s.rates.size() > 1) {
    double ss = 0.0;
    for (double r : s.rates) ss += (r - s.mean) * (r - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.rates.size() - 1));
  }
  return s;
}

// Misclassification rates of every chunk tree at every level for one hold-out.
std::vector<std::vector<double>> run_holdout(const Dataset& data, const std::vector<std::size_t>& chunk,
                                             std::size_t holdout, const RobustnessParams& p) {
  const Design& d = data.design;
  std::vector<std::size_t> held;
  std::vector<std::vector<std::size_t>> chunk_rows(p.n_chunks);
  for (std::size_t i = 0; i < d.rows(); ++i) {
    if (chunk[i] == holdout) {
      held.push_back(i);
    } else {
      chunk_rows[chunk[i]].push_back(i);
    }
  }

  std::vector<std::string> keys(d.rows());
  for (std::size_t i = 0; i < d.rows(); ++i) keys[i] = data.rows[i].player_id;

  // Neighbour lists per class, searched outside the hold-out only.
  std::vector<std::vector<std::size_t>> neighbors(d.rows());
  for (int cls : {0, 1}) {
    std::vector<std::size_t> queries, candidates;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (d.labels[i] != cls) continue;
      (chunk[i] == holdout ? queries : candidates).push_back(i);
    }
    if (candidates.size() < p.max_level) {
      throw InputError("class " + std::to_string(cls) + " has only " + std::to_string(candidates.size()) +
                       " rows outside the hold-out; perturbation level " + std::to_string(p.max_level) + " needs more");
    }
    if (queries.empty()) continue;
    const auto nn = nearest_neighbors(d.scaled, queries, candidates, keys, p.max_level, p.threads);
    for (std::size_t q = 0; q < queries.size(); ++q) neighbors[queries[q]] = nn[q];
  }

  std::vector<RuleTree> trees;
  for (std::size_t c = 0; c < p.n_chunks; ++c) {
    if (c == holdout) continue;
    if (chunk_rows[c].empty()) throw InputError("chunk " + std::to_string(c) + " is empty");
    trees.push_back(train_rule_tree(d.select_rows(chunk_rows[c]), p.tree));
  }

  std::vector<std::vector<double>> rates(p.max_level + 1, std::vector<double>(trees.size(), 0.0));
  for (std::size_t level = 0; level <= p.max_level; ++level) {
    for (std::size_t t = 0; t < trees.size(); ++t) {
      std::size_t wrong = 0;
      for (std::size_t h : held) {
        const std::size_t src = level == 0 ? h : neighbors[h][level - 1];
        wrong += trees[t].leaf(d.unscaled.row(src)).predicted_class() != d.labels[h] ? 1 : 0;
      }
      rates[level][t] = held.empty() ? 0.0 : static_cast<double>(wrong) / static_cast<double>(held.size());
    }
  }
  return rates;
}

}  // namespace

RobustnessReport robustness_study(const Dataset& data, const RobustnessParams& p) {
  const Design& d = data.design;
  if (p.n_chunks < 3) throw InputError("robustness study needs at least 3 chunks");
  if (d.rows() != data.rows.size()) throw InputError("dataset rows and design rows differ");
  if (d.rows() < p.n_chunks) throw InputError("fewer rows than chunks");
  for (int y : d.labels) {
    if (y != 0 && y != 1) throw InputError("robustness study needs labeled rows");
  }

  // Chunk assignment from player-id order so that input order does not matter.
  std::vector<std::size_t> by_id(d.rows());
  std::iota(by_id.begin(), by_id.end(), std::size_t{0});
  std::sort(by_id.begin(), by_id.end(),
            [&](std::size_t a, std::size_t b) { return data.rows[a].player_id < data.rows[b].player_id; });
  Rng rng(p.seed);
  rng.shuffle(by_id);
  std::vector<std::size_t> chunk(d.rows());
  for (std::size_t k = 0; k < by_id.size(); ++k) chunk[by_id[k]] = k % p.n_chunks;

  RobustnessReport report;
  report.seed = p.seed;
  report.n_chunks = p.n_chunks;
  report.rotated = p.rotate;
  report.holdout_rows = static_cast<std::size_t>(std::count(chunk.begin(), chunk.end(), std::size_t{0}));
  std::vector<std::vector<double>> pooled(p.max_level + 1);
  const std::size_t rounds = p.rotate ? p.n_chunks : 1;
  for (std::size_t h = 0; h < rounds; ++h) {
    const auto rates = run_holdout(data, chunk, h, p);
    for (std::size_t level = 0; level <= p.max_level; ++level) {
      pooled[level].insert(pooled[level].end(), rates[level].begin(), rates[level].end());
    }
  }
  for (std::size_t level = 0; level <= p.max_level; ++level) report.levels.push_back(summarize(level, pooled[level]));
  return report;
}

}  // namespace retain
