#include "retain/evaluation/crossval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "retain/common.hpp"

namespace retain {

FoldPlan::FoldPlan(std::size_t n_folds, std::uint64_t seed, std::vector<std::string> players, std::vector<int> folds)
    : n_folds_(n_folds), seed_(seed), players_(std::move(players)), folds_(std::move(folds)) {
  for (std::size_t i = 0; i < players_.size(); ++i) index_.emplace(players_[i], folds_[i]);
}

int FoldPlan::fold_of(const std::string& player_id) const {
  const auto it = index_.find(player_id);
  if (it == index_.end()) throw InputError("player '" + player_id + "' is not covered by the fold plan");
  return it->second;
}

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> s(n_folds_, 0);
  for (int f : folds_) ++s[static_cast<std::size_t>(f)];
  return s;
}

FoldPlan make_folds(std::span<const std::string> players, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw InputError("n_folds must be at least 2");
  if (players.size() < n_folds) {
    throw InputError("too few players (" + std::to_string(players.size()) + ") for " + std::to_string(n_folds) + " folds");
  }
  std::vector<std::string> sorted(players.begin(), players.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw InputError("duplicate player ids in fold plan");
  std::vector<std::size_t> order(sorted.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<int> folds(sorted.size());
  for (std::size_t k = 0; k < order.size(); ++k) folds[order[k]] = static_cast<int>(k % n_folds);
  return FoldPlan(n_folds, seed, std::move(sorted), std::move(folds));
}

namespace {

ModelSpec member_spec(const ModelSpec& spec, Family f) {
  ModelSpec m = spec;
  m.family = f;
  return m;
}

Predictions combine_members(const Predictions& a, const Predictions& b, const Predictions& c) {
  Predictions p;
  const std::size_t n = a.scores.size();
  p.classes.resize(n);
  p.scores.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    p.classes[r] = a.classes[r] + b.classes[r] + c.classes[r] >= 2 ? 1 : 0;
    p.scores[r] = (a.scores[r] + b.scores[r] + c.scores[r]) / 3.0;
  }
  return p;
}

[[noreturn]] void rethrow_with_fold(std::size_t fold) {
  const std::string prefix = "fold " + std::to_string(fold) + ": ";
  try {
    throw;
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(prefix + e.what(), e.cap());
  } catch (const InputError& e) {
    throw InputError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

std::vector<CvResult> cross_validate(std::span<const FeatureVector> rows, std::span<const ModelSpec> specs,
                                     const FoldPlan& plan, Target target, std::size_t threads) {
  if (specs.empty()) throw InputError("no models to cross-validate");
  const std::size_t n = rows.size();
  const std::size_t k = plan.n_folds();
  std::vector<int> fold(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    fold[i] = plan.fold_of(rows[i].player_id);
    labels[i] = target == Target::retained_short ? rows[i].retained_short : rows[i].retained_long;
    if (labels[i] != 0 && labels[i] != 1) throw InputError("player '" + rows[i].player_id + "' has no label");
  }

  // per_fold[f][s] holds held-out predictions of spec s on fold f.
  std::vector<std::vector<Predictions>> per_fold(k, std::vector<Predictions>(specs.size()));
  // Rows are visited in player id order so that input order cannot matter.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].player_id < rows[b].player_id; });
  std::vector<std::vector<std::size_t>> test_index(k);
  for (std::size_t i : order) test_index[static_cast<std::size_t>(fold[i])].push_back(i);

  parallel_for(k, threads, [&](std::size_t f) {
    try {
      std::vector<FeatureVector> train_rows, test_rows;
      for (std::size_t i : order) (static_cast<std::size_t>(fold[i]) == f ? test_rows : train_rows).push_back(rows[i]);
      if (train_rows.empty() || test_rows.empty()) throw InputError("empty training or test split");
      const Encoder enc = Encoder::fit(train_rows);
      const Design train = enc.transform(train_rows, target);
      const Design test = enc.transform(test_rows, target);

      std::map<std::string, Predictions> cache;
      auto get = [&](const ModelSpec& s) -> const Predictions& {
        const std::string key = s.to_json().dump();
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, predict(train_model(train, s), test)).first;
        return it->second;
      };
      for (std::size_t s = 0; s < specs.size(); ++s) {
        if (specs[s].family == Family::ensemble) {
          per_fold[f][s] = combine_members(get(member_spec(specs[s], Family::lr)), get(member_spec(specs[s], Family::svm)),
                                           get(member_spec(specs[s], Family::rf)));
        } else {
          per_fold[f][s] = get(specs[s]);
        }
      }
    } catch (...) {
      rethrow_with_fold(f);
    }
  });

  std::vector<CvResult> results(specs.size());
  for (std::size_t s = 0; s < specs.size(); ++s) {
    CvResult& r = results[s];
    r.spec = specs[s];
    r.predictions.classes.assign(n, 0);
    r.predictions.scores.assign(n, 0.0);
    for (std::size_t f = 0; f < k; ++f) {
      const Predictions& p = per_fold[f][s];
      std::vector<int> fold_labels;
      for (std::size_t j = 0; j < test_index[f].size(); ++j) {
        const std::size_t i = test_index[f][j];
        r.predictions.classes[i] = p.classes[j];
        r.predictions.scores[i] = p.scores[j];
        fold_labels.push_back(labels[i]);
      }
      r.folds.push_back(compute_metrics(fold_labels, p.classes, p.scores));
    }
    r.pooled = compute_metrics(labels, r.predictions.classes, r.predictions.scores);
  }
  return results;
}

std::vector<CvResult> cross_validate(const EventLog& log, const FeatureWindow& window, const EvalWindow& eval,
                                     std::span<const ModelSpec> specs, const FoldPlan& plan, std::size_t threads) {
  const std::vector<FeatureVector> rows = build_rows(log, window, eval, EvalWindow::long_term(), threads);
  return cross_validate(rows, specs, plan, Target::retained_short, threads);
}

}  // namespace retain
