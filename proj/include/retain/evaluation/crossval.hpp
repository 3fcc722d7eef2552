#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "retain/evaluation/metrics.hpp"
#include "retain/featurize.hpp"
#include "retain/learners/model.hpp"
#include "retain/telemetry.hpp"

namespace retain {

// Unstratified partition of players into folds: the sorted ids are shuffled
// with the seed and the k-th id goes to fold k % n_folds, so fold sizes
// differ by at most one and the plan ignores input order.
class FoldPlan {
 public:
  FoldPlan() = default;
  FoldPlan(std::size_t n_folds, std::uint64_t seed, std::vector<std::string> players, std::vector<int> folds);

  std::size_t n_folds() const { return n_folds_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& players() const { return players_; }
  // Throws InputError for a player outside the plan.
  int fold_of(const std::string& player_id) const;
  std::vector<std::size_t> sizes() const;

 private:
  std::size_t n_folds_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::string> players_;  // sorted
  std::vector<int> folds_;
  std::unordered_map<std::string, int> index_;
};

FoldPlan make_folds(std::span<const std::string> players, std::size_t n_folds, std::uint64_t seed);

struct CvResult {
  ModelSpec spec;
  MetricSet pooled;
  std::vector<MetricSet> folds;
  Predictions predictions;  // held-out prediction for every input row
};

// For every fold: fit the encoding on the other folds, train each spec there
// and predict the held-out fold. Members shared between specs (for example
// an ensemble evaluated next to its own members) are trained once per fold.
// Trainer errors are rethrown with the fold index in the message.
std::vector<CvResult> cross_validate(std::span<const FeatureVector> rows, std::span<const ModelSpec> specs,
                                     const FoldPlan& plan, Target target = Target::retained_short,
                                     std::size_t threads = 1);

// Computes features and labels from a (cohort-filtered) log first.
std::vector<CvResult> cross_validate(const EventLog& log, const FeatureWindow& window, const EvalWindow& eval,
                                     std::span<const ModelSpec> specs, const FoldPlan& plan, std::size_t threads = 1);

}  // namespace retain
