#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "retain/common.hpp"
#include "retain/featurize.hpp"

namespace retain {

// A main effect (b < 0) or a two-way interaction of design columns.
struct Term {
  int a = 0;
  int b = -1;

  bool is_interaction() const { return b >= 0; }
  double value(std::span<const double> row) const {
    return is_interaction() ? row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)]
                            : row[static_cast<std::size_t>(a)];
  }
  auto operator<=>(const Term&) const = default;
};

std::string term_name(const Term& t, std::span<const std::string> columns);

struct LinearModel {
  std::vector<std::string> columns;
  std::vector<Term> terms;
  std::vector<double> weights;     // intercept first, then one per term
  std::vector<double> std_errors;  // same layout as weights
  double log_likelihood = 0.0;
  double aic = 0.0;
  bool separation_warning = false;  // ridge fallback was needed
  std::size_t iterations = 0;

  double score(std::span<const double> scaled_row) const;

  nlohmann::json to_json() const;
  static LinearModel from_json(const nlohmann::json& j);
};

// Newton iterations with step halving on the Bernoulli negative log-likelihood
// of z (intercept column included by the caller). The objective never
// increases between accepted steps.
struct LogisticFit {
  std::vector<double> weights;
  std::vector<double> nll_trace;  // objective after every accepted step, starting point first
  double nll = 0.0;               // unpenalized
  bool converged = false;
  std::size_t iterations = 0;
};

struct NewtonOptions {
  double tolerance = 1e-8;  // on ||gradient|| / n
  std::size_t max_iterations = 100;
  double ridge = 0.0;  // L2 penalty on non-intercept weights
};

LogisticFit newton_logistic(const Matrix& z, std::span<const int> y, std::span<const double> start,
                            const NewtonOptions& options = {});

// Objective pieces on z (intercept column included), exposed for checks.
double logistic_nll(const Matrix& z, std::span<const int> y, std::span<const double> w);
std::vector<double> logistic_gradient(const Matrix& z, std::span<const int> y, std::span<const double> w);

struct LogisticParams {
  std::size_t max_steps = 100;
  std::size_t pool_top = 8;              // interactions among the best single terms
  std::size_t selection_rows = 10000;    // stepwise runs on a subsample of this size
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

// Candidate main effects: every column except constant ones and the first
// (reference) level of each one-hot group.
std::vector<Term> main_effect_candidates(const Design& design);

// All pairs among the `top` main effects with the lowest single-term AIC.
std::vector<Term> interaction_pool(const Design& design, std::span<const Term> mains, std::size_t top);

// Forward-backward stepwise search on AIC over mains plus pool, keeping
// hierarchy (an interaction needs both of its main effects).
std::vector<Term> stepwise_terms(const Design& design, std::span<const Term> mains, std::span<const Term> pool,
                                 std::size_t max_steps, std::size_t threads = 1);

// Fits the given terms on design.scaled. Perfect separation (or a fit that
// diverges) is refit with ridge 1e-6 and flagged.
LinearModel fit_logistic_terms(const Design& design, std::span<const Term> terms);

// Stepwise selection on a subsample of at most params.selection_rows rows,
// then a final fit of the selected terms on every row.
LinearModel train_logistic(const Design& design, const LogisticParams& params = {});

// Maps terms from one column layout onto another by name, dropping terms
// whose columns are absent.
std::vector<Term> remap_terms(std::span<const Term> terms, std::span<const std::string> from,
                              std::span<const std::string> to);

}  // namespace retain
