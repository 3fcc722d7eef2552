#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "retain/featurize.hpp"
#include "retain/learners/forest.hpp"
#include "retain/learners/logistic.hpp"
#include "retain/telemetry.hpp"

namespace retain {

struct ConditionalRate {
  std::string model;
  std::size_t predicted_retained = 0;
  std::optional<double> long_given_predicted;  // absent when nobody is predicted retained
};

struct LongtermReport {
  EvalWindow short_eval;
  EvalWindow long_eval;
  std::size_t players = 0;
  double base_rate = 0.0;  // long-term retention among all players
  std::size_t short_retained = 0;
  std::optional<double> long_given_actual_short;
  std::vector<ConditionalRate> models;
};

// `predictions` maps model name -> (player id -> predicted short-term class)
// and must cover every player of the (cohort-filtered) log. Throws
// InputError when the log spans fewer than long_eval.end_day days from the
// first install to the last event.
LongtermReport longterm_analysis(const EventLog& log, const std::map<std::string, std::map<std::string, int>>& predictions,
                                 const EvalWindow& short_eval = EvalWindow::short_term(),
                                 const EvalWindow& long_eval = EvalWindow::long_term());

struct Correlation {
  std::string feature;
  double r = 0.0;  // 0 for a constant feature
  bool constant = false;
};

// Pearson correlation of every numeric feature with the chosen label.
std::vector<Correlation> feature_correlations(std::span<const FeatureVector> rows, Target target = Target::retained_short);

struct Coefficient {
  std::string term;
  double weight = 0.0;
  double std_error = 0.0;
};

struct FeatureReport {
  std::string window;
  std::vector<Correlation> correlations;
  std::vector<Coefficient> coefficients;  // intercept first
  std::vector<std::pair<std::string, double>> importance;  // descending
};

FeatureReport feature_report(const std::string& window, std::span<const FeatureVector> rows, const LinearModel& lr,
                             const Forest& rf, Target target = Target::retained_short);

}  // namespace retain
