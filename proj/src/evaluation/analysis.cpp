#include "retain/evaluation/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace retain {

LongtermReport longterm_analysis(const EventLog& log, const std::map<std::string, std::map<std::string, int>>& predictions,
                                 const EvalWindow& short_eval, const EvalWindow& long_eval) {
  if (log.player_count() == 0) throw InputError("long-term analysis needs at least one player");
  std::int64_t first_install = log.installs().front().install_ts;
  for (const auto& i : log.installs()) first_install = std::min(first_install, i.install_ts);
  const std::int64_t span = log.max_timestamp() - first_install;
  const std::int64_t needed = static_cast<std::int64_t>(long_eval.end_day) * kSecondsPerDay;
  if (span < needed) {
    throw InputError("log spans " + std::to_string(span / kSecondsPerDay) + " days but the long-term window " +
                     long_eval.name() + " needs " + std::to_string(long_eval.end_day));
  }

  LongtermReport rep;
  rep.short_eval = short_eval;
  rep.long_eval = long_eval;
  rep.players = log.player_count();
  std::vector<int> short_label(rep.players), long_label(rep.players);
  std::size_t long_count = 0, both = 0;
  for (std::size_t i = 0; i < rep.players; ++i) {
    const PlayerEvents p = log.player(i);
    short_label[i] = label_player(p, short_eval);
    long_label[i] = label_player(p, long_eval);
    long_count += static_cast<std::size_t>(long_label[i]);
    if (short_label[i]) {
      ++rep.short_retained;
      both += static_cast<std::size_t>(long_label[i]);
    }
  }
  rep.base_rate = static_cast<double>(long_count) / static_cast<double>(rep.players);
  if (rep.short_retained) rep.long_given_actual_short = static_cast<double>(both) / static_cast<double>(rep.short_retained);

  for (const auto& [model, classes] : predictions) {
    ConditionalRate c;
    c.model = model;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < rep.players; ++i) {
      const std::string& id = log.installs()[i].player_id;
      const auto it = classes.find(id);
      if (it == classes.end()) throw InputError("model '" + model + "' has no prediction for player '" + id + "'");
      if (it->second == 1) {
        ++c.predicted_retained;
        hits += static_cast<std::size_t>(long_label[i]);
      }
    }
    if (c.predicted_retained) c.long_given_predicted = static_cast<double>(hits) / static_cast<double>(c.predicted_retained);
    rep.models.push_back(std::move(c));
  }
  return rep;
}

std::vector<Correlation> feature_correlations(std::span<const FeatureVector> rows, Target target) {
  constexpr std::size_t k = kNumericFeatures.size();
  const double n = static_cast<double>(rows.size());
  std::vector<double> mean(k, 0.0);
  double ymean = 0.0;
  for (const auto& r : rows) {
    const auto v = r.numeric();
    for (std::size_t j = 0; j < k; ++j) mean[j] += v[j];
    ymean += target == Target::retained_short ? r.retained_short : r.retained_long;
  }
  for (double& m : mean) m /= n;
  ymean /= n;
  std::vector<double> sxy(k, 0.0), sxx(k, 0.0);
  double syy = 0.0;
  for (const auto& r : rows) {
    const auto v = r.numeric();
    const double dy = (target == Target::retained_short ? r.retained_short : r.retained_long) - ymean;
    syy += dy * dy;
    for (std::size_t j = 0; j < k; ++j) {
      const double dx = v[j] - mean[j];
      sxy[j] += dx * dy;
      sxx[j] += dx * dx;
    }
  }
  std::vector<Correlation> out;
  for (std::size_t j = 0; j < k; ++j) {
    Correlation c;
    c.feature = kNumericFeatures[j];
    c.constant = !(sxx[j] > 0.0);
    c.r = c.constant || !(syy > 0.0) ? 0.0 : sxy[j] / std::sqrt(sxx[j] * syy);
    out.push_back(c);
  }
  return out;
}

FeatureReport feature_report(const std::string& window, std::span<const FeatureVector> rows, const LinearModel& lr,
                             const Forest& rf, Target target) {
  FeatureReport rep;
  rep.window = window;
  rep.correlations = feature_correlations(rows, target);
  rep.coefficients.push_back({"(intercept)", lr.weights.at(0), lr.std_errors.at(0)});
  for (std::size_t t = 0; t < lr.terms.size(); ++t) {
    rep.coefficients.push_back({term_name(lr.terms[t], lr.columns), lr.weights.at(t + 1), lr.std_errors.at(t + 1)});
  }
  for (std::size_t c = 0; c < rf.columns.size(); ++c) rep.importance.push_back({rf.columns[c], rf.importance.at(c)});
  std::stable_sort(rep.importance.begin(), rep.importance.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return rep;
}

}  // namespace retain
