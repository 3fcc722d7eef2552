#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace retain {

struct MetricSet {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // 0 when nothing is predicted positive
  double recall = 0.0;     // 0 when there are no positives
  double f1 = 0.0;         // 0 when precision + recall is 0
  std::optional<double> auc;  // absent for single-class labels or without scores

  std::size_t n() const { return tp + fp + tn + fn; }
};

// Fills the ratio fields from the confusion counts.
MetricSet metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);

// Labels and classes in {0,1}. AUC uses `scores` when non-empty.
MetricSet compute_metrics(std::span<const int> labels, std::span<const int> classes, std::span<const double> scores);

// P(score+ > score-) + P(tie)/2 via mid-ranks; nullopt for single-class labels.
std::optional<double> auc(std::span<const int> labels, std::span<const double> scores);

struct RocPoint {
  double threshold = 0.0;  // rows with score >= threshold are called positive
  double fpr = 0.0;
  double tpr = 0.0;
};

// One point per distinct score (descending), preceded by (0, 0).
std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores);

// Trapezoidal area under a curve returned by roc_curve.
double trapezoid_area(std::span<const RocPoint> curve);

}  // namespace retain
