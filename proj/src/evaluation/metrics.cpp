#include "retain/evaluation/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "retain/common.hpp"

namespace retain {

MetricSet metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  MetricSet m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  const auto d = [](std::size_t v) { return static_cast<double>(v); };
  const std::size_t n = tp + fp + tn + fn;
  m.accuracy = n ? d(tp + tn) / d(n) : 0.0;
  m.precision = tp + fp ? d(tp) / d(tp + fp) : 0.0;
  m.recall = tp + fn ? d(tp) / d(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

MetricSet compute_metrics(std::span<const int> labels, std::span<const int> classes, std::span<const double> scores) {
  if (labels.size() != classes.size() || (!scores.empty() && scores.size() != labels.size())) {
    throw InputError("labels, classes and scores must have equal lengths");
  }
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if ((labels[i] != 0 && labels[i] != 1) || (classes[i] != 0 && classes[i] != 1)) {
      throw InputError("labels and classes must be 0 or 1");
    }
    if (labels[i] == 1) {
      (classes[i] == 1 ? tp : fn) += 1;
    } else {
      (classes[i] == 1 ? fp : tn) += 1;
    }
  }
  MetricSet m = metrics_from_counts(tp, fp, tn, fn);
  if (!scores.empty()) m.auc = auc(labels, scores);
  return m;
}

std::optional<double> auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InputError("labels and scores must have equal lengths");
  const std::size_t n = labels.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of mid-ranks of the positives (1-based ranks, doubled to stay integral).
  long double rank_sum2 = 0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t mid2 = i + 1 + j;  // 2 * average of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum2 += static_cast<long double>(mid2);
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const long double u = rank_sum2 / 2.0L - static_cast<long double>(pos) * static_cast<long double>(pos + 1) / 2.0L;
  return static_cast<double>(u / (static_cast<long double>(pos) * static_cast<long double>(neg)));
}

std::vector<RocPoint> roc_curve(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InputError("labels and scores must have equal lengths");
  const std::size_t n = labels.size();
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t neg = n - pos;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    curve.push_back({scores[order[i]], neg ? static_cast<double>(fp) / static_cast<double>(neg) : 0.0,
                     pos ? static_cast<double>(tp) / static_cast<double>(pos) : 0.0});
    i = j;
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  }
  return area;
}

}  // namespace retain
