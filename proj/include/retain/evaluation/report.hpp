#pragma once

#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "retain/evaluation/analysis.hpp"
#include "retain/evaluation/crossval.hpp"
#include "retain/evaluation/metrics.hpp"
#include "retain/evaluation/robustness.hpp"
#include "retain/telemetry.hpp"

namespace retain {

// Fixed-precision decimal, or "NA" for an absent value.
std::string format_number(double v, int digits = 4);
std::string format_number(const std::optional<double>& v, int digits = 4);

struct MetricRow {
  std::string window;
  std::string eval;
  std::string model;
  MetricSet metrics;
};

// window,eval_window,model,accuracy,precision,recall,f1,auc,tp,fp,tn,fn
void write_metric_rows_csv(std::span<const MetricRow> rows, std::ostream& out);
// model,fold,accuracy,... one row per fold
void write_fold_metrics_csv(std::span<const CvResult> results, std::ostream& out);
// level,min,max,mean,std
void write_robustness_csv(const RobustnessReport& report, std::ostream& out);
// model,threshold,fpr,tpr
void write_roc_csv(std::span<const std::pair<std::string, std::vector<RocPoint>>> curves, std::ostream& out);
// day,active_players,mean_rounds_per_active
void write_activity_csv(const CohortSummary& summary, std::ostream& out);
void write_longterm_csv(const LongtermReport& report, std::ostream& out);
void write_correlations_csv(std::span<const FeatureReport> reports, std::ostream& out);
void write_coefficients_csv(std::span<const FeatureReport> reports, std::ostream& out);
void write_importance_csv(std::span<const FeatureReport> reports, std::ostream& out);

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal standalone SVG charts.
std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const Series> series);
std::string svg_bar_chart(const std::string& title, std::span<const std::pair<std::string, double>> bars);

}  // namespace retain
