#include "retain/evaluation/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace retain {

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void metric_fields(const MetricSet& m, std::ostream& out) {
  out << format_number(m.accuracy) << ',' << format_number(m.precision) << ',' << format_number(m.recall) << ','
      << format_number(m.f1) << ',' << format_number(m.auc) << ',' << m.tp << ',' << m.fp << ',' << m.tn << ',' << m.fn;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string format_number(double v, int digits) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string format_number(const std::optional<double>& v, int digits) { return v ? format_number(*v, digits) : "NA"; }

void write_metric_rows_csv(std::span<const MetricRow> rows, std::ostream& out) {
  out << "window,eval_window,model,accuracy,precision,recall,f1,auc,tp,fp,tn,fn\n";
  for (const auto& r : rows) {
    out << r.window << ',' << r.eval << ',' << r.model << ',';
    metric_fields(r.metrics, out);
    out << '\n';
  }
}

void write_fold_metrics_csv(std::span<const CvResult> results, std::ostream& out) {
  out << "model,fold,accuracy,precision,recall,f1,auc,tp,fp,tn,fn\n";
  for (const auto& r : results) {
    for (std::size_t f = 0; f < r.folds.size(); ++f) {
      out << to_string(r.spec.family) << ',' << f << ',';
      metric_fields(r.folds[f], out);
      out << '\n';
    }
  }
}

void write_robustness_csv(const RobustnessReport& report, std::ostream& out) {
  out << "level,min,max,mean,std\n";
  for (const auto& l : report.levels) {
    out << l.level << ',' << format_number(l.min) << ',' << format_number(l.max) << ',' << format_number(l.mean) << ','
        << format_number(l.std) << '\n';
  }
}

void write_roc_csv(std::span<const std::pair<std::string, std::vector<RocPoint>>> curves, std::ostream& out) {
  out << "model,threshold,fpr,tpr\n";
  for (const auto& [name, curve] : curves) {
    for (const auto& p : curve) {
      out << name << ',' << (std::isinf(p.threshold) ? std::string("inf") : format_number(p.threshold, 6)) << ','
          << format_number(p.fpr, 6) << ',' << format_number(p.tpr, 6) << '\n';
    }
  }
}

void write_activity_csv(const CohortSummary& s, std::ostream& out) {
  out << "day,active_players,mean_rounds_per_active\n";
  for (std::size_t d = 0; d < s.active_players.size(); ++d) {
    out << d << ',' << s.active_players[d] << ',' << format_number(s.mean_rounds_per_active[d]) << '\n';
  }
}

void write_longterm_csv(const LongtermReport& r, std::ostream& out) {
  out << "quantity,model,players,value\n";
  out << "long_term_base_rate,,"<< r.players << ',' << format_number(r.base_rate) << '\n';
  out << "long_given_actual_short,," << r.short_retained << ',' << format_number(r.long_given_actual_short) << '\n';
  for (const auto& m : r.models) {
    out << "long_given_predicted_short," << m.model << ',' << m.predicted_retained << ','
        << format_number(m.long_given_predicted) << '\n';
  }
}

void write_correlations_csv(std::span<const FeatureReport> reports, std::ostream& out) {
  out << "window,feature,correlation,flag\n";
  for (const auto& rep : reports) {
    for (const auto& c : rep.correlations) {
      out << rep.window << ',' << c.feature << ',' << format_number(c.r) << ',' << (c.constant ? "CONSTANT" : "") << '\n';
    }
  }
}

void write_coefficients_csv(std::span<const FeatureReport> reports, std::ostream& out) {
  out << "window,term,weight,std_error\n";
  for (const auto& rep : reports) {
    for (const auto& c : rep.coefficients) {
      out << rep.window << ',' << c.term << ',' << format_number(c.weight, 6) << ',' << format_number(c.std_error, 6) << '\n';
    }
  }
}

void write_importance_csv(std::span<const FeatureReport> reports, std::ostream& out) {
  out << "window,rank,column,importance\n";
  for (const auto& rep : reports) {
    for (std::size_t i = 0; i < rep.importance.size(); ++i) {
      out << rep.window << ',' << i + 1 << ',' << rep.importance[i].first << ','
          << format_number(rep.importance[i].second, 6) << '\n';
    }
  }
}

std::string markdown_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  out << '|';
  for (const auto& h : header) out << ' ' << h << " |";
  out << "\n|";
  for (std::size_t i = 0; i < header.size(); ++i) out << " --- |";
  out << '\n';
  for (const auto& r : rows) {
    out << '|';
    for (const auto& c : r) out << ' ' << c << " |";
    out << '\n';
  }
  return out.str();
}

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const Series> series) {
  constexpr double w = 640, h = 400, left = 70, right = 150, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        x0 = x1 = x;
        y1 = y;
        first = false;
      }
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  y0 = 0;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double y) { return h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom); };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y0 + (y1 - y0) * i / 4.0, xv = x0 + (x1 - x0) * i / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << format_number(yv, 2) << "</text>\n";
    o << "<text x=\"" << px(xv) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">" << format_number(xv, 1) << "</text>\n";
  }
  o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\">" << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (top + h - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (top + h - bottom) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : series[k].points) o << format_number(px(x), 1) << ',' << format_number(py(y), 1) << ' ';
    o << "\"/>\n";
    o << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 16 * (k + 1) << "\" fill=\"" << color << "\">"
      << xml_escape(series[k].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string svg_bar_chart(const std::string& title, std::span<const std::pair<std::string, double>> bars) {
  constexpr double w = 640, row = 22, left = 220, top = 40;
  const double h = top + row * static_cast<double>(bars.size()) + 20;
  double vmax = 0;
  for (const auto& b : bars) vmax = std::max(vmax, b.second);
  if (vmax <= 0) vmax = 1;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row * static_cast<double>(i);
    const double len = std::max(0.0, bars[i].second) / vmax * (w - left - 80);
    o << "<text x=\"" << left - 6 << "\" y=\"" << y + 14 << "\" text-anchor=\"end\">" << xml_escape(bars[i].first) << "</text>\n";
    o << "<rect x=\"" << left << "\" y=\"" << y + 3 << "\" width=\"" << format_number(len, 1) << "\" height=\"" << row - 6
      << "\" fill=\"" << kPalette[0] << "\"/>\n";
    o << "<text x=\"" << left + len + 4 << "\" y=\"" << y + 14 << "\">" << format_number(bars[i].second, 3) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace retain
