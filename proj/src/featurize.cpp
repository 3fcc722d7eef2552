#include "retain/featurize.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <sstream>

namespace retain {

using nlohmann::json;

FeatureWindow FeatureWindow::first_days(int n) {
  if (n < 1) throw InputError("feature window needs at least one day");
  return {WindowKind::days, n};
}

FeatureWindow FeatureWindow::parse(std::string_view text) {
  if (text == "session") return first_session();
  if (text == "day") return first_day();
  if (text.size() >= 2 && text.back() == 'd') {
    int n = 0;
    const auto digits = text.substr(0, text.size() - 1);
    const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    if (res.ec == std::errc() && res.ptr == digits.data() + digits.size() && n >= 1) {
      return first_days(n);
    }
  }
  throw InputError("bad feature window '" + std::string(text) + "' (expected session, day or <n>d)");
}

std::string FeatureWindow::name() const {
  switch (kind) {
    case WindowKind::first_session: return "session";
    case WindowKind::first_day: return "day";
    case WindowKind::days: return std::to_string(days) + "d";
  }
  return "day";
}

std::int64_t FeatureWindow::cutoff(const PlayerEvents& p) const {
  const std::int64_t install = p.install->install_ts;
  switch (kind) {
    case WindowKind::first_session:
      return p.sessions.empty() ? install : p.sessions.front().end_ts;
    case WindowKind::first_day:
      return install + kSecondsPerDay;
    case WindowKind::days:
      return install + static_cast<std::int64_t>(days) * kSecondsPerDay;
  }
  return install;
}

EvalWindow EvalWindow::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon != std::string_view::npos) {
    int a = 0, b = 0;
    const auto lhs = text.substr(0, colon);
    const auto rhs = text.substr(colon + 1);
    const auto ra = std::from_chars(lhs.data(), lhs.data() + lhs.size(), a);
    const auto rb = std::from_chars(rhs.data(), rhs.data() + rhs.size(), b);
    if (ra.ec == std::errc() && ra.ptr == lhs.data() + lhs.size() && rb.ec == std::errc() &&
        rb.ptr == rhs.data() + rhs.size() && a >= 0 && b > a) {
      return {a, b};
    }
  }
  throw InputError("bad evaluation window '" + std::string(text) + "' (expected start:end, start < end)");
}

std::string EvalWindow::name() const { return std::to_string(start_day) + ":" + std::to_string(end_day); }

std::array<double, kNumericFeatures.size()> FeatureVector::numeric() const {
  return {acquired ? 1.0 : 0.0, total_days,           total_sessions,
          total_rounds,         avg_session_duration, avg_round_duration,
          total_playtime,       current_absence_time, avg_time_between_sessions,
          connected_friends,    player_interaction,   avg_moves,
          avg_stars,            max_level};
}

FeatureVector compute_player_features(const PlayerEvents& p, const FeatureWindow& window) {
  FeatureVector f;
  const InstallRecord& inst = *p.install;
  f.player_id = inst.player_id;
  f.device_type = inst.device_type;
  f.country = inst.country;
  f.acquired = inst.acquired;

  const std::int64_t cutoff = window.cutoff(p);
  std::int64_t latest = inst.install_ts;
  std::set<std::int64_t> days;
  std::int64_t first_start = 0, last_start = 0;
  double session_time = 0.0;
  std::size_t n_sessions = 0;
  for (const auto& s : p.sessions) {
    if (!window.contains(s.start_ts, cutoff)) continue;
    const std::int64_t end = std::min(s.end_ts, cutoff);
    session_time += static_cast<double>(end - s.start_ts);
    latest = std::max({latest, s.start_ts, end});
    days.insert(relative_day(inst.install_ts, s.start_ts));
    if (n_sessions == 0) first_start = s.start_ts;
    last_start = s.start_ts;
    ++n_sessions;
  }

  double round_time = 0.0, moves = 0.0, stars = 0.0;
  std::size_t n_rounds = 0;
  for (const auto& r : p.rounds) {
    if (!window.contains(r.start_ts, cutoff)) continue;
    ++n_rounds;
    round_time += r.duration;
    moves += r.moves;
    stars += r.stars;
    latest = std::max(latest, r.start_ts);
    f.connected_friends = std::max(f.connected_friends, static_cast<double>(r.friends_connected));
    f.player_interaction += r.interactions;
    f.max_level = std::max(f.max_level, static_cast<double>(r.level));
  }

  const double window_length = static_cast<double>(cutoff - inst.install_ts);
  f.total_days = static_cast<double>(days.size());
  f.total_sessions = static_cast<double>(n_sessions);
  f.total_rounds = static_cast<double>(n_rounds);
  f.total_playtime = session_time;
  f.avg_session_duration = n_sessions > 0 ? session_time / static_cast<double>(n_sessions) : 0.0;
  f.avg_round_duration = n_rounds > 0 ? round_time / static_cast<double>(n_rounds) : 0.0;
  f.avg_moves = n_rounds > 0 ? moves / static_cast<double>(n_rounds) : 0.0;
  f.avg_stars = n_rounds > 0 ? stars / static_cast<double>(n_rounds) : 0.0;
  f.current_absence_time = static_cast<double>(cutoff - latest);
  // Fewer than two sessions: the window length stands in for "no return".
  f.avg_time_between_sessions =
      n_sessions >= 2 ? static_cast<double>(last_start - first_start) / static_cast<double>(n_sessions - 1)
                      : window_length;
  return f;
}

std::vector<FeatureVector> compute_features(const EventLog& log, const FeatureWindow& window,
                                            std::size_t threads) {
  std::vector<FeatureVector> rows(log.player_count());
  parallel_for(rows.size(), threads,
               [&](std::size_t i) { rows[i] = compute_player_features(log.player(i), window); });
  return rows;
}

int label_player(const PlayerEvents& p, const EvalWindow& eval) {
  const std::int64_t lo = p.install->install_ts + static_cast<std::int64_t>(eval.start_day) * kSecondsPerDay;
  const std::int64_t hi = p.install->install_ts + static_cast<std::int64_t>(eval.end_day) * kSecondsPerDay;
  auto it = std::lower_bound(p.rounds.begin(), p.rounds.end(), lo,
                             [](const RoundRecord& r, std::int64_t t) { return r.start_ts < t; });
  return (it != p.rounds.end() && it->start_ts < hi) ? 1 : 0;
}

std::map<std::string, int> label(const EventLog& log, const EvalWindow& eval) {
  std::map<std::string, int> out;
  for (std::size_t i = 0; i < log.player_count(); ++i) {
    const auto p = log.player(i);
    out.emplace(p.install->player_id, label_player(p, eval));
  }
  return out;
}

std::vector<FeatureVector> build_rows(const EventLog& log, const FeatureWindow& window,
                                      const EvalWindow& short_eval, const EvalWindow& long_eval,
                                      std::size_t threads) {
  std::vector<FeatureVector> rows(log.player_count());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    const auto p = log.player(i);
    rows[i] = compute_player_features(p, window);
    rows[i].retained_short = label_player(p, short_eval);
    rows[i].retained_long = label_player(p, long_eval);
  });
  return rows;
}

// --- features CSV --------------------------------------------------------------

namespace {

void put_number(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError("features CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

std::vector<std::string> feature_csv_header() {
  std::vector<std::string> h = {"player_id", "device_type", "country"};
  for (const char* n : kNumericFeatures) h.emplace_back(n);
  h.emplace_back("retained_short");
  h.emplace_back("retained_long");
  return h;
}

}  // namespace

void write_features_csv(std::span<const FeatureVector> rows, std::ostream& out) {
  const auto header = feature_csv_header();
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& r : rows) {
    out << r.player_id << ',' << to_string(r.device_type) << ',' << r.country;
    for (double v : r.numeric()) {
      out << ',';
      put_number(out, v);
    }
    out << ',' << r.retained_short << ',' << r.retained_long << '\n';
  }
}

std::vector<FeatureVector> read_features_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("features CSV: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line) != feature_csv_header()) throw SchemaError("features CSV: unexpected header");
  std::vector<FeatureVector> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != feature_csv_header().size()) {
      throw InputError("features CSV line " + std::to_string(line_no) + ": wrong field count");
    }
    FeatureVector f;
    f.player_id = cells[0];
    const auto device = parse_device_type(cells[1]);
    if (!device) throw InputError("features CSV line " + std::to_string(line_no) + ": bad device_type");
    f.device_type = *device;
    f.country = cells[2];
    std::array<double, kNumericFeatures.size()> v{};
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = parse_double(cells[3 + k], line_no);
    f.acquired = v[0] != 0.0;
    f.total_days = v[1];
    f.total_sessions = v[2];
    f.total_rounds = v[3];
    f.avg_session_duration = v[4];
    f.avg_round_duration = v[5];
    f.total_playtime = v[6];
    f.current_absence_time = v[7];
    f.avg_time_between_sessions = v[8];
    f.connected_friends = v[9];
    f.player_interaction = v[10];
    f.avg_moves = v[11];
    f.avg_stars = v[12];
    f.max_level = v[13];
    f.retained_short = static_cast<int>(parse_double(cells[3 + v.size()], line_no));
    f.retained_long = static_cast<int>(parse_double(cells[4 + v.size()], line_no));
    rows.push_back(std::move(f));
  }
  return rows;
}

// --- encoding ------------------------------------------------------------------

Design Design::select_rows(std::span<const std::size_t> idx) const {
  Design d;
  d.columns = columns;
  d.scaled = scaled.select_rows(idx);
  d.unscaled = unscaled.select_rows(idx);
  d.labels.reserve(idx.size());
  for (std::size_t i : idx) d.labels.push_back(labels[i]);
  return d;
}

Encoder Encoder::fit(std::span<const FeatureVector> fit_rows) {
  if (fit_rows.empty()) throw InputError("cannot fit encoding on zero rows");
  Encoder e;
  constexpr std::size_t k = kNumericFeatures.size();
  std::vector<double> sum(k, 0.0);
  for (const auto& r : fit_rows) {
    const auto v = r.numeric();
    for (std::size_t j = 0; j < k; ++j) sum[j] += v[j];
  }
  const double n = static_cast<double>(fit_rows.size());
  e.means_.resize(k);
  for (std::size_t j = 0; j < k; ++j) e.means_[j] = sum[j] / n;
  std::vector<double> ss(k, 0.0);
  for (const auto& r : fit_rows) {
    const auto v = r.numeric();
    for (std::size_t j = 0; j < k; ++j) ss[j] += (v[j] - e.means_[j]) * (v[j] - e.means_[j]);
  }
  e.sds_.resize(k);
  e.constant_.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double sd = std::sqrt(ss[j] / n);
    e.constant_[j] = !(sd > 1e-12 * std::max(1.0, std::abs(e.means_[j])));
    e.sds_[j] = e.constant_[j] ? 1.0 : sd;
  }

  for (const char* name : kNumericFeatures) e.columns_.push_back({name, ColumnKind::numeric, name, {}});
  std::set<std::string> devices, countries;
  for (const auto& r : fit_rows) {
    devices.insert(std::string(to_string(r.device_type)));
    countries.insert(r.country);
  }
  for (const auto& d : devices) e.columns_.push_back({"device_type=" + d, ColumnKind::one_hot, "device_type", d});
  for (const auto& c : countries) e.columns_.push_back({"country=" + c, ColumnKind::one_hot, "country", c});
  return e;
}

std::vector<std::string> Encoder::column_names() const {
  std::vector<std::string> names;
  names.reserve(columns_.size());
  for (const auto& c : columns_) names.push_back(c.name);
  return names;
}

Design Encoder::transform(std::span<const FeatureVector> rows, Target target) const {
  Design d;
  d.columns = column_names();
  const std::size_t p = columns_.size();
  d.scaled = Matrix(rows.size(), p);
  d.unscaled = Matrix(rows.size(), p);
  d.labels.resize(rows.size());
  constexpr std::size_t k = kNumericFeatures.size();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto v = r.numeric();
    for (std::size_t j = 0; j < k; ++j) {
      d.unscaled(i, j) = v[j];
      d.scaled(i, j) = (v[j] - means_[j]) / sds_[j];
    }
    const std::string device(to_string(r.device_type));
    for (std::size_t j = k; j < p; ++j) {
      const auto& col = columns_[j];
      const bool hit = col.source == "device_type" ? col.level == device : col.level == r.country;
      d.unscaled(i, j) = d.scaled(i, j) = hit ? 1.0 : 0.0;
    }
    d.labels[i] = target == Target::retained_short ? r.retained_short : r.retained_long;
  }
  return d;
}

json Encoder::to_json() const {
  json levels = json::object();
  for (const auto& c : columns_) {
    if (c.kind == ColumnKind::one_hot) levels[c.source].push_back(c.level);
  }
  json numeric = json::array();
  for (std::size_t j = 0; j < means_.size(); ++j) {
    numeric.push_back({{"name", kNumericFeatures[j]}, {"mean", means_[j]}, {"sd", sds_[j]},
                       {"constant", static_cast<bool>(constant_[j])}});
  }
  return {{"columns", column_names()}, {"levels", levels}, {"standardization", numeric}};
}

Encoder Encoder::from_json(const json& j) {
  Encoder e;
  for (const auto& n : j.at("standardization")) {
    e.means_.push_back(n.at("mean").get<double>());
    e.sds_.push_back(n.at("sd").get<double>());
    e.constant_.push_back(n.at("constant").get<bool>());
  }
  if (e.means_.size() != kNumericFeatures.size()) throw SchemaError("encoding: wrong numeric column count");
  for (const char* name : kNumericFeatures) e.columns_.push_back({name, ColumnKind::numeric, name, {}});
  const auto& levels = j.at("levels");
  for (const char* source : {"device_type", "country"}) {
    if (!levels.contains(source)) continue;
    for (const auto& l : levels.at(source)) {
      const auto level = l.get<std::string>();
      e.columns_.push_back({std::string(source) + "=" + level, ColumnKind::one_hot, source, level});
    }
  }
  if (j.at("columns").get<std::vector<std::string>>() != e.column_names()) {
    throw SchemaError("encoding: column list does not match levels");
  }
  return e;
}

Dataset encode(std::vector<FeatureVector> rows, std::span<const FeatureVector> fit_rows, Target target) {
  Dataset ds;
  ds.encoder = Encoder::fit(fit_rows);
  ds.design = ds.encoder.transform(rows, target);
  ds.rows = std::move(rows);
  return ds;
}

}  // namespace retain
