#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "retain/common.hpp"
#include "retain/telemetry.hpp"

namespace retain {

enum class WindowKind { first_session, first_day, days };

// Observation interval from install up to a per-player cutoff. An event at
// time t is inside the window when t < cutoff; for the first-session window
// the bound is inclusive so that the first session itself is always inside.
struct FeatureWindow {
  WindowKind kind = WindowKind::first_day;
  int days = 1;  // only used by WindowKind::days

  static FeatureWindow first_session() { return {WindowKind::first_session, 0}; }
  static FeatureWindow first_day() { return {WindowKind::first_day, 1}; }
  static FeatureWindow first_days(int n);

  // Accepts "session", "day" and "<n>d".
  static FeatureWindow parse(std::string_view text);
  std::string name() const;

  std::int64_t cutoff(const PlayerEvents& p) const;
  bool contains(std::int64_t ts, std::int64_t cutoff) const {
    return kind == WindowKind::first_session ? ts <= cutoff : ts < cutoff;
  }

  bool operator==(const FeatureWindow&) const = default;
};

// Label interval [install + start_day*86400, install + end_day*86400).
struct EvalWindow {
  int start_day = 8;
  int end_day = 14;

  static EvalWindow short_term() { return {8, 14}; }
  static EvalWindow long_term() { return {60, 67}; }
  // Accepts "start:end".
  static EvalWindow parse(std::string_view text);
  std::string name() const;

  bool operator==(const EvalWindow&) const = default;
};

// Numeric feature columns in canonical order; `acquired` is encoded as 0/1.
inline constexpr std::array<const char*, 14> kNumericFeatures = {
    "acquired",           "total_days",           "total_sessions",
    "total_rounds",       "avg_session_duration", "avg_round_duration",
    "total_playtime",     "current_absence_time", "avg_time_between_sessions",
    "connected_friends",  "player_interaction",   "avg_moves",
    "avg_stars",          "max_level"};

struct FeatureVector {
  std::string player_id;
  DeviceType device_type = DeviceType::phone;
  std::string country;
  bool acquired = false;

  double total_days = 0;
  double total_sessions = 0;
  double total_rounds = 0;
  double avg_session_duration = 0;
  double avg_round_duration = 0;
  double total_playtime = 0;
  double current_absence_time = 0;
  double avg_time_between_sessions = 0;
  double connected_friends = 0;
  double player_interaction = 0;
  double avg_moves = 0;
  double avg_stars = 0;
  double max_level = 0;

  int retained_short = -1;  // -1 until labeled
  int retained_long = -1;

  std::array<double, kNumericFeatures.size()> numeric() const;
  bool operator==(const FeatureVector&) const = default;
};

FeatureVector compute_player_features(const PlayerEvents& p, const FeatureWindow& window);

// One row per player in log order (sorted by player_id).
std::vector<FeatureVector> compute_features(const EventLog& log, const FeatureWindow& window,
                                            std::size_t threads = 1);

int label_player(const PlayerEvents& p, const EvalWindow& eval);
std::map<std::string, int> label(const EventLog& log, const EvalWindow& eval);

// compute_features plus short- and long-term labels.
std::vector<FeatureVector> build_rows(const EventLog& log, const FeatureWindow& window,
                                      const EvalWindow& short_eval = EvalWindow::short_term(),
                                      const EvalWindow& long_eval = EvalWindow::long_term(),
                                      std::size_t threads = 1);

void write_features_csv(std::span<const FeatureVector> rows, std::ostream& out);
std::vector<FeatureVector> read_features_csv(std::istream& in);

enum class ColumnKind { numeric, one_hot };

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  std::string source;  // feature name; for one-hot columns the categorical
  std::string level;   // one-hot level
  bool operator==(const ColumnInfo&) const = default;
};

enum class Target { retained_short, retained_long };

// Model-ready matrices. `scaled` holds z-standardized numeric columns,
// `unscaled` the raw values; one-hot columns are 0/1 in both.
struct Design {
  std::vector<std::string> columns;
  Matrix scaled;
  Matrix unscaled;
  std::vector<int> labels;  // -1 where unlabeled

  std::size_t rows() const { return scaled.rows(); }
  Design select_rows(std::span<const std::size_t> idx) const;
};

// Column layout: the numeric features in canonical order, then device_type
// one-hot levels, then country one-hot levels (levels sorted).
class Encoder {
 public:
  Encoder() = default;

  // Throws InputError on empty fit_rows.
  static Encoder fit(std::span<const FeatureVector> fit_rows);

  const std::vector<ColumnInfo>& columns() const { return columns_; }
  std::vector<std::string> column_names() const;
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& sds() const { return sds_; }  // 1 for constant columns
  const std::vector<bool>& constant() const { return constant_; }

  Design transform(std::span<const FeatureVector> rows, Target target = Target::retained_short) const;

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j);

 private:
  std::vector<ColumnInfo> columns_;
  std::vector<double> means_;  // per numeric feature
  std::vector<double> sds_;
  std::vector<bool> constant_;
};

struct Dataset {
  FeatureWindow window;
  EvalWindow eval;
  std::vector<FeatureVector> rows;
  Encoder encoder;
  Design design;
};

// Fits the encoder on fit_rows and transforms rows.
Dataset encode(std::vector<FeatureVector> rows, std::span<const FeatureVector> fit_rows,
               Target target = Target::retained_short);

}  // namespace retain
