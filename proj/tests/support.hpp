#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "retain/common.hpp"
#include "retain/featurize.hpp"
#include "retain/synthcohort.hpp"
#include "retain/telemetry.hpp"

namespace retain::testing {

inline constexpr std::int64_t kT0 = 1404172800;
inline constexpr std::int64_t kHour = 3600;
inline constexpr std::int64_t kDay = 86400;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "retain-test-XXXXXX").string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small hand-written logs.
class LogBuilder {
 public:
  LogBuilder& install(const std::string& id, std::int64_t ts, DeviceType device = DeviceType::phone,
                      const std::string& country = "US", bool acquired = false) {
    installs.push_back({id, ts, device, country, acquired});
    return *this;
  }
  LogBuilder& session(const std::string& id, const std::string& sid, std::int64_t start, std::int64_t end) {
    sessions.push_back({id, sid, start, end});
    return *this;
  }
  LogBuilder& round(const std::string& id, const std::string& sid, std::int64_t start, double duration = 60,
                    int moves = 10, int stars = 2, int level = 1, int friends = 0, int interactions = 0) {
    rounds.push_back({id, sid, start, duration, moves, stars, level, friends, interactions});
    return *this;
  }
  EventLog build() const { return EventLog::build(installs, sessions, rounds); }

  std::vector<InstallRecord> installs;
  std::vector<SessionRecord> sessions;
  std::vector<RoundRecord> rounds;
};

// Feature rows with independent random values; labels follow a planted
// absence-time rule with 10% noise, plus a tablet penalty.
inline std::vector<FeatureVector> random_features(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> countries = {"US", "DE", "GB", "FR", "JP", "BR"};
  Rng rng(seed);
  std::vector<FeatureVector> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    FeatureVector& r = rows[i];
    char id[32];
    std::snprintf(id, sizeof(id), "r%06zu", i);
    r.player_id = id;
    r.device_type = static_cast<DeviceType>(rng.below(3));
    r.country = countries[rng.below(countries.size())];
    r.acquired = rng.bernoulli(0.3);
    r.total_days = 1 + static_cast<double>(rng.below(7));
    r.total_sessions = 1 + static_cast<double>(rng.poisson(3));
    r.total_rounds = static_cast<double>(rng.poisson(8));
    r.avg_session_duration = rng.uniform(10, 2000);
    r.avg_round_duration = rng.uniform(10, 300);
    r.total_playtime = rng.uniform(0, 20000);
    r.current_absence_time = rng.uniform(0, 2 * 86400.0);
    r.avg_time_between_sessions = rng.uniform(0, 86400.0);
    r.connected_friends = static_cast<double>(rng.poisson(1));
    r.player_interaction = static_cast<double>(rng.poisson(0.5));
    r.avg_moves = rng.uniform(5, 30);
    r.avg_stars = rng.uniform(0, 3);
    r.max_level = 1 + static_cast<double>(rng.below(40));
    int y = r.current_absence_time <= 72000 ? 1 : 0;
    if (r.device_type == DeviceType::tablet && rng.bernoulli(0.5)) y = 0;
    if (rng.bernoulli(0.1)) y = 1 - y;
    r.retained_short = y;
    r.retained_long = y && rng.bernoulli(0.4) ? 1 : 0;
  }
  return rows;
}

inline SynthLog synthetic(std::size_t players, std::uint64_t seed) {
  GeneratorConfig c;
  c.n_players = players;
  c.seed = seed;
  return generate_log(c, 1);
}

}  // namespace retain::testing
