#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "retain/telemetry.hpp"

namespace retain {

// Behavioural parameters of one latent player type.
struct Archetype {
  std::string name;
  double weight = 1.0;            // mixture weight
  // Daily churn probabilities for days [1,7), [7,14) and [14, horizon).
  double early_hazard = 0.1;
  double novelty_hazard = 0.1;
  double late_hazard = 0.05;
  double hazard_spread = 0.3;     // sd of the per-player log hazard multiplier
  double sessions_per_day = 1.0;  // Poisson rate on days >= 1
  double day0_extra_sessions = 1.0;
  double rounds_per_session = 3.0;
  double idle_minutes = 1.5;      // median time a session stays open after its last round
  double skill = 0.6;             // base win probability on level 1
};

struct GeneratorConfig {
  std::size_t n_players = 1000;
  std::uint64_t seed = 1;
  double target_short_retention = 0.405;
  double target_long_retention = 0.152;
  std::array<Archetype, 3> archetypes = default_archetypes();

  // Global multipliers found by calibrate(); late_hazard_scale touches only
  // days >= 14 so it moves long-term retention without moving short-term.
  double hazard_scale = 1.0;
  double late_hazard_scale = 1.0;

  double round_seconds = 80.0;        // median round length
  double round_spread = 0.8;          // sd of log round length
  double first_session_rounds = 3.0;  // tutorial-like first session shared by everyone
  double first_session_archetype_mix = 0.4;
  double level_difficulty = 0.012;    // win-probability drop per level
  double moves_base = 14.0;
  double moves_per_level = 0.35;
  double no_round_first_session = 0.05;  // first session is only a menu visit
  double never_opened = 0.001;
  double tablet_bouncer_boost = 1.6;  // tablets skew toward bouncers
  double weekend_boost = 1.15;        // session-rate modulation on days 5 and 6 of the week

  std::int64_t study_start = 1404172800;  // 2014-07-01T00:00:00Z
  int install_days = 7;
  int horizon_days = 90;
  double corruption_rate = 0.0;

  static std::array<Archetype, 3> default_archetypes();

  // Throws InputError when a field is out of range or the targets are
  // infeasible (long-term retention must be below short-term retention).
  void validate() const;
};

struct PlayerTruth {
  std::string player_id;
  std::string archetype;
  int churn_day = 0;  // first relative day the player is gone; horizon if never
};

struct CorruptionTruth {
  std::size_t line_no = 0;
  std::string kind;  // expected rejection reason
};

struct SynthTruth {
  std::vector<PlayerTruth> players;
  std::vector<CorruptionTruth> corruptions;
};

struct SynthLog {
  EventLog log;
  SynthTruth truth;
};

// Simulates the cohort directly into a validated EventLog. corruption_rate is
// ignored here; corruption only applies to emitted text.
SynthLog generate_log(const GeneratorConfig& config, std::size_t threads = 1);

// Streams JSONL events (player_id order) and the ground-truth sidecar.
SynthTruth generate_jsonl(const GeneratorConfig& config, std::ostream& events, std::ostream& truth_out);

void write_truth_jsonl(const SynthTruth& truth, std::ostream& out);

struct RetentionRates {
  double short_term = 0.0;  // among players passing the cohort filter
  double long_term = 0.0;
  std::size_t filtered_players = 0;
};

RetentionRates simulate_retention(const GeneratorConfig& config, std::size_t threads = 1);

struct CalibrationResult {
  GeneratorConfig config;
  RetentionRates achieved;
  int iterations = 0;
};

inline constexpr std::uint64_t kCalibrationSeed = 20140701;
inline constexpr std::size_t kCalibrationPlayers = 50000;

// Bisection on hazard_scale (short-term target), then on late_hazard_scale
// (long-term target), each using kCalibrationPlayers simulated players under
// kCalibrationSeed. Returns the input unchanged when both targets are met.
CalibrationResult calibrate(const GeneratorConfig& config, double tolerance, std::size_t threads = 1,
                            std::size_t calibration_players = kCalibrationPlayers);

}  // namespace retain
