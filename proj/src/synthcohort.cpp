#include "retain/synthcohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "retain/common.hpp"
#include "retain/featurize.hpp"

namespace retain {

using nlohmann::json;

std::array<Archetype, 3> GeneratorConfig::default_archetypes() {
  Archetype bouncer;
  bouncer.name = "bouncer";
  bouncer.weight = 0.42;
  bouncer.early_hazard = 0.3234;
  bouncer.novelty_hazard = 0.2516;
  bouncer.late_hazard = 0.1977;
  bouncer.hazard_spread = 0.3;
  bouncer.sessions_per_day = 0.5;
  bouncer.day0_extra_sessions = 0.2;
  bouncer.rounds_per_session = 1.8;
  bouncer.idle_minutes = 1.5;
  bouncer.skill = 0.55;

  Archetype casual;
  casual.name = "casual";
  casual.weight = 0.33;
  casual.early_hazard = 0.0575;
  casual.novelty_hazard = 0.07188;
  casual.late_hazard = 0.04447;
  casual.hazard_spread = 0.4;
  casual.sessions_per_day = 0.7;
  casual.day0_extra_sessions = 1.0;
  casual.rounds_per_session = 3.5;
  casual.idle_minutes = 1.5;
  casual.skill = 0.60;

  Archetype engaged;
  engaged.name = "engaged";
  engaged.weight = 0.25;
  engaged.early_hazard = 0.01078;
  engaged.novelty_hazard = 0.02156;
  engaged.late_hazard = 0.007906;
  engaged.hazard_spread = 0.4;
  engaged.sessions_per_day = 1.2;
  engaged.day0_extra_sessions = 2.5;
  engaged.rounds_per_session = 5.5;
  engaged.idle_minutes = 1.5;
  engaged.skill = 0.65;
  return {bouncer, casual, engaged};
}

void GeneratorConfig::validate() const {
  auto fraction = [](double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) throw InputError(std::string(name) + " must lie in (0,1)");
  };
  if (n_players < 1) throw InputError("n_players must be at least 1");
  fraction(target_short_retention, "target_short_retention");
  fraction(target_long_retention, "target_long_retention");
  if (target_long_retention >= target_short_retention) {
    throw InputError("infeasible targets: long-term retention must be below short-term retention");
  }
  if (!(corruption_rate >= 0.0 && corruption_rate < 1.0)) throw InputError("corruption_rate must lie in [0,1)");
  if (!(hazard_scale > 0.0) || !(late_hazard_scale > 0.0)) throw InputError("hazard scales must be positive");
  if (install_days < 1 || horizon_days < 1) throw InputError("install_days and horizon_days must be positive");
  for (const auto& a : archetypes) {
    if (!(a.weight >= 0.0)) throw InputError("archetype weights must be non-negative");
    for (double h : {a.early_hazard, a.novelty_hazard, a.late_hazard}) {
      if (!(h >= 0.0 && h <= 1.0)) throw InputError("hazards must lie in [0,1]");
    }
    if (a.sessions_per_day < 0 || a.day0_extra_sessions < 0 || a.rounds_per_session < 0 ||
        a.idle_minutes <= 0 || a.hazard_spread < 0) {
      throw InputError("archetype '" + a.name + "' has a negative rate");
    }
  }
  if (archetypes[0].weight + archetypes[1].weight + archetypes[2].weight <= 0.0) {
    throw InputError("archetype weights sum to zero");
  }
}

namespace {

constexpr std::array<const char*, 10> kCountries = {"US", "DE", "GB", "FR", "JP",
                                                     "BR", "CA", "KR", "AU", "IT"};
constexpr std::array<double, 10> kCountryWeights = {0.30, 0.12, 0.10, 0.09, 0.08,
                                                     0.07, 0.06, 0.06, 0.05, 0.07};
constexpr std::array<double, 3> kDeviceWeights = {0.74, 0.23, 0.03};

struct SimPlayer {
  InstallRecord install;
  std::vector<SessionRecord> sessions;
  std::vector<RoundRecord> rounds;
  int archetype = 0;
  int churn_day = 0;
};

std::string player_name(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "p%07zu", i + 1);
  return buf;
}

double phase_hazard(const GeneratorConfig& c, const Archetype& a, int day) {
  if (day < 7) return a.early_hazard * c.hazard_scale;
  if (day < 14) return a.novelty_hazard * c.hazard_scale;
  return a.late_hazard * c.hazard_scale * c.late_hazard_scale;
}

// Three independent streams per player: attributes and activity, survival, and
// (in generate_jsonl) corruption. Activity on day d uses the same draws no
// matter when the player churns, so survival changes never reshuffle play.
SimPlayer simulate_player(const GeneratorConfig& c, std::size_t index) {
  const std::uint64_t player_seed = mix_seed(c.seed, index);
  Rng rng(mix_seed(player_seed, 0));
  Rng survival(mix_seed(player_seed, 1));

  SimPlayer sp;
  InstallRecord& inst = sp.install;
  inst.player_id = player_name(index);
  inst.install_ts = c.study_start + static_cast<std::int64_t>(
                                        rng.below(static_cast<std::uint64_t>(c.install_days) * kSecondsPerDay));
  inst.device_type = static_cast<DeviceType>(rng.categorical(kDeviceWeights));
  inst.country = kCountries[rng.categorical(kCountryWeights)];
  inst.acquired = rng.bernoulli(0.3);

  std::array<double, 3> weights{};
  for (std::size_t k = 0; k < 3; ++k) weights[k] = c.archetypes[k].weight;
  if (inst.device_type == DeviceType::tablet) weights[0] *= c.tablet_bouncer_boost;
  sp.archetype = static_cast<int>(rng.categorical(weights));
  const Archetype& a = c.archetypes[static_cast<std::size_t>(sp.archetype)];

  const double hazard_mult = std::exp(rng.normal(0.0, a.hazard_spread));
  const double activity = std::exp(rng.normal(0.0, 0.3));
  const double skill = std::clamp(a.skill + rng.normal(0.0, 0.08), 0.2, 0.95);
  const int friends_base = rng.poisson(0.5 + a.sessions_per_day);
  const bool never_opened = rng.bernoulli(c.never_opened);
  const bool empty_first_session = rng.bernoulli(c.no_round_first_session);

  sp.churn_day = c.horizon_days;
  for (int d = 1; d < c.horizon_days; ++d) {
    const double h = std::min(1.0, phase_hazard(c, a, d) * hazard_mult);
    if (survival.uniform() < h) {
      sp.churn_day = d;
      break;
    }
  }
  if (never_opened) return sp;

  int level = 1;
  int session_counter = 0;
  const std::int64_t session_gap = 60;
  const std::int64_t tail = 1800;
  for (int d = 0; d < sp.churn_day; ++d) {
    const std::int64_t day_start = inst.install_ts + static_cast<std::int64_t>(d) * kSecondsPerDay;
    const std::int64_t day_end = day_start + kSecondsPerDay;
    // Installs are uniform over whole weeks, so this modulation leaves the
    // expected per-relative-day activity flat.
    const std::int64_t weekday = ((day_start / kSecondsPerDay) + 3) % 7;  // 0 = Monday
    const double dow = weekday >= 5 ? c.weekend_boost : (7.0 - 2.0 * c.weekend_boost) / 5.0;

    std::vector<std::int64_t> starts;
    if (d == 0) {
      const int extra = rng.poisson(a.day0_extra_sessions * activity);
      starts.push_back(inst.install_ts + std::min<std::int64_t>(1200, static_cast<std::int64_t>(rng.exponential(90.0))));
      for (int k = 0; k < extra; ++k) {
        starts.push_back(day_start + 1800 + static_cast<std::int64_t>(rng.uniform() * (kSecondsPerDay - 1800 - tail)));
      }
    } else {
      const int n = rng.poisson(a.sessions_per_day * activity * dow);
      for (int k = 0; k < n; ++k) {
        starts.push_back(day_start + static_cast<std::int64_t>(rng.uniform() * (kSecondsPerDay - tail)));
      }
    }
    std::sort(starts.begin(), starts.end());

    std::int64_t prev_end = day_start - session_gap;
    for (std::size_t k = 0; k < starts.size(); ++k) {
      const bool first_session = d == 0 && k == 0;
      std::int64_t start = std::max(starts[k], prev_end + session_gap);
      int n_rounds = first_session
                         ? rng.poisson((1.0 - c.first_session_archetype_mix) * c.first_session_rounds +
                                       c.first_session_archetype_mix * a.rounds_per_session)
                         : rng.poisson(a.rounds_per_session * activity);
      const double idle = rng.lognormal(std::log(a.idle_minutes * 60.0), 0.6);
      if (first_session) n_rounds = empty_first_session ? 0 : std::max(1, n_rounds);
      if (start >= day_end - session_gap) break;

      SessionRecord s;
      s.player_id = inst.player_id;
      s.session_id = "s" + std::to_string(++session_counter);
      s.start_ts = start;

      std::int64_t t = start + static_cast<std::int64_t>(rng.exponential(20.0));
      std::int64_t last_round = start;
      for (int r = 0; r < n_rounds && t < day_end - 1; ++r) {
        RoundRecord rr;
        rr.player_id = inst.player_id;
        rr.session_id = s.session_id;
        rr.start_ts = t;
        rr.duration = std::round(rng.lognormal(std::log(c.round_seconds), c.round_spread));
        const double win_p = std::clamp(skill - c.level_difficulty * (level - 1), 0.05, 0.95);
        const bool win = rng.uniform() < win_p;
        const double u1 = rng.uniform(), u2 = rng.uniform();
        rr.stars = win ? 1 + (u1 < win_p ? 1 : 0) + (u2 < win_p * win_p ? 1 : 0) : 0;
        rr.moves = rng.poisson(c.moves_base + c.moves_per_level * level);
        rr.level = level;
        rr.friends_connected = friends_base + static_cast<int>(d * 0.1 * activity);
        rr.interactions = rng.poisson(rr.friends_connected > 0 ? 0.3 : 0.05);
        if (win) ++level;
        last_round = t;
        t += static_cast<std::int64_t>(rr.duration) + static_cast<std::int64_t>(rng.exponential(12.0));
        sp.rounds.push_back(std::move(rr));
      }
      std::int64_t end = std::max(std::min(t + static_cast<std::int64_t>(idle), day_end - 1), last_round);
      s.end_ts = end;
      prev_end = end;
      sp.sessions.push_back(std::move(s));
    }
  }
  return sp;
}

struct PlayerOutcome {
  bool eligible = false;
  int short_label = 0;
  int long_label = 0;
};

PlayerOutcome outcome_of(const SimPlayer& sp, const GeneratorConfig& c) {
  (void)c;
  PlayerEvents p{&sp.install, sp.sessions, sp.rounds};
  PlayerOutcome o;
  o.eligible = passes_cohort_filter(p);
  if (o.eligible) {
    o.short_label = label_player(p, EvalWindow::short_term());
    o.long_label = label_player(p, EvalWindow::long_term());
  }
  return o;
}

json install_json(const InstallRecord& r) {
  return {{"type", "install"},       {"player_id", r.player_id},
          {"install_ts", r.install_ts}, {"device_type", to_string(r.device_type)},
          {"country", r.country},    {"acquired", r.acquired}};
}

json session_json(const SessionRecord& r) {
  return {{"type", "session"},
          {"player_id", r.player_id},
          {"session_id", r.session_id},
          {"start_ts", r.start_ts},
          {"end_ts", r.end_ts}};
}

json round_json(const RoundRecord& r) {
  return {{"type", "round"},
          {"player_id", r.player_id},
          {"session_id", r.session_id},
          {"start_ts", r.start_ts},
          {"duration", r.duration},
          {"moves", r.moves},
          {"stars", r.stars},
          {"level", r.level},
          {"friends_connected", r.friends_connected},
          {"interactions", r.interactions}};
}

}  // namespace

SynthLog generate_log(const GeneratorConfig& config, std::size_t threads) {
  config.validate();
  std::vector<SimPlayer> players(config.n_players);
  parallel_for(players.size(), threads, [&](std::size_t i) { players[i] = simulate_player(config, i); });

  SynthLog out;
  std::vector<InstallRecord> installs;
  std::vector<SessionRecord> sessions;
  std::vector<RoundRecord> rounds;
  installs.reserve(players.size());
  for (auto& sp : players) {
    out.truth.players.push_back({sp.install.player_id,
                                 config.archetypes[static_cast<std::size_t>(sp.archetype)].name, sp.churn_day});
    installs.push_back(std::move(sp.install));
    std::move(sp.sessions.begin(), sp.sessions.end(), std::back_inserter(sessions));
    std::move(sp.rounds.begin(), sp.rounds.end(), std::back_inserter(rounds));
    sp = SimPlayer{};
  }
  out.log = EventLog::build(std::move(installs), std::move(sessions), std::move(rounds));
  return out;
}

SynthTruth generate_jsonl(const GeneratorConfig& config, std::ostream& events, std::ostream& truth_out) {
  config.validate();
  SynthTruth truth;
  std::size_t line_no = 0;
  const double rate = config.corruption_rate;
  for (std::size_t i = 0; i < config.n_players; ++i) {
    SimPlayer sp = simulate_player(config, i);
    Rng corrupt(mix_seed(mix_seed(config.seed, i), 2));
    truth.players.push_back({sp.install.player_id,
                             config.archetypes[static_cast<std::size_t>(sp.archetype)].name, sp.churn_day});

    const std::string install_line = install_json(sp.install).dump();
    events << install_line << '\n';
    ++line_no;
    if (rate > 0 && corrupt.uniform() < rate) {
      events << install_line << '\n';
      truth.corruptions.push_back({++line_no, "DUPLICATE_PLAYER"});
    }

    std::size_t r = 0;
    for (const auto& s : sp.sessions) {
      std::size_t r_end = r;
      while (r_end < sp.rounds.size() && sp.rounds[r_end].session_id == s.session_id) ++r_end;
      json sj = session_json(s);
      ++line_no;
      // Only round-less sessions are corrupted, so no round is orphaned.
      if (r_end == r && rate > 0 && corrupt.uniform() < rate) {
        sj["end_ts"] = s.start_ts - 30;
        truth.corruptions.push_back({line_no, "SESSION_END_BEFORE_START"});
      }
      events << sj.dump() << '\n';

      for (; r < r_end; ++r) {
        const RoundRecord& rr = sp.rounds[r];
        ++line_no;
        std::string line;
        if (rate > 0 && corrupt.uniform() < rate) {
          json rj = round_json(rr);
          switch (corrupt.below(4)) {
            case 0:
              rj["start_ts"] = s.end_ts + 3600;
              truth.corruptions.push_back({line_no, "ROUND_OUTSIDE_SESSION"});
              line = rj.dump();
              break;
            case 1:
              rj["stars"] = 4 + static_cast<int>(corrupt.below(3));
              truth.corruptions.push_back({line_no, "INVALID_VALUE"});
              line = rj.dump();
              break;
            case 2:
              line = rj.dump();
              line.resize(line.size() - 7);
              truth.corruptions.push_back({line_no, "MALFORMED_RECORD"});
              break;
            default:
              rj["session_id"] = s.session_id + "x";
              truth.corruptions.push_back({line_no, "UNKNOWN_SESSION"});
              line = rj.dump();
              break;
          }
        } else {
          line = round_json(rr).dump();
        }
        events << line << '\n';
      }
    }
  }
  write_truth_jsonl(truth, truth_out);
  return truth;
}

void write_truth_jsonl(const SynthTruth& truth, std::ostream& out) {
  for (const auto& p : truth.players) {
    out << json{{"type", "player"}, {"player_id", p.player_id}, {"archetype", p.archetype},
                {"churn_day", p.churn_day}}
               .dump()
        << '\n';
  }
  for (const auto& c : truth.corruptions) {
    out << json{{"type", "corruption"}, {"line_no", c.line_no}, {"kind", c.kind}}.dump() << '\n';
  }
}

RetentionRates simulate_retention(const GeneratorConfig& config, std::size_t threads) {
  config.validate();
  std::vector<PlayerOutcome> outcomes(config.n_players);
  parallel_for(outcomes.size(), threads,
               [&](std::size_t i) { outcomes[i] = outcome_of(simulate_player(config, i), config); });
  RetentionRates rates;
  std::size_t s = 0, l = 0;
  for (const auto& o : outcomes) {
    if (!o.eligible) continue;
    ++rates.filtered_players;
    s += static_cast<std::size_t>(o.short_label);
    l += static_cast<std::size_t>(o.long_label);
  }
  if (rates.filtered_players > 0) {
    rates.short_term = static_cast<double>(s) / static_cast<double>(rates.filtered_players);
    rates.long_term = static_cast<double>(l) / static_cast<double>(rates.filtered_players);
  }
  return rates;
}

namespace {

// Finds scale with rate(scale) == target for a decreasing rate function.
template <typename RateFn>
double bisect_scale(RateFn rate, double target, double tolerance, int& iterations, const char* what) {
  double lo = 1.0, hi = 1.0;
  double r_lo = rate(lo);
  ++iterations;
  if (std::abs(r_lo - target) <= tolerance) return 1.0;
  double r_hi = r_lo;
  // Expand the bracket geometrically: rate is decreasing in scale.
  int expand = 0;
  if (r_lo < target) {
    while (r_lo < target) {
      if (++expand > 30) throw Error(std::string("calibration: cannot reach ") + what + " target from below");
      hi = lo;
      r_hi = r_lo;
      lo /= 2.0;
      r_lo = rate(lo);
      ++iterations;
    }
  } else {
    while (r_hi > target) {
      if (++expand > 30) throw Error(std::string("calibration: cannot reach ") + what + " target from above");
      lo = hi;
      r_lo = r_hi;
      hi *= 2.0;
      r_hi = rate(hi);
      ++iterations;
    }
  }
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = rate(mid);
    ++iterations;
    if (std::abs(r - target) <= tolerance) return mid;
    if (r > target) {
      lo = mid;
      r_lo = r;
    } else {
      hi = mid;
      r_hi = r;
    }
  }
  std::ostringstream msg;
  msg << "calibration of " << what << " did not converge in 100 iterations; bracket [" << lo << ", " << hi
      << "] gives rates [" << r_lo << ", " << r_hi << "]";
  throw Error(msg.str());
}

}  // namespace

CalibrationResult calibrate(const GeneratorConfig& config, double tolerance, std::size_t threads,
                            std::size_t calibration_players) {
  config.validate();
  if (!(tolerance > 0.0)) throw InputError("calibration tolerance must be positive");
  CalibrationResult result;
  result.config = config;

  GeneratorConfig probe = config;
  probe.seed = kCalibrationSeed;
  probe.n_players = calibration_players;
  const RetentionRates initial = simulate_retention(probe, threads);
  ++result.iterations;
  if (std::abs(initial.short_term - config.target_short_retention) <= tolerance &&
      std::abs(initial.long_term - config.target_long_retention) <= tolerance) {
    result.achieved = initial;
    return result;
  }

  const double base_scale = probe.hazard_scale;
  const double scale = bisect_scale(
      [&](double s) {
        GeneratorConfig c = probe;
        c.hazard_scale = base_scale * s;
        return simulate_retention(c, threads).short_term;
      },
      config.target_short_retention, tolerance, result.iterations, "short-term retention");
  probe.hazard_scale = base_scale * scale;

  const double base_late = probe.late_hazard_scale;
  const double late = bisect_scale(
      [&](double s) {
        GeneratorConfig c = probe;
        c.late_hazard_scale = base_late * s;
        return simulate_retention(c, threads).long_term;
      },
      config.target_long_retention, tolerance, result.iterations, "long-term retention");
  probe.late_hazard_scale = base_late * late;

  result.config.hazard_scale = probe.hazard_scale;
  result.config.late_hazard_scale = probe.late_hazard_scale;
  result.achieved = simulate_retention(probe, threads);
  ++result.iterations;
  return result;
}

}  // namespace retain
