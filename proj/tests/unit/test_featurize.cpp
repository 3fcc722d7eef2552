#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "retain/featurize.hpp"
#include "support.hpp"

using namespace retain;
using namespace retain::testing;

namespace {

FeatureVector features_of(const EventLog& log, const std::string& id, const FeatureWindow& w) {
  return compute_player_features(log.player(*log.find_player(id)), w);
}

// Naive recomputation straight from the flat record lists.
FeatureVector naive_features(const EventLog& log, const InstallRecord& inst, const FeatureWindow& w) {
  std::vector<SessionRecord> sessions;
  for (const auto& s : log.sessions()) {
    if (s.player_id == inst.player_id) sessions.push_back(s);
  }
  std::sort(sessions.begin(), sessions.end(), [](auto& a, auto& b) { return a.start_ts < b.start_ts; });
  std::int64_t cutoff = inst.install_ts + kDay * (w.kind == WindowKind::days ? w.days : 1);
  if (w.kind == WindowKind::first_session) cutoff = sessions.empty() ? inst.install_ts : sessions.front().end_ts;
  auto inside = [&](std::int64_t t) { return w.kind == WindowKind::first_session ? t <= cutoff : t < cutoff; };

  FeatureVector f;
  std::int64_t latest = inst.install_ts;
  std::set<std::int64_t> days;
  std::vector<std::int64_t> starts;
  for (const auto& s : sessions) {
    if (!inside(s.start_ts)) continue;
    const std::int64_t end = s.end_ts < cutoff ? s.end_ts : cutoff;
    f.total_playtime += double(end - s.start_ts);
    starts.push_back(s.start_ts);
    days.insert((s.start_ts - inst.install_ts) / kDay);
    latest = std::max({latest, s.start_ts, end});
  }
  double dur = 0, moves = 0, stars = 0;
  for (const auto& r : log.rounds()) {
    if (r.player_id != inst.player_id || !inside(r.start_ts)) continue;
    f.total_rounds += 1;
    dur += r.duration;
    moves += r.moves;
    stars += r.stars;
    latest = std::max(latest, r.start_ts);
    f.connected_friends = std::max<double>(f.connected_friends, r.friends_connected);
    f.player_interaction += r.interactions;
    f.max_level = std::max<double>(f.max_level, r.level);
  }
  f.total_sessions = double(starts.size());
  f.total_days = double(days.size());
  f.avg_session_duration = starts.empty() ? 0 : f.total_playtime / double(starts.size());
  f.avg_round_duration = f.total_rounds > 0 ? dur / f.total_rounds : 0;
  f.avg_moves = f.total_rounds > 0 ? moves / f.total_rounds : 0;
  f.avg_stars = f.total_rounds > 0 ? stars / f.total_rounds : 0;
  f.current_absence_time = double(cutoff - latest);
  f.avg_time_between_sessions =
      starts.size() >= 2 ? double(starts.back() - starts.front()) / double(starts.size() - 1) : double(cutoff - inst.install_ts);
  return f;
}

}  // namespace

TEST(FeatureWindow, ParsesCliSyntax) {
  EXPECT_EQ(FeatureWindow::parse("session"), FeatureWindow::first_session());
  EXPECT_EQ(FeatureWindow::parse("day"), FeatureWindow::first_day());
  EXPECT_EQ(FeatureWindow::parse("7d").days, 7);
  EXPECT_EQ(FeatureWindow::parse("7d").name(), "7d");
  for (const char* bad : {"", "d", "0d", "-3d", "week", "7x", "7dd"}) {
    EXPECT_THROW(FeatureWindow::parse(bad), InputError) << bad;
  }
}

TEST(EvalWindow, ParsesCliSyntax) {
  EXPECT_EQ(EvalWindow::parse("8:14"), EvalWindow::short_term());
  EXPECT_EQ(EvalWindow::parse("60:67"), EvalWindow::long_term());
  EXPECT_EQ(EvalWindow::parse("0:1").name(), "0:1");
  for (const char* bad : {"", "8", "14:8", "8:8", "-1:4", "a:b", "8:14:2"}) {
    EXPECT_THROW(EvalWindow::parse(bad), InputError) << bad;
  }
}

TEST(Features, SingleSessionIdentities) {
  const EventLog log = LogBuilder()
                           .install("a", kT0)
                           .session("a", "s1", kT0, kT0 + 600)
                           .round("a", "s1", kT0 + 10)
                           .round("a", "s1", kT0 + 200)
                           .round("a", "s1", kT0 + 400)
                           .build();
  const FeatureVector f = features_of(log, "a", FeatureWindow::first_session());
  EXPECT_EQ(f.total_sessions, 1);
  EXPECT_EQ(f.total_rounds, 3);
  EXPECT_EQ(f.current_absence_time, 0);
  EXPECT_EQ(f.avg_time_between_sessions, 600);  // window length sentinel
  EXPECT_EQ(f.total_playtime, 600);
  EXPECT_EQ(f.total_days, 1);
}

TEST(Features, TwoSessionsOnTheFirstDay) {
  const EventLog log = LogBuilder()
                           .install("a", kT0)
                           .session("a", "s1", kT0, kT0 + 300)
                           .round("a", "s1", kT0 + 5)
                           .session("a", "s2", kT0 + 10 * kHour, kT0 + 10 * kHour + 300)
                           .build();
  const FeatureVector f = features_of(log, "a", FeatureWindow::first_day());
  EXPECT_EQ(f.avg_time_between_sessions, 36000);
  EXPECT_EQ(f.current_absence_time, 86400 - (36000 + 300));
  EXPECT_EQ(f.avg_session_duration, 300);
}

TEST(Features, StraddlingSessionIsClippedAndLateRoundsExcluded) {
  const EventLog log = LogBuilder()
                           .install("a", kT0, DeviceType::tablet, "DE", true)
                           .session("a", "s1", kT0 + kDay - 100, kT0 + kDay + 500)
                           .round("a", "s1", kT0 + kDay - 50, 30, 12, 3, 4, 2, 5)
                           .round("a", "s1", kT0 + kDay + 10, 30, 99, 0, 9, 8, 7)
                           .build();
  const FeatureVector f = features_of(log, "a", FeatureWindow::first_day());
  EXPECT_EQ(f.total_playtime, 100);
  EXPECT_EQ(f.total_rounds, 1);
  EXPECT_EQ(f.avg_moves, 12);
  EXPECT_EQ(f.max_level, 4);
  EXPECT_EQ(f.connected_friends, 2);
  EXPECT_EQ(f.player_interaction, 5);
  EXPECT_EQ(f.current_absence_time, 0);
  EXPECT_TRUE(f.acquired);
  EXPECT_EQ(f.device_type, DeviceType::tablet);
  EXPECT_EQ(f.country, "DE");
}

TEST(Labels, HalfOpenBoundaries) {
  const EventLog log = LogBuilder()
                           .install("a", kT0)
                           .session("a", "s", kT0 + 8 * kDay, kT0 + 8 * kDay + 100)
                           .round("a", "s", kT0 + 8 * kDay)
                           .install("b", kT0)
                           .session("b", "s", kT0 + 14 * kDay, kT0 + 14 * kDay + 100)
                           .round("b", "s", kT0 + 14 * kDay)
                           .install("c", kT0)
                           .session("c", "s", kT0 + 3 * kDay, kT0 + 3 * kDay + 100)
                           .round("c", "s", kT0 + 3 * kDay)
                           .build();
  const auto l = label(log, EvalWindow::short_term());
  EXPECT_EQ(l.at("a"), 1);
  EXPECT_EQ(l.at("b"), 0);
  EXPECT_EQ(l.at("c"), 0);
  // A session alone does not count as retention.
  const EventLog idle = LogBuilder().install("d", kT0).session("d", "s", kT0 + 9 * kDay, kT0 + 9 * kDay + 5).build();
  EXPECT_EQ(label(idle, EvalWindow::short_term()).at("d"), 0);
}

TEST(Labels, AdjacentWindowsCompose) {
  const EventLog log = apply_cohort_filter(synthetic(600, 21).log);
  const auto ab = label(log, {2, 9}), bc = label(log, {9, 20}), ac = label(log, {2, 20});
  for (const auto& [id, v] : ac) EXPECT_EQ(ab.at(id) | bc.at(id), v) << id;
}

TEST(Features, MatchNaiveRecomputation) {
  const EventLog log = apply_cohort_filter(synthetic(2000, 3).log);
  for (const FeatureWindow& w : {FeatureWindow::first_days(7), FeatureWindow::first_session(), FeatureWindow::first_day()}) {
    const auto rows = compute_features(log, w, 2);
    ASSERT_EQ(rows.size(), log.player_count());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const FeatureVector o = naive_features(log, log.installs()[i], w);
      const auto a = rows[i].numeric(), b = o.numeric();
      for (std::size_t k = 1; k < a.size(); ++k) {
        ASSERT_NEAR(a[k], b[k], 1e-9 * std::max(1.0, std::abs(b[k]))) << w.name() << " " << kNumericFeatures[k] << " "
                                                                      << rows[i].player_id;
      }
    }
  }
}

TEST(Features, RowsSortedAndThreadInvariant) {
  const EventLog log = apply_cohort_filter(synthetic(300, 5).log);
  const auto one = build_rows(log, FeatureWindow::first_days(7), EvalWindow::short_term(), EvalWindow::long_term(), 1);
  const auto four = build_rows(log, FeatureWindow::first_days(7), EvalWindow::short_term(), EvalWindow::long_term(), 4);
  EXPECT_EQ(one, four);
  EXPECT_TRUE(std::is_sorted(one.begin(), one.end(), [](auto& a, auto& b) { return a.player_id < b.player_id; }));
}

TEST(Features, InvariantsHoldOnSyntheticCohort) {
  const EventLog log = apply_cohort_filter(synthetic(800, 8).log);
  const auto s = compute_features(log, FeatureWindow::first_session());
  const auto d = compute_features(log, FeatureWindow::first_day());
  const auto w = compute_features(log, FeatureWindow::first_days(7));
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_GE(s[i].total_rounds, 1);
    for (const auto* f : {&s[i], &d[i], &w[i]}) {
      EXPECT_GE(f->current_absence_time, 0);
      EXPECT_GE(f->avg_stars, 0);
      EXPECT_LE(f->avg_stars, 3);
    }
    EXPECT_LE(d[i].current_absence_time, kDay);
    EXPECT_LE(w[i].current_absence_time, 7 * kDay);
    // Nested windows never shrink the cumulative features.
    for (const auto& [a, b] : {std::pair{&s[i], &d[i]}, std::pair{&d[i], &w[i]}}) {
      EXPECT_LE(a->total_sessions, b->total_sessions);
      EXPECT_LE(a->total_rounds, b->total_rounds);
      EXPECT_LE(a->total_playtime, b->total_playtime);
      EXPECT_LE(a->total_days, b->total_days);
      EXPECT_LE(a->player_interaction, b->player_interaction);
      EXPECT_LE(a->max_level, b->max_level);
    }
  }
}

TEST(Features, LateEventsDoNotLeak) {
  const SynthLog synth = synthetic(200, 12);
  const EventLog log = apply_cohort_filter(synth.log);
  const FeatureWindow w = FeatureWindow::first_day();
  LogBuilder b;
  b.installs = log.installs();
  b.sessions = log.sessions();
  b.rounds = log.rounds();
  for (std::size_t i = 0; i < log.player_count(); ++i) {
    const auto p = log.player(i);
    const std::int64_t cut = w.cutoff(p);
    const std::string sid = "late-" + std::to_string(i);
    b.session(p.install->player_id, sid, cut + 5, cut + 900);
    b.round(p.install->player_id, sid, cut + 10, 500, 99, 3, 200, 50, 40);
  }
  const EventLog longer = b.build();
  ASSERT_TRUE(longer.rejected().empty());
  EXPECT_EQ(compute_features(log, w), compute_features(longer, w));
}

TEST(Encoding, UnseenLevelIsAllZeros) {
  FeatureVector us, de, fr;
  us.country = "US";
  de.country = "DE";
  fr.country = "FR";
  const std::vector<FeatureVector> fit = {us, de};
  const Encoder e = Encoder::fit(fit);
  const std::vector<FeatureVector> rows = {fr};
  const Design d = e.transform(rows);
  for (std::size_t j = 0; j < d.columns.size(); ++j) {
    if (d.columns[j].starts_with("country=")) {
      EXPECT_EQ(d.scaled(0, j), 0.0);
    }
  }
  EXPECT_EQ(std::count_if(d.columns.begin(), d.columns.end(), [](auto& c) { return c.starts_with("country="); }), 2);
}

TEST(Encoding, StandardizesWithFitStatistics) {
  FeatureVector a, b, c;
  a.total_rounds = 8;
  b.total_rounds = 12;
  c.total_rounds = 14;
  const std::vector<FeatureVector> fit = {a, b};
  const std::vector<FeatureVector> rows = {c};
  const Dataset ds = encode(rows, fit);
  const auto col = std::find(ds.design.columns.begin(), ds.design.columns.end(), "total_rounds") - ds.design.columns.begin();
  EXPECT_DOUBLE_EQ(ds.design.scaled(0, col), 2.0);
  EXPECT_DOUBLE_EQ(ds.design.unscaled(0, col), 14.0);
  // Constant columns keep sd 1 and are flagged.
  EXPECT_TRUE(ds.encoder.constant()[1]);
  EXPECT_EQ(ds.encoder.sds()[1], 1.0);
  EXPECT_THROW(Encoder::fit({}), InputError);
}

TEST(Encoding, FitRowsAreStandardized) {
  const EventLog log = apply_cohort_filter(synthetic(1500, 2).log);
  const auto rows = build_rows(log, FeatureWindow::first_days(7));
  const Dataset ds = encode(rows, rows);
  const std::size_t n = ds.design.rows();
  for (std::size_t j = 0; j < kNumericFeatures.size(); ++j) {
    if (ds.encoder.constant()[j]) continue;
    double m = 0, v = 0;
    for (std::size_t i = 0; i < n; ++i) m += ds.design.scaled(i, j);
    m /= double(n);
    for (std::size_t i = 0; i < n; ++i) v += (ds.design.scaled(i, j) - m) * (ds.design.scaled(i, j) - m);
    v /= double(n);
    EXPECT_NEAR(m, 0.0, 1e-9) << kNumericFeatures[j];
    EXPECT_NEAR(v, 1.0, 1e-9) << kNumericFeatures[j];
  }
  EXPECT_EQ(ds.design.labels.size(), n);
}

TEST(Encoding, JsonRoundTrip) {
  const EventLog log = apply_cohort_filter(synthetic(300, 2).log);
  const auto rows = build_rows(log, FeatureWindow::first_day());
  const Encoder e = Encoder::fit(rows);
  const Encoder back = Encoder::from_json(nlohmann::json::parse(e.to_json().dump()));
  EXPECT_EQ(back.column_names(), e.column_names());
  const Design a = e.transform(rows), b = back.transform(rows);
  EXPECT_EQ(a.scaled.data(), b.scaled.data());
  auto broken = e.to_json();
  broken["columns"].push_back("extra");
  EXPECT_THROW(Encoder::from_json(broken), SchemaError);
}

TEST(FeaturesCsv, RoundTripsAndRejectsBadHeader) {
  const EventLog log = apply_cohort_filter(synthetic(200, 4).log);
  const auto rows = build_rows(log, FeatureWindow::first_days(7));
  std::stringstream csv;
  write_features_csv(rows, csv);
  const std::string header = csv.str().substr(0, csv.str().find('\n'));
  EXPECT_TRUE(header.ends_with("retained_short,retained_long"));
  EXPECT_EQ(read_features_csv(csv), rows);
  std::stringstream bad("player_id,country\n");
  EXPECT_THROW(read_features_csv(bad), SchemaError);
  std::stringstream short_row(header + "\np1,phone,US,1\n");
  EXPECT_THROW(read_features_csv(short_row), InputError);
}
