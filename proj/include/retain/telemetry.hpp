#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace retain {

enum class DeviceType { phone, tablet, other };

std::string_view to_string(DeviceType d);
std::optional<DeviceType> parse_device_type(std::string_view s);

struct InstallRecord {
  std::string player_id;
  std::int64_t install_ts = 0;
  DeviceType device_type = DeviceType::phone;
  std::string country;
  bool acquired = false;

  bool operator==(const InstallRecord&) const = default;
};

struct SessionRecord {
  std::string player_id;
  std::string session_id;
  std::int64_t start_ts = 0;
  std::int64_t end_ts = 0;

  bool operator==(const SessionRecord&) const = default;
};

struct RoundRecord {
  std::string player_id;
  std::string session_id;
  std::int64_t start_ts = 0;
  double duration = 0.0;
  int moves = 0;
  int stars = 0;
  int level = 1;
  int friends_connected = 0;
  int interactions = 0;

  bool operator==(const RoundRecord&) const = default;
};

// Machine-readable rejection reasons. Checks run in the order listed per
// record type; the first failing check names the reason.
enum class RejectReason {
  malformed_record,         // unparseable line, missing or mistyped field
  unknown_type,             // `type` not one of install/session/round
  invalid_value,            // field outside its domain (stars, level, country...)
  install_out_of_period,    // install_ts outside the configured study period
  duplicate_player,         // second install for the same player_id
  unknown_player,           // session/round without a valid install
  session_end_before_start, // end_ts < start_ts
  session_before_install,   // start_ts < install_ts
  duplicate_session,        // second (player_id, session_id)
  unknown_session,          // round references no valid session of its player
  round_outside_session,    // round start_ts outside [session start, end]
};

std::string_view to_string(RejectReason r);

struct RejectedRecord {
  std::size_t line_no = 0;  // 1-based within `source`
  RejectReason reason = RejectReason::malformed_record;
  std::string raw;
  std::string source;  // file name for CSV input, empty for JSONL
};

struct ParseOptions {
  std::optional<std::int64_t> study_start;  // inclusive
  std::optional<std::int64_t> study_end;    // exclusive
};

// A decoded record awaiting validation.
struct CandidateRecord {
  std::size_t line_no = 0;
  std::string raw;
  std::string source;
  std::variant<InstallRecord, SessionRecord, RoundRecord> record;
};

// Per-player slice of an EventLog.
struct PlayerEvents {
  const InstallRecord* install = nullptr;
  std::span<const SessionRecord> sessions;  // sorted by start_ts
  std::span<const RoundRecord> rounds;      // sorted by start_ts
};

// Validated, immutable event log. Installs are sorted by player_id; sessions
// and rounds by (player_id, start_ts). Construct through parse_events or
// EventLog::build, both of which enforce every record invariant.
class EventLog {
 public:
  EventLog() = default;

  // Validates decoded records. `pre_rejected` carries lines that already
  // failed decoding; the result lists all rejections ordered by
  // (source, line_no).
  static EventLog validate(std::vector<CandidateRecord> candidates,
                           std::vector<RejectedRecord> pre_rejected, const ParseOptions& options);

  // Validates in-memory records; line_no is the position in the concatenation
  // installs, sessions, rounds (1-based).
  static EventLog build(std::vector<InstallRecord> installs, std::vector<SessionRecord> sessions,
                        std::vector<RoundRecord> rounds, const ParseOptions& options = {});

  const std::vector<InstallRecord>& installs() const { return installs_; }
  const std::vector<SessionRecord>& sessions() const { return sessions_; }
  const std::vector<RoundRecord>& rounds() const { return rounds_; }
  const std::vector<RejectedRecord>& rejected() const { return rejected_; }

  std::size_t player_count() const { return installs_.size(); }
  PlayerEvents player(std::size_t i) const;
  std::optional<std::size_t> find_player(std::string_view player_id) const;

  // Largest timestamp of any record (install, session end, round start).
  std::int64_t max_timestamp() const;

  // Equality ignores rejected records.
  bool same_events(const EventLog& other) const;

  // Log restricted to the given players (indices into installs()); rejected
  // records are not carried over.
  EventLog select_players(std::span<const std::size_t> player_indices) const;

 private:
  void index_players();

  std::vector<InstallRecord> installs_;
  std::vector<SessionRecord> sessions_;
  std::vector<RoundRecord> rounds_;
  std::vector<RejectedRecord> rejected_;
  struct Range {
    std::size_t session_begin = 0, session_end = 0, round_begin = 0, round_end = 0;
  };
  std::vector<Range> ranges_;
};

enum class EventFormat { jsonl, csv };

// JSONL: one object per line with `type` in {install, session, round}.
EventLog parse_events(std::istream& source, const ParseOptions& options = {});

// CSV: installs.csv, sessions.csv, rounds.csv with lowercase headers naming the
// record fields. Throws SchemaError on a malformed header, IoError when a file
// cannot be read.
EventLog parse_events_csv(std::istream& installs, std::istream& sessions, std::istream& rounds,
                          const ParseOptions& options = {});

// Reads `path` as JSONL (a file) or CSV (a directory holding the three files).
EventLog load_events(const std::filesystem::path& path, EventFormat format,
                     const ParseOptions& options = {});

void write_events_jsonl(const EventLog& log, std::ostream& out);
void write_events_csv(const EventLog& log, const std::filesystem::path& dir);
void write_rejected_jsonl(const EventLog& log, std::ostream& out);

// Keeps players with a session starting within 7 days of install whose
// chronologically first session holds at least one round.
EventLog apply_cohort_filter(const EventLog& log);
bool passes_cohort_filter(const PlayerEvents& p);

struct CohortSummary {
  std::size_t installed = 0;
  std::size_t opened = 0;         // at least one session
  std::size_t played = 0;         // at least one round
  std::size_t passed_filter = 0;
  std::vector<std::size_t> active_players;     // per relative day
  std::vector<double> mean_rounds_per_active;  // per relative day
};

// A player counts as active on relative day d when a session or round starts
// in [install + d*86400, install + (d+1)*86400).
CohortSummary cohort_summary(const EventLog& log);

std::int64_t relative_day(std::int64_t install_ts, std::int64_t ts);

}  // namespace retain
