#include "retain/telemetry.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "retain/common.hpp"

namespace retain {

using nlohmann::json;

std::string_view to_string(DeviceType d) {
  switch (d) {
    case DeviceType::phone: return "phone";
    case DeviceType::tablet: return "tablet";
    case DeviceType::other: return "other";
  }
  return "other";
}

std::optional<DeviceType> parse_device_type(std::string_view s) {
  if (s == "phone") return DeviceType::phone;
  if (s == "tablet") return DeviceType::tablet;
  if (s == "other") return DeviceType::other;
  return std::nullopt;
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::malformed_record: return "MALFORMED_RECORD";
    case RejectReason::unknown_type: return "UNKNOWN_TYPE";
    case RejectReason::invalid_value: return "INVALID_VALUE";
    case RejectReason::install_out_of_period: return "INSTALL_OUT_OF_PERIOD";
    case RejectReason::duplicate_player: return "DUPLICATE_PLAYER";
    case RejectReason::unknown_player: return "UNKNOWN_PLAYER";
    case RejectReason::session_end_before_start: return "SESSION_END_BEFORE_START";
    case RejectReason::session_before_install: return "SESSION_BEFORE_INSTALL";
    case RejectReason::duplicate_session: return "DUPLICATE_SESSION";
    case RejectReason::unknown_session: return "UNKNOWN_SESSION";
    case RejectReason::round_outside_session: return "ROUND_OUTSIDE_SESSION";
  }
  return "MALFORMED_RECORD";
}

std::int64_t relative_day(std::int64_t install_ts, std::int64_t ts) {
  const std::int64_t delta = ts - install_ts;
  // Floor division; validated logs never have ts < install_ts.
  return delta >= 0 ? delta / kSecondsPerDay : -((-delta + kSecondsPerDay - 1) / kSecondsPerDay);
}

namespace {

bool valid_country(std::string_view c) {
  return c.size() == 2 && std::all_of(c.begin(), c.end(), [](char ch) { return ch >= 'A' && ch <= 'Z'; });
}

std::string session_key(std::string_view player, std::string_view session) {
  std::string key;
  key.reserve(player.size() + session.size() + 1);
  key.append(player);
  key.push_back('\x1f');
  key.append(session);
  return key;
}

struct DecodeFailure {
  RejectReason reason;
};

// --- JSON decoding ---------------------------------------------------------

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw DecodeFailure{RejectReason::malformed_record};
  return *it;
}

std::string get_string(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) throw DecodeFailure{RejectReason::malformed_record};
  return v.get<std::string>();
}

std::int64_t get_int(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number_integer()) throw DecodeFailure{RejectReason::malformed_record};
  return v.get<std::int64_t>();
}

int get_small_int(const json& obj, const char* name) {
  const std::int64_t v = get_int(obj, name);
  if (v < INT32_MIN || v > INT32_MAX) throw DecodeFailure{RejectReason::invalid_value};
  return static_cast<int>(v);
}

double get_number(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_number()) throw DecodeFailure{RejectReason::malformed_record};
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw DecodeFailure{RejectReason::invalid_value};
  return d;
}

bool get_bool(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_integer()) {
    const auto i = v.get<std::int64_t>();
    if (i == 0 || i == 1) return i == 1;
    throw DecodeFailure{RejectReason::invalid_value};
  }
  throw DecodeFailure{RejectReason::malformed_record};
}

std::variant<InstallRecord, SessionRecord, RoundRecord> decode_json(std::string_view line) {
  json obj = json::parse(line, nullptr, false);
  if (obj.is_discarded() || !obj.is_object()) throw DecodeFailure{RejectReason::malformed_record};
  const std::string type = get_string(obj, "type");
  if (type == "install") {
    InstallRecord r;
    r.player_id = get_string(obj, "player_id");
    r.install_ts = get_int(obj, "install_ts");
    const auto device = parse_device_type(get_string(obj, "device_type"));
    if (!device) throw DecodeFailure{RejectReason::invalid_value};
    r.device_type = *device;
    r.country = get_string(obj, "country");
    r.acquired = get_bool(obj, "acquired");
    return r;
  }
  if (type == "session") {
    SessionRecord r;
    r.player_id = get_string(obj, "player_id");
    r.session_id = get_string(obj, "session_id");
    r.start_ts = get_int(obj, "start_ts");
    r.end_ts = get_int(obj, "end_ts");
    return r;
  }
  if (type == "round") {
    RoundRecord r;
    r.player_id = get_string(obj, "player_id");
    r.session_id = get_string(obj, "session_id");
    r.start_ts = get_int(obj, "start_ts");
    r.duration = get_number(obj, "duration");
    r.moves = get_small_int(obj, "moves");
    r.stars = get_small_int(obj, "stars");
    r.level = get_small_int(obj, "level");
    r.friends_connected = get_small_int(obj, "friends_connected");
    r.interactions = get_small_int(obj, "interactions");
    return r;
  }
  throw DecodeFailure{RejectReason::unknown_type};
}

// --- CSV decoding ----------------------------------------------------------

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view chomp(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_csv_number(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) {
    throw DecodeFailure{RejectReason::malformed_record};
  }
  return v;
}

int parse_csv_small_int(std::string_view s) {
  const auto v = parse_csv_number<std::int64_t>(s);
  if (v < INT32_MIN || v > INT32_MAX) throw DecodeFailure{RejectReason::invalid_value};
  return static_cast<int>(v);
}

class CsvTable {
 public:
  CsvTable(std::istream& in, std::string source, const std::vector<std::string>& expected)
      : in_(in), source_(std::move(source)) {
    std::string header;
    if (!std::getline(in_, header)) {
      throw SchemaError(source_ + ": missing header row");
    }
    auto names = split_csv(chomp(header));
    std::set<std::string> seen;
    for (std::size_t i = 0; i < names.size(); ++i) {
      std::string name(names[i]);
      if (!seen.insert(name).second) throw SchemaError(source_ + ": duplicate column '" + name + "'");
      columns_[name] = i;
    }
    std::set<std::string> want(expected.begin(), expected.end());
    if (seen != want) {
      std::string msg = source_ + ": header must name exactly the columns";
      for (const auto& e : expected) msg += " " + e;
      throw SchemaError(msg);
    }
    width_ = names.size();
  }

  // Returns false at end of stream. Blank lines are skipped.
  bool next(std::string& raw, std::vector<std::string_view>& cells) {
    while (std::getline(in_, raw)) {
      ++line_no_;
      if (chomp(raw).empty()) continue;
      cells = split_csv(chomp(raw));
      return true;
    }
    return false;
  }

  std::string_view cell(const std::vector<std::string_view>& cells, const char* name) const {
    if (cells.size() != width_) throw DecodeFailure{RejectReason::malformed_record};
    return cells[columns_.at(name)];
  }

  std::size_t line_no() const { return line_no_; }  // header is line 1
  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
  std::map<std::string, std::size_t> columns_;
  std::size_t width_ = 0;
  std::size_t line_no_ = 1;
};

const std::vector<std::string> kInstallColumns = {"player_id", "install_ts", "device_type", "country",
                                                  "acquired"};
const std::vector<std::string> kSessionColumns = {"player_id", "session_id", "start_ts", "end_ts"};
const std::vector<std::string> kRoundColumns = {"player_id", "session_id", "start_ts", "duration",
                                                "moves", "stars", "level", "friends_connected",
                                                "interactions"};

template <typename Decode>
void read_csv(CsvTable& table, Decode decode, std::vector<CandidateRecord>& out,
              std::vector<RejectedRecord>& rejected) {
  std::string raw;
  std::vector<std::string_view> cells;
  while (table.next(raw, cells)) {
    try {
      out.push_back({table.line_no(), raw, table.source(), decode(table, cells)});
    } catch (const DecodeFailure& f) {
      rejected.push_back({table.line_no(), f.reason, raw, table.source()});
    }
  }
}

}  // namespace

// --- EventLog --------------------------------------------------------------

EventLog EventLog::validate(std::vector<CandidateRecord> candidates,
                            std::vector<RejectedRecord> pre_rejected, const ParseOptions& options) {
  EventLog log;
  auto& rejected = pre_rejected;
  auto reject = [&](CandidateRecord& c, RejectReason reason) {
    rejected.push_back({c.line_no, reason, std::move(c.raw), std::move(c.source)});
  };

  std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.line_no) < std::tie(b.source, b.line_no);
  });

  std::unordered_map<std::string, std::int64_t> install_ts;
  for (auto& c : candidates) {
    auto* r = std::get_if<InstallRecord>(&c.record);
    if (!r) continue;
    if (r->player_id.empty() || !valid_country(r->country)) {
      reject(c, RejectReason::invalid_value);
    } else if ((options.study_start && r->install_ts < *options.study_start) ||
               (options.study_end && r->install_ts >= *options.study_end)) {
      reject(c, RejectReason::install_out_of_period);
    } else if (!install_ts.emplace(r->player_id, r->install_ts).second) {
      reject(c, RejectReason::duplicate_player);
    } else {
      log.installs_.push_back(std::move(*r));
    }
  }

  std::unordered_map<std::string, std::pair<std::int64_t, std::int64_t>> session_span;
  for (auto& c : candidates) {
    auto* r = std::get_if<SessionRecord>(&c.record);
    if (!r) continue;
    auto inst = install_ts.find(r->player_id);
    if (r->player_id.empty() || r->session_id.empty()) {
      reject(c, RejectReason::invalid_value);
    } else if (inst == install_ts.end()) {
      reject(c, RejectReason::unknown_player);
    } else if (r->end_ts < r->start_ts) {
      reject(c, RejectReason::session_end_before_start);
    } else if (r->start_ts < inst->second) {
      reject(c, RejectReason::session_before_install);
    } else if (!session_span.emplace(session_key(r->player_id, r->session_id),
                                     std::pair{r->start_ts, r->end_ts})
                    .second) {
      reject(c, RejectReason::duplicate_session);
    } else {
      log.sessions_.push_back(std::move(*r));
    }
  }

  for (auto& c : candidates) {
    auto* r = std::get_if<RoundRecord>(&c.record);
    if (!r) continue;
    if (r->player_id.empty() || r->duration < 0.0 || r->moves < 0 || r->stars < 0 || r->stars > 3 ||
        r->level < 1 || r->friends_connected < 0 || r->interactions < 0) {
      reject(c, RejectReason::invalid_value);
      continue;
    }
    if (!install_ts.contains(r->player_id)) {
      reject(c, RejectReason::unknown_player);
      continue;
    }
    auto span = session_span.find(session_key(r->player_id, r->session_id));
    if (span == session_span.end()) {
      reject(c, RejectReason::unknown_session);
    } else if (r->start_ts < span->second.first || r->start_ts > span->second.second) {
      reject(c, RejectReason::round_outside_session);
    } else {
      log.rounds_.push_back(std::move(*r));
    }
  }

  std::sort(log.installs_.begin(), log.installs_.end(),
            [](const auto& a, const auto& b) { return a.player_id < b.player_id; });
  std::sort(log.sessions_.begin(), log.sessions_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.player_id, a.start_ts, a.session_id) <
           std::tie(b.player_id, b.start_ts, b.session_id);
  });
  std::stable_sort(log.rounds_.begin(), log.rounds_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.player_id, a.start_ts) < std::tie(b.player_id, b.start_ts);
  });
  std::stable_sort(rejected.begin(), rejected.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.line_no) < std::tie(b.source, b.line_no);
  });
  log.rejected_ = std::move(rejected);
  log.index_players();
  return log;
}

EventLog EventLog::build(std::vector<InstallRecord> installs, std::vector<SessionRecord> sessions,
                         std::vector<RoundRecord> rounds, const ParseOptions& options) {
  std::vector<CandidateRecord> candidates;
  candidates.reserve(installs.size() + sessions.size() + rounds.size());
  std::size_t line = 0;
  for (auto& r : installs) candidates.push_back({++line, {}, {}, std::move(r)});
  for (auto& r : sessions) candidates.push_back({++line, {}, {}, std::move(r)});
  for (auto& r : rounds) candidates.push_back({++line, {}, {}, std::move(r)});
  return validate(std::move(candidates), {}, options);
}

void EventLog::index_players() {
  ranges_.assign(installs_.size(), {});
  std::size_t s = 0, r = 0;
  for (std::size_t i = 0; i < installs_.size(); ++i) {
    const std::string& id = installs_[i].player_id;
    auto& range = ranges_[i];
    range.session_begin = s;
    while (s < sessions_.size() && sessions_[s].player_id == id) ++s;
    range.session_end = s;
    range.round_begin = r;
    while (r < rounds_.size() && rounds_[r].player_id == id) ++r;
    range.round_end = r;
  }
}

PlayerEvents EventLog::player(std::size_t i) const {
  const auto& range = ranges_.at(i);
  return {&installs_[i],
          std::span(sessions_).subspan(range.session_begin, range.session_end - range.session_begin),
          std::span(rounds_).subspan(range.round_begin, range.round_end - range.round_begin)};
}

std::optional<std::size_t> EventLog::find_player(std::string_view player_id) const {
  auto it = std::lower_bound(installs_.begin(), installs_.end(), player_id,
                             [](const InstallRecord& r, std::string_view id) { return r.player_id < id; });
  if (it == installs_.end() || it->player_id != player_id) return std::nullopt;
  return static_cast<std::size_t>(it - installs_.begin());
}

std::int64_t EventLog::max_timestamp() const {
  std::int64_t m = INT64_MIN;
  for (const auto& r : installs_) m = std::max(m, r.install_ts);
  for (const auto& r : sessions_) m = std::max(m, r.end_ts);
  for (const auto& r : rounds_) m = std::max(m, r.start_ts);
  return m;
}

bool EventLog::same_events(const EventLog& other) const {
  return installs_ == other.installs_ && sessions_ == other.sessions_ && rounds_ == other.rounds_;
}

EventLog EventLog::select_players(std::span<const std::size_t> player_indices) const {
  std::vector<std::size_t> idx(player_indices.begin(), player_indices.end());
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  EventLog out;
  for (std::size_t i : idx) {
    const auto p = player(i);
    out.installs_.push_back(*p.install);
    out.sessions_.insert(out.sessions_.end(), p.sessions.begin(), p.sessions.end());
    out.rounds_.insert(out.rounds_.end(), p.rounds.begin(), p.rounds.end());
  }
  out.index_players();
  return out;
}

// --- parsing entry points ----------------------------------------------------

EventLog parse_events(std::istream& source, const ParseOptions& options) {
  if (!source) throw IoError("event stream is not readable");
  std::vector<CandidateRecord> candidates;
  std::vector<RejectedRecord> rejected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (chomp(line).find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      auto record = decode_json(chomp(line));
      candidates.push_back({line_no, line, {}, std::move(record)});
    } catch (const DecodeFailure& f) {
      rejected.push_back({line_no, f.reason, line, {}});
    }
  }
  if (source.bad()) throw IoError("read error in event stream");
  return EventLog::validate(std::move(candidates), std::move(rejected), options);
}

EventLog parse_events_csv(std::istream& installs, std::istream& sessions, std::istream& rounds,
                          const ParseOptions& options) {
  std::vector<CandidateRecord> candidates;
  std::vector<RejectedRecord> rejected;

  CsvTable installs_table(installs, "installs.csv", kInstallColumns);
  read_csv(
      installs_table,
      [](const CsvTable& t, const auto& cells) -> decltype(CandidateRecord::record) {
        InstallRecord r;
        r.player_id = std::string(t.cell(cells, "player_id"));
        r.install_ts = parse_csv_number<std::int64_t>(t.cell(cells, "install_ts"));
        const auto device = parse_device_type(t.cell(cells, "device_type"));
        if (!device) throw DecodeFailure{RejectReason::invalid_value};
        r.device_type = *device;
        r.country = std::string(t.cell(cells, "country"));
        const auto acquired = t.cell(cells, "acquired");
        if (acquired == "1" || acquired == "true") {
          r.acquired = true;
        } else if (acquired == "0" || acquired == "false") {
          r.acquired = false;
        } else {
          throw DecodeFailure{RejectReason::invalid_value};
        }
        return r;
      },
      candidates, rejected);

  CsvTable sessions_table(sessions, "sessions.csv", kSessionColumns);
  read_csv(
      sessions_table,
      [](const CsvTable& t, const auto& cells) -> decltype(CandidateRecord::record) {
        SessionRecord r;
        r.player_id = std::string(t.cell(cells, "player_id"));
        r.session_id = std::string(t.cell(cells, "session_id"));
        r.start_ts = parse_csv_number<std::int64_t>(t.cell(cells, "start_ts"));
        r.end_ts = parse_csv_number<std::int64_t>(t.cell(cells, "end_ts"));
        return r;
      },
      candidates, rejected);

  CsvTable rounds_table(rounds, "rounds.csv", kRoundColumns);
  read_csv(
      rounds_table,
      [](const CsvTable& t, const auto& cells) -> decltype(CandidateRecord::record) {
        RoundRecord r;
        r.player_id = std::string(t.cell(cells, "player_id"));
        r.session_id = std::string(t.cell(cells, "session_id"));
        r.start_ts = parse_csv_number<std::int64_t>(t.cell(cells, "start_ts"));
        r.duration = parse_csv_number<double>(t.cell(cells, "duration"));
        if (!std::isfinite(r.duration)) throw DecodeFailure{RejectReason::invalid_value};
        r.moves = parse_csv_small_int(t.cell(cells, "moves"));
        r.stars = parse_csv_small_int(t.cell(cells, "stars"));
        r.level = parse_csv_small_int(t.cell(cells, "level"));
        r.friends_connected = parse_csv_small_int(t.cell(cells, "friends_connected"));
        r.interactions = parse_csv_small_int(t.cell(cells, "interactions"));
        return r;
      },
      candidates, rejected);

  return EventLog::validate(std::move(candidates), std::move(rejected), options);
}

EventLog load_events(const std::filesystem::path& path, EventFormat format, const ParseOptions& options) {
  if (format == EventFormat::jsonl) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open event file " + path.string());
    return parse_events(in, options);
  }
  auto open = [&](const char* name) {
    std::ifstream in(path / name);
    if (!in) throw IoError("cannot open " + (path / name).string());
    return in;
  };
  auto installs = open("installs.csv");
  auto sessions = open("sessions.csv");
  auto rounds = open("rounds.csv");
  return parse_events_csv(installs, sessions, rounds, options);
}

// --- serialization -----------------------------------------------------------

void write_events_jsonl(const EventLog& log, std::ostream& out) {
  for (const auto& r : log.installs()) {
    json j = {{"type", "install"},          {"player_id", r.player_id}, {"install_ts", r.install_ts},
              {"device_type", to_string(r.device_type)}, {"country", r.country},
              {"acquired", r.acquired}};
    out << j.dump() << '\n';
  }
  for (const auto& r : log.sessions()) {
    json j = {{"type", "session"},
              {"player_id", r.player_id},
              {"session_id", r.session_id},
              {"start_ts", r.start_ts},
              {"end_ts", r.end_ts}};
    out << j.dump() << '\n';
  }
  for (const auto& r : log.rounds()) {
    json j = {{"type", "round"},
              {"player_id", r.player_id},
              {"session_id", r.session_id},
              {"start_ts", r.start_ts},
              {"duration", r.duration},
              {"moves", r.moves},
              {"stars", r.stars},
              {"level", r.level},
              {"friends_connected", r.friends_connected},
              {"interactions", r.interactions}};
    out << j.dump() << '\n';
  }
}

void write_events_csv(const EventLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    return out;
  };
  auto installs = open("installs.csv");
  installs << "player_id,install_ts,device_type,country,acquired\n";
  for (const auto& r : log.installs()) {
    installs << r.player_id << ',' << r.install_ts << ',' << to_string(r.device_type) << ','
             << r.country << ',' << (r.acquired ? 1 : 0) << '\n';
  }
  auto sessions = open("sessions.csv");
  sessions << "player_id,session_id,start_ts,end_ts\n";
  for (const auto& r : log.sessions()) {
    sessions << r.player_id << ',' << r.session_id << ',' << r.start_ts << ',' << r.end_ts << '\n';
  }
  auto rounds = open("rounds.csv");
  rounds << "player_id,session_id,start_ts,duration,moves,stars,level,friends_connected,interactions\n";
  for (const auto& r : log.rounds()) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), r.duration);
    rounds << r.player_id << ',' << r.session_id << ',' << r.start_ts << ','
           << std::string_view(buf, res.ptr - buf) << ',' << r.moves << ',' << r.stars << ','
           << r.level << ',' << r.friends_connected << ',' << r.interactions << '\n';
  }
}

void write_rejected_jsonl(const EventLog& log, std::ostream& out) {
  for (const auto& r : log.rejected()) {
    json j = {{"line_no", r.line_no}, {"reason", to_string(r.reason)}, {"raw", r.raw}};
    if (!r.source.empty()) j["source"] = r.source;
    // Corrupted lines may carry invalid UTF-8; replace rather than throw.
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

// --- cohort ------------------------------------------------------------------

bool passes_cohort_filter(const PlayerEvents& p) {
  if (p.sessions.empty()) return false;
  const SessionRecord& first = p.sessions.front();
  if (first.start_ts - p.install->install_ts >= 7 * kSecondsPerDay) return false;
  return std::any_of(p.rounds.begin(), p.rounds.end(),
                     [&](const RoundRecord& r) { return r.session_id == first.session_id; });
}

EventLog apply_cohort_filter(const EventLog& log) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < log.player_count(); ++i) {
    if (passes_cohort_filter(log.player(i))) keep.push_back(i);
  }
  return log.select_players(keep);
}

CohortSummary cohort_summary(const EventLog& log) {
  CohortSummary s;
  std::vector<std::size_t> rounds_per_day;
  for (std::size_t i = 0; i < log.player_count(); ++i) {
    const auto p = log.player(i);
    ++s.installed;
    if (!p.sessions.empty()) ++s.opened;
    if (!p.rounds.empty()) ++s.played;
    if (passes_cohort_filter(p)) ++s.passed_filter;

    const std::int64_t install = p.install->install_ts;
    std::set<std::int64_t> days;
    for (const auto& sess : p.sessions) days.insert(relative_day(install, sess.start_ts));
    for (const auto& r : p.rounds) {
      const auto d = static_cast<std::size_t>(relative_day(install, r.start_ts));
      days.insert(static_cast<std::int64_t>(d));
      if (rounds_per_day.size() <= d) rounds_per_day.resize(d + 1, 0);
      ++rounds_per_day[d];
    }
    for (std::int64_t d : days) {
      const auto du = static_cast<std::size_t>(d);
      if (s.active_players.size() <= du) s.active_players.resize(du + 1, 0);
      ++s.active_players[du];
    }
  }
  rounds_per_day.resize(s.active_players.size(), 0);
  s.mean_rounds_per_active.resize(s.active_players.size(), 0.0);
  for (std::size_t d = 0; d < s.active_players.size(); ++d) {
    if (s.active_players[d] > 0) {
      s.mean_rounds_per_active[d] =
          static_cast<double>(rounds_per_day[d]) / static_cast<double>(s.active_players[d]);
    }
  }
  return s;
}

}  // namespace retain
