#include "nbmig/trace.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <istream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nbmig/error.hpp"

namespace nbmig {

namespace {

using nlohmann::json;

struct RecordError {
  std::string reason;
};

[[noreturn]] void reject(std::string reason) { throw RecordError{std::move(reason)}; }

constexpr std::pair<MessageType, std::string_view> kTypeNames[] = {
    {MessageType::SessionStarted, "session-started"},
    {MessageType::SessionDisposed, "session-disposed"},
    {MessageType::CellExecutionRequested, "cell-execution-requested"},
    {MessageType::CellExecutionStarted, "cell-execution-started"},
    {MessageType::CellExecutionCompleted, "cell-execution-completed"},
    {MessageType::CellModified, "cell-modified"},
};

bool read_int(std::string_view text, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > text.size()) return false;
  const char* first = text.data() + pos;
  const char* last = first + len;
  if (!std::all_of(first, last, [](char c) { return c >= '0' && c <= '9'; })) return false;
  return std::from_chars(first, last, out).ec == std::errc{};
}

// Schema violations raise RecordError; the caller turns them into MalformedRecord entries.
TelemetryMessage decode_record(const json& record, std::size_t line) {
  if (!record.is_object()) reject(std::string("record is not a JSON object"));

  auto require_string = [&](const char* key) -> std::string {
    auto it = record.find(key);
    if (it == record.end()) reject(std::string("missing field '") + key + "'");
    if (!it->is_string()) reject(std::string("field '") + key + "' is not a string");
    return it->get<std::string>();
  };

  auto type_it = record.find("type");
  if (type_it == record.end()) reject(std::string("missing field 'type'"));
  if (!type_it->is_string()) reject(std::string("field 'type' is not a string"));
  const auto type_name = type_it->get<std::string>();
  const auto type = parse_message_type(type_name);
  if (!type) {
    throw Error(ErrorCode::UnknownMessageType,
                "line " + std::to_string(line) + ": unknown message type '" + type_name + "'");
  }

  TelemetryMessage msg;
  msg.type = *type;
  const auto stamp = require_string("datetime");
  const auto ts = parse_iso8601(stamp);
  if (!ts) reject(std::string("unparseable datetime '") + stamp + "'");
  msg.timestamp = *ts;
  msg.notebook_id = require_string("notebook_id");
  msg.session_id = require_string("session_id");
  msg.notebook_path = require_string("path");

  if (auto it = record.find("cell_ids"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) reject(std::string("field 'cell_ids' is not an array"));
    for (const auto& id : *it) {
      if (!id.is_string()) reject(std::string("field 'cell_ids' holds a non-string id"));
      msg.cell_ids.push_back(id.get<std::string>());
    }
  }
  if (auto it = record.find("cell_id"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) reject(std::string("field 'cell_id' is not a string"));
    msg.cell_id = it->get<std::string>();
  }

  if (is_cell_scoped(msg.type)) {
    if (msg.cell_id.empty()) reject(std::string("cell-scoped message without 'cell_id'"));
    if (std::find(msg.cell_ids.begin(), msg.cell_ids.end(), msg.cell_id) == msg.cell_ids.end()) {
      reject(std::string("cell_id '") + msg.cell_id + "' is not listed in cell_ids");
    }
  }
  return msg;
}

CellOrder order_of(const TelemetryMessage& msg) {
  auto it = std::find(msg.cell_ids.begin(), msg.cell_ids.end(), msg.cell_id);
  return static_cast<CellOrder>(it - msg.cell_ids.begin());
}

}  // namespace

std::string_view to_string(MessageType type) noexcept {
  for (const auto& [value, name] : kTypeNames) {
    if (value == type) return name;
  }
  return "unknown";
}

std::optional<MessageType> parse_message_type(std::string_view name) noexcept {
  for (const auto& [value, wire] : kTypeNames) {
    if (wire == name) return value;
  }
  return std::nullopt;
}

bool is_cell_scoped(MessageType type) noexcept {
  return type != MessageType::SessionStarted && type != MessageType::SessionDisposed;
}

std::optional<TimestampMs> parse_iso8601(std::string_view text) noexcept {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  if (text.size() < 19) return std::nullopt;
  if (!read_int(text, 0, 4, y) || text[4] != '-' || !read_int(text, 5, 2, mo) || text[7] != '-' ||
      !read_int(text, 8, 2, d) || (text[10] != 'T' && text[10] != ' ') ||
      !read_int(text, 11, 2, h) || text[13] != ':' || !read_int(text, 14, 2, mi) ||
      text[16] != ':' || !read_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  int millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      if (digits < 3) millis = millis * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) return std::nullopt;
    for (int i = digits; i < 3; ++i) millis *= 10;
  }
  int offset_minutes = 0;
  if (pos < text.size()) {
    if (text[pos] == 'Z' || text[pos] == 'z') {
      ++pos;
    } else if (text[pos] == '+' || text[pos] == '-') {
      int oh = 0, om = 0;
      const int sign = text[pos] == '-' ? -1 : 1;
      if (!read_int(text, pos + 1, 2, oh)) return std::nullopt;
      std::size_t next = pos + 3;
      if (next < text.size() && text[next] == ':') ++next;
      if (!read_int(text, next, 2, om)) return std::nullopt;
      offset_minutes = sign * (oh * 60 + om);
      pos = next + 2;
    }
  }
  if (pos != text.size()) return std::nullopt;
  if (mo < 1 || mo > 12 || h > 23 || mi > 59 || s > 60) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  const std::int64_t secs = static_cast<std::int64_t>(days) * 86400 + h * 3600 + mi * 60 + s -
                            static_cast<std::int64_t>(offset_minutes) * 60;
  return secs * 1000 + millis;
}

std::string format_iso8601(TimestampMs ts) {
  using namespace std::chrono;
  const auto floor_div = [](std::int64_t a, std::int64_t b) {
    return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
  };
  const std::int64_t day_count = floor_div(ts, 86'400'000);
  std::int64_t rest = ts - day_count * 86'400'000;
  const year_month_day ymd{sys_days{days{day_count}}};
  const auto h = rest / 3'600'000;
  rest %= 3'600'000;
  const auto mi = rest / 60'000;
  rest %= 60'000;
  const auto s = rest / 1000;
  const auto ms = rest % 1000;

  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<long long>(h),
                static_cast<long long>(mi), static_cast<long long>(s), static_cast<long long>(ms));
  return buf;
}

ParseResult parse_trace(std::istream& in, const ParseOptions& options) {
  ParseResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      const auto record = json::parse(line);
      result.messages.push_back(decode_record(record, line_no));
    } catch (const json::exception& e) {
      result.malformed.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const RecordError& e) {
      result.malformed.push_back({line_no, e.reason});
    }
    if (options.strict && !result.malformed.empty()) {
      const auto& bad = result.malformed.back();
      throw Error(ErrorCode::MalformedRecord,
                  "line " + std::to_string(bad.line) + ": " + bad.reason);
    }
  }
  return result;
}

ParseResult parse_trace(std::string_view bytes, const ParseOptions& options) {
  std::istringstream in{std::string(bytes)};
  return parse_trace(in, options);
}

std::string serialize_message(const TelemetryMessage& msg) {
  json record;
  record["datetime"] = format_iso8601(msg.timestamp);
  if (!msg.cell_id.empty()) record["cell_id"] = msg.cell_id;
  record["notebook_id"] = msg.notebook_id;
  record["cell_ids"] = msg.cell_ids;
  record["session_id"] = msg.session_id;
  record["path"] = msg.notebook_path;
  record["type"] = std::string(to_string(msg.type));
  return record.dump();
}

std::string serialize_trace(std::span<const TelemetryMessage> msgs) {
  std::string out;
  for (const auto& msg : msgs) {
    out += serialize_message(msg);
    out += '\n';
  }
  return out;
}

std::size_t SessionSet::event_count() const noexcept {
  std::size_t n = 0;
  for (const auto& s : sessions) n += s.events.size();
  return n;
}

std::size_t SessionSet::implicit_session_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(sessions.begin(), sessions.end(), [](const Session& s) { return s.implicit_start; }));
}

SessionSet build_sessions(std::vector<TelemetryMessage> msgs) {
  std::stable_sort(msgs.begin(), msgs.end(),
                   [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });

  struct Pending {
    TimestampMs started;
    CellOrder order;
  };
  struct Open {
    std::size_t index;
    std::map<std::string, Pending> running;
  };

  SessionSet out;
  std::map<std::string, Open> open;

  auto start_session = [&](const TelemetryMessage& msg, bool implicit) -> Open& {
    if (auto it = open.find(msg.session_id); it != open.end()) {
      out.sessions[it->second.index].implicit_end = true;
      open.erase(it);
    }
    Session s;
    s.session_id = msg.session_id;
    s.notebook_id = msg.notebook_id;
    s.implicit_start = implicit;
    out.sessions.push_back(std::move(s));
    return open.emplace(msg.session_id, Open{out.sessions.size() - 1, {}}).first->second;
  };

  for (auto& msg : msgs) {
    Open* current = nullptr;
    if (msg.type == MessageType::SessionStarted) {
      current = &start_session(msg, false);
    } else if (auto it = open.find(msg.session_id); it != open.end()) {
      current = &it->second;
    } else {
      current = &start_session(msg, true);
    }
    Session& session = out.sessions[current->index];

    switch (msg.type) {
      case MessageType::CellExecutionStarted:
        current->running[msg.cell_id] = Pending{msg.timestamp, order_of(msg)};
        break;
      case MessageType::CellExecutionCompleted: {
        auto run = current->running.find(msg.cell_id);
        if (run == current->running.end()) {
          out.orphans.push_back({msg.session_id, msg.cell_id, msg.timestamp,
                                 "cell-execution-completed without cell-execution-started"});
          break;
        }
        ExecutionEvent ev;
        ev.cell_order = run->second.order;
        ev.cell_id = msg.cell_id;
        ev.duration_local = static_cast<Millis>(msg.timestamp - run->second.started);
        ev.index = session.events.size();
        session.events.push_back(std::move(ev));
        current->running.erase(run);
        break;
      }
      default:
        break;
    }

    const bool disposed = msg.type == MessageType::SessionDisposed;
    session.raw.push_back(std::move(msg));
    if (disposed) open.erase(session.session_id);
  }

  for (const auto& [id, state] : open) out.sessions[state.index].implicit_end = true;
  return out;
}

IngestReport make_report(const ParseResult& parsed, const SessionSet& sessions) {
  IngestReport r;
  r.messages = parsed.messages.size();
  r.sessions = sessions.sessions.size();
  r.events = sessions.event_count();
  r.skipped = parsed.skipped();
  r.orphans = sessions.orphans.size();
  r.implicit_sessions = sessions.implicit_session_count();
  return r;
}

std::string report_json(const IngestReport& report) {
  json j;
  j["messages"] = report.messages;
  j["sessions"] = report.sessions;
  j["events"] = report.events;
  j["skipped"] = report.skipped;
  j["orphans"] = report.orphans;
  j["implicit_sessions"] = report.implicit_sessions;
  return j.dump();
}

std::vector<ExecutionEvent> flatten_events(const SessionSet& sessions) {
  std::vector<ExecutionEvent> out;
  for (const auto& s : sessions.sessions) {
    for (const auto& ev : s.events) {
      out.push_back(ev);
      out.back().index = out.size() - 1;
    }
  }
  return out;
}

}  // namespace nbmig
