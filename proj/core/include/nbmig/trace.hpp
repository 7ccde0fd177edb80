#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nbmig {

using Millis = double;
using CellOrder = std::uint32_t;
// Integer milliseconds since the Unix epoch.
using TimestampMs = std::int64_t;

enum class MessageType : std::uint8_t {
  SessionStarted,
  SessionDisposed,
  CellExecutionRequested,
  CellExecutionStarted,
  CellExecutionCompleted,
  CellModified,
};

// Hyphenated wire names ("session-started", ...).
std::string_view to_string(MessageType type) noexcept;
std::optional<MessageType> parse_message_type(std::string_view name) noexcept;
bool is_cell_scoped(MessageType type) noexcept;

struct TelemetryMessage {
  TimestampMs timestamp = 0;
  std::string cell_id;  // empty for session-scoped messages
  std::string notebook_id;
  std::vector<std::string> cell_ids;
  std::string session_id;
  std::string notebook_path;
  MessageType type = MessageType::SessionStarted;

  bool operator==(const TelemetryMessage&) const = default;
};

struct ExecutionEvent {
  CellOrder cell_order = 0;
  std::string cell_id;
  Millis duration_local = 0;
  std::size_t index = 0;

  bool operator==(const ExecutionEvent&) const = default;
};

struct Session {
  std::string session_id;
  std::string notebook_id;
  std::vector<ExecutionEvent> events;
  std::vector<TelemetryMessage> raw;
  // Opened by the first message of an unseen session id rather than by session-started.
  bool implicit_start = false;
  // Closed by the last message rather than by session-disposed.
  bool implicit_end = false;
};

struct MalformedRecord {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParseResult {
  std::vector<TelemetryMessage> messages;
  std::vector<MalformedRecord> malformed;

  std::size_t skipped() const noexcept { return malformed.size(); }
};

struct ParseOptions {
  // Malformed lines become fatal instead of being collected.
  bool strict = false;
};

// ISO-8601 "YYYY-MM-DDTHH:MM:SS[.fff...][Z|+HH:MM|-HH:MM]". Sub-millisecond digits are truncated.
std::optional<TimestampMs> parse_iso8601(std::string_view text) noexcept;
// Always UTC with millisecond precision: "2021-05-10T12:00:00.250Z".
std::string format_iso8601(TimestampMs ts);

// Newline-delimited JSON, one message per line. Unknown message types throw
// Error(UnknownMessageType) regardless of options.strict.
ParseResult parse_trace(std::istream& in, const ParseOptions& options = {});
ParseResult parse_trace(std::string_view bytes, const ParseOptions& options = {});

std::string serialize_message(const TelemetryMessage& msg);
std::string serialize_trace(std::span<const TelemetryMessage> msgs);

struct OrphanEvent {
  std::string session_id;
  std::string cell_id;
  TimestampMs timestamp = 0;
  std::string reason;
};

struct SessionSet {
  std::vector<Session> sessions;
  std::vector<OrphanEvent> orphans;

  std::size_t event_count() const noexcept;
  std::size_t implicit_session_count() const noexcept;
};

// Messages are stably sorted by timestamp first; per-session events are paired by cell id.
SessionSet build_sessions(std::vector<TelemetryMessage> msgs);

struct IngestReport {
  std::size_t messages = 0;
  std::size_t sessions = 0;
  std::size_t events = 0;
  std::size_t skipped = 0;
  std::size_t orphans = 0;
  std::size_t implicit_sessions = 0;
};

IngestReport make_report(const ParseResult& parsed, const SessionSet& sessions);
std::string report_json(const IngestReport& report);

// All events of all sessions, in session order, renumbered 0..n-1.
std::vector<ExecutionEvent> flatten_events(const SessionSet& sessions);

}  // namespace nbmig
