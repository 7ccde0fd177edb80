#include <doctest.h>

#include <random>

#include "nbmig/error.hpp"
#include "nbmig/trace.hpp"
#include "oracles.hpp"

using namespace nbmig;

namespace {

std::string line(std::string_view type, std::string_view ts, std::string_view cell = "c1",
                 std::string_view session = "s1") {
  std::string out = R"({"datetime":")" + std::string(ts) + R"(","notebook_id":"nb","cell_ids":["c0","c1","c2"],)";
  if (!cell.empty()) out += R"("cell_id":")" + std::string(cell) + R"(",)";
  out += R"("session_id":")" + std::string(session) + R"(","path":"a.ipynb","type":")" + std::string(type) + "\"}";
  return out;
}

TelemetryMessage message(MessageType type, TimestampMs ts, std::string cell = "c1", std::string session = "s1") {
  TelemetryMessage m;
  m.type = type;
  m.timestamp = ts;
  m.cell_id = is_cell_scoped(type) ? std::move(cell) : "";
  m.notebook_id = "nb";
  m.cell_ids = {"c0", "c1", "c2"};
  m.session_id = std::move(session);
  m.notebook_path = "a.ipynb";
  return m;
}

}  // namespace

TEST_CASE("one well-formed record parses") {
  const auto r = parse_trace(line("cell-execution-requested", "2021-05-10T12:00:00.000Z"));
  REQUIRE(r.messages.size() == 1);
  CHECK(r.skipped() == 0);
  CHECK(r.messages[0].type == MessageType::CellExecutionRequested);
  CHECK(r.messages[0].cell_id == "c1");
  CHECK(r.messages[0].notebook_path == "a.ipynb");
}

TEST_CASE("empty stream") {
  const auto r = parse_trace(std::string_view{});
  CHECK(r.messages.empty());
  CHECK(r.skipped() == 0);
}

TEST_CASE("unknown message type is fatal and names the line") {
  std::string text;
  for (int i = 0; i < 3; ++i) text += line("cell-modified", "2021-05-10T12:00:00Z") + "\n";
  text += line("cell-deleted", "2021-05-10T12:00:01Z") + "\n";
  for (bool strict : {true, false}) {
    try {
      parse_trace(text, ParseOptions{strict});
      FAIL("expected UnknownMessageType");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownMessageType);
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
      CHECK(qualified_name(e.code()) == "trace.UnknownMessageType");
    }
  }
}

TEST_CASE("malformed lines are collected unless strict") {
  std::string text = line("session-started", "2021-05-10T12:00:00Z", "") + "\n";
  text += "{not json\n";
  text += line("cell-execution-started", "2021-05-10T12:00:00Z", "c9") + "\n";  // not in cell_ids
  text += R"({"type":"session-disposed","notebook_id":"nb"})" "\n";
  text += "\n";
  const auto r = parse_trace(text);
  CHECK(r.messages.size() == 1);
  REQUIRE(r.skipped() == 3);
  CHECK(r.malformed[0].line == 2);
  CHECK(r.malformed[1].line == 3);
  CHECK(r.malformed[1].reason.find("cell_ids") != std::string::npos);
  CHECK(r.malformed[2].reason.find("datetime") != std::string::npos);
  CHECK_THROWS_AS(parse_trace(text, ParseOptions{true}), Error);
}

TEST_CASE("iso-8601 timestamps") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_iso8601("1970-01-01T00:00:01.5Z") == 1500);
  CHECK(parse_iso8601("1970-01-01T00:00:00.123456Z") == 123);  // truncated
  CHECK(parse_iso8601("1970-01-01T01:00:00+01:00") == 0);
  CHECK(parse_iso8601("2021-05-10T12:00:00.250Z") == 1'620'648'000'250);
  CHECK_FALSE(parse_iso8601("2021-02-30T00:00:00Z"));
  CHECK_FALSE(parse_iso8601("yesterday"));
  CHECK(format_iso8601(1'620'648'000'250) == "2021-05-10T12:00:00.250Z");
  CHECK(format_iso8601(-1) == "1969-12-31T23:59:59.999Z");
}

TEST_CASE("paired started/completed events") {
  std::vector<TelemetryMessage> msgs = {
      message(MessageType::SessionStarted, 0),
      message(MessageType::CellExecutionRequested, 50),
      message(MessageType::CellExecutionStarted, 100),
      message(MessageType::CellExecutionCompleted, 350),
      message(MessageType::SessionDisposed, 400),
  };
  const auto set = build_sessions(msgs);
  REQUIRE(set.sessions.size() == 1);
  REQUIRE(set.sessions[0].events.size() == 1);
  const auto& ev = set.sessions[0].events[0];
  CHECK(ev.duration_local == 250);
  CHECK(ev.cell_order == 1);
  CHECK(ev.cell_id == "c1");
  CHECK_FALSE(set.sessions[0].implicit_start);
  CHECK_FALSE(set.sessions[0].implicit_end);
  CHECK(set.sessions[0].raw.size() == 5);
}

TEST_CASE("empty session and implicit boundaries") {
  auto set = build_sessions({message(MessageType::SessionStarted, 0), message(MessageType::SessionDisposed, 1)});
  REQUIRE(set.sessions.size() == 1);
  CHECK(set.sessions[0].events.empty());

  set = build_sessions({message(MessageType::CellExecutionStarted, 5), message(MessageType::CellExecutionCompleted, 9)});
  REQUIRE(set.sessions.size() == 1);
  CHECK(set.sessions[0].implicit_start);
  CHECK(set.sessions[0].implicit_end);
  CHECK(set.implicit_session_count() == 1);
  CHECK(set.sessions[0].events.at(0).duration_local == 4);
}

TEST_CASE("completed without started becomes an orphan") {
  const auto set = build_sessions({message(MessageType::SessionStarted, 0),
                                   message(MessageType::CellExecutionCompleted, 10),
                                   message(MessageType::SessionDisposed, 20)});
  CHECK(set.event_count() == 0);
  REQUIRE(set.orphans.size() == 1);
  CHECK(set.orphans[0].cell_id == "c1");
}

TEST_CASE("interleaved sessions are partitioned") {
  std::vector<TelemetryMessage> msgs;
  for (int i = 0; i < 4; ++i) {
    const std::string s = i % 2 ? "s2" : "s1";
    msgs.push_back(message(MessageType::CellExecutionStarted, 10 * i, "c" + std::to_string(i % 3), s));
  }
  for (int i = 0; i < 4; ++i) {
    const std::string s = i % 2 ? "s2" : "s1";
    msgs.push_back(message(MessageType::CellExecutionCompleted, 100 + 10 * i, "c" + std::to_string(i % 3), s));
  }
  const auto set = build_sessions(msgs);
  REQUIRE(set.sessions.size() == 2);
  for (const auto& s : set.sessions) {
    CHECK(s.events.size() == 2);
    for (const auto& m : s.raw) CHECK(m.session_id == s.session_id);
  }
  CHECK(flatten_events(set).size() == 4);
  CHECK(flatten_events(set).back().index == 3);
}

TEST_CASE("cell-modified is kept in raw but produces no event") {
  const auto set = build_sessions({message(MessageType::SessionStarted, 0), message(MessageType::CellModified, 1),
                                   message(MessageType::SessionDisposed, 2)});
  CHECK(set.sessions.at(0).raw.size() == 3);
  CHECK(set.event_count() == 0);
}

TEST_CASE("input is sorted before pairing") {
  const auto set = build_sessions({message(MessageType::CellExecutionCompleted, 300),
                                   message(MessageType::SessionStarted, 0),
                                   message(MessageType::CellExecutionStarted, 100)});
  CHECK(set.event_count() == 1);
  CHECK(set.orphans.empty());
}

TEST_CASE("property: serialize then parse is the identity") {
  std::mt19937_64 rng(7);
  const MessageType types[] = {MessageType::SessionStarted,         MessageType::SessionDisposed,
                               MessageType::CellExecutionRequested, MessageType::CellExecutionStarted,
                               MessageType::CellExecutionCompleted, MessageType::CellModified};
  for (int round = 0; round < 200; ++round) {
    std::vector<TelemetryMessage> msgs;
    const auto n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      TelemetryMessage m;
      m.type = types[rng() % 6];
      m.timestamp = static_cast<TimestampMs>(rng() % 4'000'000'000'000ULL) - 1'000'000'000'000LL;
      const auto cells = 1 + rng() % 4;
      for (std::size_t c = 0; c < cells; ++c) m.cell_ids.push_back("id-" + std::to_string(rng() % 100) + "\"q");
      if (is_cell_scoped(m.type)) m.cell_id = m.cell_ids[rng() % cells];
      m.notebook_id = "nb" + std::to_string(rng() % 3);
      m.session_id = "s" + std::to_string(rng() % 3);
      m.notebook_path = "dir/ü/" + std::to_string(rng() % 9) + ".ipynb";
      msgs.push_back(m);
    }
    const auto parsed = parse_trace(serialize_trace(msgs), ParseOptions{true});
    CHECK(parsed.messages == msgs);
  }
}

TEST_CASE("property: events equal matched pairs and ingestion is deterministic") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto msgs = oracle::synthetic_loops_trace(3 + seed % 4, seed);
    std::size_t started = 0;
    for (const auto& m : msgs) started += m.type == MessageType::CellExecutionStarted;
    const auto bytes = serialize_trace(msgs);
    const auto a = parse_trace(bytes);
    const auto b = parse_trace(bytes);
    const auto sa = build_sessions(a.messages);
    CHECK(sa.event_count() == started);
    CHECK(report_json(make_report(a, sa)) == report_json(make_report(b, build_sessions(b.messages))));
  }
}

TEST_CASE("report shape") {
  const auto parsed = parse_trace(line("session-started", "2021-05-10T12:00:00Z", "") + "\nbad\n");
  const auto json = report_json(make_report(parsed, build_sessions(parsed.messages)));
  for (const char* key : {"\"messages\":1", "\"sessions\":1", "\"events\":0", "\"skipped\":1", "\"orphans\":0"}) {
    CHECK(json.find(key) != std::string::npos);
  }
}
