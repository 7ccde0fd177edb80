#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "nbmig/trace.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nbmig::MessageType;
using nbmig::TelemetryMessage;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = nbmig::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("nbmig-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }

  std::string write(const std::string& name, const std::string& content) const {
    std::ofstream(path_ / name, std::ios::binary) << content;
    return (path_ / name).string();
  }
  std::string path(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// One session that runs cells 1,2,3,2,3.
std::string worked_trace() {
  std::vector<TelemetryMessage> msgs;
  auto msg = [&](MessageType type, nbmig::TimestampMs ts, std::string cell) {
    TelemetryMessage m;
    m.type = type;
    m.timestamp = ts;
    m.cell_id = std::move(cell);
    m.notebook_id = "nb";
    m.cell_ids = {"c0", "c1", "c2", "c3"};
    m.session_id = "s";
    m.notebook_path = "w.ipynb";
    msgs.push_back(m);
  };
  msg(MessageType::SessionStarted, 0, "");
  nbmig::TimestampMs t = 10;
  for (const char* c : {"c1", "c2", "c3", "c2", "c3"}) {
    msg(MessageType::CellExecutionStarted, t, c);
    msg(MessageType::CellExecutionCompleted, t + 1000, c);
    t += 2000;
  }
  msg(MessageType::SessionDisposed, t, "");
  return nbmig::serialize_trace(msgs);
}

}  // namespace

TEST_CASE("sweep emits one row per grid point and policy") {
  TempDir dir;
  const auto trace = dir.write("t.jsonl", nbmig::serialize_trace(oracle::synthetic_loops_trace(4, 1)));
  const auto r = run({"sweep", "--trace", trace, "--speedups", "2,5", "--migrations", "0,1000,60000"});
  REQUIRE(r.code == 0);
  std::istringstream lines(r.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 1 + 24 + 1);
  CHECK(rows.front().rfind("migration_ms,", 0) == 0);
  CHECK(rows.back().rfind("# config_digest=", 0) == 0);
}

TEST_CASE("context on the worked example") {
  TempDir dir;
  const auto r = run({"context", "--trace", dir.write("t.jsonl", worked_trace()), "--active", "2"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["sequences"].size() == 2);
  CHECK(j["sequences"][0]["sequence"] == nlohmann::json::array({2, 3}));
  CHECK(j["sequences"][0]["score"].get<double>() == doctest::Approx(66.67).epsilon(1e-3));
  CHECK(j["prediction"]["block"] == nlohmann::json::array({2, 3}));
}

TEST_CASE("fit-threshold recovers the break-even epoch count") {
  const auto r = run({"fit-threshold", "--param", "epochs", "--probes", "1,2,3", "--oracle",
                      "affine:21500,0,4850,120000", "--range", "1,1000"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["threshold"] == 7);
  CHECK(j["regime"] == "above");
  CHECK(j["local"]["slope"].get<double>() == doctest::Approx(21500));
  CHECK(j["kb"]["epochs"]["provenance"].size() == 2);
}

TEST_CASE("exit codes") {
  TempDir dir;
  const auto trace = dir.write("t.jsonl", worked_trace());
  auto r = run({"simulate", "--trace", trace, "--migration-ms", "100", "--state", dir.write("s.json", "{}")});
  CHECK(r.code == nbmig::cli::kExitConfig);
  r = run({"simulate", "--trace", trace});
  CHECK(r.code == nbmig::cli::kExitConfig);
  r = run({"bogus"});
  CHECK(r.code == nbmig::cli::kExitConfig);
  r = run({"ingest", "--trace", dir.path("missing.jsonl")});
  CHECK(r.code == nbmig::cli::kExitConfig);
  r = run({"ingest", "--trace", dir.write("bad.jsonl", R"({"type":"cell-deleted"})" "\n")});
  CHECK(r.code == nbmig::cli::kExitInput);
  CHECK(r.err.find("trace.UnknownMessageType") != std::string::npos);
  r = run({"parse", dir.write("c.py", "def (:")});
  CHECK(r.code == nbmig::cli::kExitInput);
  CHECK(run({"simulate", "--trace", trace, "--migration-ms", "100"}).code == 0);
}

TEST_CASE("reruns are byte-identical and carry the config digest") {
  TempDir dir;
  const auto trace = dir.write("t.jsonl", nbmig::serialize_trace(oracle::synthetic_loops_trace(3, 2)));
  const std::vector<std::string> args = {"simulate",     "--trace", trace,      "--migration-ms", "4000",
                                         "--speedup",    "3",       "--explain", "--out",          dir.path("a")};
  const auto a = run(args);
  REQUIRE(a.code == 0);
  auto args_b = args;
  args_b.back() = dir.path("b");
  const auto b = run(args_b);
  CHECK(a.out == b.out);
  CHECK(read(dir.path("a") + "/simulation.json") == read(dir.path("b") + "/simulation.json"));
  CHECK(read(dir.path("a") + "/decisions.jsonl") == read(dir.path("b") + "/decisions.jsonl"));

  const auto digest = nlohmann::json::parse(read(dir.path("a") + "/simulation.json"))["config_digest"];
  REQUIRE(digest.is_string());
  const auto log = read(dir.path("a") + "/run.log");
  CHECK(log.find("config_digest=" + digest.get<std::string>()) != std::string::npos);

  // A different config gives a different digest.
  const auto other = run({"simulate", "--trace", trace, "--migration-ms", "4001", "--speedup", "3"});
  CHECK(nlohmann::json::parse(other.out)["config_digest"] != digest);
}

TEST_CASE("json config file with command-line override") {
  TempDir dir;
  const auto trace = dir.write("t.jsonl", worked_trace());
  const auto cfg = dir.write("cfg.json", R"({"trace":")" + trace + R"(","migration_ms":100,"speedup":4,"policy":"remote"})");
  const auto from_file = run({"simulate", "--config", cfg});
  REQUIRE(from_file.code == 0);
  const auto direct = run({"simulate", "--trace", trace, "--migration-ms", "100", "--speedup", "4", "--policy", "remote"});
  CHECK(from_file.out == direct.out);

  const auto overridden = run({"simulate", "--config", cfg, "--speedup", "2"});
  const auto expected = run({"simulate", "--trace", trace, "--migration-ms", "100", "--speedup", "2", "--policy", "remote"});
  CHECK(overridden.out == expected.out);
  CHECK(overridden.out != from_file.out);
}

TEST_CASE("NBMIG_SEED overrides --seed") {
  const std::vector<std::string> base = {"fit-threshold", "--param", "epochs", "--oracle",
                                         "affine:21500,0,4850,120000", "--jitter", "0.05", "--range", "1,1000"};
  auto with_seed = [&](const char* seed) {
    auto args = base;
    args.push_back("--seed");
    args.push_back(seed);
    return run(args);
  };
  const auto five = with_seed("5");
  const auto six = with_seed("6");
  REQUIRE(five.code == 0);
  CHECK(five.out != six.out);

  ::setenv("NBMIG_SEED", "5", 1);
  const auto env = with_seed("6");
  ::setenv("NBMIG_SEED", "x", 1);
  const auto bad = with_seed("6");
  ::unsetenv("NBMIG_SEED");
  CHECK(env.out == five.out);
  CHECK(bad.code == nbmig::cli::kExitConfig);
}

TEST_CASE("state-derived migration times, local times file and reduce") {
  TempDir dir;
  const auto trace = dir.write("t.jsonl", worked_trace());
  const std::string objects =
      R"({"objects":[{"id":"df","name":"df","kind":"variable","size":1000000,"refs":["conn"],"content":"abc"},)"
      R"({"id":"conn","name":"","kind":"variable","size":10,"content":"x","serializable":SER},)"
      R"({"id":"big","name":"big","kind":"variable","size":7000000,"content":"y"}],"bindings":{"df":"df","big":"big"}})";
  auto fixture = [&](bool serializable) {
    auto s = objects;
    s.replace(s.find("SER"), 3, serializable ? "true" : "false");
    return s;
  };
  const auto state = dir.write("s.json", fixture(true));
  const auto cells = dir.write("cells.json", R"j({"1":"x = 1","2":"df.describe()","3":"y = 2"})j");

  auto r = run({"simulate", "--trace", trace, "--state", state, "--cells", cells, "--bandwidth", "1000", "--latency",
                "5", "--speedup", "4"});
  REQUIRE(r.code == 0);
  auto j = nlohmann::json::parse(r.out);
  // Only df and conn travel: 1000010 bytes at 1000 bytes/ms plus latency.
  CHECK(j["cost_model"]["migration_up_ms"].get<double>() == doctest::Approx(1005.01));
  CHECK(j["cost_model"]["local_fallback"].empty());

  const auto blocked = dir.write("b.json", fixture(false));
  r = run({"simulate", "--trace", trace, "--state", blocked, "--cells", cells, "--bandwidth", "1000", "--speedup", "4"});
  REQUIRE(r.code == 0);
  j = nlohmann::json::parse(r.out);
  CHECK(j["cost_model"]["local_fallback"] == nlohmann::json::array({2}));

  CHECK(run({"simulate", "--trace", trace, "--state", state, "--bandwidth", "1000"}).code == nbmig::cli::kExitConfig);

  const auto times = dir.write("lt.json", R"({"1":100,"2":200,"3":300})");
  r = run({"sweep", "--trace", trace, "--local-times", times, "--speedups", "2", "--migrations", "0"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\n0,2,local,1100,0,1\n") != std::string::npos);
  CHECK(run({"sweep", "--trace", trace, "--local-times", dir.write("bad.json", R"({"x":1})"), "--speedups", "2",
             "--migrations", "0"})
            .code == nbmig::cli::kExitConfig);

  r = run({"reduce", "--state", state, "--cell", dir.write("c.py", "df.describe()\n")});
  REQUIRE(r.code == 0);
  j = nlohmann::json::parse(r.out);
  CHECK(j["manifest"]["included"] == nlohmann::json::array({"conn", "df"}));
  CHECK(j["full_state_bytes"] == 8000010);
  r = run({"reduce", "--state", blocked, "--cell", dir.path("c.py")});
  REQUIRE(r.code == 0);
  j = nlohmann::json::parse(r.out);
  CHECK(j["local_fallback"] == true);
  CHECK(j["offending"] == nlohmann::json::array({"conn"}));
}
