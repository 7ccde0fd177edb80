#include "cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nbmig/cellparse.hpp"
#include "nbmig/context.hpp"
#include "nbmig/error.hpp"
#include "nbmig/hash.hpp"
#include "nbmig/knowledge.hpp"
#include "nbmig/policy.hpp"
#include "nbmig/statered.hpp"
#include "nbmig/trace.hpp"

namespace nbmig::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Bad or inconsistent configuration. The message names the offending field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat JSON object whose keys are long option names; '_' and '-' are interchangeable.
// Keys apply to the subcommand being run.
class JsonConfig final : public CLI::Config {
 public:
  explicit JsonConfig(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    json j = json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (!opt->get_configurable() || opt->get_lnames().empty()) continue;
      if (opt->count() == 0 && !default_also) continue;
      const auto& results = opt->results();
      if (results.size() == 1) {
        j[opt->get_lnames().front()] = results.front();
      } else if (!results.empty()) {
        j[opt->get_lnames().front()] = results;
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config: top level must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      item.name = key;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      if (!section_.empty()) item.parents = {section_};
      const auto scalar = [&](const json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("config: '" + key + "' must be a scalar or a list of scalars");
      };
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  std::string section_;
};

std::string read_file(const std::string& path, std::string_view field) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string(field) + ": cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string file_digest(const std::string& content) { return to_hex(fnv1a(content)); }

std::map<CellOrder, std::string> cell_sources(const std::string& text, std::string_view field) {
  std::map<CellOrder, std::string> out;
  try {
    const auto parsed = json::parse(text);
    for (const auto& [key, value] : parsed.items()) {
      CellOrder order = 0;
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), order);
      if (ec != std::errc{} || ptr != key.data() + key.size()) {
        throw ConfigError(std::string(field) + ": key '" + key + "' is not a cell order");
      }
      out[order] = value.get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string(field) + ": " + e.what());
  }
  return out;
}

std::map<CellOrder, Millis> local_times_file(const std::string& text) {
  std::map<CellOrder, Millis> out;
  try {
    const auto parsed = json::parse(text);
    for (const auto& [key, value] : parsed.items()) {
      CellOrder order = 0;
      auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), order);
      if (ec != std::errc{} || ptr != key.data() + key.size()) {
        throw ConfigError("local-times: key '" + key + "' is not a cell order");
      }
      out[order] = value.get<double>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("local-times: ") + e.what());
  }
  return out;
}

// Options shared by every subcommand.
struct Common {
  std::string out_dir;
  std::int64_t seed = 0;
  bool strict = false;
};

void add_common(CLI::App* sub, Common& common) {
  sub->fallthrough();  // --config lives on the root
  sub->add_option("--out", common.out_dir, "Also write artifacts and a run.log into this directory");
  sub->add_option("--seed", common.seed, "Seed for randomized oracles (NBMIG_SEED overrides)");
}

// Collects artifacts for one invocation.
class Run {
 public:
  Run(std::string command, const Common& common, std::ostream& out)
      : command_(std::move(command)), common_(common), out_(out) {
    config_["command"] = command_;
  }

  json& config() { return config_; }

  std::string digest() const { return to_hex(fnv1a(config_.dump())); }

  // Prints the artifact and, with --out, writes it to disk.
  void emit(const std::string& name, const std::string& content) {
    out_ << content;
    if (!content.empty() && content.back() != '\n') out_ << '\n';
    if (common_.out_dir.empty()) return;
    fs::create_directories(common_.out_dir);
    std::ofstream f(fs::path(common_.out_dir) / name, std::ios::binary);
    f << content;
    if (!content.empty() && content.back() != '\n') f << '\n';
    if (!f) throw ConfigError("out: cannot write '" + name + "'");
    written_.push_back(name);
  }

  // Timestamps live only here, never inside artifacts.
  void finish() {
    if (common_.out_dir.empty()) return;
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::ofstream log(fs::path(common_.out_dir) / "run.log", std::ios::app);
    log << "finished=" << format_iso8601(now) << " command=" << command_ << " config_digest=" << digest()
        << " config=" << config_.dump() << " artifacts=";
    for (std::size_t i = 0; i < written_.size(); ++i) log << (i ? "," : "") << written_[i];
    log << '\n';
  }

 private:
  std::string command_;
  const Common& common_;
  std::ostream& out_;
  json config_;
  std::vector<std::string> written_;
};

struct LoadedTrace {
  ParseResult parsed;
  SessionSet sessions;
  std::vector<ExecutionEvent> events;
};

LoadedTrace load_trace(Run& run, const std::string& path, bool strict) {
  const auto text = read_file(path, "trace");
  run.config()["trace"] = file_digest(text);
  run.config()["strict"] = strict;
  LoadedTrace t;
  t.parsed = parse_trace(std::string_view(text), ParseOptions{strict});
  t.sessions = build_sessions(t.parsed.messages);
  t.events = flatten_events(t.sessions);
  return t;
}

std::map<CellOrder, Millis> resolve_local_times(Run& run, const std::string& path,
                                                std::span<const ExecutionEvent> events) {
  if (path.empty()) {
    run.config()["local_times"] = "trace-median";
    return local_times_from_events(events);
  }
  const auto text = read_file(path, "local-times");
  run.config()["local_times"] = file_digest(text);
  return local_times_file(text);
}

json lin_json(const LinearModel& m) { return json{{"slope", m.slope}, {"intercept", m.intercept}}; }

// ---------------------------------------------------------------------------

struct IngestOpts {
  std::string trace;
};

void cmd_ingest(const IngestOpts& o, const Common& c, std::ostream& out) {
  Run run("ingest", c, out);
  const auto t = load_trace(run, o.trace, c.strict);
  ojson j;
  j["config_digest"] = run.digest();
  const auto report = ojson::parse(report_json(make_report(t.parsed, t.sessions)));
  for (const auto& [k, v] : report.items()) j[k] = v;
  auto& bad = j["malformed"] = ojson::array();
  for (const auto& m : t.parsed.malformed) bad.push_back({{"line", m.line}, {"reason", m.reason}});
  run.emit("report.json", j.dump(2));
  run.finish();
}

struct ContextOpts {
  std::string trace;
  std::optional<CellOrder> active;
  double min_score = 0;
};

void cmd_context(const ContextOpts& o, const Common& c, std::ostream& out) {
  Run run("context", c, out);
  const auto t = load_trace(run, o.trace, c.strict);
  if (o.active) run.config()["active"] = *o.active;
  run.config()["min_score"] = o.min_score;
  const auto history = history_of(t.events);
  const auto stats = score_sequences(get_sequences(history));
  ojson j;
  j["config_digest"] = run.digest();
  j["sequences"] = ojson::parse(stats_json(stats));
  if (o.active) {
    const auto p = predict_block(stats, *o.active, o.min_score, AnchorRule::Starts);
    j["prediction"] = p ? ojson{{"block", p->block.orders}, {"score", p->score}} : ojson(nullptr);
  }
  run.emit("context.json", j.dump(2));
  run.finish();
}

struct SimulateOpts {
  std::string trace;
  std::string policy = "all";
  double speedup = 1.0;
  std::optional<double> migration_ms;
  double up_share = 0.5;
  std::string state;
  std::string cells;
  std::optional<double> bandwidth;
  double latency = 0;
  std::optional<double> codec_rate;
  bool compress = false;
  std::string local_times;
  double min_score = 0;
  bool no_block_guard = false;
  bool remote_free = false;
  bool explain = false;
};

// Migration times derived from the reduced state the trace's cells need.
void state_cost_model(Run& run, const SimulateOpts& o, CostModel& model) {
  if (o.cells.empty()) throw ConfigError("cells: required together with state");
  if (!o.bandwidth) throw ConfigError("bandwidth: required together with state");
  const auto state_text = read_file(o.state, "state");
  const auto cells_text = read_file(o.cells, "cells");
  run.config()["state"] = file_digest(state_text);
  run.config()["cells"] = file_digest(cells_text);
  run.config()["bandwidth"] = *o.bandwidth;
  run.config()["latency"] = o.latency;
  run.config()["codec_rate"] = o.codec_rate ? json(*o.codec_rate) : json(nullptr);
  run.config()["compress"] = o.compress;

  const auto st = state::state_from_json(state_text);
  std::set<state::ObjectId> needed;
  for (const auto& [order, source] : cell_sources(cells_text, "cells")) {
    const auto usage = cell::extract_usage(cell::parse_cell(source));
    const auto closure = state::needed_closure(st, usage);
    const auto reduced = state::reduce_and_serialize(st, closure.ids, false);
    if (std::holds_alternative<state::LocalFallback>(reduced)) {
      model.local_fallback.insert(order);
    } else {
      needed.insert(closure.ids.begin(), closure.ids.end());
    }
  }
  const auto payload = std::get<state::MigrationPayload>(state::reduce_and_serialize(st, needed, o.compress));
  const Millis t = state::migration_time(payload, *o.bandwidth, o.latency, o.codec_rate);
  model.migration_up = t;
  model.migration_down = t;
}

void cmd_simulate(const SimulateOpts& o, const Common& c, std::ostream& out) {
  Run run("simulate", c, out);
  if (o.migration_ms && !o.state.empty()) {
    throw ConfigError("migration-ms: give either a fixed migration time or a state file, not both");
  }
  if (!o.migration_ms && o.state.empty()) throw ConfigError("migration-ms: or state is required");
  std::vector<PolicyKind> policies;
  if (o.policy == "all") {
    policies.assign(std::begin(kAllPolicies), std::end(kAllPolicies));
  } else if (auto p = parse_policy(o.policy)) {
    policies.push_back(*p);
  } else {
    throw ConfigError("policy: unknown policy '" + o.policy + "'");
  }
  if (o.up_share < 0 || o.up_share > 1) throw ConfigError("up-share: must lie in [0, 1]");

  const auto t = load_trace(run, o.trace, c.strict);
  CostModel model;
  model.local_time = resolve_local_times(run, o.local_times, t.events);
  model.remote_speedup = o.speedup;
  if (o.migration_ms) {
    run.config()["migration_ms"] = *o.migration_ms;
    run.config()["up_share"] = o.up_share;
    model.migration_up = *o.migration_ms * o.up_share;
    model.migration_down = *o.migration_ms - model.migration_up;
  } else {
    state_cost_model(run, o, model);
  }
  try {
    model.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("speedup: ") + e.what());
  }
  SimulationOptions options;
  options.min_score = o.min_score;
  options.block_guard = !o.no_block_guard;
  options.remote_free_migration = o.remote_free;
  auto& cfg = run.config();
  cfg["policy"] = o.policy;
  cfg["speedup"] = o.speedup;
  cfg["min_score"] = o.min_score;
  cfg["block_guard"] = options.block_guard;
  cfg["remote_free_migration"] = o.remote_free;
  cfg["explain"] = o.explain;

  const auto provider = prefix_stats_provider();
  const auto baseline = simulate(t.events, model, PolicyKind::LocalOnly);
  ojson j;
  j["config_digest"] = run.digest();
  j["cost_model"] = {{"migration_up_ms", model.migration_up},
                     {"migration_down_ms", model.migration_down},
                     {"remote_speedup", model.remote_speedup},
                     {"local_fallback", model.local_fallback}};
  auto& results = j["results"] = ojson::array();
  std::string explain;
  for (auto p : policies) {
    const auto r = p == PolicyKind::LocalOnly ? baseline : simulate(t.events, model, p, provider, options);
    results.push_back({{"policy", std::string(to_string(p))},
                       {"total_ms", r.total_time},
                       {"migrations", r.migration_count},
                       {"speedup_vs_local", r.total_time > 0 ? speedup(baseline, r) : 1.0}});
    if (o.explain) explain += decisions_jsonl(r);
  }
  run.emit("simulation.json", j.dump(2));
  if (o.explain) {
    explain += "{\"config_digest\":\"" + run.digest() + "\"}\n";
    run.emit("decisions.jsonl", explain);
  }
  run.finish();
}

struct SweepOpts {
  std::string trace;
  std::vector<double> speedups;
  std::vector<double> migrations;
  double up_share = 0.5;
  std::string local_times;
  double min_score = 0;
  bool no_block_guard = false;
};

void cmd_sweep(const SweepOpts& o, const Common& c, std::ostream& out) {
  Run run("sweep", c, out);
  if (o.speedups.empty()) throw ConfigError("speedups: at least one value is required");
  if (o.migrations.empty()) throw ConfigError("migrations: at least one value is required");
  for (double s : o.speedups) {
    if (!(s > 0)) throw ConfigError("speedups: values must be positive");
  }
  for (double m : o.migrations) {
    if (m < 0) throw ConfigError("migrations: values must be non-negative");
  }
  if (o.up_share < 0 || o.up_share > 1) throw ConfigError("up-share: must lie in [0, 1]");
  const auto t = load_trace(run, o.trace, c.strict);
  const auto local = resolve_local_times(run, o.local_times, t.events);
  auto& cfg = run.config();
  cfg["speedups"] = o.speedups;
  cfg["migrations"] = o.migrations;
  cfg["up_share"] = o.up_share;
  cfg["min_score"] = o.min_score;
  cfg["block_guard"] = !o.no_block_guard;

  SweepGrid grid{o.migrations, o.speedups, o.up_share};
  SimulationOptions options;
  options.min_score = o.min_score;
  options.block_guard = !o.no_block_guard;
  const auto rows = sweep(t.events, prefix_stats_provider(), local, grid, options);
  run.emit("sweep.csv", sweep_csv(rows) + "# config_digest=" + run.digest() + "\n");
  run.finish();
}

struct FitOpts {
  std::string param;
  std::vector<std::int64_t> probes;
  std::string oracle;
  std::vector<std::int64_t> range;
  std::optional<std::int64_t> expert_threshold;
  std::string kb;
  double migration_ms = 120'000;
  double max_wait = 300'000;
  double jitter = 0;
  TimestampMs timestamp = 0;
};

void cmd_fit(const FitOpts& o, const Common& c, std::ostream& out) {
  Run run("fit-threshold", c, out);
  auto& cfg = run.config();
  cfg["param"] = o.param;
  KnowledgeBase kb;
  if (!o.kb.empty()) {
    const auto text = read_file(o.kb, "kb");
    cfg["kb"] = file_digest(text);
    kb = KnowledgeBase::from_json(text);
  }
  auto entry = kb.get(o.param);
  if (!entry) {
    IntRange range{1, 10'000};
    if (!o.range.empty()) {
      if (o.range.size() != 2 || o.range[0] > o.range[1]) throw ConfigError("range: expected lo,hi with lo <= hi");
      range = {o.range[0], o.range[1]};
    }
    const auto expert = o.expert_threshold.value_or(range.lo);
    if (!range.contains(expert)) throw ConfigError("expert-threshold: outside the valid range");
    kb.seed(o.param, range, expert, 0, o.probes.empty() ? std::vector<std::int64_t>{1, 2, 3} : o.probes);
    entry = kb.get(o.param);
  } else if (!o.range.empty()) {
    throw ConfigError("range: the KB already defines a range for '" + o.param + "'");
  }
  std::vector<std::int64_t> probes = o.probes.empty() ? entry->probes : o.probes;
  std::erase_if(probes, [&](std::int64_t p) { return !entry->valid_range.contains(p); });
  if (o.jitter < 0 || o.jitter >= 1) throw ConfigError("jitter: must lie in [0, 1)");

  if (o.oracle.starts_with("affine:")) {
    cfg["oracle"] = o.oracle;
  } else {
    cfg["oracle"] = file_digest(read_file(o.oracle, "oracle"));
  }
  cfg["probes"] = probes;
  cfg["range"] = {entry->valid_range.lo, entry->valid_range.hi};
  cfg["migration_ms"] = o.migration_ms;
  cfg["max_wait"] = o.max_wait;
  cfg["jitter"] = o.jitter;
  cfg["seed"] = c.seed;
  cfg["timestamp"] = o.timestamp;

  std::shared_ptr<TimingOracle> oracle;
  try {
    oracle = make_oracle(o.oracle, o.jitter, static_cast<std::uint64_t>(c.seed));
  } catch (const Error& e) {
    throw ConfigError(std::string("oracle: ") + e.what());
  }
  ProbeBudget budget;
  budget.migration_time = o.migration_ms;
  budget.max_wait = o.max_wait;

  // The oracle stands in for the cell, so a synthetic cell of interest carries the parameter.
  CellKnowledge cell;
  cell.is_cell_of_interest = true;
  cell.parameters[o.param] = probes.empty() ? entry->valid_range.lo : probes.front();
  const auto dataset = build_or_update_dataset(cell, o.param, probes, *oracle, budget);
  const auto models = fit_models(dataset);
  const auto fit = intersect(models.local, models.remote, entry->valid_range);
  kb.update(o.param, fit, o.timestamp);

  ojson j;
  j["config_digest"] = run.digest();
  j["parameter"] = o.param;
  j["local"] = lin_json(models.local);
  j["remote"] = lin_json(models.remote);
  j["slope_ratio"] = models.remote.slope != 0 ? ojson(models.local.slope / models.remote.slope) : ojson(nullptr);
  j["crossing"] = fit.crossing;
  j["threshold"] = fit.threshold;
  j["regime"] = std::string(to_string(fit.regime));
  j["reason"] = fit.reason;
  j["warnings"] = dataset.warnings;
  auto& samples = j["samples"] = ojson::array();
  for (const auto& s : dataset.samples) {
    samples.push_back({{"environment", std::string(to_string(s.environment))},
                       {"value", s.param_value},
                       {"median_ms", s.total_time},
                       {"repetitions", s.repetitions},
                       {"stable", s.stable}});
  }
  j["kb"] = ojson::parse(kb.to_json());
  run.emit("threshold.json", j.dump(2));
  run.finish();
}

struct ReduceOpts {
  std::string state;
  std::string cell;
  bool compress = false;
};

void cmd_reduce(const ReduceOpts& o, const Common& c, std::ostream& out) {
  Run run("reduce", c, out);
  const auto state_text = read_file(o.state, "state");
  const auto cell_text = read_file(o.cell, "cell");
  run.config()["state"] = file_digest(state_text);
  run.config()["cell"] = file_digest(cell_text);
  run.config()["compress"] = o.compress;
  const auto st = state::state_from_json(state_text);
  const auto usage = cell::extract_usage(cell::parse_cell(cell_text));
  const auto result = state::reduce_for_cell(st, usage, o.compress);

  ojson j;
  j["config_digest"] = run.digest();
  j["full_state_bytes"] = st.total_bytes();
  if (const auto* fb = std::get_if<state::LocalFallback>(&result)) {
    j["local_fallback"] = true;
    j["offending"] = fb->offending;
  } else {
    const auto& p = std::get<state::MigrationPayload>(result);
    j["local_fallback"] = false;
    j["manifest"] = ojson::parse(state::manifest_json(p));
    j["reduction_ratio"] =
        p.total_bytes > 0 ? ojson(static_cast<double>(st.total_bytes()) / static_cast<double>(p.total_bytes))
                          : ojson(nullptr);
    if (p.compressed_bytes) {
      j["compressed_ratio"] = *p.compressed_bytes > 0
                                  ? ojson(static_cast<double>(st.total_bytes()) /
                                          static_cast<double>(*p.compressed_bytes))
                                  : ojson(nullptr);
    }
  }
  run.emit("manifest.json", j.dump(2));
  run.finish();
}

struct ParseOpts {
  std::string cell;
  bool dump_ast = false;
};

void cmd_parse(const ParseOpts& o, const Common& c, std::ostream& out) {
  Run run("parse", c, out);
  const auto text = read_file(o.cell, "cell");
  run.config()["cell"] = file_digest(text);
  run.config()["dump_ast"] = o.dump_ast;
  const auto ast = cell::parse_cell(text);
  ojson j;
  j["config_digest"] = run.digest();
  if (o.dump_ast) {
    j["ast"] = ojson::parse(cell::ast_json(ast));
    run.emit("ast.json", j.dump(2));
  } else {
    j["usage"] = ojson::parse(cell::usage_json(cell::extract_usage(ast)));
    run.emit("usage.json", j.dump(2));
  }
  run.finish();
}

int exit_code_for(const Error& e) {
  return e.code() == ErrorCode::InvalidArgument ? kExitConfig : kExitInput;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace-driven simulator for migrating notebook cells between local and remote runtimes",
               "nbmig"};
  // The first argument names the subcommand whose options a config file fills in.
  app.config_formatter(std::make_shared<JsonConfig>(args.empty() ? std::string{} : args.front()));
  app.set_config("--config", "", "JSON file with option values; flags given on the command line win");
  app.require_subcommand(1);

  Common common;

  IngestOpts ingest;
  auto* s_ingest = app.add_subcommand("ingest", "Parse a telemetry trace and report what it holds");
  add_common(s_ingest, common);
  s_ingest->add_option("--trace", ingest.trace, "Newline-delimited JSON trace")->required();
  s_ingest->add_flag("--strict", common.strict, "Fail on the first malformed line");

  ContextOpts context;
  auto* s_context = app.add_subcommand("context", "Score the cell sequences found in a trace");
  add_common(s_context, common);
  s_context->add_option("--trace", context.trace, "Newline-delimited JSON trace")->required();
  s_context->add_flag("--strict", common.strict, "Fail on the first malformed line");
  s_context->add_option("--active", context.active, "Also predict the block starting at this cell order");
  s_context->add_option("--min-score", context.min_score, "Minimum score for a predicted block");

  SimulateOpts sim;
  auto* s_sim = app.add_subcommand("simulate", "Replay a trace under one or all migration policies");
  add_common(s_sim, common);
  s_sim->add_option("--trace", sim.trace, "Newline-delimited JSON trace")->required();
  s_sim->add_flag("--strict", common.strict, "Fail on the first malformed line");
  s_sim->add_option("--policy", sim.policy, "local, remote, single, block or all")->capture_default_str();
  s_sim->add_option("--speedup", sim.speedup, "Remote speedup factor")->capture_default_str();
  s_sim->add_option("--migration-ms", sim.migration_ms, "Fixed round-trip migration time in ms");
  s_sim->add_option("--up-share", sim.up_share, "Share of the migration time charged on the way up")
      ->capture_default_str();
  s_sim->add_option("--state", sim.state, "State fixture; derives migration times instead of --migration-ms");
  s_sim->add_option("--cells", sim.cells, "JSON object mapping cell order to cell source (with --state)");
  s_sim->add_option("--bandwidth", sim.bandwidth, "Bytes per ms (with --state)");
  s_sim->add_option("--latency", sim.latency, "Per-transfer latency in ms (with --state)");
  s_sim->add_option("--codec-rate", sim.codec_rate, "Compression throughput in bytes per ms");
  s_sim->add_flag("--compress", sim.compress, "Compress migrated state");
  s_sim->add_option("--local-times", sim.local_times, "JSON object mapping cell order to local ms");
  s_sim->add_option("--min-score", sim.min_score, "Minimum score for a predicted block");
  s_sim->add_flag("--no-block-guard", sim.no_block_guard, "Migrate predicted blocks even when they do not pay off");
  s_sim->add_flag("--remote-free-migration", sim.remote_free, "Remote-only policy pays no migration");
  s_sim->add_flag("--explain", sim.explain, "Emit one JSON line per decision");

  SweepOpts sw;
  auto* s_sweep = app.add_subcommand("sweep", "Evaluate all policies over a migration time x speedup grid");
  add_common(s_sweep, common);
  s_sweep->add_option("--trace", sw.trace, "Newline-delimited JSON trace")->required();
  s_sweep->add_flag("--strict", common.strict, "Fail on the first malformed line");
  s_sweep->add_option("--speedups", sw.speedups, "Comma-separated remote speedups")->delimiter(',')->required();
  s_sweep->add_option("--migrations", sw.migrations, "Comma-separated round-trip migration times in ms")
      ->delimiter(',')
      ->required();
  s_sweep->add_option("--up-share", sw.up_share, "Share of the migration time charged on the way up")
      ->capture_default_str();
  s_sweep->add_option("--local-times", sw.local_times, "JSON object mapping cell order to local ms");
  s_sweep->add_option("--min-score", sw.min_score, "Minimum score for a predicted block");
  s_sweep->add_flag("--no-block-guard", sw.no_block_guard, "Migrate predicted blocks even when they do not pay off");

  FitOpts fit;
  auto* s_fit = app.add_subcommand("fit-threshold", "Fit the break-even threshold of a cell parameter");
  add_common(s_fit, common);
  s_fit->add_option("--param", fit.param, "Parameter name, e.g. epochs")->required();
  s_fit->add_option("--probes", fit.probes, "Comma-separated probe values")->delimiter(',');
  s_fit->add_option("--oracle", fit.oracle,
                    "affine:local_slope,local_icept,remote_slope,remote_icept or a timing CSV")
      ->required();
  s_fit->add_option("--range", fit.range, "Valid range lo,hi when the KB has no entry")->delimiter(',');
  s_fit->add_option("--expert-threshold", fit.expert_threshold, "Seed threshold when the KB has no entry");
  s_fit->add_option("--kb", fit.kb, "Knowledge base JSON to start from");
  s_fit->add_option("--migration-ms", fit.migration_ms, "One-way migration time paid by the remote probes")
      ->capture_default_str();
  s_fit->add_option("--max-wait", fit.max_wait, "Wall-clock budget for probing in ms")->capture_default_str();
  s_fit->add_option("--jitter", fit.jitter, "Relative measurement noise in [0, 1)");
  s_fit->add_option("--timestamp", fit.timestamp, "Provenance timestamp (ms since epoch) for the update");

  ReduceOpts red;
  auto* s_red = app.add_subcommand("reduce", "Compute the reduced state a cell needs");
  add_common(s_red, common);
  s_red->add_option("--state", red.state, "State fixture JSON")->required();
  s_red->add_option("--cell", red.cell, "Cell source file")->required();
  s_red->add_flag("--compress", red.compress, "Also report the compressed payload size");

  ParseOpts parse;
  auto* s_parse = app.add_subcommand("parse", "Parse a cell and print its name usage or AST");
  add_common(s_parse, common);
  s_parse->add_option("cell", parse.cell, "Cell source file")->required();
  s_parse->add_flag("--dump-ast", parse.dump_ast, "Print the AST instead of the name usage");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (const char* env = std::getenv("NBMIG_SEED")) {
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), common.seed);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      err << "config error: NBMIG_SEED: not an integer\n";
      return kExitConfig;
    }
  }

  try {
    if (*s_ingest) cmd_ingest(ingest, common, out);
    if (*s_context) cmd_context(context, common, out);
    if (*s_sim) cmd_simulate(sim, common, out);
    if (*s_sweep) cmd_sweep(sw, common, out);
    if (*s_fit) cmd_fit(fit, common, out);
    if (*s_red) cmd_reduce(red, common, out);
    if (*s_parse) cmd_parse(parse, common, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    err << qualified_name(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace nbmig::cli
