#include "nbmig/knowledge.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>

#include <json.hpp>

#include "nbmig/cellparse.hpp"
#include "nbmig/error.hpp"
#include "nbmig/hash.hpp"

namespace nbmig {

namespace {

using nlohmann::json;

std::optional<std::int64_t> parse_int(std::string_view text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_double(std::string_view text) {
  // from_chars for double is available but rejects leading '+'.
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Millis median_of(std::vector<Millis> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

Millis sample_stdev(const std::vector<Millis>& v) {
  if (v.size() < 2) return 0;
  double mean = 0;
  for (auto x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (auto x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct StreamResult {
  std::vector<TimingSample> samples;  // one per completed probe, ascending
  std::vector<Millis> finished_at;    // elapsed stream time when each probe completed
};

StreamResult run_stream(Environment env, std::span<const std::int64_t> probes, TimingOracle& oracle,
                        const ProbeBudget& budget) {
  StreamResult out;
  Millis elapsed = env == Environment::Remote ? budget.migration_time : 0.0;
  for (auto value : probes) {
    TimingSample s;
    s.param_value = value;
    s.environment = env;
    while (s.measurements.size() < budget.max_repetitions) {
      const Millis t = oracle.measure(env, value);
      s.measurements.push_back(t);
      // The remote state is migrated once; repetitions only pay for execution.
      elapsed += env == Environment::Remote ? std::max<Millis>(0.0, t - budget.migration_time) : t;
      if (s.measurements.size() >= budget.min_repetitions) {
        const Millis med = median_of(s.measurements);
        if (sample_stdev(s.measurements) <= budget.stability_ratio * med) break;
      }
    }
    s.repetitions = s.measurements.size();
    s.total_time = median_of(s.measurements);
    s.stdev = sample_stdev(s.measurements);
    s.stable = s.repetitions >= budget.min_repetitions && s.stdev <= budget.stability_ratio * s.total_time;
    out.samples.push_back(std::move(s));
    out.finished_at.push_back(elapsed);
    if (elapsed > budget.max_wait) break;
  }
  return out;
}

json provenance_json(const ProvenanceEntry& p) {
  json j;
  j["timestamp"] = p.timestamp;
  j["source"] = p.source == ThresholdSource::Expert ? "expert" : "fitted";
  j["threshold"] = p.threshold;
  j["regime"] = std::string(to_string(p.regime));
  if (p.crossing) j["crossing"] = *p.crossing;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

CellKnowledge notebook_to_kb(std::string_view cell_source, const ExtractionRules& rules,
                             CellProvenance ref) {
  CellKnowledge out;
  out.provenance = std::move(ref);
  cell::NameUsage usage;
  try {
    usage = cell::extract_usage(cell::parse_cell(cell_source));
  } catch (const cell::SyntaxError& e) {
    out.parse_error = e.what();
    return out;
  }
  for (const auto& [callee, args] : usage.kwargs) {
    const auto dot = callee.rfind('.');
    const std::string method = dot == std::string::npos ? callee : callee.substr(dot + 1);
    if (!rules.methods_of_interest.contains(method)) continue;
    for (const auto& [name, value] : args) {
      if (!rules.known_parameters.contains(name)) continue;
      out.is_cell_of_interest = true;
      std::optional<std::int64_t> v;
      if (value.is_literal && value.literal == cell::LiteralKind::Int) v = parse_int(value.text);
      if (v) {
        out.parameters[name] = *v;
        out.unextractable.erase(name);
      } else if (!out.parameters.contains(name)) {
        out.unextractable.insert(name);
      }
    }
  }
  out.provenance.parameters = out.parameters;
  return out;
}

std::string_view to_string(Environment env) noexcept {
  return env == Environment::Local ? "local" : "remote";
}

Millis AffineOracle::measure(Environment env, std::int64_t value) {
  const auto& m = env == Environment::Local ? local_ : remote_;
  return m.predict(static_cast<double>(value));
}

JitterOracle::JitterOracle(std::shared_ptr<TimingOracle> inner, double amplitude, std::uint64_t seed)
    : inner_(std::move(inner)),
      amplitude_(amplitude),
      local_rng_(seed * 2 + 1),
      remote_rng_(seed * 2 + 2) {}

Millis JitterOracle::measure(Environment env, std::int64_t value) {
  const Millis base = inner_->measure(env, value);
  double u = 0;
  {
    std::lock_guard lock(mu_);
    auto& rng = env == Environment::Local ? local_rng_ : remote_rng_;
    u = std::uniform_real_distribution<double>(-amplitude_, amplitude_)(rng);
  }
  return base * (1.0 + u);
}

ReplayOracle ReplayOracle::from_csv(std::string_view csv) {
  ReplayOracle oracle;
  std::size_t line_no = 0;
  for (const auto& line : split(csv, '\n')) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto cols = split(line, ',');
    if (cols.size() != 3) {
      throw Error(ErrorCode::InvalidArgument,
                  "timing CSV line " + std::to_string(line_no) + ": expected 3 columns");
    }
    Environment env;
    if (cols[0] == "local") {
      env = Environment::Local;
    } else if (cols[0] == "remote") {
      env = Environment::Remote;
    } else if (line_no == 1 || cols[0] == "environment") {
      continue;  // header
    } else {
      throw Error(ErrorCode::InvalidArgument,
                  "timing CSV line " + std::to_string(line_no) + ": unknown environment '" + cols[0] + "'");
    }
    const auto value = parse_int(cols[1]);
    const auto total = parse_double(cols[2]);
    if (!value || !total) {
      throw Error(ErrorCode::InvalidArgument,
                  "timing CSV line " + std::to_string(line_no) + ": bad number");
    }
    oracle.add(env, *value, *total);
  }
  return oracle;
}

void ReplayOracle::add(Environment env, std::int64_t value, Millis total) {
  std::lock_guard lock(mu_);
  recorded_[{env, value}].push_back(total);
}

Millis ReplayOracle::measure(Environment env, std::int64_t value) {
  std::lock_guard lock(mu_);
  auto it = recorded_.find({env, value});
  if (it == recorded_.end() || it->second.empty()) {
    throw Error(ErrorCode::InvalidArgument, "no recorded " + std::string(to_string(env)) +
                                                " timing for value " + std::to_string(value));
  }
  auto& cursor = cursor_[{env, value}];
  const Millis t = it->second[cursor % it->second.size()];
  ++cursor;
  return t;
}

std::shared_ptr<TimingOracle> make_oracle(std::string_view spec, double jitter, std::uint64_t seed) {
  std::shared_ptr<TimingOracle> oracle;
  if (spec.starts_with("affine:")) {
    const auto parts = split(spec.substr(7), ',');
    std::vector<double> v;
    for (const auto& p : parts) {
      auto d = parse_double(p);
      if (!d) throw Error(ErrorCode::InvalidArgument, "bad affine oracle coefficient '" + p + "'");
      v.push_back(*d);
    }
    if (v.size() != 4) {
      throw Error(ErrorCode::InvalidArgument,
                  "affine oracle needs local_slope,local_icept,remote_slope,remote_icept");
    }
    oracle = std::make_shared<AffineOracle>(LinearModel{v[0], v[1]}, LinearModel{v[2], v[3]});
  } else {
    std::ifstream in{std::string(spec)};
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open timing CSV '" + std::string(spec) + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    oracle = std::make_shared<ReplayOracle>(ReplayOracle::from_csv(buf.str()));
  }
  if (jitter > 0) oracle = std::make_shared<JitterOracle>(oracle, jitter, seed);
  return oracle;
}

// ---------------------------------------------------------------------------

std::vector<TimingSample> TimingDataset::stable_samples(Environment env) const {
  std::vector<TimingSample> out;
  for (const auto& s : samples) {
    if (s.environment == env && s.stable) out.push_back(s);
  }
  return out;
}

TimingDataset build_or_update_dataset(const CellKnowledge& cell, const std::string& parameter,
                                      std::span<const std::int64_t> probes, TimingOracle& oracle,
                                      const ProbeBudget& budget, const TimingDataset* previous) {
  if (!cell.is_cell_of_interest || !cell.mentions(parameter)) {
    throw Error(ErrorCode::InvalidArgument,
                "cell does not pass '" + parameter + "' to a method of interest");
  }
  if (budget.min_repetitions < 2 || budget.max_repetitions < budget.min_repetitions) {
    throw Error(ErrorCode::InvalidArgument, "repetition limits must satisfy 2 <= min <= max");
  }
  std::vector<std::int64_t> sorted(probes.begin(), probes.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.empty()) throw Error(ErrorCode::EmptyDataset, "no probe values");

  // Both environments run side by side.
  auto remote_job = std::async(std::launch::async, [&] {
    return run_stream(Environment::Remote, sorted, oracle, budget);
  });
  const auto local = run_stream(Environment::Local, sorted, oracle, budget);
  const auto remote = remote_job.get();

  TimingDataset ds;
  ds.parameter = parameter;
  if (previous != nullptr) {
    ds.samples = previous->samples;
    ds.warnings = previous->warnings;
  }

  std::vector<TimingSample> fresh;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool measured = i < local.samples.size() && i < remote.samples.size();
    const Millis wall = measured ? std::max(local.finished_at[i], remote.finished_at[i]) : 0;
    if (!measured || wall > budget.max_wait) {
      for (std::size_t j = i; j < sorted.size(); ++j) {
        ds.warnings.push_back("probe " + std::to_string(sorted[j]) + " dropped: exceeds max_wait of " +
                              std::to_string(static_cast<long long>(budget.max_wait)) + " ms");
      }
      ds.budget_exhausted = true;
      break;
    }
    fresh.push_back(local.samples[i]);
    fresh.push_back(remote.samples[i]);
  }

  for (auto& s : fresh) {
    if (!s.stable) {
      ds.warnings.push_back("unstable sample: " + std::string(to_string(s.environment)) + " value " +
                            std::to_string(s.param_value));
    }
    auto it = std::find_if(ds.samples.begin(), ds.samples.end(), [&](const TimingSample& o) {
      return o.param_value == s.param_value && o.environment == s.environment;
    });
    if (it == ds.samples.end()) {
      ds.samples.push_back(std::move(s));
      ds.was_modified = true;
    } else if (!(it->total_time == s.total_time && it->stable == s.stable)) {
      *it = std::move(s);
      ds.was_modified = true;
    }
  }
  std::sort(ds.samples.begin(), ds.samples.end(), [](const auto& a, const auto& b) {
    return std::tie(a.environment, a.param_value) < std::tie(b.environment, b.param_value);
  });

  for (auto env : {Environment::Local, Environment::Remote}) {
    if (ds.stable_samples(env).size() < 2) {
      throw Error(ErrorCode::EmptyDataset, "fewer than two stable " + std::string(to_string(env)) +
                                               " probe values for '" + parameter + "'");
    }
  }
  return ds;
}

LinearModel fit_line(std::span<const TimingSample> samples) {
  std::set<std::int64_t> distinct;
  for (const auto& s : samples) distinct.insert(s.param_value);
  if (distinct.size() < 2) {
    throw Error(ErrorCode::InsufficientData, "need at least two distinct parameter values");
  }
  const double n = static_cast<double>(samples.size());
  double mx = 0, my = 0;
  for (const auto& s : samples) {
    mx += static_cast<double>(s.param_value);
    my += s.total_time;
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (const auto& s : samples) {
    const double dx = static_cast<double>(s.param_value) - mx;
    sxy += dx * (s.total_time - my);
    sxx += dx * dx;
  }
  LinearModel m;
  m.slope = sxy / sxx;
  m.intercept = my - m.slope * mx;
  return m;
}

FittedModels fit_models(const TimingDataset& dataset) {
  const auto local = dataset.stable_samples(Environment::Local);
  const auto remote = dataset.stable_samples(Environment::Remote);
  return FittedModels{fit_line(local), fit_line(remote)};
}

std::string_view to_string(Regime regime) noexcept {
  switch (regime) {
    case Regime::Above: return "above";
    case Regime::Below: return "below";
    case Regime::Always: return "always";
    case Regime::Never: return "never";
  }
  return "unknown";
}

std::optional<Regime> parse_regime(std::string_view name) noexcept {
  for (auto r : {Regime::Above, Regime::Below, Regime::Always, Regime::Never}) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

ThresholdFit intersect(const LinearModel& local, const LinearModel& remote, const IntRange& range) {
  if (range.lo > range.hi) throw Error(ErrorCode::InvalidArgument, "empty valid range");
  const double ds = local.slope - remote.slope;
  const double scale = std::max({std::abs(local.slope), std::abs(remote.slope), 1.0});
  if (std::abs(ds) <= 1e-12 * scale) {
    throw Error(ErrorCode::ParallelLines, "local and remote models have the same slope");
  }
  ThresholdFit fit;
  fit.crossing = (remote.intercept - local.intercept) / ds;
  const double lo = static_cast<double>(range.lo);
  const double hi = static_cast<double>(range.hi);
  const auto floored = [&] {
    const double f = std::floor(fit.crossing);
    if (f < lo) return range.lo;
    if (f > hi) return range.hi;
    return static_cast<std::int64_t>(f);
  };

  if (ds > 0) {
    // Local grows faster: remote wins above the crossing.
    if (fit.crossing < lo) {
      fit.regime = Regime::Always;
      fit.threshold = range.lo;
      fit.reason = "crossing " + std::to_string(fit.crossing) +
                   " lies below the valid range; remote wins everywhere in range";
    } else {
      fit.regime = Regime::Above;
      fit.threshold = floored();
      fit.reason = "remote wins above the crossing " + std::to_string(fit.crossing);
      if (fit.crossing >= hi) fit.reason += " (beyond the valid range)";
    }
  } else {
    // Remote grows faster: remote can only win below the crossing.
    if (fit.crossing <= lo) {
      fit.regime = Regime::Never;
      fit.threshold = range.lo;
      fit.reason = "remote line grows faster and crosses at " + std::to_string(fit.crossing) +
                   "; remote never pays off in range";
    } else if (fit.crossing > hi) {
      fit.regime = Regime::Always;
      fit.threshold = range.lo;
      fit.reason = "crossing " + std::to_string(fit.crossing) +
                   " lies above the valid range; remote wins everywhere in range";
    } else {
      fit.regime = Regime::Below;
      const double f = std::floor(fit.crossing);
      fit.threshold = range.clamp(static_cast<std::int64_t>(f == fit.crossing ? f - 1 : f));
      fit.reason = "remote wins only below the crossing " + std::to_string(fit.crossing);
    }
  }
  return fit;
}

bool decide(Regime regime, std::int64_t threshold, std::int64_t value) noexcept {
  switch (regime) {
    case Regime::Above: return value > threshold;
    case Regime::Below: return value <= threshold;
    case Regime::Always: return true;
    case Regime::Never: return false;
  }
  return false;
}

// ---------------------------------------------------------------------------

KnowledgeBase::KnowledgeBase(const KnowledgeBase& other) {
  std::shared_lock lock(other.mu_);
  entries_ = other.entries_;
}

KnowledgeBase& KnowledgeBase::operator=(const KnowledgeBase& other) {
  if (this == &other) return *this;
  std::map<std::string, KbEntry> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.entries_;
  }
  std::unique_lock lock(mu_);
  entries_ = std::move(copy);
  return *this;
}

void KnowledgeBase::seed(const std::string& parameter, IntRange valid_range, std::int64_t threshold,
                         TimestampMs timestamp, std::vector<std::int64_t> probes) {
  if (valid_range.lo > valid_range.hi) throw Error(ErrorCode::InvalidArgument, "empty valid range");
  if (!valid_range.contains(threshold)) {
    throw Error(ErrorCode::InvalidArgument, "expert threshold outside the valid range");
  }
  KbEntry e;
  e.parameter = parameter;
  e.valid_range = valid_range;
  e.threshold = threshold;
  e.probes = std::move(probes);
  e.provenance.push_back({timestamp, ThresholdSource::Expert, threshold, Regime::Above, std::nullopt});
  std::unique_lock lock(mu_);
  entries_[parameter] = std::move(e);
}

void KnowledgeBase::update(const std::string& parameter, const ThresholdFit& fit, TimestampMs timestamp) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(parameter);
  if (it == entries_.end()) {
    throw Error(ErrorCode::UnknownParameter, "parameter '" + parameter + "' is not in the KB");
  }
  KbEntry next = it->second;
  next.threshold = next.valid_range.clamp(fit.threshold);
  next.regime = fit.regime;
  next.provenance.push_back({timestamp, ThresholdSource::Fitted, next.threshold, fit.regime, fit.crossing});
  it->second = std::move(next);
}

std::optional<KbEntry> KnowledgeBase::get(const std::string& parameter) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(parameter);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> KnowledgeBase::known_parameters() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::string KnowledgeBase::to_json(int indent) const {
  std::shared_lock lock(mu_);
  json root = json::object();
  for (const auto& [name, e] : entries_) {
    json j;
    j["range"] = {e.valid_range.lo, e.valid_range.hi};
    j["threshold"] = e.threshold;
    j["regime"] = std::string(to_string(e.regime));
    j["probes"] = e.probes;
    auto& prov = j["provenance"] = json::array();
    for (const auto& p : e.provenance) prov.push_back(provenance_json(p));
    root[name] = std::move(j);
  }
  return root.dump(indent);
}

KnowledgeBase KnowledgeBase::from_json(std::string_view text) {
  KnowledgeBase kb;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("KB file is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::InvalidArgument, "KB file must hold a JSON object");
  try {
    for (const auto& [name, j] : root.items()) {
      KbEntry e;
      e.parameter = name;
      const auto range = j.at("range");
      e.valid_range = {range.at(0).get<std::int64_t>(), range.at(1).get<std::int64_t>()};
      if (e.valid_range.lo > e.valid_range.hi) {
        throw Error(ErrorCode::InvalidArgument, "KB entry '" + name + "' has an empty range");
      }
      e.threshold = j.at("threshold").get<std::int64_t>();
      if (j.contains("regime")) {
        auto r = parse_regime(j["regime"].get<std::string>());
        if (!r) throw Error(ErrorCode::InvalidArgument, "KB entry '" + name + "' has an unknown regime");
        e.regime = *r;
      }
      if (j.contains("probes")) e.probes = j["probes"].get<std::vector<std::int64_t>>();
      if (j.contains("provenance")) {
        for (const auto& p : j["provenance"]) {
          ProvenanceEntry pe;
          pe.timestamp = p.at("timestamp").get<TimestampMs>();
          pe.source = p.at("source").get<std::string>() == "fitted" ? ThresholdSource::Fitted
                                                                     : ThresholdSource::Expert;
          pe.threshold = p.at("threshold").get<std::int64_t>();
          if (p.contains("regime")) pe.regime = parse_regime(p["regime"].get<std::string>()).value_or(Regime::Above);
          if (p.contains("crossing")) pe.crossing = p["crossing"].get<double>();
          e.provenance.push_back(pe);
        }
      }
      if (e.provenance.empty()) {
        e.provenance.push_back({0, ThresholdSource::Expert, e.threshold, e.regime, std::nullopt});
      }
      kb.entries_[name] = std::move(e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed KB entry: ") + e.what());
  }
  return kb;
}

KnowledgeVerdict should_migrate_knowledge(const CellKnowledge& cell, const KnowledgeBase& kb) {
  KnowledgeVerdict v;
  if (!cell.is_cell_of_interest) {
    v.fallback_to_performance = true;
    v.explanation = "not a cell of interest";
    return v;
  }
  for (const auto& [name, value] : cell.parameters) {
    const auto entry = kb.get(name);
    if (!entry) continue;
    const auto& last = entry->provenance.back();
    v.parameter = name;
    v.migrate = decide(entry->regime, entry->threshold, value);
    v.explanation = name + "=" + std::to_string(value) + (v.migrate ? " -> migrate" : " -> stay local") +
                    " (threshold " + std::to_string(entry->threshold) + ", regime " +
                    std::string(to_string(entry->regime)) + ", " +
                    (last.source == ThresholdSource::Expert ? "expert seed" : "fitted") + " at " +
                    std::to_string(last.timestamp) + ")";
    return v;
  }
  v.fallback_to_performance = true;
  v.explanation = "UnknownParameter: no extractable parameter with a KB entry";
  return v;
}

// ---------------------------------------------------------------------------

void EventQueue::push(NotebookEvent event) {
  {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(ErrorCode::InvalidArgument, "push on a closed event queue");
    items_.push_back(std::move(event));
  }
  cv_.notify_one();
}

void EventQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

std::optional<NotebookEvent> EventQueue::pop() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return closed_ || !items_.empty(); });
  if (items_.empty()) return std::nullopt;
  auto ev = std::move(items_.front());
  items_.pop_front();
  return ev;
}

std::uint64_t normalized_source_hash(std::string_view source) {
  Fnv1a h;
  try {
    for (const auto& tok : cell::tokenize(source)) {
      h.field(static_cast<std::uint64_t>(tok.kind));
      h.field(tok.text);
    }
  } catch (const cell::SyntaxError&) {
    return Fnv1a{}.field("raw").field(source).digest();
  }
  return h.digest();
}

KbUpdater::KbUpdater(KnowledgeBase& kb, std::shared_ptr<TimingOracle> oracle, ProbeBudget budget,
                     ExtractionRules rules)
    : kb_(kb), oracle_(std::move(oracle)), budget_(budget), rules_(std::move(rules)) {}

std::vector<KbUpdate> KbUpdater::process(const NotebookEvent& event) {
  std::vector<KbUpdate> updates;
  const auto known = kb_.known_parameters();
  ExtractionRules rules = rules_;
  rules.known_parameters.insert(known.begin(), known.end());

  for (const auto& cell : event.cells) {
    try {
      const auto knowledge = notebook_to_kb(
          cell.source, rules, CellProvenance{event.notebook_id, cell.cell_id, {}, event.timestamp});
      if (knowledge.parse_error) {
        issues_.push_back({event.notebook_id, cell.cell_id, "skipped: " + *knowledge.parse_error});
        continue;
      }
      if (!knowledge.is_cell_of_interest) continue;

      const auto digest = normalized_source_hash(cell.source);
      for (const auto& parameter : known) {
        if (!knowledge.mentions(parameter)) continue;
        auto key = std::make_tuple(event.notebook_id, cell.cell_id, parameter);
        if (auto it = seen_.find(key); it != seen_.end() && it->second == digest) continue;
        seen_[key] = digest;

        const auto entry = kb_.get(parameter);
        if (!entry) continue;
        std::vector<std::int64_t> probes;
        for (auto p : entry->probes) {
          if (entry->valid_range.contains(p)) probes.push_back(p);
        }
        const TimingDataset* previous = nullptr;
        if (auto it = datasets_.find(parameter); it != datasets_.end()) previous = &it->second;

        ++builds_;
        auto dataset = build_or_update_dataset(knowledge, parameter, probes, *oracle_, budget_, previous);
        for (const auto& w : dataset.warnings) issues_.push_back({event.notebook_id, cell.cell_id, w});
        const bool modified = dataset.was_modified;
        datasets_[parameter] = std::move(dataset);
        if (!modified) continue;

        const auto models = fit_models(datasets_[parameter]);
        ThresholdFit fit;
        try {
          fit = intersect(models.local, models.remote, entry->valid_range);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::ParallelLines) throw;
          issues_.push_back({event.notebook_id, cell.cell_id,
                             "parallel lines; keeping threshold " + std::to_string(entry->threshold)});
          continue;
        }
        kb_.update(parameter, fit, event.timestamp);
        updates.push_back({event.notebook_id, cell.cell_id, parameter, models, fit, event.timestamp});
      }
    } catch (const std::exception& e) {
      issues_.push_back({event.notebook_id, cell.cell_id, e.what()});
    }
  }
  return updates;
}

void KbUpdater::run(EventQueue& queue, const std::function<void(const KbUpdate&)>& sink) {
  while (auto event = queue.pop()) {
    for (const auto& update : process(*event)) {
      if (sink) sink(update);
    }
  }
}

}  // namespace nbmig
