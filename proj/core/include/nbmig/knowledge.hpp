#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "nbmig/trace.hpp"

namespace nbmig {

// ---------------------------------------------------------------------------
// Parameter extraction
// ---------------------------------------------------------------------------

struct ExtractionRules {
  // Method names whose calls make a cell "of interest" ("model.fit" matches "fit").
  std::set<std::string> methods_of_interest = {"fit"};
  // Keyword arguments the knowledge base knows how to handle.
  std::set<std::string> known_parameters = {"epochs", "batch_size"};
};

struct CellProvenance {
  std::string notebook_id;
  std::string cell_id;
  std::map<std::string, std::int64_t> parameters;
  TimestampMs timestamp = 0;
};

struct CellKnowledge {
  // Known parameters passed as integer literals.
  std::map<std::string, std::int64_t> parameters;
  // Known parameters passed as something other than an integer literal.
  std::set<std::string> unextractable;
  bool is_cell_of_interest = false;
  // Set when the cell failed to parse; such cells are skipped.
  std::optional<std::string> parse_error;
  CellProvenance provenance;

  bool mentions(const std::string& parameter) const {
    return parameters.contains(parameter) || unextractable.contains(parameter);
  }
};

CellKnowledge notebook_to_kb(std::string_view cell_source, const ExtractionRules& rules = {},
                             CellProvenance ref = {});

// ---------------------------------------------------------------------------
// Timing oracles
// ---------------------------------------------------------------------------

enum class Environment : std::uint8_t { Local, Remote };
std::string_view to_string(Environment env) noexcept;

// One measurement of the cell with `value` as parameter. Remote measurements include
// the migration time. Implementations must tolerate concurrent calls for different
// environments.
class TimingOracle {
 public:
  virtual ~TimingOracle() = default;
  virtual Millis measure(Environment env, std::int64_t value) = 0;
};

struct LinearModel {
  double slope = 0;      // ms per parameter unit
  double intercept = 0;  // ms

  double predict(double x) const noexcept { return slope * x + intercept; }
};

class AffineOracle final : public TimingOracle {
 public:
  AffineOracle(LinearModel local, LinearModel remote) : local_(local), remote_(remote) {}
  Millis measure(Environment env, std::int64_t value) override;

 private:
  LinearModel local_;
  LinearModel remote_;
};

// Multiplies another oracle's readings by a uniform factor in [1 - amplitude, 1 + amplitude].
// Each environment draws from its own seeded stream so results do not depend on
// thread interleaving.
class JitterOracle final : public TimingOracle {
 public:
  JitterOracle(std::shared_ptr<TimingOracle> inner, double amplitude, std::uint64_t seed);
  Millis measure(Environment env, std::int64_t value) override;

 private:
  std::shared_ptr<TimingOracle> inner_;
  double amplitude_;
  std::mutex mu_;
  std::mt19937_64 local_rng_;
  std::mt19937_64 remote_rng_;
};

// Replays recorded timings; repeated requests for the same (environment, value)
// cycle through the recorded measurements.
class ReplayOracle final : public TimingOracle {
 public:
  // CSV rows "environment,param_value,total_ms"; an optional header row is skipped.
  static ReplayOracle from_csv(std::string_view csv);

  ReplayOracle() = default;
  ReplayOracle(ReplayOracle&& other) noexcept
      : recorded_(std::move(other.recorded_)), cursor_(std::move(other.cursor_)) {}

  void add(Environment env, std::int64_t value, Millis total);
  Millis measure(Environment env, std::int64_t value) override;

 private:
  std::mutex mu_;
  std::map<std::pair<Environment, std::int64_t>, std::vector<Millis>> recorded_;
  std::map<std::pair<Environment, std::int64_t>, std::size_t> cursor_;
};

// "affine:local_slope,local_icept,remote_slope,remote_icept" or a path to a CSV of
// recorded timings. A positive jitter wraps the result in a JitterOracle.
std::shared_ptr<TimingOracle> make_oracle(std::string_view spec, double jitter = 0.0,
                                          std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Datasets and fitting
// ---------------------------------------------------------------------------

struct TimingSample {
  std::int64_t param_value = 0;
  Environment environment = Environment::Local;
  Millis total_time = 0;  // median of the measurements
  std::size_t repetitions = 0;
  Millis stdev = 0;
  bool stable = false;
  std::vector<Millis> measurements;

  bool operator==(const TimingSample&) const = default;
};

struct TimingDataset {
  std::string parameter;
  std::vector<TimingSample> samples;
  std::vector<std::string> warnings;
  bool budget_exhausted = false;
  bool was_modified = false;

  std::vector<TimingSample> stable_samples(Environment env) const;
};

struct ProbeBudget {
  // One-way migration time, paid once per dataset build by the remote job stream.
  Millis migration_time = 120'000;
  // Wall-clock limit for the two job streams running side by side.
  Millis max_wait = 300'000;
  std::size_t min_repetitions = 2;
  std::size_t max_repetitions = 5;
  // A sample is stable when stdev <= stability_ratio * median.
  double stability_ratio = 0.10;
};

// Measures every probe in both environments until stable or out of repetitions.
// Probes are run smallest first; those that would finish after max_wait are dropped.
// Samples from `previous` are kept unless re-measured. Throws Error(EmptyDataset)
// when either environment ends with fewer than two stable probe values.
TimingDataset build_or_update_dataset(const CellKnowledge& cell, const std::string& parameter,
                                      std::span<const std::int64_t> probes, TimingOracle& oracle,
                                      const ProbeBudget& budget = {},
                                      const TimingDataset* previous = nullptr);

// Ordinary least squares on (param_value, median time) of the stable samples.
// Throws Error(InsufficientData) with fewer than two distinct values.
LinearModel fit_line(std::span<const TimingSample> samples);

struct FittedModels {
  LinearModel local;
  LinearModel remote;
};

FittedModels fit_models(const TimingDataset& dataset);

struct IntRange {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  bool contains(std::int64_t v) const noexcept { return v >= lo && v <= hi; }
  std::int64_t clamp(std::int64_t v) const noexcept { return v < lo ? lo : (v > hi ? hi : v); }
  bool operator==(const IntRange&) const = default;
};

// How a threshold turns into a decision.
enum class Regime : std::uint8_t {
  Above,   // migrate when value > threshold
  Below,   // migrate when value <= threshold (remote line grows faster)
  Always,  // remote wins over the whole valid range
  Never,   // remote never wins within the valid range
};
std::string_view to_string(Regime regime) noexcept;
std::optional<Regime> parse_regime(std::string_view name) noexcept;

struct ThresholdFit {
  double crossing = 0;  // continuous intersection of the two lines
  std::int64_t threshold = 0;
  Regime regime = Regime::Above;
  std::string reason;
};

// threshold = floor(crossing) clamped to the range. Throws Error(ParallelLines).
ThresholdFit intersect(const LinearModel& local, const LinearModel& remote, const IntRange& range);

bool decide(Regime regime, std::int64_t threshold, std::int64_t value) noexcept;

// ---------------------------------------------------------------------------
// Knowledge base
// ---------------------------------------------------------------------------

enum class ThresholdSource : std::uint8_t { Expert, Fitted };

struct ProvenanceEntry {
  TimestampMs timestamp = 0;
  ThresholdSource source = ThresholdSource::Expert;
  std::int64_t threshold = 0;
  Regime regime = Regime::Above;
  std::optional<double> crossing;

  bool operator==(const ProvenanceEntry&) const = default;
};

struct KbEntry {
  std::string parameter;
  IntRange valid_range;
  std::int64_t threshold = 0;
  Regime regime = Regime::Above;
  std::vector<std::int64_t> probes = {1, 2, 3};
  // Append-only; the expert seed comes first.
  std::vector<ProvenanceEntry> provenance;
};

// Single-writer store. Readers get whole-entry copies, so they see either the old or
// the new threshold.
class KnowledgeBase {
 public:
  KnowledgeBase() = default;
  KnowledgeBase(const KnowledgeBase& other);
  KnowledgeBase& operator=(const KnowledgeBase& other);

  void seed(const std::string& parameter, IntRange valid_range, std::int64_t threshold,
            TimestampMs timestamp, std::vector<std::int64_t> probes = {1, 2, 3});
  void update(const std::string& parameter, const ThresholdFit& fit, TimestampMs timestamp);

  std::optional<KbEntry> get(const std::string& parameter) const;
  std::vector<std::string> known_parameters() const;

  std::string to_json(int indent = 2) const;
  static KnowledgeBase from_json(std::string_view text);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, KbEntry> entries_;
};

struct KnowledgeVerdict {
  bool migrate = false;
  // No usable knowledge; the caller should fall back to the performance-aware policy.
  bool fallback_to_performance = false;
  std::string parameter;
  std::string explanation;
};

KnowledgeVerdict should_migrate_knowledge(const CellKnowledge& cell, const KnowledgeBase& kb);

// ---------------------------------------------------------------------------
// Background update loop
// ---------------------------------------------------------------------------

struct CellSource {
  std::string cell_id;
  std::string source;
};

struct NotebookEvent {
  std::string notebook_id;
  TimestampMs timestamp = 0;
  std::vector<CellSource> cells;
};

struct KbUpdate {
  std::string notebook_id;
  std::string cell_id;
  std::string parameter;
  FittedModels models;
  ThresholdFit fit;
  TimestampMs timestamp = 0;
};

struct KbLoopIssue {
  std::string notebook_id;
  std::string cell_id;
  std::string message;
};

// Multi-producer, single-consumer queue.
class EventQueue {
 public:
  void push(NotebookEvent event);
  void close();
  // Blocks until an event arrives; empty once closed and drained.
  std::optional<NotebookEvent> pop();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<NotebookEvent> items_;
  bool closed_ = false;
};

// Whitespace- and comment-insensitive digest of a cell's source.
std::uint64_t normalized_source_hash(std::string_view source);

class KbUpdater {
 public:
  KbUpdater(KnowledgeBase& kb, std::shared_ptr<TimingOracle> oracle, ProbeBudget budget = {},
            ExtractionRules rules = {});

  // Per-cell failures are recorded in issues() and never abort the event.
  std::vector<KbUpdate> process(const NotebookEvent& event);

  // Consumes until the queue is closed and drained.
  void run(EventQueue& queue, const std::function<void(const KbUpdate&)>& sink = {});

  std::size_t dataset_builds() const noexcept { return builds_; }
  const std::vector<KbLoopIssue>& issues() const noexcept { return issues_; }

 private:
  KnowledgeBase& kb_;
  std::shared_ptr<TimingOracle> oracle_;
  ProbeBudget budget_;
  ExtractionRules rules_;
  std::size_t builds_ = 0;
  std::map<std::tuple<std::string, std::string, std::string>, std::uint64_t> seen_;
  std::map<std::string, TimingDataset> datasets_;
  std::vector<KbLoopIssue> issues_;
};

}  // namespace nbmig
