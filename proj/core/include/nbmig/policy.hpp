#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nbmig/context.hpp"
#include "nbmig/trace.hpp"

namespace nbmig {

struct CostModel {
  std::map<CellOrder, Millis> local_time;
  double remote_speedup = 1.0;
  Millis migration_up = 0;
  Millis migration_down = 0;
  // Cells whose needed state cannot be serialized; they always run locally and
  // never pay for a migration.
  std::set<CellOrder> local_fallback;

  // Throws Error(UnknownCell).
  Millis local(CellOrder cell) const;
  Millis remote(CellOrder cell) const;
  Millis round_trip() const noexcept { return migration_up + migration_down; }

  // Throws Error(InvalidArgument) when speedup <= 0 or a time is negative.
  void validate() const;
};

// Median of the measured durations per cell order.
std::map<CellOrder, Millis> local_times_from_events(std::span<const ExecutionEvent> events);

enum class PolicyKind : std::uint8_t { LocalOnly, RemoteOnly, SingleCell, BlockCell };

inline constexpr PolicyKind kAllPolicies[] = {PolicyKind::LocalOnly, PolicyKind::RemoteOnly,
                                              PolicyKind::SingleCell, PolicyKind::BlockCell};

// "local", "remote", "single", "block".
std::string_view to_string(PolicyKind kind) noexcept;
std::optional<PolicyKind> parse_policy(std::string_view name) noexcept;

enum class Location : std::uint8_t { Local, Remote };
std::string_view to_string(Location loc) noexcept;

struct DecisionRecord {
  std::size_t index = 0;
  CellOrder cell_order = 0;
  Location location = Location::Local;
  Millis execution_time = 0;
  Millis migrations_charged = 0;
  std::string reason;
};

struct SimulationResult {
  PolicyKind policy = PolicyKind::LocalOnly;
  Millis total_time = 0;
  std::size_t migration_count = 0;
  std::vector<DecisionRecord> decisions;
};

struct MigrationVerdict {
  bool migrate = false;
  Millis remote_cost = 0;  // remote run time plus both migrations
  Millis local_cost = 0;
  std::string explanation;
};

// Remote execution pays off iff remote time + up + down < local time.
MigrationVerdict should_migrate_single(CellOrder cell, const CostModel& model);

// Returns the sequence statistics visible before event `prefix.size()`.
using StatsProvider = std::function<SequenceStats(std::span<const CellOrder> prefix)>;

// Stats recomputed from the executed prefix (no lookahead).
StatsProvider prefix_stats_provider();
// Same stats regardless of the prefix.
StatsProvider fixed_stats_provider(SequenceStats stats);

struct SimulationOptions {
  double min_score = 0.0;
  // Aggregate break-even test before migrating a predicted block.
  bool block_guard = true;
  // RemoteOnly pays no migration at all.
  bool remote_free_migration = false;
};

// Throws Error(UnknownCell) for cells without a cost entry and Error(InvalidPolicyInput)
// when BlockCell is requested without a stats provider.
SimulationResult simulate(std::span<const ExecutionEvent> events, const CostModel& model,
                          PolicyKind policy, const StatsProvider& stats = {},
                          const SimulationOptions& options = {});

// baseline.total_time / candidate.total_time. Throws Error(ZeroBaseline).
double speedup(const SimulationResult& baseline, const SimulationResult& candidate);

struct SweepGrid {
  std::vector<Millis> migration_times;
  std::vector<double> remote_speedups;
  // Fraction of each migration time charged on the way up; the rest is charged down.
  double up_share = 0.5;
};

struct SweepRow {
  Millis migration_time = 0;
  double remote_speedup = 0;
  PolicyKind policy = PolicyKind::LocalOnly;
  Millis total_time = 0;
  std::size_t migrations = 0;
  double speedup_vs_local = 0;
};

// One row per grid point per policy; migration time major, speedup minor, policies in
// kAllPolicies order. Grid points are evaluated concurrently.
std::vector<SweepRow> sweep(std::span<const ExecutionEvent> events, const StatsProvider& stats,
                            const std::map<CellOrder, Millis>& local_times, const SweepGrid& grid,
                            const SimulationOptions& options = {},
                            const std::set<CellOrder>& local_fallback = {});

inline constexpr std::string_view kSweepCsvHeader =
    "migration_ms,remote_speedup,policy,total_ms,migrations,speedup_vs_local";

std::string sweep_csv(std::span<const SweepRow> rows);

// One JSON object per line, one line per decision.
std::string decisions_jsonl(const SimulationResult& result);

// Shortest round-trip decimal representation.
std::string format_number(double value);

}  // namespace nbmig
