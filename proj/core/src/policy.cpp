#include "nbmig/policy.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <sstream>

#include <json.hpp>

#include "nbmig/error.hpp"

namespace nbmig {

namespace {

std::string ms(Millis value) { return format_number(value) + "ms"; }

class Ledger {
 public:
  explicit Ledger(PolicyKind kind) { result_.policy = kind; }

  DecisionRecord& record(std::size_t index, CellOrder cell, Location loc, Millis exec,
                         std::string reason) {
    DecisionRecord rec;
    rec.index = index;
    rec.cell_order = cell;
    rec.location = loc;
    rec.execution_time = exec;
    rec.reason = std::move(reason);
    result_.total_time += exec;
    result_.decisions.push_back(std::move(rec));
    return result_.decisions.back();
  }

  void charge(DecisionRecord& rec, Millis amount) {
    rec.migrations_charged += amount;
    result_.total_time += amount;
    ++result_.migration_count;
  }

  SimulationResult take() && { return std::move(result_); }

 private:
  SimulationResult result_;
};

void run_single_rule(Ledger& ledger, std::size_t index, CellOrder cell, const CostModel& model,
                     std::string prefix) {
  if (model.local_fallback.contains(cell)) {
    ledger.record(index, cell, Location::Local, model.local(cell),
                  prefix + "state not serializable: local fallback");
    return;
  }
  const auto verdict = should_migrate_single(cell, model);
  if (verdict.migrate) {
    auto& rec = ledger.record(index, cell, Location::Remote, model.remote(cell),
                              prefix + verdict.explanation);
    ledger.charge(rec, model.migration_up);
    ledger.charge(rec, model.migration_down);
  } else {
    ledger.record(index, cell, Location::Local, model.local(cell), prefix + verdict.explanation);
  }
}

SimulationResult simulate_block(std::span<const ExecutionEvent> events, const CostModel& model,
                                const StatsProvider& stats, const SimulationOptions& options) {
  Ledger ledger(PolicyKind::BlockCell);
  std::vector<CellOrder> history;
  history.reserve(events.size());

  bool remote = false;
  CellSequence block;
  std::set<CellOrder> pending;

  for (std::size_t k = 0; k < events.size(); ++k) {
    const CellOrder cell = events[k].cell_order;
    const std::size_t index = events[k].index;

    if (remote) {
      if (block.contains(cell)) {
        auto& rec = ledger.record(index, cell, Location::Remote, model.remote(cell),
                                  "member of remote block");
        pending.erase(cell);
        if (pending.empty()) {
          ledger.charge(rec, model.migration_down);
          rec.reason += "; block complete, state returns";
          remote = false;
        }
      } else {
        auto& rec = ledger.record(index, cell, Location::Local, model.local(cell),
                                  "cell outside predicted block; state returns, runs locally");
        ledger.charge(rec, model.migration_down);
        remote = false;
      }
      history.push_back(cell);
      continue;
    }

    if (model.local_fallback.contains(cell)) {
      run_single_rule(ledger, index, cell, model, "");
      history.push_back(cell);
      continue;
    }

    // Stored sequences begin where the history drops, so only such events can start a block.
    std::string note;
    const bool starts_sequence = history.empty() || cell < history.back();
    const auto prediction =
        starts_sequence ? predict_block(stats(history), cell, options.min_score, AnchorRule::Starts)
                        : std::nullopt;
    if (prediction) {
      const auto& orders = prediction->block.orders;
      const bool blocked = std::any_of(orders.begin(), orders.end(),
                                       [&](CellOrder c) { return model.local_fallback.contains(c); });
      Millis block_local = 0;
      Millis block_remote = model.round_trip();
      for (auto c : orders) {
        block_local += model.local(c);
        block_remote += model.remote(c);
      }
      const bool pays_off = block_remote < block_local;
      if (!blocked && (pays_off || !options.block_guard)) {
        auto& rec = ledger.record(index, cell, Location::Remote, model.remote(cell),
                                  "block predicted (score " + format_number(prediction->score) +
                                      "): remote " + ms(block_remote) + " vs local " +
                                      ms(block_local));
        ledger.charge(rec, model.migration_up);
        block = prediction->block;
        pending.clear();
        pending.insert(orders.begin(), orders.end());
        pending.erase(cell);
        remote = true;
        if (pending.empty()) {
          ledger.charge(rec, model.migration_down);
          rec.reason += "; block complete, state returns";
          remote = false;
        }
        history.push_back(cell);
        continue;
      }
      note = blocked ? "block rejected (non-serializable member); "
                     : "block rejected (remote " + ms(block_remote) + " >= local " +
                           ms(block_local) + "); ";
    }
    run_single_rule(ledger, index, cell, model, note);
    history.push_back(cell);
  }

  auto result = std::move(ledger).take();
  if (remote && !result.decisions.empty()) {
    auto& last = result.decisions.back();
    last.migrations_charged += model.migration_down;
    last.reason += "; trace ended, state returns";
    result.total_time += model.migration_down;
    ++result.migration_count;
  }
  return result;
}

}  // namespace

Millis CostModel::local(CellOrder cell) const {
  auto it = local_time.find(cell);
  if (it == local_time.end()) {
    throw Error(ErrorCode::UnknownCell, "no local time for cell " + std::to_string(cell));
  }
  return it->second;
}

Millis CostModel::remote(CellOrder cell) const { return local(cell) / remote_speedup; }

void CostModel::validate() const {
  if (!(remote_speedup > 0)) {
    throw Error(ErrorCode::InvalidArgument, "remote_speedup must be positive");
  }
  if (migration_up < 0 || migration_down < 0) {
    throw Error(ErrorCode::InvalidArgument, "migration times must be non-negative");
  }
  for (const auto& [cell, t] : local_time) {
    if (t < 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "negative local time for cell " + std::to_string(cell));
    }
  }
}

std::map<CellOrder, Millis> local_times_from_events(std::span<const ExecutionEvent> events) {
  std::map<CellOrder, std::vector<Millis>> samples;
  for (const auto& ev : events) samples[ev.cell_order].push_back(ev.duration_local);
  std::map<CellOrder, Millis> out;
  for (auto& [cell, v] : samples) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    out[cell] = n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
  }
  return out;
}

std::string_view to_string(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::LocalOnly: return "local";
    case PolicyKind::RemoteOnly: return "remote";
    case PolicyKind::SingleCell: return "single";
    case PolicyKind::BlockCell: return "block";
  }
  return "unknown";
}

std::optional<PolicyKind> parse_policy(std::string_view name) noexcept {
  for (auto kind : kAllPolicies) {
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(Location loc) noexcept {
  return loc == Location::Local ? "local" : "remote";
}

MigrationVerdict should_migrate_single(CellOrder cell, const CostModel& model) {
  MigrationVerdict v;
  v.local_cost = model.local(cell);
  v.remote_cost = model.remote(cell) + model.migration_up + model.migration_down;
  v.migrate = v.remote_cost < v.local_cost;
  v.explanation = "remote " + ms(model.remote(cell)) + " + up " + ms(model.migration_up) +
                  " + down " + ms(model.migration_down) + " = " + ms(v.remote_cost) +
                  (v.migrate ? " < " : " >= ") + "local " + ms(v.local_cost);
  return v;
}

StatsProvider prefix_stats_provider() {
  return [](std::span<const CellOrder> prefix) {
    const auto seqs = get_sequences(prefix);
    return score_sequences(seqs);
  };
}

StatsProvider fixed_stats_provider(SequenceStats stats) {
  return [stats = std::move(stats)](std::span<const CellOrder>) { return stats; };
}

SimulationResult simulate(std::span<const ExecutionEvent> events, const CostModel& model,
                          PolicyKind policy, const StatsProvider& stats,
                          const SimulationOptions& options) {
  model.validate();
  switch (policy) {
    case PolicyKind::LocalOnly: {
      Ledger ledger(policy);
      for (const auto& ev : events) {
        ledger.record(ev.index, ev.cell_order, Location::Local, model.local(ev.cell_order),
                      "local-only policy");
      }
      return std::move(ledger).take();
    }
    case PolicyKind::RemoteOnly: {
      Ledger ledger(policy);
      for (std::size_t k = 0; k < events.size(); ++k) {
        const auto& ev = events[k];
        auto& rec = ledger.record(ev.index, ev.cell_order, Location::Remote,
                                  model.remote(ev.cell_order), "remote-only policy");
        if (options.remote_free_migration) continue;
        if (k == 0) {
          ledger.charge(rec, model.migration_up);
          rec.reason += "; state moves out";
        }
        if (k + 1 == events.size()) {
          ledger.charge(rec, model.migration_down);
          rec.reason += "; state returns";
        }
      }
      return std::move(ledger).take();
    }
    case PolicyKind::SingleCell: {
      Ledger ledger(policy);
      for (const auto& ev : events) run_single_rule(ledger, ev.index, ev.cell_order, model, "");
      return std::move(ledger).take();
    }
    case PolicyKind::BlockCell:
      if (!stats) {
        throw Error(ErrorCode::InvalidPolicyInput, "block-cell policy needs a stats provider");
      }
      return simulate_block(events, model, stats, options);
  }
  throw Error(ErrorCode::InvalidPolicyInput, "unknown policy");
}

double speedup(const SimulationResult& baseline, const SimulationResult& candidate) {
  if (!(baseline.total_time > 0)) {
    throw Error(ErrorCode::ZeroBaseline, "baseline total time is zero");
  }
  return baseline.total_time / candidate.total_time;
}

std::vector<SweepRow> sweep(std::span<const ExecutionEvent> events, const StatsProvider& stats,
                            const std::map<CellOrder, Millis>& local_times, const SweepGrid& grid,
                            const SimulationOptions& options,
                            const std::set<CellOrder>& local_fallback) {
  if (grid.migration_times.empty() || grid.remote_speedups.empty()) {
    throw Error(ErrorCode::InvalidArgument, "sweep grid is empty");
  }
  if (grid.up_share < 0 || grid.up_share > 1) {
    throw Error(ErrorCode::InvalidArgument, "up_share must lie in [0, 1]");
  }

  using Block = std::vector<SweepRow>;
  std::vector<std::future<Block>> jobs;
  for (auto migration : grid.migration_times) {
    for (auto remote_speedup : grid.remote_speedups) {
      jobs.push_back(std::async(std::launch::async, [&, migration, remote_speedup] {
        CostModel model;
        model.local_time = local_times;
        model.remote_speedup = remote_speedup;
        model.migration_up = migration * grid.up_share;
        model.migration_down = migration - model.migration_up;
        model.local_fallback = local_fallback;

        Block rows;
        Millis local_total = 0;
        for (auto kind : kAllPolicies) {
          const auto result = simulate(events, model, kind, stats, options);
          if (kind == PolicyKind::LocalOnly) local_total = result.total_time;
          SweepRow row;
          row.migration_time = migration;
          row.remote_speedup = remote_speedup;
          row.policy = kind;
          row.total_time = result.total_time;
          row.migrations = result.migration_count;
          row.speedup_vs_local =
              local_total > 0 ? local_total / result.total_time
                              : (result.total_time > 0 ? 0.0 : 1.0);
          rows.push_back(row);
        }
        return rows;
      }));
    }
  }

  std::vector<SweepRow> out;
  out.reserve(jobs.size() * std::size(kAllPolicies));
  for (auto& job : jobs) {
    auto rows = job.get();
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out(kSweepCsvHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += format_number(r.migration_time);
    out += ',';
    out += format_number(r.remote_speedup);
    out += ',';
    out += to_string(r.policy);
    out += ',';
    out += format_number(r.total_time);
    out += ',';
    out += std::to_string(r.migrations);
    out += ',';
    out += format_number(r.speedup_vs_local);
    out += '\n';
  }
  return out;
}

std::string decisions_jsonl(const SimulationResult& result) {
  std::string out;
  for (const auto& d : result.decisions) {
    nlohmann::json j;
    j["policy"] = std::string(to_string(result.policy));
    j["index"] = d.index;
    j["cell_order"] = d.cell_order;
    j["location"] = std::string(to_string(d.location));
    j["execution_ms"] = d.execution_time;
    j["migration_ms"] = d.migrations_charged;
    j["reason"] = d.reason;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace nbmig
