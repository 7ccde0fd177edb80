#include <benchmark/benchmark.h>

#include <random>

#include "nbmig/policy.hpp"

namespace {

// Repeated 7-cell loop with a short preamble.
std::vector<nbmig::ExecutionEvent> loop_events(std::size_t rounds) {
  std::vector<nbmig::ExecutionEvent> ev;
  auto push = [&](nbmig::CellOrder c) {
    ev.push_back(nbmig::ExecutionEvent{c, "c" + std::to_string(c), 1000.0 * (c + 1), ev.size()});
  };
  for (nbmig::CellOrder c = 0; c < 3; ++c) push(c);
  for (std::size_t r = 0; r < rounds; ++r) {
    for (nbmig::CellOrder c = 3; c < 10; ++c) push(c);
  }
  return ev;
}

nbmig::CostModel model(std::span<const nbmig::ExecutionEvent> ev) {
  nbmig::CostModel m;
  m.local_time = nbmig::local_times_from_events(ev);
  m.remote_speedup = 10;
  m.migration_up = m.migration_down = 500;
  return m;
}

void BM_SimulateBlock(benchmark::State& state) {
  const auto ev = loop_events(static_cast<std::size_t>(state.range(0)));
  const auto m = model(ev);
  const auto stats = nbmig::prefix_stats_provider();
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::simulate(ev, m, nbmig::PolicyKind::BlockCell, stats));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ev.size()));
}
BENCHMARK(BM_SimulateBlock)->Arg(10)->Arg(50)->Arg(200);

void BM_SimulateSingle(benchmark::State& state) {
  const auto ev = loop_events(static_cast<std::size_t>(state.range(0)));
  const auto m = model(ev);
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::simulate(ev, m, nbmig::PolicyKind::SingleCell));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ev.size()));
}
BENCHMARK(BM_SimulateSingle)->Arg(200);

void BM_Sweep(benchmark::State& state) {
  const auto ev = loop_events(20);
  const nbmig::SweepGrid grid{{250, 500, 1000, 2000}, {2, 10, 50, 150}, 0.5};
  const auto local = nbmig::local_times_from_events(ev);
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::sweep(ev, nbmig::prefix_stats_provider(), local, grid));
}
BENCHMARK(BM_Sweep)->UseRealTime();

}  // namespace
