#include <benchmark/benchmark.h>

#include <random>

#include "nbmig/cellparse.hpp"
#include "nbmig/statered.hpp"

namespace {

using namespace nbmig::state;

// Chain-heavy graph: every object references up to three earlier ones.
NotebookState graph(std::size_t n) {
  std::mt19937_64 rng(3);
  NotebookState s;
  for (std::size_t i = 0; i < n; ++i) {
    NamespaceObject o;
    o.id = "o" + std::to_string(i);
    o.payload_size = 1024 + rng() % 4096;
    o.content = o.id;
    for (int k = 0; k < 3 && i > 0; ++k) o.references.push_back("o" + std::to_string(rng() % i));
    if (i % 4 == 0) {
      o.name = "v" + std::to_string(i);
      s.bindings[o.name] = o.id;
    }
    rehash(o);
    s.objects[o.id] = std::move(o);
  }
  return s;
}

void BM_NeededClosure(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = graph(n);
  nbmig::cell::NameUsage usage;
  usage.loads = {"v" + std::to_string((n - 1) / 4 * 4)};
  for (auto _ : state) benchmark::DoNotOptimize(needed_closure(s, usage));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NeededClosure)->RangeMultiplier(4)->Range(64, 16384)->Complexity();

void BM_ReduceCompressed(benchmark::State& state) {
  const auto s = graph(256);
  nbmig::cell::NameUsage usage;
  usage.loads = {"v252"};
  for (auto _ : state) benchmark::DoNotOptimize(reduce_for_cell(s, usage, true));
}
BENCHMARK(BM_ReduceCompressed);

}  // namespace
