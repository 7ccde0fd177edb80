#include <benchmark/benchmark.h>

#include <random>

#include "nbmig/context.hpp"

namespace {

std::vector<nbmig::CellOrder> history(std::size_t n, std::uint32_t distinct) {
  std::mt19937_64 rng(1);
  std::vector<nbmig::CellOrder> h(n);
  for (auto& c : h) c = static_cast<nbmig::CellOrder>(rng() % distinct);
  return h;
}

void BM_ScoreSequences(benchmark::State& state) {
  const auto seqs = nbmig::get_sequences(history(static_cast<std::size_t>(state.range(0)), 12));
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::score_sequences(seqs));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_ScoreSequences)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_PredictBlock(benchmark::State& state) {
  const auto stats = nbmig::score_sequences(nbmig::get_sequences(history(2048, 12)));
  nbmig::CellOrder anchor = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(nbmig::predict_block(stats, anchor, 0, nbmig::AnchorRule::Starts));
    anchor = (anchor + 1) % 12;
  }
}
BENCHMARK(BM_PredictBlock);

}  // namespace
