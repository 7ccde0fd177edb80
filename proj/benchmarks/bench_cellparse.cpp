#include <benchmark/benchmark.h>

#include <string>

#include "nbmig/cellparse.hpp"

namespace {

std::string cell_source(int statements) {
  std::string src = "import numpy\n";
  for (int i = 0; i < statements; ++i) {
    const auto n = std::to_string(i);
    src += "x" + n + " = numpy.mean(data[" + n + "]) * scale + offset\n";
    src += "if x" + n + " > limit:\n    hits = hits + 1\nelse:\n    misses = misses + 1\n";
  }
  src += "model.fit(x0, epochs=10, batch_size=32)\n";
  return src;
}

void BM_ParseCell(benchmark::State& state) {
  const auto src = cell_source(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::cell::parse_cell(src));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(src.size()));
}
BENCHMARK(BM_ParseCell)->Arg(1)->Arg(16)->Arg(256);

void BM_ExtractUsage(benchmark::State& state) {
  const auto ast = nbmig::cell::parse_cell(cell_source(64));
  for (auto _ : state) benchmark::DoNotOptimize(nbmig::cell::extract_usage(ast));
}
BENCHMARK(BM_ExtractUsage);

}  // namespace
