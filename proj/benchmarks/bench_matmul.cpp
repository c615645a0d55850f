// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "gla/numkit.hpp"

namespace {

void run(benchmark::State& state, gla::MatmulMode mode) {
  const auto n = static_cast<std::size_t>(state.range(0));
  gla::Rng rng(1);
  const gla::Mat a = gla::randn(rng, n, n);
  const gla::Mat b = gla::randn(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(gla::matmul(a, b, mode));
  state.counters["flops"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_MatmulExact(benchmark::State& state) { run(state, gla::MatmulMode::exact64); }
void BM_MatmulMixed(benchmark::State& state) { run(state, gla::MatmulMode::mixed16); }

}  // namespace

BENCHMARK(BM_MatmulExact)->RangeMultiplier(2)->Range(16, 256);
BENCHMARK(BM_MatmulMixed)->RangeMultiplier(2)->Range(16, 256);
