// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <algorithm>

#include "gla/forms.hpp"

namespace {

constexpr std::size_t kL = 1024;
constexpr std::size_t kDk = 64;
constexpr std::size_t kDv = 128;

struct Inputs {
  gla::Mat q, k, v;
  gla::GateSeq g;
};

const Inputs& inputs() {
  static const Inputs in = [] {
    gla::Rng rng(0);
    Inputs x;
    x.q = gla::randn(rng, kL, kDk);
    x.k = gla::randn(rng, kL, kDk);
    x.v = gla::randn(rng, kL, kDv);
    x.g = gla::random_gates(rng, kL, kDk, kDv, false, 16.0);
    return x;
  }();
  return in;
}

void report_phases(benchmark::State& state, const gla::PhaseTimes& t, double runs) {
  state.counters["inter_ms"] = t.inter_ms / runs;
  state.counters["intra_ms"] = t.intra_ms / runs;
}

void BM_Chunkwise(benchmark::State& state) {
  const auto& in = inputs();
  const gla::ChunkPlan plan{static_cast<std::size_t>(state.range(0)), 1};
  gla::PhaseTimes total;
  double runs = 0;
  for (auto _ : state) {
    gla::PhaseTimes t;
    benchmark::DoNotOptimize(gla::chunkwise_forward(in.q, in.k, in.v, in.g, plan, &t));
    total.inter_ms += t.inter_ms;
    total.intra_ms += t.intra_ms;
    ++runs;
  }
  report_phases(state, total, runs);
}

void BM_TwoLevel(benchmark::State& state) {
  const auto& in = inputs();
  const auto C = static_cast<std::size_t>(state.range(0));
  const gla::ChunkPlan plan{C, std::min<std::size_t>(16, C),
                            state.range(1) ? gla::PrecisionPolicy::mixed
                                           : gla::PrecisionPolicy::exact};
  for (auto _ : state) {
    benchmark::DoNotOptimize(gla::two_level_forward(in.q, in.k, in.v, in.g, plan));
  }
}

void BM_Recurrent(benchmark::State& state) {
  const auto& in = inputs();
  for (auto _ : state) {
    benchmark::DoNotOptimize(gla::recurrent_forward(in.q, in.k, in.v, in.g, false));
  }
}

void BM_Semiring(benchmark::State& state) {
  const auto& in = inputs();
  for (auto _ : state) benchmark::DoNotOptimize(gla::semiring_forward(in.q, in.k, in.v, in.g));
}

}  // namespace

BENCHMARK(BM_Chunkwise)->RangeMultiplier(2)->Range(16, 256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TwoLevel)
    ->ArgsProduct({{16, 32, 64, 128, 256}, {0, 1}})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Recurrent)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Semiring)->Unit(benchmark::kMillisecond);
