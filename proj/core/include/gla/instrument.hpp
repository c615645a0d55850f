// SPDX-License-Identifier: Apache-2.0
//
// Opt-in, thread-local instrumentation used by tests and the cost model:
// a FLOP tally that the kernels feed while a recorder is installed, and an
// exponent probe that records every argument passed to a gate exponential.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace gla::instrument {

/// Where a dense product's FLOPs are booked.
///  - matmul: plain products on the output path (tensor-core eligible).
///  - state: products that accumulate into the materialized chunk state.
enum class MatmulClass : std::uint8_t { matmul, state };

struct FlopTally {
  std::uint64_t matmul = 0;
  std::uint64_t state = 0;
  std::uint64_t elementwise = 0;  // includes exps
  std::uint64_t exps = 0;

  std::uint64_t total() const noexcept { return matmul + state + elementwise; }
};

struct ExpProbe {
  double max_exponent = -std::numeric_limits<double>::infinity();
  std::uint64_t calls = 0;
};

namespace detail {
extern thread_local FlopTally* tally;
extern thread_local MatmulClass matmul_class;
extern thread_local ExpProbe* probe;
}  // namespace detail

/// Installs `tally` as the sink for this thread until destruction.
class FlopRecorder {
 public:
  explicit FlopRecorder(FlopTally& tally) noexcept;
  ~FlopRecorder();
  FlopRecorder(const FlopRecorder&) = delete;
  FlopRecorder& operator=(const FlopRecorder&) = delete;

 private:
  FlopTally* previous_;
};

/// Books dense products issued inside the scope under `cls`.
class MatmulClassScope {
 public:
  explicit MatmulClassScope(MatmulClass cls) noexcept;
  ~MatmulClassScope();
  MatmulClassScope(const MatmulClassScope&) = delete;
  MatmulClassScope& operator=(const MatmulClassScope&) = delete;

 private:
  MatmulClass previous_;
};

class ExpProbeScope {
 public:
  explicit ExpProbeScope(ExpProbe& probe) noexcept;
  ~ExpProbeScope();
  ExpProbeScope(const ExpProbeScope&) = delete;
  ExpProbeScope& operator=(const ExpProbeScope&) = delete;

 private:
  ExpProbe* previous_;
};

inline void count_matmul(std::uint64_t flops) noexcept {
  if (FlopTally* t = detail::tally) {
    (detail::matmul_class == MatmulClass::state ? t->state : t->matmul) += flops;
  }
}

inline void count_elementwise(std::uint64_t flops) noexcept {
  if (FlopTally* t = detail::tally) t->elementwise += flops;
}

inline void count_exps(std::uint64_t n) noexcept {
  if (FlopTally* t = detail::tally) {
    t->elementwise += n;
    t->exps += n;
  }
}

/// exp() for log-space gate differences. Reports the exponent to an active
/// probe; does not count FLOPs (callers book exps in bulk).
inline double gate_exp(double exponent) noexcept {
  if (ExpProbe* p = detail::probe) {
    if (exponent > p->max_exponent) p->max_exponent = exponent;
    ++p->calls;
  }
  return std::exp(exponent);
}

}  // namespace gla::instrument
