// SPDX-License-Identifier: Apache-2.0
#include "gla/instrument.hpp"

namespace gla::instrument {

namespace detail {
thread_local FlopTally* tally = nullptr;
thread_local MatmulClass matmul_class = MatmulClass::matmul;
thread_local ExpProbe* probe = nullptr;
}  // namespace detail

FlopRecorder::FlopRecorder(FlopTally& tally) noexcept : previous_(detail::tally) {
  detail::tally = &tally;
}
FlopRecorder::~FlopRecorder() { detail::tally = previous_; }

MatmulClassScope::MatmulClassScope(MatmulClass cls) noexcept
    : previous_(detail::matmul_class) {
  detail::matmul_class = cls;
}
MatmulClassScope::~MatmulClassScope() { detail::matmul_class = previous_; }

ExpProbeScope::ExpProbeScope(ExpProbe& probe) noexcept : previous_(detail::probe) {
  detail::probe = &probe;
}
ExpProbeScope::~ExpProbeScope() { detail::probe = previous_; }

}  // namespace gla::instrument
