// SPDX-License-Identifier: Apache-2.0
//
// Closed-form FLOP and traffic accounting per form. Conventions: a fused
// multiply-add is 2 FLOPs, every other arithmetic op (including each gate
// exponential) is 1. The counts are exact for the kernels in forms.cpp and
// are checked against the instrumented tally in the tests.
#pragma once

#include <cstddef>
#include <cstdint>

#include "gla/forms.hpp"

namespace gla {

struct CostOptions {
  std::size_t elem_bytes = 2;
  std::size_t batch = 1;
  std::size_t heads = 1;
};

struct CostReport {
  std::uint64_t flops_matmul_halfable = 0;  // plain products on the output path
  std::uint64_t flops_matmul_state = 0;     // chunk-state reductions K'^T V'
  std::uint64_t flops_elementwise = 0;      // includes exp_count
  std::uint64_t exp_count = 0;
  std::uint64_t bytes_state_traffic = 0;
  std::uint64_t bytes_io_total = 0;
  /// Occupancy proxy: batch x heads x independent blocks (chunks for chunked
  /// forms, query rows for quadratic forms, 1 for recurrent).
  std::uint64_t parallel_work_items = 0;

  std::uint64_t flops_total() const noexcept {
    return flops_matmul_halfable + flops_matmul_state + flops_elementwise;
  }
};

/// Single-head counts for one sequence; `opts` only affects the byte and
/// work-item fields. Throws PlanError for invalid chunk plans.
CostReport flops(Form form, std::size_t L, std::size_t dk, std::size_t dv, const ChunkPlan& plan,
                 const CostOptions& opts = {});

/// Modeled bytes for materialized states (or the score matrix for quadratic forms).
std::uint64_t state_traffic(Form form, std::size_t L, std::size_t dk, std::size_t dv,
                            const ChunkPlan& plan, std::size_t elem_bytes);

}  // namespace gla
