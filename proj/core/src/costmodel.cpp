// SPDX-License-Identifier: Apache-2.0
#include "gla/costmodel.hpp"

#include "gla/errors.hpp"

namespace gla {

namespace {

using u64 = std::uint64_t;

struct Tally {
  u64 matmul = 0;
  u64 state = 0;
  u64 elem = 0;
  u64 exps = 0;
};

bool chunked(Form f) { return f == Form::chunkwise || f == Form::two_level; }

// Reductions and the sequential recurrence, shared by both chunked forms.
void add_state_phase(Tally& t, u64 n, u64 C, u64 dk, u64 dv) {
  const u64 updates = n - 1;
  t.state += updates * 2 * C * dk * dv;
  t.exps += updates * (C * (dk + dv) + dk + dv);
  t.elem += updates * (2 * C * (dk + dv) + dk + dv + 3 * dk * dv);
}

Tally count(Form form, u64 L, u64 dk, u64 dv, const ChunkPlan& plan) {
  Tally t;
  switch (form) {
    case Form::recurrent:
      t.exps = L * (dk + dv);
      t.elem = L * (dk + dv) + 6 * L * dk * dv;
      break;
    case Form::parallel:
      t.matmul = 2 * L * L * dk + 2 * L * L * dv;
      t.exps = 2 * L * (dk + dv);
      t.elem = 4 * L * (dk + dv);
      break;
    case Form::semiring: {
      const u64 terms = L * (L + 1) / 2 * (dk + dv);
      t.exps = terms;
      t.elem = 4 * terms;
      break;
    }
    case Form::chunkwise: {
      const u64 C = plan.C;
      const u64 n = L / C;
      add_state_phase(t, n, C, dk, dv);
      t.matmul = n * (2 * C * dk * dv + 2 * C * C * dk + 2 * C * C * dv);
      t.exps += n * 2 * C * (dk + dv);
      t.elem += n * (4 * C * dk + 5 * C * dv);
      break;
    }
    case Form::two_level: {
      const u64 C = plan.C;
      const u64 c = plan.c;
      const u64 n = L / C;
      const u64 m = C / c;
      const u64 pairs = m * (m - 1) / 2;
      const u64 diag_terms = c * (c + 1) / 2 * (dk + dv);
      add_state_phase(t, n, C, dk, dv);
      t.matmul = n * (2 * C * dk * dv + pairs * (2 * c * c * dk + 2 * c * c * dv));

      u64 exps = C * (dk + dv);                     // chunk-start scaling of Q and B
      u64 elem = 2 * C * dk + 2 * C * dv;           //   and of the cross term
      exps += (m - 1) * c * (dk + dv);              // key sub-chunk end factors
      elem += (m - 1) * 2 * c * (dk + dv);
      exps += m * diag_terms;                       // diagonal sub-chunks
      elem += m * 4 * diag_terms;
      exps += (m - 1) * c * (dk + dv);              // query sub-chunk factors
      elem += (m - 1) * (2 * c * dk + c * dv + 2 * c * dv);
      exps += pairs * (dk + dv);                    // per-pair boundary factors
      elem += pairs * (dk + dv + c * dk + 2 * c * dv);
      elem += m * c * dv;                           // intra accumulation
      t.exps += n * exps;
      t.elem += n * elem;
      break;
    }
  }
  return t;
}

}  // namespace

std::uint64_t state_traffic(Form form, std::size_t L, std::size_t dk, std::size_t dv,
                            const ChunkPlan& plan, std::size_t elem_bytes) {
  const u64 eb = elem_bytes;
  switch (form) {
    case Form::recurrent: return static_cast<u64>(L) * dk * dv * eb;
    case Form::parallel:
    case Form::semiring: return static_cast<u64>(L) * L * eb;
    case Form::chunkwise:
    case Form::two_level:
      if (plan.C == 0 || L % plan.C != 0) throw PlanError("C must divide L");
      return static_cast<u64>(L / plan.C) * dk * dv * eb;
  }
  return 0;
}

CostReport flops(Form form, std::size_t L, std::size_t dk, std::size_t dv, const ChunkPlan& plan,
                 const CostOptions& opts) {
  if (L == 0 || dk == 0 || dv == 0) throw ConfigError("L, d_k and d_v must be positive");
  if (form == Form::two_level) {
    plan.validate(L);
  } else if (form == Form::chunkwise && (plan.C == 0 || L % plan.C != 0)) {
    throw PlanError("C must divide L");
  }
  const Tally t = count(form, L, dk, dv, plan);
  CostReport r;
  r.flops_matmul_halfable = t.matmul;
  r.flops_matmul_state = t.state;
  r.flops_elementwise = t.elem;
  r.exp_count = t.exps;
  r.bytes_state_traffic = state_traffic(form, L, dk, dv, plan, opts.elem_bytes);
  // Q, K, alpha (L x dk) and V, beta, O (L x dv).
  r.bytes_io_total = static_cast<u64>(opts.elem_bytes) * (3 * static_cast<u64>(L) * dk +
                                                          3 * static_cast<u64>(L) * dv) +
                     r.bytes_state_traffic;
  u64 blocks = 1;
  if (chunked(form)) blocks = L / plan.C;
  if (form == Form::parallel || form == Form::semiring) blocks = L;
  r.parallel_work_items = static_cast<u64>(opts.batch) * opts.heads * blocks;
  return r;
}

}  // namespace gla
