// SPDX-License-Identifier: Apache-2.0
#include "gla/forms.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "gla/errors.hpp"
#include "gla/instrument.hpp"

namespace gla {

using instrument::count_elementwise;
using instrument::count_exps;
using instrument::gate_exp;

namespace {

thread_local bool g_fault = false;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void check_inputs(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g) {
  const std::size_t L = q.rows();
  if (k.rows() != L || v.rows() != L || g.length() != L) {
    throw ShapeError("forms: sequence lengths disagree");
  }
  if (k.cols() != q.cols() || g.dk() != q.cols()) throw ShapeError("forms: d_k disagrees");
  if (g.dv() != v.cols()) throw ShapeError("forms: d_v disagrees");
}

// Row of a prefix-sum matrix at a position count; position 0 is the empty prefix.
std::vector<double> prefix_at(const Mat& cum, std::size_t pos) {
  std::vector<double> out(cum.cols(), 0.0);
  if (pos > 0) {
    const auto r = cum.row(pos - 1);
    out.assign(r.begin(), r.end());
  }
  return out;
}

// out(r, c) = exp(sign * (cum(r0 + r, c) - ref[c])) for rows [r0, r1).
Mat decay_rows(const Mat& cum, std::size_t r0, std::size_t r1, const std::vector<double>& ref,
               double sign) {
  Mat out(r1 - r0, cum.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto src = cum.row(r0 + r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) dst[c] = gate_exp(sign * (src[c] - ref[c]));
  }
  count_exps(out.size());
  return out;
}

// x rows [r0, r1) scaled by decay_rows(cum, r0, r1, ref, sign).
Mat scaled_rows(const Mat& x, const Mat& cum, std::size_t r0, std::size_t r1,
                const std::vector<double>& ref, double sign) {
  Mat out(r1 - r0, x.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto src = x.row(r0 + r);
    const auto lc = cum.row(r0 + r);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      dst[c] = src[c] * gate_exp(sign * (lc[c] - ref[c]));
    }
  }
  count_exps(out.size());
  count_elementwise(out.size());
  return out;
}

// x(r, c) *= f(c) for every row.
void scale_columns(Mat& x, const std::vector<double>& f) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) row[c] *= f[c];
  }
  count_elementwise(x.size());
}

void mask_upper(Mat& p) {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = i + 1; j < p.cols(); ++j) p(i, j) = 0.0;
  }
}

// Pairwise log-space evaluation of rows [r0, r1) against themselves with the
// inclusive causal mask. Shared by the semiring form and the diagonal
// sub-chunks of the two-level form.
Mat log_space_block(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g, std::size_t r0,
                    std::size_t r1) {
  const std::size_t n = r1 - r0;
  const std::size_t dk = q.cols();
  const std::size_t dv = v.cols();
  const Mat& la = g.LA();
  const Mat& lb = g.LB();
  Mat p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto qi = q.row(r0 + i);
    const auto lai = la.row(r0 + i);
    for (std::size_t j = 0; j <= i; ++j) {
      const auto kj = k.row(r0 + j);
      const auto laj = la.row(r0 + j);
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += gate_exp(lai[c] - laj[c]) * qi[c] * kj[c];
      p(i, j) = s;
    }
  }
  Mat o(n, dv);
  for (std::size_t i = 0; i < n; ++i) {
    const auto lbi = lb.row(r0 + i);
    auto oi = o.row(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const auto vj = v.row(r0 + j);
      const auto lbj = lb.row(r0 + j);
      const double pij = p(i, j);
      for (std::size_t c = 0; c < dv; ++c) oi[c] += gate_exp(lbi[c] - lbj[c]) * pij * vj[c];
    }
  }
  const std::uint64_t terms = static_cast<std::uint64_t>(n) * (n + 1) / 2 * (dk + dv);
  count_exps(terms);
  count_elementwise(3 * terms);
  return o;
}

// Chunk states S_[0..n-1]; S_[0] = 0.
std::vector<Mat> chunk_states(const Mat& k, const Mat& v, const GateSeq& g, std::size_t C) {
  const std::size_t L = k.rows();
  const std::size_t dk = k.cols();
  const std::size_t dv = v.cols();
  const std::size_t n = L / C;

  std::vector<Mat> kv;
  kv.reserve(n > 0 ? n - 1 : 0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t b = i * C;
    const std::size_t e = b + C;
    const Mat kp = scaled_rows(k, g.LA(), b, e, prefix_at(g.LA(), e), -1.0);
    const Mat vp = scaled_rows(v, g.LB(), b, e, prefix_at(g.LB(), e), -1.0);
    instrument::MatmulClassScope state_class(instrument::MatmulClass::state);
    kv.push_back(matmul_tn(kp, vp));
  }

  std::vector<Mat> states;
  states.reserve(n);
  states.emplace_back(dk, dv);
  std::vector<double> a(dk);
  std::vector<double> bv(dv);
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t lo = (i - 1) * C;
    const std::size_t hi = i * C;
    for (std::size_t c = 0; c < dk; ++c) {
      a[c] = gate_exp(g.LA()(hi - 1, c) - (lo == 0 ? 0.0 : g.LA()(lo - 1, c)));
    }
    for (std::size_t c = 0; c < dv; ++c) {
      bv[c] = gate_exp(g.LB()(hi - 1, c) - (lo == 0 ? 0.0 : g.LB()(lo - 1, c)));
    }
    Mat s = kv[i - 1];
    const Mat& prev = states.back();
    for (std::size_t r = 0; r < dk; ++r) {
      const auto pr = prev.row(r);
      auto sr = s.row(r);
      for (std::size_t c = 0; c < dv; ++c) sr[c] += a[r] * bv[c] * pr[c];
    }
    count_exps(dk + dv);
    count_elementwise(3 * dk * dv);
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace

// -- plan and names ----------------------------------------------------------------

void ChunkPlan::validate(std::size_t length) const {
  if (C == 0) throw PlanError("C must be at least 1");
  if (c == 0) throw PlanError("c must be at least 1");
  if (length % C != 0) {
    throw PlanError("C must divide L (C=" + std::to_string(C) + ", L=" + std::to_string(length) +
                    ")");
  }
  if (C % c != 0) {
    throw PlanError("c must divide C (c=" + std::to_string(c) + ", C=" + std::to_string(C) + ")");
  }
}

void DecaySpec::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
}

std::string_view to_string(Form f) noexcept {
  switch (f) {
    case Form::recurrent: return "recurrent";
    case Form::parallel: return "parallel";
    case Form::semiring: return "semiring";
    case Form::chunkwise: return "chunkwise";
    case Form::two_level: return "two_level";
  }
  return "?";
}

Form parse_form(std::string_view name) {
  for (Form f : {Form::recurrent, Form::parallel, Form::semiring, Form::chunkwise,
                 Form::two_level}) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown form '" + std::string(name) + "'");
}

std::string_view to_string(PrecisionPolicy p) noexcept {
  return p == PrecisionPolicy::mixed ? "mixed" : "exact";
}

PrecisionPolicy parse_policy(std::string_view name) {
  if (name == "exact") return PrecisionPolicy::exact;
  if (name == "mixed") return PrecisionPolicy::mixed;
  throw ConfigError("unknown precision policy '" + std::string(name) + "'");
}

// -- recurrent -----------------------------------------------------------------------

RecurrentResult recurrent_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                                  bool keep_states) {
  check_inputs(q, k, v, g);
  const std::size_t L = q.rows();
  const std::size_t dk = q.cols();
  const std::size_t dv = v.cols();
  RecurrentResult res{Mat(L, dv), {}};
  if (keep_states) res.states.reserve(L);
  Mat s(dk, dv);
  std::vector<double> a(dk);
  std::vector<double> b(dv);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t i = 0; i < dk; ++i) a[i] = gate_exp(g.log_alpha()(t, i));
    for (std::size_t j = 0; j < dv; ++j) b[j] = gate_exp(g.log_beta()(t, j));
    const auto kt = k.row(t);
    const auto vt = v.row(t);
    const auto qt = q.row(t);
    auto ot = res.o.row(t);
    for (std::size_t i = 0; i < dk; ++i) {
      auto si = s.row(i);
      const double ai = a[i];
      const double ki = kt[i];
      const double qi = qt[i];
      for (std::size_t j = 0; j < dv; ++j) {
        si[j] = ai * b[j] * si[j] + ki * vt[j];
        ot[j] += qi * si[j];
      }
    }
    if (keep_states) res.states.push_back(s);
  }
  count_exps(L * (dk + dv));
  count_elementwise(6 * L * dk * dv);
  return res;
}

// -- parallel --------------------------------------------------------------------------

Mat parallel_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g) {
  check_inputs(q, k, v, g);
  const double worst = std::max(max_abs(g.LA()), max_abs(g.LB()));
  if (worst > kParallelExpGuard) {
    throw RangeError("parallel form: cumulative log gate reaches " + std::to_string(-worst) +
                     ", beyond the exp guard of " + std::to_string(kParallelExpGuard) +
                     "; use semiring_forward or two_level_forward");
  }
  const std::size_t L = q.rows();
  const std::vector<double> zk(q.cols(), 0.0);
  const std::vector<double> zv(v.cols(), 0.0);
  const Mat qt = scaled_rows(q, g.LA(), 0, L, zk, 1.0);
  const Mat kt = scaled_rows(k, g.LA(), 0, L, zk, -1.0);
  const Mat vt = scaled_rows(v, g.LB(), 0, L, zv, -1.0);
  Mat p = matmul_nt(qt, kt);
  mask_upper(p);
  Mat o = matmul(p, vt);
  const Mat bscale = decay_rows(g.LB(), 0, L, zv, 1.0);
  for (std::size_t i = 0; i < o.size(); ++i) o.data()[i] *= bscale.data()[i];
  count_elementwise(o.size());
  return o;
}

// -- semiring --------------------------------------------------------------------------

Mat semiring_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g) {
  check_inputs(q, k, v, g);
  return log_space_block(q, k, v, g, 0, q.rows());
}

// -- chunkwise -------------------------------------------------------------------------

Mat chunkwise_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                      const ChunkPlan& plan, PhaseTimes* times) {
  check_inputs(q, k, v, g);
  const std::size_t L = q.rows();
  const std::size_t C = plan.C;
  if (C == 0 || L % C != 0) {
    throw PlanError("C must divide L (C=" + std::to_string(C) + ", L=" + std::to_string(L) + ")");
  }
  const std::size_t n = L / C;

  // Inter: chunk states and the cross-chunk term (Q * A^dagger) S, unscaled by B^dagger.
  auto t0 = Clock::now();
  const std::vector<Mat> states = chunk_states(k, v, g, C);
  Mat o(L, v.cols());
  std::vector<Mat> qs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * C;
    qs[i] = scaled_rows(q, g.LA(), b, b + C, prefix_at(g.LA(), b), 1.0);
    set_rows(o, b, matmul(qs[i], states[i]));
  }
  const double inter_ms = ms_since(t0);

  t0 = Clock::now();
  const bool fault = g_fault;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * C;
    const std::size_t e = b + C;
    const std::vector<double> base_a = prefix_at(g.LA(), b);
    const std::vector<double> base_b = prefix_at(g.LB(), b);

    const Mat bd = decay_rows(g.LB(), b, e, base_b, 1.0);
    const Mat ks = scaled_rows(k, g.LA(), b, e, base_a, -1.0);
    const Mat vs = scaled_rows(v, g.LB(), b, e, base_b, fault ? 1.0 : -1.0);
    Mat p = matmul_nt(qs[i], ks);
    mask_upper(p);
    const Mat intra = matmul(p, vs);

    for (std::size_t r = 0; r < C; ++r) {
      auto dst = o.row(b + r);
      const auto ir = intra.row(r);
      const auto br = bd.row(r);
      for (std::size_t c = 0; c < dst.size(); ++c) {
        dst[c] = fault ? dst[c] * br[c] + ir[c] / br[c] : (dst[c] + ir[c]) * br[c];
      }
    }
    count_elementwise(2 * C * v.cols());
  }
  if (times) *times = {inter_ms, ms_since(t0)};
  return o;
}

// -- two-level -------------------------------------------------------------------------

Mat two_level_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                      const ChunkPlan& plan, PhaseTimes* times) {
  check_inputs(q, k, v, g);
  plan.validate(q.rows());
  const std::size_t L = q.rows();
  const std::size_t dk = q.cols();
  const std::size_t dv = v.cols();
  const std::size_t C = plan.C;
  const std::size_t cs = plan.c;
  const std::size_t n = L / C;
  const std::size_t m = C / cs;
  const MatmulMode mode = plan.off_diagonal_mode();
  const Mat& la = g.LA();
  const Mat& lb = g.LB();

  // Inter: chunk states and the cross-chunk term.
  auto t0 = Clock::now();
  const std::vector<Mat> states = chunk_states(k, v, g, C);
  Mat o(L, dv);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * C;
    const std::size_t e = b + C;
    const Mat qs = scaled_rows(q, la, b, e, prefix_at(la, b), 1.0);
    const Mat bd = decay_rows(lb, b, e, prefix_at(lb, b), 1.0);
    Mat cross = matmul(qs, states[i]);
    for (std::size_t r = 0; r < cross.size(); ++r) cross.data()[r] *= bd.data()[r];
    count_elementwise(cross.size());
    set_rows(o, b, cross);
  }
  const double inter_ms = ms_since(t0);

  t0 = Clock::now();
  std::vector<Mat> k_end(m);
  std::vector<Mat> v_end(m);
  std::vector<double> ka(dk);
  std::vector<double> vb(dv);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = i * C;
    // Key-side factors relative to each key sub-chunk's last row.
    for (std::size_t w = 0; w + 1 < m; ++w) {
      const std::size_t s0 = b + w * cs;
      const std::size_t last = s0 + cs - 1;
      k_end[w] = scaled_rows(k, la, s0, s0 + cs, prefix_at(la, last + 1), -1.0);
      v_end[w] = scaled_rows(v, lb, s0, s0 + cs, prefix_at(lb, last + 1), -1.0);
    }

    for (std::size_t u = 0; u < m; ++u) {
      const std::size_t s0 = b + u * cs;
      Mat intra = log_space_block(q, k, v, g, s0, s0 + cs);
      if (u > 0) {
        // Normalizer: the query sub-chunk's first row.
        const std::vector<double> ref_a(la.row(s0).begin(), la.row(s0).end());
        const std::vector<double> ref_b(lb.row(s0).begin(), lb.row(s0).end());
        const Mat qn = scaled_rows(q, la, s0, s0 + cs, ref_a, 1.0);
        const Mat bq = decay_rows(lb, s0, s0 + cs, ref_b, 1.0);
        Mat acc(cs, dv);
        for (std::size_t w = 0; w < u; ++w) {
          const std::size_t last = b + w * cs + cs - 1;
          for (std::size_t c = 0; c < dk; ++c) ka[c] = gate_exp(ref_a[c] - la(last, c));
          for (std::size_t c = 0; c < dv; ++c) vb[c] = gate_exp(ref_b[c] - lb(last, c));
          count_exps(dk + dv);
          Mat khat = k_end[w];
          scale_columns(khat, ka);
          Mat vhat = v_end[w];
          scale_columns(vhat, vb);
          const Mat p = matmul_nt(qn, khat, mode);
          add_inplace(acc, matmul(p, vhat, mode));
          count_elementwise(acc.size());
        }
        for (std::size_t r = 0; r < acc.size(); ++r) {
          intra.data()[r] += acc.data()[r] * bq.data()[r];
        }
        count_elementwise(2 * acc.size());
      }
      for (std::size_t r = 0; r < cs; ++r) {
        const auto src = intra.row(r);
        auto dst = o.row(s0 + r);
        for (std::size_t c = 0; c < dv; ++c) dst[c] += src[c];
      }
      count_elementwise(cs * dv);
    }
  }
  if (times) *times = {inter_ms, ms_since(t0)};
  return o;
}

Mat forward(Form form, const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
            const ChunkPlan& plan, PhaseTimes* times) {
  switch (form) {
    case Form::recurrent: return recurrent_forward(q, k, v, g, false).o;
    case Form::parallel: return parallel_forward(q, k, v, g);
    case Form::semiring: return semiring_forward(q, k, v, g);
    case Form::chunkwise: return chunkwise_forward(q, k, v, g, plan, times);
    case Form::two_level: return two_level_forward(q, k, v, g, plan, times);
  }
  throw ConfigError("unknown form");
}

namespace testing {
FaultInjection::FaultInjection() noexcept : previous_(g_fault) { g_fault = true; }
FaultInjection::~FaultInjection() { g_fault = previous_; }
bool fault_active() noexcept { return g_fault; }
}  // namespace testing

}  // namespace gla
