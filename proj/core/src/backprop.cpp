// SPDX-License-Identifier: Apache-2.0
#include "gla/backprop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "gla/errors.hpp"

namespace gla {

namespace {

// dz = dlog / tau * sigmoid(-z), then back through the (low-rank) projection.
void gate_backward(const Mat& dlog, const Mat& logits, const Mat& hidden, const Mat& x,
                   const GateProjection& proj, double tau, GateProjection& grad, Mat& dx) {
  Mat dz(dlog.rows(), dlog.cols());
  for (std::size_t i = 0; i < dz.size(); ++i) {
    dz.data()[i] = dlog.data()[i] / tau * sigmoid(-logits.data()[i]);
  }
  grad.bias = column_sums(dz);
  if (proj.w2.empty()) {
    grad.w1 = matmul_tn(x, dz);
    add_inplace(dx, matmul_nt(dz, proj.w1));
    return;
  }
  grad.w2 = matmul_tn(hidden, dz);
  const Mat dh = matmul_nt(dz, proj.w2);
  grad.w1 = matmul_tn(x, dh);
  add_inplace(dx, matmul_nt(dh, proj.w1));
}

}  // namespace

RecurrentGrads backward_recurrent(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                                  const std::vector<Mat>& states, const Mat& d_out) {
  const std::size_t L = q.rows();
  const std::size_t dk = q.cols();
  const std::size_t dv = v.cols();
  if (states.size() != L) {
    throw StateError("backward_recurrent: expected " + std::to_string(L) +
                     " materialized states, got " + std::to_string(states.size()));
  }
  if (d_out.rows() != L || d_out.cols() != dv || g.length() != L || g.dk() != dk ||
      g.dv() != dv || k.rows() != L || v.rows() != L) {
    throw ShapeError("backward_recurrent: shape mismatch");
  }
  RecurrentGrads gr{Mat(L, dk), Mat(L, dk), Mat(L, dv), Mat(L, dk), Mat(L, dv)};
  Mat ds(dk, dv);
  std::vector<double> a(dk);
  std::vector<double> b(dv);
  std::vector<double> db(dv);
  const Mat zero(dk, dv);
  for (std::size_t t = L; t-- > 0;) {
    const Mat& s = states[t];
    const Mat& prev = t > 0 ? states[t - 1] : zero;
    if (!s.same_shape(zero)) throw StateError("backward_recurrent: state shape mismatch");
    for (std::size_t i = 0; i < dk; ++i) a[i] = std::exp(g.log_alpha()(t, i));
    for (std::size_t j = 0; j < dv; ++j) b[j] = std::exp(g.log_beta()(t, j));
    std::fill(db.begin(), db.end(), 0.0);
    const auto qt = q.row(t);
    const auto kt = k.row(t);
    const auto vt = v.row(t);
    const auto dot = d_out.row(t);
    auto dq = gr.dq.row(t);
    auto dkr = gr.dk.row(t);
    auto dvr = gr.dv.row(t);
    auto dla = gr.dlog_alpha.row(t);
    for (std::size_t i = 0; i < dk; ++i) {
      const auto si = s.row(i);
      const auto pi = prev.row(i);
      auto dsi = ds.row(i);
      double acc_q = 0.0;
      double acc_k = 0.0;
      double acc_a = 0.0;
      for (std::size_t j = 0; j < dv; ++j) {
        acc_q += dot[j] * si[j];
        dsi[j] += qt[i] * dot[j];
        acc_k += dsi[j] * vt[j];
        dvr[j] += kt[i] * dsi[j];
        const double dgate = dsi[j] * pi[j];
        acc_a += dgate * b[j];
        db[j] += a[i] * dgate;
        dsi[j] *= a[i] * b[j];
      }
      dq[i] = acc_q;
      dkr[i] = acc_k;
      dla[i] = acc_a * a[i];
    }
    auto dlb = gr.dlog_beta.row(t);
    for (std::size_t j = 0; j < dv; ++j) dlb[j] = db[j] * b[j];
  }
  return gr;
}

GradBundle gla_layer_backward(const LayerCache& cache, const GLAParams& p, const Mat& d_y) {
  const std::size_t H = p.heads;
  const std::size_t hk = p.dk / H;
  const std::size_t hv = p.dv / H;
  const std::size_t L = cache.x.rows();
  if (d_y.rows() != L || d_y.cols() != p.d) throw ShapeError("layer backward: d_y shape");
  if (cache.states.size() != H) throw StateError("layer backward: cache holds no states");

  GradBundle out{p.zeros_like(), Mat(L, p.d)};
  GLAParams& gp = out.params;

  const Mat ro = hadamard(cache.r, cache.o_norm);
  gp.w_o = matmul_tn(ro, d_y);
  const Mat d_ro = matmul_nt(d_y, p.w_o);
  Mat dz_r(L, p.dv);
  Mat d_onorm(L, p.dv);
  for (std::size_t i = 0; i < dz_r.size(); ++i) {
    dz_r.data()[i] = d_ro.data()[i] * cache.o_norm.data()[i] * swish_grad(cache.r_logits.data()[i]);
    d_onorm.data()[i] = d_ro.data()[i] * cache.r.data()[i];
  }
  gp.w_r = matmul_tn(cache.x, dz_r);
  gp.b_r = column_sums(dz_r);
  add_inplace(out.dx, matmul_nt(dz_r, p.w_r));

  Mat dq(L, p.dk);
  Mat dk(L, p.dk);
  Mat dv(L, p.dv);
  Mat dla(L, p.dk);
  Mat dlb(L, p.dv);
  for (std::size_t h = 0; h < H; ++h) {
    const Mat d_oh = layernorm_backward(slice_cols(d_onorm, h * hv, (h + 1) * hv),
                                        cache.head_norm[h], cache.head_stats[h]);
    const RecurrentGrads rg = backward_recurrent(
        slice_cols(cache.q, h * hk, (h + 1) * hk), slice_cols(cache.k, h * hk, (h + 1) * hk),
        slice_cols(cache.v, h * hv, (h + 1) * hv), cache.gates.head(h, H), cache.states[h], d_oh);
    set_cols(dq, h * hk, rg.dq);
    set_cols(dk, h * hk, rg.dk);
    set_cols(dv, h * hv, rg.dv);
    set_cols(dla, h * hk, rg.dlog_alpha);
    set_cols(dlb, h * hv, rg.dlog_beta);
  }
  gp.w_q = matmul_tn(cache.x, dq);
  gp.w_k = matmul_tn(cache.x, dk);
  gp.w_v = matmul_tn(cache.x, dv);
  add_inplace(out.dx, matmul_nt(dq, p.w_q));
  add_inplace(out.dx, matmul_nt(dk, p.w_k));
  add_inplace(out.dx, matmul_nt(dv, p.w_v));

  gate_backward(dla, cache.alpha_logits, cache.alpha_hidden, cache.x, p.alpha, p.gate.tau,
                gp.alpha, out.dx);
  if (p.gate.use_beta) {
    gate_backward(dlb, cache.beta_logits, cache.beta_hidden, cache.x, p.beta, p.gate.tau,
                  gp.beta, out.dx);
  }
  return out;
}

GradBundle gla_block_backward(const BlockCache& cache, const GLAParams& p, const Mat& d_out) {
  const std::size_t L = cache.x.rows();
  if (d_out.rows() != L || d_out.cols() != p.d) throw ShapeError("block backward: d_out shape");

  Mat d_y = p.ffn_residual ? d_out : Mat(L, p.d);
  const Mat w3 = matmul_tn(cache.ffn_h, d_out);
  const Mat d_h = matmul_nt(d_out, p.w_3);
  Mat d_a(d_h.rows(), d_h.cols());
  Mat d_b(d_h.rows(), d_h.cols());
  for (std::size_t i = 0; i < d_h.size(); ++i) {
    const double a = cache.ffn_a.data()[i];
    d_a.data()[i] = d_h.data()[i] * cache.ffn_b.data()[i] * swish_grad(a);
    d_b.data()[i] = d_h.data()[i] * swish(a);
  }
  const Mat w1 = matmul_tn(cache.ln2, d_a);
  const Mat w2 = matmul_tn(cache.ln2, d_b);
  Mat d_ln2 = matmul_nt(d_a, p.w_1);
  add_inplace(d_ln2, matmul_nt(d_b, p.w_2));
  add_inplace(d_y, layernorm_backward(d_ln2, cache.ln2, cache.ln2_stats));

  GradBundle out = gla_layer_backward(cache.layer, p, d_y);
  out.params.w_1 = w1;
  out.params.w_2 = w2;
  out.params.w_3 = w3;
  Mat dx = layernorm_backward(out.dx, cache.ln1, cache.ln1_stats);
  add_inplace(dx, d_y);
  out.dx = std::move(dx);
  return out;
}

double grad_check(const std::function<double(const Mat&)>& fn, const Mat& p0,
                  const Mat& analytic, double h, std::size_t max_coords, std::uint64_t seed,
                  double floor) {
  if (!p0.same_shape(analytic)) throw ShapeError("grad_check: gradient shape mismatch");
  std::vector<std::size_t> coords(p0.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords != 0 && max_coords < coords.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    }
    coords.resize(max_coords);
  }
  Mat p = p0;
  double worst = 0.0;
  for (std::size_t idx : coords) {
    const double orig = p.data()[idx];
    p.data()[idx] = orig + h;
    const double up = fn(p);
    p.data()[idx] = orig - h;
    const double down = fn(p);
    p.data()[idx] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("grad_check: objective is not finite near coordinate " +
                         std::to_string(idx));
    }
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[idx];
    const double denom = std::max({std::fabs(a), std::fabs(numeric), floor});
    worst = std::max(worst, std::fabs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace gla
