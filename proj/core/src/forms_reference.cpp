// SPDX-License-Identifier: Apache-2.0
//
// Ungated linear attention and fixed-decay retention. These are independent
// implementations, kept deliberately plain, used to cross-check the gated
// forms at their special cases.
#include <cmath>
#include <string>

#include "gla/errors.hpp"
#include "gla/forms.hpp"

namespace gla {

namespace {

void check_qkv(const Mat& q, const Mat& k, const Mat& v) {
  if (k.rows() != q.rows() || v.rows() != q.rows()) {
    throw ShapeError("attention: sequence lengths disagree");
  }
  if (k.cols() != q.cols()) throw ShapeError("attention: q and k widths disagree");
}

void check_chunk(std::size_t L, std::size_t C) {
  if (C == 0 || L % C != 0) {
    throw PlanError("C must divide L (C=" + std::to_string(C) + ", L=" + std::to_string(L) + ")");
  }
}

// S <- gamma S + k_t^T v_t; o_t = q_t S.
Mat decayed_recurrence(const Mat& q, const Mat& k, const Mat& v, double gamma) {
  const std::size_t dk = q.cols();
  const std::size_t dv = v.cols();
  Mat s(dk, dv);
  Mat o(q.rows(), dv);
  for (std::size_t t = 0; t < q.rows(); ++t) {
    for (std::size_t i = 0; i < dk; ++i) {
      for (std::size_t j = 0; j < dv; ++j) {
        s(i, j) = gamma * s(i, j) + k(t, i) * v(t, j);
        o(t, j) += q(t, i) * s(i, j);
      }
    }
  }
  return o;
}

// Masked score matrix with D_nm = gamma^(n-m) below the diagonal.
Mat decayed_parallel(const Mat& q, const Mat& k, const Mat& v, double gamma) {
  Mat p = matmul_nt(q, k);
  for (std::size_t n = 0; n < p.rows(); ++n) {
    for (std::size_t m = 0; m < p.cols(); ++m) {
      p(n, m) = m <= n ? p(n, m) * std::pow(gamma, static_cast<double>(n - m)) : 0.0;
    }
  }
  return matmul(p, v);
}

// Chunked form with within-chunk decay D, query decay Lambda_j = gamma^(j+1)
// and key decay Gamma_j = gamma^(C-1-j).
Mat decayed_chunkwise(const Mat& q, const Mat& k, const Mat& v, double gamma, std::size_t C) {
  check_chunk(q.rows(), C);
  const std::size_t dv = v.cols();
  Mat s(q.cols(), dv);
  Mat o(q.rows(), dv);
  const double gamma_c = std::pow(gamma, static_cast<double>(C));
  for (std::size_t b = 0; b < q.rows(); b += C) {
    const Mat qc = slice_rows(q, b, b + C);
    const Mat kc = slice_rows(k, b, b + C);
    const Mat vc = slice_rows(v, b, b + C);
    Mat out = decayed_parallel(qc, kc, vc, gamma);
    const Mat cross = matmul(qc, s);
    for (std::size_t j = 0; j < C; ++j) {
      const double lambda = std::pow(gamma, static_cast<double>(j + 1));
      for (std::size_t c = 0; c < dv; ++c) out(j, c) += cross(j, c) * lambda;
    }
    set_rows(o, b, out);
    Mat kg = kc;
    for (std::size_t j = 0; j < C; ++j) {
      const double g = std::pow(gamma, static_cast<double>(C - 1 - j));
      for (double& x : kg.row(j)) x *= g;
    }
    Mat next = matmul_tn(kg, vc);
    axpy_inplace(next, gamma_c, s);
    s = std::move(next);
  }
  return o;
}

}  // namespace

Mat linear_attention_forward(const Mat& q, const Mat& k, const Mat& v,
                             const std::optional<ChunkPlan>& plan) {
  check_qkv(q, k, v);
  if (!plan) return decayed_recurrence(q, k, v, 1.0);
  check_chunk(q.rows(), plan->C);
  const std::size_t C = plan->C;
  Mat s(q.cols(), v.cols());
  Mat o(q.rows(), v.cols());
  for (std::size_t b = 0; b < q.rows(); b += C) {
    const Mat qc = slice_rows(q, b, b + C);
    const Mat kc = slice_rows(k, b, b + C);
    const Mat vc = slice_rows(v, b, b + C);
    Mat out = linear_attention_parallel(qc, kc, vc);
    add_inplace(out, matmul(qc, s));
    set_rows(o, b, out);
    add_inplace(s, matmul_tn(kc, vc));
  }
  return o;
}

Mat linear_attention_parallel(const Mat& q, const Mat& k, const Mat& v) {
  check_qkv(q, k, v);
  Mat p = matmul_nt(q, k);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    for (std::size_t j = i + 1; j < p.cols(); ++j) p(i, j) = 0.0;
  }
  return matmul(p, v);
}

Mat retnet_forward(const Mat& q, const Mat& k, const Mat& v, const DecaySpec& spec,
                   const std::optional<ChunkPlan>& plan) {
  check_qkv(q, k, v);
  spec.validate();
  if (!plan) return decayed_recurrence(q, k, v, spec.gamma);
  return decayed_chunkwise(q, k, v, spec.gamma, plan->C);
}

Mat retnet_parallel(const Mat& q, const Mat& k, const Mat& v, const DecaySpec& spec) {
  check_qkv(q, k, v);
  spec.validate();
  return decayed_parallel(q, k, v, spec.gamma);
}

}  // namespace gla
