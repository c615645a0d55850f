// SPDX-License-Identifier: Apache-2.0
#include "gla/gating.hpp"

#include <cmath>
#include <string>

#include "gla/errors.hpp"

namespace gla {

namespace {

Mat prefix_sum(const Mat& x) {
  Mat out = x;
  for (std::size_t r = 1; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += out(r - 1, c);
  }
  return out;
}

// Value of a prefix-sum matrix at 1-based position t; position 0 is zero.
double at(const Mat& prefix, std::size_t t, std::size_t c) {
  return t == 0 ? 0.0 : prefix(t - 1, c);
}

}  // namespace

void GateConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("gate temperature must be positive");
  if (rank && *rank == 0) throw ConfigError("gate rank must be at least 1");
}

GateSeq GateSeq::from_log_gates(Mat log_alpha, Mat log_beta) {
  if (log_alpha.rows() != log_beta.rows()) {
    throw ShapeError("GateSeq: alpha and beta lengths differ");
  }
  GateSeq g;
  g.la_ = prefix_sum(log_alpha);
  g.lb_ = prefix_sum(log_beta);
  g.log_alpha_ = std::move(log_alpha);
  g.log_beta_ = std::move(log_beta);
  return g;
}

GateSeq GateSeq::constant(std::size_t length, std::size_t dk, std::size_t dv, double log_alpha,
                          double log_beta) {
  return from_log_gates(Mat(length, dk, log_alpha), Mat(length, dv, log_beta));
}

GateSeq GateSeq::head(std::size_t h, std::size_t heads) const {
  if (heads == 0 || dk() % heads != 0 || dv() % heads != 0 || h >= heads) {
    throw ShapeError("GateSeq::head: widths not divisible by head count");
  }
  const std::size_t hk = dk() / heads;
  const std::size_t hv = dv() / heads;
  GateSeq g;
  g.log_alpha_ = slice_cols(log_alpha_, h * hk, (h + 1) * hk);
  g.log_beta_ = slice_cols(log_beta_, h * hv, (h + 1) * hv);
  g.la_ = slice_cols(la_, h * hk, (h + 1) * hk);
  g.lb_ = slice_cols(lb_, h * hv, (h + 1) * hv);
  return g;
}

GateSeq GateSeq::window(std::size_t begin, std::size_t end) const {
  return from_log_gates(slice_rows(log_alpha_, begin, end), slice_rows(log_beta_, begin, end));
}

Mat gate_logits(const Mat& x, const GateProjection& p) {
  Mat z = p.w2.empty() ? matmul(x, p.w1) : matmul(matmul(x, p.w1), p.w2);
  if (p.bias.rows() != 1 || p.bias.cols() != z.cols()) {
    throw ShapeError("gate bias must be 1 x " + std::to_string(z.cols()));
  }
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += p.bias(0, c);
  }
  return z;
}

GateSeq compute_gates(const Mat& x, const GateProjection& alpha, const GateProjection& beta,
                      std::size_t dv, const GateConfig& cfg) {
  cfg.validate();
  const double inv_tau = 1.0 / cfg.tau;
  Mat log_alpha = scale(logsigmoid(gate_logits(x, alpha)), inv_tau);
  Mat log_beta;
  if (cfg.use_beta) {
    if (beta.empty()) throw ConfigError("use_beta set but no beta projection given");
    log_beta = scale(logsigmoid(gate_logits(x, beta)), inv_tau);
    if (log_beta.cols() != dv) throw ShapeError("beta projection width != d_v");
  } else {
    log_beta = Mat(x.rows(), dv, 0.0);
  }
  return GateSeq::from_log_gates(std::move(log_alpha), std::move(log_beta));
}

GateSeq random_gates(Rng& rng, std::size_t length, std::size_t dk, std::size_t dv, bool use_beta,
                     double tau) {
  if (!(tau > 0.0)) throw ConfigError("gate temperature must be positive");
  Mat log_alpha = scale(logsigmoid(randn(rng, length, dk)), 1.0 / tau);
  Mat log_beta =
      use_beta ? scale(logsigmoid(randn(rng, length, dv)), 1.0 / tau) : Mat(length, dv, 0.0);
  return GateSeq::from_log_gates(std::move(log_alpha), std::move(log_beta));
}

Mat gate_matrix(const GateSeq& g, std::size_t t) {
  if (t < 1 || t > g.length()) {
    throw IndexError("gate_matrix: t=" + std::to_string(t) + " outside [1, " +
                     std::to_string(g.length()) + "]");
  }
  Mat out(g.dk(), g.dv());
  for (std::size_t i = 0; i < g.dk(); ++i) {
    const double a = std::exp(g.log_alpha()(t - 1, i));
    for (std::size_t j = 0; j < g.dv(); ++j) out(i, j) = a * std::exp(g.log_beta()(t - 1, j));
  }
  return out;
}

std::pair<std::vector<double>, std::vector<double>> segment_decay(const GateSeq& g,
                                                                  std::size_t i,
                                                                  std::size_t t) {
  if (i > t || t > g.length()) {
    throw IndexError("segment_decay: need 0 <= i <= t <= L");
  }
  std::vector<double> a(g.dk());
  std::vector<double> b(g.dv());
  for (std::size_t c = 0; c < g.dk(); ++c) a[c] = std::exp(at(g.LA(), t, c) - at(g.LA(), i, c));
  for (std::size_t c = 0; c < g.dv(); ++c) b[c] = std::exp(at(g.LB(), t, c) - at(g.LB(), i, c));
  return {std::move(a), std::move(b)};
}

}  // namespace gla
