// SPDX-License-Identifier: Apache-2.0
//
// Data-dependent decay gates. Everything is kept in log space; callers
// exponentiate differences of the cumulative sums at the point of use.
#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "gla/numkit.hpp"

namespace gla {

struct GateConfig {
  double tau = 16.0;
  std::optional<std::size_t> rank = 16;  // nullopt: full-rank projection
  bool use_beta = false;

  /// Throws ConfigError on tau <= 0 or rank == 0.
  void validate() const;
};

/// Projection for one gate family. Low rank: w1 is d x rank, w2 is rank x width.
/// Full rank: w1 is d x width and w2 is empty. bias is 1 x width.
struct GateProjection {
  Mat w1;
  Mat w2;
  Mat bias;

  bool empty() const noexcept { return w1.empty(); }
  std::size_t width() const noexcept { return bias.cols(); }
  std::size_t parameter_count() const noexcept { return w1.size() + w2.size() + bias.size(); }
};

/// Per-position log gates and their prefix sums. Row t holds position t+1;
/// the empty prefix (position 0) is implicit and equal to zero.
class GateSeq {
 public:
  GateSeq() = default;
  /// Builds LA and LB by prefix summation. Shapes must agree in length.
  static GateSeq from_log_gates(Mat log_alpha, Mat log_beta);
  /// Constant per-step gates, e.g. the fixed-decay specialization.
  static GateSeq constant(std::size_t length, std::size_t dk, std::size_t dv,
                          double log_alpha, double log_beta = 0.0);

  const Mat& log_alpha() const noexcept { return log_alpha_; }
  const Mat& log_beta() const noexcept { return log_beta_; }
  const Mat& LA() const noexcept { return la_; }
  const Mat& LB() const noexcept { return lb_; }

  std::size_t length() const noexcept { return log_alpha_.rows(); }
  std::size_t dk() const noexcept { return log_alpha_.cols(); }
  std::size_t dv() const noexcept { return log_beta_.cols(); }

  /// Column slice for head h of `heads`.
  GateSeq head(std::size_t h, std::size_t heads) const;
  /// Row slice [begin, end) re-based so the slice's empty prefix is zero.
  GateSeq window(std::size_t begin, std::size_t end) const;

 private:
  Mat log_alpha_;
  Mat log_beta_;
  Mat la_;
  Mat lb_;
};

/// Pre-activation logits x * w1 (* w2) + bias.
Mat gate_logits(const Mat& x, const GateProjection& p);

/// log_alpha = logsigmoid(logits) / tau, and likewise for beta when enabled;
/// with beta disabled log_beta is an L x dv block of zeros.
GateSeq compute_gates(const Mat& x, const GateProjection& alpha, const GateProjection& beta,
                      std::size_t dv, const GateConfig& cfg);

/// Random gates from standard-normal logits; a convenience for tests and tools.
GateSeq random_gates(Rng& rng, std::size_t length, std::size_t dk, std::size_t dv,
                     bool use_beta, double tau);

/// G_t = exp(log_alpha_t)^T exp(log_beta_t), for 1 <= t <= L.
Mat gate_matrix(const GateSeq& g, std::size_t t);

/// exp(LA_t - LA_i) and exp(LB_t - LB_i) for 0 <= i <= t <= L.
std::pair<std::vector<double>, std::vector<double>> segment_decay(const GateSeq& g,
                                                                  std::size_t i,
                                                                  std::size_t t);

}  // namespace gla
