// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradients for the recurrence, the layer and the block, and a
// central-difference checker.
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gla/gating.hpp"
#include "gla/layer.hpp"
#include "gla/numkit.hpp"

namespace gla {

struct RecurrentGrads {
  Mat dq;
  Mat dk;
  Mat dv;
  Mat dlog_alpha;
  Mat dlog_beta;
};

/// `states` must be the full S_1 ... S_L sequence from recurrent_forward;
/// throws StateError otherwise.
RecurrentGrads backward_recurrent(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                                  const std::vector<Mat>& states, const Mat& d_out);

/// Gradients for every GLAParams entry (same names and shapes; beta entries
/// stay empty when the beta gate is off) plus the input gradient.
struct GradBundle {
  GLAParams params;
  Mat dx;
};

GradBundle gla_layer_backward(const LayerCache& cache, const GLAParams& p, const Mat& d_y);
GradBundle gla_block_backward(const BlockCache& cache, const GLAParams& p, const Mat& d_out);

/// Max relative error between `analytic` and central differences of `fn`
/// around p0, denominator max(|a|, |n|, floor). Checks every coordinate when
/// max_coords is 0 or at least p0.size(), otherwise a seeded random subset.
/// Throws NumericError if fn returns a non-finite value.
double grad_check(const std::function<double(const Mat&)>& fn, const Mat& p0,
                  const Mat& analytic, double h = 1e-6, std::size_t max_coords = 0,
                  std::uint64_t seed = 0, double floor = 1e-8);

}  // namespace gla
