// SPDX-License-Identifier: Apache-2.0
//
// Multi-head GLA layer, output gate and the pre-norm block with a SwiGLU
// feed-forward. Parameter shapes follow the default allocation
// d_k = d/2, d_v = d, four heads, low-rank forget gate.
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gla/forms.hpp"
#include "gla/gating.hpp"
#include "gla/numkit.hpp"

namespace gla {

enum class FfnWidth : std::uint8_t {
  eight_thirds,  // ceil(8d/3), rounded up to a multiple of 8: ~8d^2 FFN parameters
  four_thirds,   // ceil(4d/3), rounded up to a multiple of 8
};

struct Preset {
  std::string name = "default";
  std::size_t dk_divisor = 2;  // d_k = d / dk_divisor
  std::size_t heads = 4;
  GateConfig gate{};
  FfnWidth ffn_width = FfnWidth::eight_thirds;
  bool ffn_residual = true;

  /// "default", "beta" (use_beta on) or "ffn_4d3" (narrow FFN).
  static Preset named(std::string_view name);
};

std::size_t ffn_hidden_width(std::size_t d, FfnWidth width);

struct GLAParams {
  std::size_t d = 0;
  std::size_t dk = 0;
  std::size_t dv = 0;
  std::size_t heads = 1;
  std::size_t ffn_hidden = 0;
  GateConfig gate{};
  bool ffn_residual = true;

  Mat w_q;  // d x dk
  Mat w_k;  // d x dk
  Mat w_v;  // d x dv
  GateProjection alpha;
  GateProjection beta;  // empty unless gate.use_beta
  Mat w_r;  // d x dv
  Mat b_r;  // 1 x dv
  Mat w_o;  // dv x d
  Mat w_1;  // d x h
  Mat w_2;  // d x h
  Mat w_3;  // h x d

  /// Throws ShapeError/ConfigError on inconsistent shapes.
  void validate() const;

  std::size_t gla_parameter_count() const noexcept;
  std::size_t ffn_parameter_count() const noexcept;
  std::size_t gate_parameter_count() const noexcept;
  std::size_t parameter_count() const noexcept {
    return gla_parameter_count() + ffn_parameter_count();
  }

  /// Stable (name, matrix) listing; beta entries are present but empty when
  /// the beta gate is disabled.
  std::vector<std::pair<std::string, Mat*>> named();
  std::vector<std::pair<std::string, const Mat*>> named() const;

  /// Same metadata and shapes, all entries zero.
  GLAParams zeros_like() const;
};

/// Throws ConfigError unless d is divisible by dk_divisor * heads.
GLAParams allocate(std::size_t d, const Preset& preset, Rng& rng);

/// Values retained by the layer forward for the backward pass.
struct LayerCache {
  Mat x;
  Mat q, k, v;
  Mat alpha_hidden;  // x * w1 for the low-rank alpha projection
  Mat alpha_logits;
  Mat beta_hidden;
  Mat beta_logits;
  GateSeq gates;
  std::vector<std::vector<Mat>> states;  // per head, S_1 ... S_L
  std::vector<Mat> head_norm;            // per head, layernorm output
  std::vector<NormStats> head_stats;
  Mat o_norm;  // concat of head_norm
  Mat r_logits;
  Mat r;
};

struct BlockCache {
  Mat x;
  Mat ln1;
  NormStats ln1_stats;
  LayerCache layer;
  Mat y;
  Mat ln2;
  NormStats ln2_stats;
  Mat ffn_a;  // ln2 * w_1
  Mat ffn_b;  // ln2 * w_2
  Mat ffn_h;  // swish(a) * b
};

/// When `cache` is non-null the attention core runs the recurrent form with
/// states retained, regardless of `form`.
Mat gla_layer_forward(const Mat& x, const GLAParams& p, Form form, const ChunkPlan& plan,
                      LayerCache* cache = nullptr);

/// (swish(z W1) * (z W2)) W3.
Mat swiglu(const Mat& z, const GLAParams& p);

Mat gla_block_forward(const Mat& x, const GLAParams& p, Form form, const ChunkPlan& plan,
                      BlockCache* cache = nullptr);

}  // namespace gla
