// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "gla/errors.hpp"
#include "gla/layer.hpp"
#include "oracles.hpp"

namespace gla {
namespace {

GLAParams small(std::uint64_t seed, std::size_t d = 16, const Preset& preset = Preset{}) {
  Rng rng(seed);
  return allocate(d, preset, rng);
}

// Copies column blocks of width w in the order perm.
Mat permute_col_blocks(const Mat& m, std::size_t w, const std::vector<std::size_t>& perm) {
  Mat out(m.rows(), m.cols());
  for (std::size_t h = 0; h < perm.size(); ++h) {
    set_cols(out, h * w, slice_cols(m, perm[h] * w, (perm[h] + 1) * w));
  }
  return out;
}

TEST(Allocate, DefaultPresetShapes) {
  const GLAParams p = small(0, 16);
  EXPECT_EQ(p.dk, 8u);
  EXPECT_EQ(p.dv, 16u);
  EXPECT_EQ(p.heads, 4u);
  EXPECT_EQ(p.alpha.w1.cols(), 16u);
  EXPECT_EQ(p.alpha.w2.rows(), 16u);
  EXPECT_TRUE(p.beta.empty());
  EXPECT_NO_THROW(p.validate());
  for (double v : p.alpha.bias.values()) EXPECT_EQ(v, 0.0);
  for (double v : p.b_r.values()) EXPECT_EQ(v, 0.0);
}

TEST(Allocate, MinimumShape) {
  const GLAParams p = small(0, 8);
  EXPECT_EQ(p.dk / p.heads, 1u);
  EXPECT_EQ(p.dv / p.heads, 2u);
  Rng rng(1);
  const Mat x = randn(rng, 6, 8);
  EXPECT_TRUE(all_finite(gla_layer_forward(x, p, Form::two_level, ChunkPlan{2, 1})));
}

TEST(Allocate, DivisibilityChecked) {
  Rng rng(0);
  EXPECT_THROW(allocate(12, Preset{}, rng), ConfigError);
  EXPECT_THROW(allocate(0, Preset{}, rng), ConfigError);
  EXPECT_THROW(Preset::named("huge"), ConfigError);
}

TEST(Allocate, InitScale) {
  const GLAParams p = small(3, 256);
  double s2 = 0.0;
  for (double v : p.w_q.values()) s2 += v * v;
  EXPECT_NEAR(s2 / double(p.w_q.size()), 1.0 / 256.0, 0.1 / 256.0);
}

TEST(ParameterCount, Reproduces4dSquaredAnd8dSquared) {
  const GLAParams p = small(0, 1024);
  const double d2 = 1024.0 * 1024.0;
  EXPECT_LE(std::fabs(double(p.gla_parameter_count()) - 4 * d2), 0.05 * 4 * d2);
  EXPECT_LE(std::fabs(double(p.ffn_parameter_count()) - 8 * d2), 0.05 * 8 * d2);
  // exact sums of the allocated shapes
  const std::size_t d = 1024, dk = 512, dv = 1024, r = 16, h = 2736;
  EXPECT_EQ(p.ffn_hidden, h);
  EXPECT_EQ(p.gla_parameter_count(),
            2 * d * dk + d * dv + (r * (d + dk) + dk) + d * dv + dv + dv * d);
  EXPECT_EQ(p.ffn_parameter_count(), 3 * d * h);
}

TEST(ParameterCount, GateBudgetUnderTwoPercent) {
  // 16 * (d + d/2) + d/2 against 4d^2; at d = 256 this is 2.39%
  for (std::size_t d : {256, 512, 1024}) {
    const GLAParams p = small(0, d);
    EXPECT_LT(double(p.gate_parameter_count()), 0.02 * 4.0 * double(d * d)) << "d=" << d;
  }
}

TEST(ParameterCount, GateAndBetaBudget) {
  for (std::size_t d : {256, 512, 1024}) {
    const GLAParams p = small(0, d);
    const std::size_t r = 16;
    EXPECT_EQ(p.gate_parameter_count(), r * (d + p.dk) + p.dk);
    const GLAParams pb = small(0, d, Preset::named("beta"));
    EXPECT_LT(p.gla_parameter_count(), pb.gla_parameter_count());
  }
}

TEST(FfnWidth, RoundingRule) {
  EXPECT_EQ(ffn_hidden_width(1024, FfnWidth::four_thirds), 1368u);
  EXPECT_EQ(ffn_hidden_width(1024, FfnWidth::eight_thirds), 2736u);
  EXPECT_EQ(ffn_hidden_width(16, FfnWidth::four_thirds), 24u);
  EXPECT_EQ(ffn_hidden_width(64, FfnWidth::eight_thirds), 176u);
  EXPECT_EQ(small(0, 48, Preset::named("ffn_4d3")).ffn_hidden, 64u);
}

TEST(LayerForward, ZeroOutputGateKillsOutput) {
  GLAParams p = small(1);
  p.w_r = Mat(p.d, p.dv);
  p.b_r = Mat(1, p.dv);
  Rng rng(2);
  const Mat y = gla_layer_forward(randn(rng, 12, p.d), p, Form::recurrent, ChunkPlan{4, 2});
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerForward, SingleHeadMatchesManualComposition) {
  Preset preset;
  preset.heads = 1;
  const GLAParams p = small(4, 8, preset);
  Rng rng(5);
  const Mat x = randn(rng, 10, 8);
  const Mat q = oracle::naive_matmul(x, p.w_q);
  const Mat k = oracle::naive_matmul(x, p.w_k);
  const Mat v = oracle::naive_matmul(x, p.w_v);
  const GateSeq g = compute_gates(x, p.alpha, p.beta, p.dv, p.gate);
  const Mat o = layernorm(oracle::unfolded_gla(q, k, v, g));
  Mat rl = oracle::naive_matmul(x, p.w_r);
  for (std::size_t t = 0; t < rl.rows(); ++t) {
    for (std::size_t j = 0; j < rl.cols(); ++j) rl(t, j) += p.b_r(0, j);
  }
  const Mat want = oracle::naive_matmul(hadamard(swish(rl), o), p.w_o);
  EXPECT_LE(max_rel_error(gla_layer_forward(x, p, Form::recurrent, ChunkPlan{5, 5}), want),
            1e-11);
}

TEST(LayerForward, FormsAgree) {
  for (const char* preset : {"default", "beta"}) {
    const GLAParams p = small(6, 32, Preset::named(preset));
    Rng rng(7);
    const Mat x = randn(rng, 64, 32);
    const ChunkPlan plan{16, 4};
    const Mat ref = gla_layer_forward(x, p, Form::recurrent, plan);
    for (Form f : {Form::parallel, Form::semiring, Form::chunkwise, Form::two_level}) {
      EXPECT_LE(max_rel_error(gla_layer_forward(x, p, f, plan), ref), 1e-9)
          << preset << " " << to_string(f);
    }
  }
}

TEST(LayerForward, CacheKeepsResultAndStates) {
  const GLAParams p = small(8);
  Rng rng(9);
  const Mat x = randn(rng, 8, p.d);
  LayerCache cache;
  const Mat a = gla_layer_forward(x, p, Form::chunkwise, ChunkPlan{4, 4}, &cache);
  const Mat b = gla_layer_forward(x, p, Form::chunkwise, ChunkPlan{4, 4});
  EXPECT_LE(max_rel_error(a, b), 1e-12);
  ASSERT_EQ(cache.states.size(), p.heads);
  EXPECT_EQ(cache.states[0].size(), 8u);
}

TEST(LayerForward, HeadPermutation) {
  GLAParams p = small(10, 16);
  p.w_o = Mat::identity(16);  // dv == d
  Rng rng(11);
  const Mat x = randn(rng, 12, 16);
  const ChunkPlan plan{4, 2};
  const Mat y = gla_layer_forward(x, p, Form::chunkwise, plan);

  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const std::size_t hk = p.dk / 4, hv = p.dv / 4;
  GLAParams pp = p;
  pp.w_q = permute_col_blocks(p.w_q, hk, perm);
  pp.w_k = permute_col_blocks(p.w_k, hk, perm);
  pp.w_v = permute_col_blocks(p.w_v, hv, perm);
  pp.alpha.w2 = permute_col_blocks(p.alpha.w2, hk, perm);
  pp.alpha.bias = permute_col_blocks(p.alpha.bias, hk, perm);
  pp.w_r = permute_col_blocks(p.w_r, hv, perm);
  pp.b_r = permute_col_blocks(p.b_r, hv, perm);
  const Mat yp = gla_layer_forward(x, pp, Form::chunkwise, plan);
  EXPECT_LE(max_rel_error(yp, permute_col_blocks(y, hv, perm)), 1e-13);
}

TEST(LayerForward, ShapeErrors) {
  const GLAParams p = small(12);
  EXPECT_THROW(gla_layer_forward(Mat(4, 15), p, Form::recurrent, ChunkPlan{4, 4}), ShapeError);
  EXPECT_THROW(gla_layer_forward(Mat(6, 16), p, Form::chunkwise, ChunkPlan{4, 4}), PlanError);
  GLAParams bad = p;
  bad.w_q = Mat(16, 7);
  EXPECT_THROW(bad.validate(), ShapeError);
}

TEST(Block, ZeroWeightsPassThrough) {
  const GLAParams p = small(13).zeros_like();
  Rng rng(14);
  const Mat x = randn(rng, 8, 16);
  EXPECT_EQ(gla_block_forward(x, p, Form::recurrent, ChunkPlan{4, 4}), x);
}

TEST(Block, SwigluZeroGateIsZero) {
  GLAParams p = small(15);
  p.w_1 = Mat(p.d, p.ffn_hidden);
  Rng rng(16);
  const Mat out = swiglu(randn(rng, 5, p.d), p);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(Block, FfnResidualToggle) {
  GLAParams p = small(17);
  Rng rng(18);
  const Mat x = randn(rng, 8, p.d);
  const ChunkPlan plan{4, 4};
  const Mat with = gla_block_forward(x, p, Form::recurrent, plan);
  p.ffn_residual = false;
  const Mat without = gla_block_forward(x, p, Form::recurrent, plan);
  const Mat y = add(gla_layer_forward(layernorm(x), p, Form::recurrent, plan), x);
  EXPECT_LE(max_abs_error(sub(with, without), y), 1e-12);
}

TEST(Block, TwoBlockStackFormsAgree) {
  const GLAParams p1 = small(19, 32);
  const GLAParams p2 = small(20, 32);
  Rng rng(21);
  const Mat x = randn(rng, 64, 32);
  const ChunkPlan plan{16, 4};
  auto stack = [&](Form f) {
    return gla_block_forward(gla_block_forward(x, p1, f, plan), p2, f, plan);
  };
  const Mat ref = stack(Form::recurrent);
  EXPECT_LE(max_rel_error(stack(Form::chunkwise), ref), 1e-8);
  EXPECT_LE(max_rel_error(stack(Form::two_level), ref), 1e-8);
}

}  // namespace
}  // namespace gla
