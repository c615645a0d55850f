// SPDX-License-Identifier: Apache-2.0
#include "gla/layer.hpp"

#include <cmath>
#include <string>

#include "gla/errors.hpp"

namespace gla {

namespace {

void expect_shape(const Mat& m, std::size_t rows, std::size_t cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()));
  }
}

void expect_projection(const GateProjection& g, std::size_t d, std::size_t width,
                       const GateConfig& cfg, const char* name) {
  if (cfg.rank) {
    expect_shape(g.w1, d, *cfg.rank, name);
    expect_shape(g.w2, *cfg.rank, width, name);
  } else {
    expect_shape(g.w1, d, width, name);
    if (!g.w2.empty()) throw ShapeError(std::string(name) + ": full-rank gate has a w2");
  }
  expect_shape(g.bias, 1, width, name);
}

Mat init(Rng& rng, std::size_t rows, std::size_t cols) {
  return randn(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
}

GateProjection init_projection(Rng& rng, std::size_t d, std::size_t width,
                               const GateConfig& cfg) {
  GateProjection g;
  if (cfg.rank) {
    g.w1 = init(rng, d, *cfg.rank);
    g.w2 = init(rng, *cfg.rank, width);
  } else {
    g.w1 = init(rng, d, width);
  }
  g.bias = Mat(1, width);
  return g;
}

void add_row_bias(Mat& x, const Mat& bias) {
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) x(r, c) += bias(0, c);
  }
}

}  // namespace

Preset Preset::named(std::string_view name) {
  Preset p;
  if (name == "default") return p;
  if (name == "beta") {
    p.name = "beta";
    p.gate.use_beta = true;
    return p;
  }
  if (name == "ffn_4d3") {
    p.name = "ffn_4d3";
    p.ffn_width = FfnWidth::four_thirds;
    return p;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

std::size_t ffn_hidden_width(std::size_t d, FfnWidth width) {
  const std::size_t num = width == FfnWidth::eight_thirds ? 8 * d : 4 * d;
  const std::size_t h = (num + 2) / 3;
  return (h + 7) / 8 * 8;
}

void GLAParams::validate() const {
  if (d == 0 || dk == 0 || dv == 0 || heads == 0) throw ShapeError("GLAParams: zero dimension");
  if (dk % heads != 0 || dv % heads != 0) {
    throw ShapeError("GLAParams: d_k and d_v must be divisible by the head count");
  }
  gate.validate();
  expect_shape(w_q, d, dk, "w_q");
  expect_shape(w_k, d, dk, "w_k");
  expect_shape(w_v, d, dv, "w_v");
  expect_projection(alpha, d, dk, gate, "alpha gate");
  if (gate.use_beta) {
    expect_projection(beta, d, dv, gate, "beta gate");
  } else if (!beta.empty()) {
    throw ConfigError("beta gate parameters present with use_beta off");
  }
  expect_shape(w_r, d, dv, "w_r");
  expect_shape(b_r, 1, dv, "b_r");
  expect_shape(w_o, dv, d, "w_o");
  expect_shape(w_1, d, ffn_hidden, "w_1");
  expect_shape(w_2, d, ffn_hidden, "w_2");
  expect_shape(w_3, ffn_hidden, d, "w_3");
}

std::size_t GLAParams::gate_parameter_count() const noexcept {
  return alpha.parameter_count() + beta.parameter_count();
}

std::size_t GLAParams::gla_parameter_count() const noexcept {
  return w_q.size() + w_k.size() + w_v.size() + gate_parameter_count() + w_r.size() +
         b_r.size() + w_o.size();
}

std::size_t GLAParams::ffn_parameter_count() const noexcept {
  return w_1.size() + w_2.size() + w_3.size();
}

std::vector<std::pair<std::string, Mat*>> GLAParams::named() {
  return {{"w_q", &w_q},         {"w_k", &w_k},         {"w_v", &w_v},
          {"w_alpha1", &alpha.w1}, {"w_alpha2", &alpha.w2}, {"b_alpha", &alpha.bias},
          {"w_beta1", &beta.w1}, {"w_beta2", &beta.w2}, {"b_beta", &beta.bias},
          {"w_r", &w_r},         {"b_r", &b_r},         {"w_o", &w_o},
          {"w_1", &w_1},         {"w_2", &w_2},         {"w_3", &w_3}};
}

std::vector<std::pair<std::string, const Mat*>> GLAParams::named() const {
  std::vector<std::pair<std::string, const Mat*>> out;
  for (auto& [name, m] : const_cast<GLAParams*>(this)->named()) out.emplace_back(name, m);
  return out;
}

GLAParams GLAParams::zeros_like() const {
  GLAParams z = *this;
  for (auto& [name, m] : z.named()) *m = Mat(m->rows(), m->cols());
  return z;
}

GLAParams allocate(std::size_t d, const Preset& preset, Rng& rng) {
  preset.gate.validate();
  if (preset.heads == 0 || preset.dk_divisor == 0 || d == 0 ||
      d % (preset.dk_divisor * preset.heads) != 0) {
    throw ConfigError("d must be divisible by " +
                      std::to_string(preset.dk_divisor * preset.heads));
  }
  GLAParams p;
  p.d = d;
  p.dk = d / preset.dk_divisor;
  p.dv = d;
  p.heads = preset.heads;
  p.ffn_hidden = ffn_hidden_width(d, preset.ffn_width);
  p.gate = preset.gate;
  p.ffn_residual = preset.ffn_residual;
  p.w_q = init(rng, d, p.dk);
  p.w_k = init(rng, d, p.dk);
  p.w_v = init(rng, d, p.dv);
  p.alpha = init_projection(rng, d, p.dk, p.gate);
  if (p.gate.use_beta) p.beta = init_projection(rng, d, p.dv, p.gate);
  p.w_r = init(rng, d, p.dv);
  p.b_r = Mat(1, p.dv);
  p.w_o = init(rng, p.dv, d);
  p.w_1 = init(rng, d, p.ffn_hidden);
  p.w_2 = init(rng, d, p.ffn_hidden);
  p.w_3 = init(rng, p.ffn_hidden, d);
  return p;
}

Mat gla_layer_forward(const Mat& x, const GLAParams& p, Form form, const ChunkPlan& plan,
                      LayerCache* cache) {
  p.validate();
  if (x.cols() != p.d) throw ShapeError("layer input width != d");
  const std::size_t H = p.heads;
  const std::size_t hk = p.dk / H;
  const std::size_t hv = p.dv / H;

  Mat q = matmul(x, p.w_q);
  Mat k = matmul(x, p.w_k);
  Mat v = matmul(x, p.w_v);

  Mat alpha_hidden = p.alpha.w2.empty() ? Mat() : matmul(x, p.alpha.w1);
  Mat alpha_logits =
      alpha_hidden.empty() ? matmul(x, p.alpha.w1) : matmul(alpha_hidden, p.alpha.w2);
  add_row_bias(alpha_logits, p.alpha.bias);
  Mat beta_hidden;
  Mat beta_logits;
  Mat log_beta(x.rows(), p.dv, 0.0);
  if (p.gate.use_beta) {
    beta_hidden = p.beta.w2.empty() ? Mat() : matmul(x, p.beta.w1);
    beta_logits = beta_hidden.empty() ? matmul(x, p.beta.w1) : matmul(beta_hidden, p.beta.w2);
    add_row_bias(beta_logits, p.beta.bias);
    log_beta = scale(logsigmoid(beta_logits), 1.0 / p.gate.tau);
  }
  GateSeq gates = GateSeq::from_log_gates(scale(logsigmoid(alpha_logits), 1.0 / p.gate.tau),
                                          std::move(log_beta));

  Mat o_norm(x.rows(), p.dv);
  if (cache) {
    cache->states.assign(H, {});
    cache->head_norm.assign(H, {});
    cache->head_stats.assign(H, {});
  }
  for (std::size_t h = 0; h < H; ++h) {
    const Mat qh = slice_cols(q, h * hk, (h + 1) * hk);
    const Mat kh = slice_cols(k, h * hk, (h + 1) * hk);
    const Mat vh = slice_cols(v, h * hv, (h + 1) * hv);
    const GateSeq gh = gates.head(h, H);
    Mat oh;
    if (cache) {
      RecurrentResult rr = recurrent_forward(qh, kh, vh, gh, true);
      cache->states[h] = std::move(rr.states);
      oh = std::move(rr.o);
    } else {
      oh = forward(form, qh, kh, vh, gh, plan);
    }
    NormStats stats;
    Mat nh = layernorm(oh, 1e-6, nullptr, cache ? &stats : nullptr);
    set_cols(o_norm, h * hv, nh);
    if (cache) {
      cache->head_norm[h] = std::move(nh);
      cache->head_stats[h] = std::move(stats);
    }
  }

  Mat r_logits = matmul(x, p.w_r);
  add_row_bias(r_logits, p.b_r);
  Mat r = swish(r_logits);
  Mat y = matmul(hadamard(r, o_norm), p.w_o);

  if (cache) {
    cache->x = x;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->alpha_hidden = std::move(alpha_hidden);
    cache->alpha_logits = std::move(alpha_logits);
    cache->beta_hidden = std::move(beta_hidden);
    cache->beta_logits = std::move(beta_logits);
    cache->gates = std::move(gates);
    cache->o_norm = std::move(o_norm);
    cache->r_logits = std::move(r_logits);
    cache->r = std::move(r);
  }
  return y;
}

Mat swiglu(const Mat& z, const GLAParams& p) {
  return matmul(hadamard(swish(matmul(z, p.w_1)), matmul(z, p.w_2)), p.w_3);
}

Mat gla_block_forward(const Mat& x, const GLAParams& p, Form form, const ChunkPlan& plan,
                      BlockCache* cache) {
  if (!cache) {
    Mat y = add(gla_layer_forward(layernorm(x), p, form, plan), x);
    Mat out = swiglu(layernorm(y), p);
    if (p.ffn_residual) add_inplace(out, y);
    return out;
  }
  cache->x = x;
  cache->ln1 = layernorm(x, 1e-6, nullptr, &cache->ln1_stats);
  cache->y = add(gla_layer_forward(cache->ln1, p, form, plan, &cache->layer), x);
  cache->ln2 = layernorm(cache->y, 1e-6, nullptr, &cache->ln2_stats);
  cache->ffn_a = matmul(cache->ln2, p.w_1);
  cache->ffn_b = matmul(cache->ln2, p.w_2);
  cache->ffn_h = hadamard(swish(cache->ffn_a), cache->ffn_b);
  Mat out = matmul(cache->ffn_h, p.w_3);
  if (p.ffn_residual) add_inplace(out, cache->y);
  return out;
}

}  // namespace gla
