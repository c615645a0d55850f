// SPDX-License-Identifier: Apache-2.0
#include "gla/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "gla/backprop.hpp"
#include "gla/errors.hpp"
#include "gla/layer.hpp"

namespace gla {

namespace {

struct Batch {
  std::vector<std::vector<std::size_t>> inputs;
  std::vector<std::vector<std::size_t>> targets;
  std::size_t scored_from = 0;  // positions [scored_from, seq_len) count
};

Batch make_batch(const TrainConfig& cfg, Rng& rng) {
  Batch b;
  const std::size_t L = cfg.seq_len;
  for (std::size_t s = 0; s < cfg.batch; ++s) {
    std::vector<std::size_t> seq(L + 1);
    if (cfg.task == Task::memorize_batch) {
      for (auto& t : seq) t = rng.below(cfg.vocab);
    } else {
      const std::size_t half = L / 2;
      const std::size_t sep = cfg.vocab - 1;
      for (std::size_t i = 0; i < half; ++i) seq[i] = rng.below(sep);
      seq[half] = sep;
      for (std::size_t i = 0; i < half; ++i) seq[half + 1 + i] = seq[i];
    }
    b.inputs.emplace_back(seq.begin(), seq.end() - 1);
    b.targets.emplace_back(seq.begin() + 1, seq.end());
  }
  b.scored_from = cfg.task == Task::copy ? L / 2 : 0;
  return b;
}

struct Model {
  Mat embed;  // vocab x d
  std::vector<GLAParams> blocks;
};

struct Slot {
  Mat* param;
  Mat grad;
  Mat m;
  Mat v;
};

// Loss and accuracy of one sequence; accumulates gradients into `grads`.
std::pair<double, std::size_t> sequence_pass(const Model& model, const std::vector<std::size_t>& in,
                                             const std::vector<std::size_t>& tgt,
                                             std::size_t scored_from, double weight,
                                             Mat& d_embed, std::vector<GLAParams>& grads) {
  const std::size_t L = in.size();
  const std::size_t d = model.embed.cols();
  const std::size_t V = model.embed.rows();
  const ChunkPlan plan{L, 1};

  Mat x(L, d);
  for (std::size_t t = 0; t < L; ++t) {
    std::copy(model.embed.row(in[t]).begin(), model.embed.row(in[t]).end(), x.row(t).begin());
  }
  std::vector<BlockCache> caches(model.blocks.size());
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    x = gla_block_forward(x, model.blocks[b], Form::recurrent, plan, &caches[b]);
  }
  NormStats final_stats;
  const Mat h = layernorm(x, 1e-6, nullptr, &final_stats);
  const Mat logits = matmul_nt(h, model.embed);

  Mat d_logits(L, V);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t t = scored_from; t < L; ++t) {
    const auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    loss += std::log(z) + mx - row[tgt[t]];
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == tgt[t]) ++correct;
    auto dr = d_logits.row(t);
    for (std::size_t c = 0; c < V; ++c) dr[c] = std::exp(row[c] - mx) / z * weight;
    dr[tgt[t]] -= weight;
  }

  add_inplace(d_embed, matmul_tn(d_logits, h));
  Mat dx = layernorm_backward(matmul(d_logits, model.embed), h, final_stats);
  for (std::size_t b = model.blocks.size(); b-- > 0;) {
    GradBundle g = gla_block_backward(caches[b], model.blocks[b], dx);
    auto dst = grads[b].named();
    auto src = g.params.named();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (!dst[i].second->empty()) add_inplace(*dst[i].second, *src[i].second);
    }
    dx = std::move(g.dx);
  }
  for (std::size_t t = 0; t < L; ++t) {
    auto dst = d_embed.row(in[t]);
    const auto src = dx.row(t);
    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
  }
  return {loss, correct};
}

}  // namespace

std::string_view to_string(Task t) noexcept {
  return t == Task::copy ? "copy" : "memorize_batch";
}

std::string_view to_string(Optimizer o) noexcept { return o == Optimizer::adam ? "adam" : "sgd"; }

Task parse_task(std::string_view name) {
  if (name == "memorize_batch") return Task::memorize_batch;
  if (name == "copy") return Task::copy;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

Optimizer parse_optimizer(std::string_view name) {
  if (name == "sgd") return Optimizer::sgd;
  if (name == "adam") return Optimizer::adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a finite value >= 0");
  if (batch < 1 || blocks < 1) throw ConfigError("batch and blocks must be at least 1");
  if (vocab < 2) throw ConfigError("vocab must be at least 2");
  if (seq_len < 2 || seq_len % 2 != 0) throw ConfigError("seq_len must be even and >= 2");
  if (heads == 0 || d % (2 * heads) != 0) throw ConfigError("d must be divisible by 2 * heads");
  if (clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0");
}

std::vector<TrainRecord> train_toy(const TrainConfig& cfg,
                                   const std::function<void(const TrainRecord&)>& on_step) {
  cfg.validate();
  Rng param_rng(cfg.seed);
  Rng data_rng(cfg.seed ^ 0xD1B54A32D192ED03ULL);

  Model model;
  model.embed = randn(param_rng, cfg.vocab, cfg.d, 1.0 / std::sqrt(static_cast<double>(cfg.d)));
  Preset preset;
  preset.heads = cfg.heads;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    model.blocks.push_back(allocate(cfg.d, preset, param_rng));
  }

  std::vector<GLAParams> grads;
  for (const auto& p : model.blocks) grads.push_back(p.zeros_like());
  Mat d_embed(cfg.vocab, cfg.d);

  // Parameter and gradient slots in a fixed order.
  std::vector<Slot> slots;
  std::vector<Mat*> grad_refs;
  slots.push_back({&model.embed, {}, Mat(cfg.vocab, cfg.d), Mat(cfg.vocab, cfg.d)});
  grad_refs.push_back(&d_embed);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    auto ps = model.blocks[b].named();
    auto gs = grads[b].named();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      if (ps[i].second->empty()) continue;
      const Mat& m = *ps[i].second;
      slots.push_back({ps[i].second, {}, Mat(m.rows(), m.cols()), Mat(m.rows(), m.cols())});
      grad_refs.push_back(gs[i].second);
    }
  }

  Batch batch = make_batch(cfg, data_rng);
  const std::size_t scored = cfg.seq_len - batch.scored_from;
  const double weight = 1.0 / static_cast<double>(cfg.batch * scored);

  std::vector<TrainRecord> trace;
  trace.reserve(cfg.steps);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    if (cfg.resample && step > 1) batch = make_batch(cfg, data_rng);
    for (Mat* g : grad_refs) std::fill(g->values().begin(), g->values().end(), 0.0);

    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t s = 0; s < cfg.batch; ++s) {
      const auto [l, c] = sequence_pass(model, batch.inputs[s], batch.targets[s],
                                        batch.scored_from, weight, d_embed, grads);
      loss += l;
      correct += c;
    }
    const TrainRecord rec{step, loss * weight,
                          static_cast<double>(correct) / static_cast<double>(cfg.batch * scored)};
    trace.push_back(rec);
    if (on_step) on_step(rec);
    if (cfg.stop_accuracy > 0.0 && rec.accuracy >= cfg.stop_accuracy) break;

    double scale_g = 1.0;
    if (cfg.clip_norm > 0.0) {
      double sq = 0.0;
      for (const Mat* g : grad_refs) {
        for (double v : g->values()) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > cfg.clip_norm) scale_g = cfg.clip_norm / norm;
    }
    const double t = static_cast<double>(step);
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < slots.size(); ++i) {
      Slot& sl = slots[i];
      auto p = sl.param->values();
      const auto g = grad_refs[i]->values();
      if (cfg.optimizer == Optimizer::sgd) {
        for (std::size_t j = 0; j < p.size(); ++j) p[j] -= cfg.lr * scale_g * g[j];
        continue;
      }
      auto m = sl.m.values();
      auto v = sl.v.values();
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double gj = g[j] * scale_g;
        m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * gj;
        v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * gj * gj;
        p[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + kEps);
      }
    }
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const std::vector<TrainRecord>& trace) {
  out << "step,loss,accuracy\n";
  char buf[96];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.loss, r.accuracy);
    out << buf;
  }
}

}  // namespace gla
