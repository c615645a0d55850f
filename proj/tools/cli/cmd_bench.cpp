// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "gla/cli/cli.hpp"
#include "gla/errors.hpp"
#include "gla/forms.hpp"

namespace gla::cli {

namespace {

struct Head {
  Mat q, k, v;
  GateSeq g;
  Mat oracle;
};

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

std::vector<BenchRow> run_bench(const RunConfig& cfg) {
  const std::size_t heads = cfg.heads;
  const std::size_t dk = cfg.dk ? cfg.dk : cfg.d;
  const std::size_t dv = cfg.dv ? cfg.dv : cfg.d;
  if (cfg.L == 0 || dk == 0 || dv == 0 || heads == 0) {
    throw ConfigError("L, widths and heads must be positive");
  }
  if (dk % heads != 0 || dv % heads != 0) {
    throw ConfigError("d_k and d_v must be divisible by --heads");
  }
  if (cfg.repeat == 0) throw ConfigError("repeat must be at least 1");
  const PrecisionPolicy policy = parse_policy(cfg.policy);
  std::vector<Form> forms;
  for (const auto& name : cfg.forms) {
    const Form f = parse_form(name);
    if (f != Form::chunkwise && f != Form::two_level) {
      throw ConfigError("bench times chunked forms only (chunkwise, two_level)");
    }
    forms.push_back(f);
  }
  if (forms.empty()) throw ConfigError("no forms selected");
  std::vector<ChunkPlan> plans;
  for (std::size_t C : cfg.sweep) {
    ChunkPlan p{C, cfg.c ? cfg.c : std::min<std::size_t>(16, C), policy};
    p.validate(cfg.L);
    plans.push_back(p);
  }

  const std::size_t hk = dk / heads;
  const std::size_t hv = dv / heads;
  Rng rng(cfg.seed);
  std::vector<Head> hs(heads);
  for (auto& h : hs) {
    h.q = randn(rng, cfg.L, hk);
    h.k = randn(rng, cfg.L, hk);
    h.v = randn(rng, cfg.L, hv);
    h.g = random_gates(rng, cfg.L, hk, hv, false, 16.0);
    h.oracle = recurrent_forward(h.q, h.k, h.v, h.g, false).o;
  }

  struct Point {
    Form form;
    ChunkPlan plan;
    std::vector<double> inter, intra, total;
    double err = 0.0;
  };
  std::vector<Point> points;
  for (Form form : forms) {
    for (const ChunkPlan& plan : plans) points.push_back({form, plan, {}, {}, {}, 0.0});
  }

  auto time_once = [&](Point& pt, bool record) {
    PhaseTimes sum_times;
    double run_err = 0.0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& h : hs) {
      PhaseTimes t;
      const Mat o = forward(pt.form, h.q, h.k, h.v, h.g, pt.plan, &t);
      sum_times.inter_ms += t.inter_ms;
      sum_times.intra_ms += t.intra_ms;
      run_err = std::max(run_err, max_rel_error(o, h.oracle));
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    pt.err = run_err;
    if (!record) return;
    pt.inter.push_back(sum_times.inter_ms);
    pt.intra.push_back(sum_times.intra_ms);
    pt.total.push_back(ms);
  };

  // Warm up each point, then measure round-robin so slow drift in machine
  // speed lands on every sweep point instead of a contiguous few.
  for (auto& pt : points) {
    for (std::size_t run = 0; run < cfg.warmup; ++run) time_once(pt, false);
  }
  for (std::size_t run = 0; run < cfg.repeat; ++run) {
    for (auto& pt : points) time_once(pt, true);
  }

  std::vector<BenchRow> rows;
  for (const auto& pt : points) {
    rows.push_back({std::string(to_string(pt.form)), cfg.L, dk, dv, pt.plan.C, pt.plan.c,
                    std::string(to_string(policy)), cfg.seed, median(pt.inter), median(pt.intra),
                    median(pt.total), pt.err});
  }
  return rows;
}

void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
  out << "form,L,d_k,d_v,C,c,policy,seed,ms_inter,ms_intra,ms_total,max_rel_err_vs_oracle\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%zu,%zu,%s,%llu,%.4f,%.4f,%.4f,%.6e\n",
                  r.form.c_str(), r.L, r.dk, r.dv, r.C, r.c, r.policy.c_str(),
                  static_cast<unsigned long long>(r.seed), r.ms_inter, r.ms_intra, r.ms_total,
                  r.max_rel_err);
    out << buf;
  }
}

int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
  const auto rows = run_bench(cfg);
  if (cfg.output.empty()) {
    write_bench_csv(out, rows);
  } else {
    std::ofstream f(cfg.output);
    if (!f) throw ConfigError("cannot write '" + cfg.output + "'");
    write_bench_csv(f, rows);
  }
  return kOk;
}

}  // namespace gla::cli
