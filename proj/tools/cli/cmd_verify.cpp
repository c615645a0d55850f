// SPDX-License-Identifier: Apache-2.0
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "gla/backprop.hpp"
#include "gla/cli/cli.hpp"
#include "gla/errors.hpp"
#include "gla/forms.hpp"
#include "gla/instrument.hpp"

namespace gla::cli {

namespace {

constexpr double kLemmaTol = 1e-12;
constexpr double kSpecialTol = 1e-10;
constexpr double kMixedTol = 5e-2;
constexpr double kGradQkvTol = 1e-5;
constexpr double kGradGateTol = 1e-4;
constexpr std::size_t kLemmaInstances = 25;

// Max over calls, in first-seen order.
class Report {
 public:
  void add(const std::string& check, double err, double tol) {
    auto it = index_.find(check);
    if (it == index_.end()) {
      index_[check] = rows_.size();
      rows_.push_back({check, 0.0, tol, true});
      it = index_.find(check);
    }
    CheckResult& r = rows_[it->second];
    if (std::isnan(err)) err = INFINITY;
    r.max_error = std::max(r.max_error, err);
    r.pass = r.max_error <= r.tolerance;
  }
  std::vector<CheckResult> take() { return std::move(rows_); }

 private:
  std::vector<CheckResult> rows_;
  std::map<std::string, std::size_t> index_;
};

Mat abs_of(const Mat& a) {
  Mat out = a;
  for (double& x : out.values()) x = std::fabs(x);
  return out;
}

// |mixed - exact| / (same computation on |Q|, |K|, |V|), the componentwise
// condition-number normalization for a sum of products.
double componentwise_error(const Mat& approx, const Mat& exact, const Mat& magnitude) {
  double worst = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double denom = std::max(magnitude.data()[i], 1e-300);
    worst = std::max(worst, std::fabs(approx.data()[i] - exact.data()[i]) / denom);
  }
  return worst;
}

void lemma_checks(Rng& rng, Report& rep) {
  for (std::size_t n = 0; n < kLemmaInstances; ++n) {
    const std::size_t d = 2 + rng.below(15);
    const Mat x = randn(rng, 1, d);
    const Mat y = randn(rng, 1, d);
    const Mat z = randn(rng, 1, d);
    // Errors are scaled by the sum of |terms|, the natural unit for a dot product.
    const double lhs = sum(hadamard(x, hadamard(y, z)));
    const double rhs = sum(hadamard(x, hadamard(z, y)));
    const double assoc = sum(hadamard(hadamard(x, y), z));
    const double mag = std::max(sum(abs_of(hadamard(x, hadamard(y, z)))), 1e-300);
    rep.add("lemma1_inner_product", std::fabs(lhs - rhs) / mag, kLemmaTol);
    rep.add("lemma1_inner_product", std::fabs(lhs - assoc) / mag, kLemmaTol);

    const std::size_t m = 1 + rng.below(8);
    const std::size_t k = 1 + rng.below(8);
    const std::size_t cols = 1 + rng.below(8);
    const Mat A = randn(rng, m, cols);
    const Mat B = randn(rng, k, cols);
    Mat c(1, cols);
    for (double& v : c.values()) v = std::exp(rng.normal());
    Mat Ac = A;
    Mat Bc = B;
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < cols; ++j) Ac(r, j) *= c(0, j);
    }
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t j = 0; j < cols; ++j) Bc(r, j) /= c(0, j);
    }
    const Mat exact2 = matmul_nt(A, B);
    rep.add("lemma2_scaled_product",
            componentwise_error(matmul_nt(Ac, Bc), exact2, matmul_nt(abs_of(A), abs_of(B))),
            kLemmaTol);

    const Mat B3 = randn(rng, cols, k);
    Mat c3(1, k);
    for (double& v : c3.values()) v = rng.normal();
    Mat lhs3 = matmul(A, B3);
    Mat b3c = B3;
    for (std::size_t r = 0; r < lhs3.rows(); ++r) {
      for (std::size_t j = 0; j < k; ++j) lhs3(r, j) *= c3(0, j);
    }
    for (std::size_t r = 0; r < cols; ++r) {
      for (std::size_t j = 0; j < k; ++j) b3c(r, j) *= c3(0, j);
    }
    rep.add("lemma3_column_scale",
            componentwise_error(matmul(A, b3c), lhs3, matmul(abs_of(A), abs_of(b3c))), kLemmaTol);

    const Mat x4 = randn(rng, 1, m);
    const Mat y4 = randn(rng, 1, m);
    const Mat z4 = randn(rng, 1, k);
    const Mat A4 = randn(rng, m, k);
    const Mat lhs4 = matmul(x4, hadamard(matmul_tn(y4, z4), A4));
    Mat rhs4 = matmul(hadamard(x4, y4), A4);
    for (std::size_t j = 0; j < k; ++j) rhs4(0, j) *= z4(0, j);
    const Mat mag4 = matmul(abs_of(x4), hadamard(abs_of(matmul_tn(y4, z4)), abs_of(A4)));
    rep.add("lemma4_outer_gate", componentwise_error(rhs4, lhs4, mag4), kLemmaTol);
  }
}

void gradient_checks(const RunConfig& cfg, Rng& rng, Report& rep) {
  const std::size_t L = std::min<std::size_t>(cfg.L, 16);
  const std::size_t dk = std::min<std::size_t>(cfg.dk, 4);
  const std::size_t dv = std::min<std::size_t>(cfg.dv, 6);
  const Mat q = randn(rng, L, dk);
  const Mat k = randn(rng, L, dk);
  const Mat v = randn(rng, L, dv);
  const GateSeq g = random_gates(rng, L, dk, dv, true, 4.0);
  const Mat w = randn(rng, L, dv);

  auto loss = [&](const Mat& qq, const Mat& kk, const Mat& vv, const GateSeq& gg) {
    return sum(hadamard(recurrent_forward(qq, kk, vv, gg, false).o, w));
  };
  const RecurrentResult rr = recurrent_forward(q, k, v, g, true);
  const RecurrentGrads gr = backward_recurrent(q, k, v, g, rr.states, w);

  rep.add("grad_recurrent_q", grad_check([&](const Mat& m) { return loss(m, k, v, g); }, q, gr.dq),
          kGradQkvTol);
  rep.add("grad_recurrent_k", grad_check([&](const Mat& m) { return loss(q, m, v, g); }, k, gr.dk),
          kGradQkvTol);
  rep.add("grad_recurrent_v", grad_check([&](const Mat& m) { return loss(q, k, m, g); }, v, gr.dv),
          kGradQkvTol);
  rep.add("grad_recurrent_log_alpha",
          grad_check(
              [&](const Mat& m) { return loss(q, k, v, GateSeq::from_log_gates(m, g.log_beta())); },
              g.log_alpha(), gr.dlog_alpha),
          kGradGateTol);
  rep.add("grad_recurrent_log_beta",
          grad_check(
              [&](const Mat& m) { return loss(q, k, v, GateSeq::from_log_gates(g.log_alpha(), m)); },
              g.log_beta(), gr.dlog_beta),
          kGradGateTol);
}

}  // namespace

std::vector<CheckResult> run_verification(const RunConfig& cfg) {
  if (cfg.L == 0 || cfg.dk == 0 || cfg.dv == 0) throw ConfigError("L, dk and dv must be positive");
  if (cfg.instances == 0) throw ConfigError("instances must be at least 1");
  if (!(cfg.tol >= 0.0)) throw ConfigError("tol must be non-negative");
  const ChunkPlan plan{cfg.C, cfg.c, PrecisionPolicy::exact};
  plan.validate(cfg.L);
  ChunkPlan mixed = plan;
  mixed.policy = PrecisionPolicy::mixed;

  std::optional<testing::FaultInjection> fault;
  if (cfg.inject_fault) fault.emplace();

  Report rep;
  Rng rng(cfg.seed);
  const std::size_t L = cfg.L;
  const std::size_t dk = cfg.dk;
  const std::size_t dv = cfg.dv;

  for (std::size_t n = 0; n < cfg.instances; ++n) {
    const double tau = n % 2 == 0 ? 1.0 : 16.0;
    const Mat q = randn(rng, L, dk);
    const Mat k = randn(rng, L, dk);
    const Mat v = randn(rng, L, dv);
    const GateSeq g = random_gates(rng, L, dk, dv, true, tau);
    const Mat ref = recurrent_forward(q, k, v, g, false).o;

    try {
      rep.add("parallel_vs_recurrent", max_rel_error(parallel_forward(q, k, v, g), ref), cfg.tol);
    } catch (const RangeError&) {
      // Out of the parallel form's range; covered by the semiring check.
    }
    instrument::ExpProbe semi_probe;
    {
      instrument::ExpProbeScope scope(semi_probe);
      rep.add("semiring_vs_recurrent", max_rel_error(semiring_forward(q, k, v, g), ref), cfg.tol);
    }
    rep.add("semiring_max_exponent", std::max(0.0, semi_probe.max_exponent), 0.0);
    rep.add("chunkwise_vs_recurrent", max_rel_error(chunkwise_forward(q, k, v, g, plan), ref),
            cfg.tol);
    instrument::ExpProbe two_probe;
    {
      instrument::ExpProbeScope scope(two_probe);
      rep.add("two_level_vs_recurrent", max_rel_error(two_level_forward(q, k, v, g, plan), ref),
              cfg.tol);
    }
    rep.add("two_level_max_exponent", std::max(0.0, two_probe.max_exponent), 0.0);
    const Mat magnitude = recurrent_forward(abs_of(q), abs_of(k), abs_of(v), g, false).o;
    rep.add("two_level_mixed_componentwise",
            componentwise_error(two_level_forward(q, k, v, g, mixed), ref, magnitude), kMixedTol);

    // Causality: changing rows after t0 must not touch rows up to t0.
    const std::size_t t0 = rng.below(L);
    Mat q2 = q;
    Mat k2 = k;
    Mat v2 = v;
    for (std::size_t t = t0 + 1; t < L; ++t) {
      for (double& x : q2.row(t)) x += 1.0;
      for (double& x : k2.row(t)) x -= 1.0;
      for (double& x : v2.row(t)) x *= 2.0;
    }
    for (Form f : {Form::recurrent, Form::parallel, Form::semiring, Form::chunkwise,
                   Form::two_level}) {
      try {
        const Mat a = forward(f, q, k, v, g, plan);
        const Mat b = forward(f, q2, k2, v2, g, plan);
        double diff = 0.0;
        for (std::size_t t = 0; t <= t0; ++t) {
          for (std::size_t c = 0; c < dv; ++c) diff = std::max(diff, std::fabs(a(t, c) - b(t, c)));
        }
        rep.add("causality_" + std::string(to_string(f)), diff, 0.0);
      } catch (const RangeError&) {
      }
    }
  }

  // Specializations: identity gates and constant gates.
  for (std::size_t n = 0; n < cfg.instances; ++n) {
    const Mat q = randn(rng, L, dk);
    const Mat k = randn(rng, L, dk);
    const Mat v = randn(rng, L, dv);
    const GateSeq open = GateSeq::constant(L, dk, dv, 0.0);
    rep.add("identity_gates_vs_linear_attention",
            max_rel_error(recurrent_forward(q, k, v, open, false).o, linear_attention_forward(q, k, v)),
            kSpecialTol);
    rep.add("identity_gates_vs_linear_attention",
            max_rel_error(chunkwise_forward(q, k, v, open, plan),
                          linear_attention_forward(q, k, v, plan)),
            kSpecialTol);
    for (double gamma : {0.5, 0.9, 0.99}) {
      const GateSeq cg = GateSeq::constant(L, dk, dv, std::log(gamma));
      const DecaySpec spec{gamma};
      rep.add("constant_gates_vs_retnet",
              max_rel_error(recurrent_forward(q, k, v, cg, false).o, retnet_forward(q, k, v, spec)),
              kSpecialTol);
      rep.add("constant_gates_vs_retnet",
              max_rel_error(chunkwise_forward(q, k, v, cg, plan), retnet_forward(q, k, v, spec, plan)),
              kSpecialTol);
    }
  }

  lemma_checks(rng, rep);
  gradient_checks(cfg, rng, rep);
  return rep.take();
}

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const std::vector<CheckResult> results = run_verification(cfg);
  nlohmann::json report = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    report.push_back({{"check", r.check},
                      {"max_error", r.max_error},
                      {"tolerance", r.tolerance},
                      {"pass", r.pass}});
    if (!r.pass) {
      ok = false;
      err << "FAILED " << r.check << ": max_error " << r.max_error << " > tolerance "
          << r.tolerance << "\n";
    }
  }
  if (cfg.json.empty()) {
    out << report.dump(2) << "\n";
  } else {
    std::ofstream f(cfg.json);
    if (!f) throw ConfigError("cannot write '" + cfg.json + "'");
    f << report.dump(2) << "\n";
  }
  return ok ? kOk : kVerifyFailed;
}

}  // namespace gla::cli
