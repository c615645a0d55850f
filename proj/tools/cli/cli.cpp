// SPDX-License-Identifier: Apache-2.0
#include "gla/cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cstdlib>
#include <ostream>
#include <sstream>
#include <string>

#include "gla/errors.hpp"

namespace gla::cli {

namespace {

constexpr std::array<const char*, 4> kCommands{"verify", "bench", "cost", "train"};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.front() == '-') {
      throw ConfigError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(std::string(what) + " must not be empty");
  return out;
}

std::uint64_t env_seed() {
  const char* raw = std::getenv("GLA_SEED");
  if (raw == nullptr || *raw == '\0') return 0;
  const std::string s(raw);
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.front() == '-') throw ConfigError("GLA_SEED must be a non-negative integer");
  return v;
}

// Config-file values become flags placed right after the subcommand, so any
// flag the user passes later on the line takes precedence.
std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    }
  }
  if (path.empty()) return args;
  const auto extra = read_config_file(path);
  auto it = std::find_if(args.begin(), args.end(), [](const std::string& a) {
    return std::find(kCommands.begin(), kCommands.end(), a) != kCommands.end();
  });
  if (it == args.end()) return args;
  args.insert(it + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int run(const std::vector<std::string>& args_in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gated linear attention: cross-form verification, chunk-size benchmarks, "
               "cost model and a toy trainer.",
               "gla"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 usage or configuration error, 2 verification failure.\n"
             "Seed precedence: --seed, then the config file, then $GLA_SEED, then 0.");

  std::string config_path;
  auto add_common = [&](CLI::App* sub, RunConfig& cfg) {
    sub->add_option("--config", config_path, "Read `key = value` defaults from a file");
    return sub->add_option("--seed", cfg.seed, "PRNG seed");
  };

  // verify
  RunConfig vcfg;
  vcfg.command = "verify";
  vcfg.L = 64;
  vcfg.dk = 8;
  vcfg.dv = 16;
  vcfg.C = 16;
  vcfg.c = 4;
  auto* verify = app.add_subcommand("verify", "Run the cross-form oracle suite; JSON report");
  CLI::Option* vseed = add_common(verify, vcfg);
  verify->add_option("--L", vcfg.L, "Sequence length")->capture_default_str();
  verify->add_option("--dk", vcfg.dk, "Key width")->capture_default_str();
  verify->add_option("--dv", vcfg.dv, "Value width")->capture_default_str();
  verify->add_option("--C", vcfg.C, "Chunk length (must divide L)")->capture_default_str();
  verify->add_option("--c", vcfg.c, "Sub-chunk length (must divide C)")->capture_default_str();
  verify->add_option("--tol", vcfg.tol, "Tolerance for form equivalence checks")
      ->capture_default_str();
  verify->add_option("--instances", vcfg.instances, "Random instances per check")
      ->capture_default_str();
  verify->add_option("--json", vcfg.json, "Write the JSON report here instead of stdout");
  verify->add_flag("--inject-fault", vcfg.inject_fault)->group("");

  // bench
  RunConfig bcfg;
  bcfg.command = "bench";
  bcfg.L = 2048;
  bcfg.d = 1024;
  bcfg.heads = 4;
  std::string bench_sweep = "16,32,64,128,256";
  std::string bench_forms = "chunkwise,two_level";
  auto* bench = app.add_subcommand("bench", "Time chunked forward passes over a chunk-size sweep");
  CLI::Option* bseed = add_common(bench, bcfg);
  bench->add_option("--L", bcfg.L, "Sequence length")->capture_default_str();
  bench->add_option("--d", bcfg.d, "Model width; d_k = d_v = d unless overridden")
      ->capture_default_str();
  bench->add_option("--dk", bcfg.dk, "Total key width across heads (default d)");
  bench->add_option("--dv", bcfg.dv, "Total value width across heads (default d)");
  bench->add_option("--heads", bcfg.heads, "Heads; widths are split evenly")
      ->capture_default_str();
  bench->add_option("--sweep", bench_sweep, "Comma-separated chunk lengths C")
      ->capture_default_str();
  bench->add_option("--c", bcfg.c, "Sub-chunk length (default min(16, C))");
  bench->add_option("--policy", bcfg.policy, "exact | mixed")->capture_default_str();
  bench->add_option("--forms", bench_forms, "Comma-separated forms")->capture_default_str();
  bench->add_option("--repeat", bcfg.repeat, "Timed runs per point (median)")
      ->capture_default_str();
  bench->add_option("--warmup", bcfg.warmup, "Untimed warmup runs")->capture_default_str();
  bench->add_option("--output", bcfg.output, "CSV path (default stdout)");

  // cost
  RunConfig ccfg;
  ccfg.command = "cost";
  ccfg.L = 2048;
  ccfg.d = 1024;
  ccfg.C = 128;
  ccfg.c = 16;
  std::string cost_sweep;
  std::string cost_forms = "recurrent,parallel,semiring,chunkwise,two_level";
  auto* cost = app.add_subcommand("cost", "Closed-form FLOP and traffic report");
  cost->add_option("--config", config_path, "Read `key = value` defaults from a file");
  cost->add_option("--L", ccfg.L, "Sequence length")->capture_default_str();
  cost->add_option("--d", ccfg.d, "Width; d_k = d_v = d unless overridden")
      ->capture_default_str();
  cost->add_option("--dk", ccfg.dk, "Key width (default d)");
  cost->add_option("--dv", ccfg.dv, "Value width (default d)");
  cost->add_option("--C", ccfg.C, "Chunk length")->capture_default_str();
  cost->add_option("--c", ccfg.c, "Sub-chunk length")->capture_default_str();
  cost->add_option("--sweep", cost_sweep, "Comma-separated chunk lengths (overrides --C)");
  cost->add_option("--forms", cost_forms, "Comma-separated forms")->capture_default_str();
  cost->add_option("--format", ccfg.format, "csv | table")->capture_default_str();
  cost->add_option("--elem-bytes", ccfg.elem_bytes, "Bytes per element for traffic")
      ->capture_default_str();
  cost->add_option("--batch", ccfg.batch, "Batch size (work-item proxy only)")
      ->capture_default_str();
  cost->add_option("--heads", ccfg.heads, "Heads (work-item proxy only)")->capture_default_str();
  cost->add_option("--output", ccfg.output, "Output path (default stdout)");

  // train
  RunConfig tcfg;
  tcfg.command = "train";
  double lr = 0.0;
  auto* train = app.add_subcommand("train", "Toy trainer; writes step,loss,accuracy CSV");
  CLI::Option* tseed = add_common(train, tcfg);
  train->add_option("--task", tcfg.task, "memorize_batch | copy")->capture_default_str();
  train->add_option("--steps", tcfg.steps, "Optimizer steps")->capture_default_str();
  CLI::Option* lr_opt =
      train->add_option("--lr", lr, "Learning rate (default 0.1 for sgd, 0.003 for adam)");
  train->add_option("--optimizer", tcfg.optimizer, "sgd | adam")->capture_default_str();
  train->add_flag("--resample", tcfg.resample, "Fresh batch every step");
  train->add_option("--clip", tcfg.clip, "Global gradient-norm clip (0 = off)")
      ->capture_default_str();
  train->add_option("--stop-accuracy", tcfg.stop_accuracy,
                    "Stop once scored accuracy reaches this (0 = off)")
      ->capture_default_str();
  train->add_option("--output", tcfg.output, "CSV path (default stdout)");

  try {
    std::vector<std::string> args = merge_config(args_in);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  } catch (const gla::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    auto resolve_seed = [](RunConfig& cfg, const CLI::Option* opt) {
      if (opt->count() == 0) cfg.seed = env_seed();
    };
    if (verify->parsed()) {
      resolve_seed(vcfg, vseed);
      return cmd_verify(vcfg, out, err);
    }
    if (bench->parsed()) {
      resolve_seed(bcfg, bseed);
      bcfg.sweep = parse_sizes(bench_sweep, "--sweep");
      bcfg.forms = split_list(bench_forms);
      return cmd_bench(bcfg, out, err);
    }
    if (cost->parsed()) {
      ccfg.sweep = cost_sweep.empty() ? std::vector<std::size_t>{ccfg.C}
                                      : parse_sizes(cost_sweep, "--sweep");
      ccfg.forms = split_list(cost_forms);
      return cmd_cost(ccfg, out, err);
    }
    if (train->parsed()) {
      resolve_seed(tcfg, tseed);
      if (lr_opt->count() > 0) tcfg.lr = lr;
      return cmd_train(tcfg, out, err);
    }
  } catch (const gla::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  err << app.help();
  return kUsage;
}

}  // namespace gla::cli
