// SPDX-License-Identifier: Apache-2.0
//
// The `gla` command line: verify, bench, cost and train.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gla::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kVerifyFailed = 2 };

struct RunConfig {
  std::string command;

  // shapes
  std::size_t L = 0;
  std::size_t d = 0;
  std::size_t dk = 0;
  std::size_t dv = 0;
  std::size_t heads = 1;

  // chunk plan; c == 0 means min(16, C)
  std::size_t C = 0;
  std::size_t c = 0;
  std::string policy = "exact";

  std::uint64_t seed = 0;
  std::size_t repeat = 5;
  std::size_t warmup = 3;
  double tol = 1e-9;
  std::size_t instances = 4;
  bool inject_fault = false;

  std::vector<std::size_t> sweep;
  std::vector<std::string> forms;
  std::string format = "csv";
  std::size_t elem_bytes = 2;
  std::size_t batch = 1;

  // train
  std::string task = "memorize_batch";
  std::string optimizer = "sgd";
  std::size_t steps = 2000;
  std::optional<double> lr;
  bool resample = false;
  double clip = 0.0;
  double stop_accuracy = 0.0;

  std::string output;  // empty: standard output
  std::string json;    // verify report path; empty: standard output
};

/// Parses `args` (without the program name) and runs the command.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// `key = value` lines, `#` comments, blank lines ignored. Returns the
/// equivalent `--key=value` arguments. Throws ConfigError on malformed lines
/// or an unreadable file.
std::vector<std::string> read_config_file(const std::string& path);

struct CheckResult {
  std::string check;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// The verification suite behind `gla verify`.
std::vector<CheckResult> run_verification(const RunConfig& cfg);

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_bench(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_cost(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// One bench row; timing fields are medians over `repeat` runs.
struct BenchRow {
  std::string form;
  std::size_t L = 0;
  std::size_t dk = 0;
  std::size_t dv = 0;
  std::size_t C = 0;
  std::size_t c = 0;
  std::string policy;
  std::uint64_t seed = 0;
  double ms_inter = 0.0;
  double ms_intra = 0.0;
  double ms_total = 0.0;
  double max_rel_err = 0.0;
};

std::vector<BenchRow> run_bench(const RunConfig& cfg);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);

}  // namespace gla::cli
