// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>

#include "gla/cli/cli.hpp"
#include "gla/errors.hpp"
#include "gla/train.hpp"

namespace gla::cli {

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  TrainConfig t;
  t.task = parse_task(cfg.task);
  t.optimizer = parse_optimizer(cfg.optimizer);
  t.lr = cfg.lr ? *cfg.lr : (t.optimizer == Optimizer::adam ? 0.003 : 0.1);
  t.steps = cfg.steps;
  t.seed = cfg.seed;
  t.resample = cfg.resample;
  t.clip_norm = cfg.clip;
  t.stop_accuracy = cfg.stop_accuracy;
  t.validate();

  const auto trace = train_toy(t);

  std::ostream* summary = &out;
  if (cfg.output.empty()) {
    write_trace_csv(out, trace);
    summary = &err;
  } else {
    std::ofstream f(cfg.output);
    if (!f) throw ConfigError("cannot write '" + cfg.output + "'");
    write_trace_csv(f, trace);
  }
  if (!trace.empty()) {
    const double first = trace.front().loss;
    const double last = trace.back().loss;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "task=%s optimizer=%s steps=%zu loss %.6f -> %.6f (ratio %.4f) accuracy %.4f\n",
                  std::string(to_string(t.task)).c_str(),
                  std::string(to_string(t.optimizer)).c_str(), trace.size(), first, last,
                  last / first, trace.back().accuracy);
    *summary << buf;
  }
  return kOk;
}

}  // namespace gla::cli
