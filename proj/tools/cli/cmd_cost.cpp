// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gla/cli/cli.hpp"
#include "gla/costmodel.hpp"
#include "gla/errors.hpp"

namespace gla::cli {

namespace {

const std::vector<std::string> kColumns{
    "form",          "L",          "d_k",         "d_v",
    "C",             "c",          "flops_matmul_halfable", "flops_matmul_state",
    "flops_elementwise", "exp_count", "flops_total", "bytes_state_traffic",
    "bytes_io_total", "parallel_work_items"};

bool chunked(Form f) { return f == Form::chunkwise || f == Form::two_level; }

void write_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows,
                 bool csv) {
  if (csv) {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    return;
  }
  std::vector<std::size_t> width(kColumns.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << "  ";
      // left-align the form name, right-align numbers
      if (i == 0) {
        out << row[i] << std::string(width[i] - row[i].size(), ' ');
      } else {
        out << std::string(width[i] - row[i].size(), ' ') << row[i];
      }
    }
    out << "\n";
  }
}

}  // namespace

int cmd_cost(const RunConfig& cfg, std::ostream& out, std::ostream& /*err*/) {
  const std::size_t dk = cfg.dk ? cfg.dk : cfg.d;
  const std::size_t dv = cfg.dv ? cfg.dv : cfg.d;
  if (cfg.L == 0 || dk == 0 || dv == 0) throw ConfigError("L and widths must be positive");
  if (cfg.format != "csv" && cfg.format != "table") {
    throw ConfigError("--format must be csv or table");
  }
  if (cfg.elem_bytes == 0 || cfg.batch == 0 || cfg.heads == 0) {
    throw ConfigError("elem-bytes, batch and heads must be positive");
  }
  std::vector<Form> forms;
  for (const auto& name : cfg.forms) forms.push_back(parse_form(name));
  if (forms.empty()) throw ConfigError("no forms selected");

  const CostOptions opts{cfg.elem_bytes, cfg.batch, cfg.heads};
  std::vector<std::vector<std::string>> rows{kColumns};
  for (Form form : forms) {
    // Non-chunked forms ignore C, so they get one row regardless of the sweep.
    const std::vector<std::size_t> sizes =
        chunked(form) ? cfg.sweep : std::vector<std::size_t>{cfg.sweep.front()};
    for (std::size_t C : sizes) {
      const ChunkPlan plan{C, cfg.c ? cfg.c : std::min<std::size_t>(16, C),
                           PrecisionPolicy::exact};
      if (C == 0) throw PlanError("C must be positive");
      const CostReport r = flops(form, cfg.L, dk, dv, plan, opts);
      auto s = [](auto x) { return std::to_string(x); };
      rows.push_back({std::string(to_string(form)), s(cfg.L), s(dk), s(dv),
                      chunked(form) ? s(plan.C) : "", chunked(form) ? s(plan.c) : "",
                      s(r.flops_matmul_halfable), s(r.flops_matmul_state),
                      s(r.flops_elementwise), s(r.exp_count), s(r.flops_total()),
                      s(r.bytes_state_traffic), s(r.bytes_io_total),
                      s(r.parallel_work_items)});
    }
  }

  const bool csv = cfg.format == "csv";
  if (cfg.output.empty()) {
    write_table(out, rows, csv);
  } else {
    std::ofstream f(cfg.output);
    if (!f) throw ConfigError("cannot write '" + cfg.output + "'");
    write_table(f, rows, csv);
  }
  return kOk;
}

}  // namespace gla::cli
