// SPDX-License-Identifier: Apache-2.0
//
// Deterministic toy language-model trainer: token embedding, a stack of GLA
// blocks on the recurrent form, final layernorm and a tied output projection.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace gla {

enum class Task : std::uint8_t {
  memorize_batch,  // fit one fixed batch of uniform random sequences
  copy,            // [prompt, separator, prompt], scored on the second half
};
enum class Optimizer : std::uint8_t { sgd, adam };

std::string_view to_string(Task t) noexcept;
std::string_view to_string(Optimizer o) noexcept;
Task parse_task(std::string_view name);
Optimizer parse_optimizer(std::string_view name);

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 0.1;
  std::uint64_t seed = 0;
  Task task = Task::memorize_batch;
  Optimizer optimizer = Optimizer::sgd;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t vocab = 32;
  std::size_t seq_len = 64;
  std::size_t batch = 8;
  std::size_t blocks = 2;
  /// Draw a fresh batch every step instead of reusing the seeded one.
  bool resample = false;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  /// Stop once scored accuracy reaches this value; 0 disables.
  double stop_accuracy = 0.0;

  /// Throws ConfigError on invalid values.
  void validate() const;
};

struct TrainRecord {
  std::size_t step = 0;  // 1-based
  double loss = 0.0;     // before this step's update
  double accuracy = 0.0;
};

std::vector<TrainRecord> train_toy(const TrainConfig& cfg,
                                   const std::function<void(const TrainRecord&)>& on_step = {});

/// "step,loss,accuracy" with a header row.
void write_trace_csv(std::ostream& out, const std::vector<TrainRecord>& trace);

}  // namespace gla
