// SPDX-License-Identifier: Apache-2.0
//
// Computational forms of gated linear attention. All forms compute the same
// function of (Q, K, V, gates); recurrent_forward is the reference the
// others are tested against.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gla/gating.hpp"
#include "gla/numkit.hpp"

namespace gla {

enum class PrecisionPolicy : std::uint8_t { exact, mixed };

struct ChunkPlan {
  std::size_t C = 128;
  std::size_t c = 16;
  PrecisionPolicy policy = PrecisionPolicy::exact;

  /// Throws PlanError unless C >= 1, c >= 1, C | length and c | C.
  void validate(std::size_t length) const;
  MatmulMode off_diagonal_mode() const noexcept {
    return policy == PrecisionPolicy::mixed ? MatmulMode::mixed16 : MatmulMode::exact64;
  }
};

struct DecaySpec {
  double gamma = 0.9;
  void validate() const;
};

enum class Form : std::uint8_t { recurrent, parallel, semiring, chunkwise, two_level };

std::string_view to_string(Form f) noexcept;
/// Throws ConfigError for unknown names.
Form parse_form(std::string_view name);
std::string_view to_string(PrecisionPolicy p) noexcept;
PrecisionPolicy parse_policy(std::string_view name);

/// Wall-clock split of a chunked forward pass, in milliseconds.
///  - inter: chunk-state reductions, the sequential state recurrence and the
///    cross-chunk output term Q S.
///  - intra: attention within each chunk.
struct PhaseTimes {
  double inter_ms = 0.0;
  double intra_ms = 0.0;
};

struct RecurrentResult {
  Mat o;
  /// states[t] is the state after consuming position t+1 (S_1 ... S_L).
  std::vector<Mat> states;
};

RecurrentResult recurrent_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                                  bool keep_states = true);

/// Throws RangeError when any |LA| or |LB| exceeds the real64 exp guard.
Mat parallel_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g);

/// Log-space pairwise evaluation. Every exponent is a difference over an
/// ordered pair and is therefore <= 0.
Mat semiring_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g);

/// Uses plan.C only.
Mat chunkwise_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                      const ChunkPlan& plan, PhaseTimes* times = nullptr);

Mat two_level_forward(const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
                      const ChunkPlan& plan, PhaseTimes* times = nullptr);

Mat forward(Form form, const Mat& q, const Mat& k, const Mat& v, const GateSeq& g,
            const ChunkPlan& plan, PhaseTimes* times = nullptr);

/// |parallel exponent| limit; exp(700) is within a factor of 2^-3 of real64 max.
inline constexpr double kParallelExpGuard = 700.0;

// -- ungated and fixed-decay specializations ---------------------------------

/// Recurrent when plan is empty, chunkwise otherwise.
Mat linear_attention_forward(const Mat& q, const Mat& k, const Mat& v,
                             const std::optional<ChunkPlan>& plan = std::nullopt);
/// (Q K^T masked) V.
Mat linear_attention_parallel(const Mat& q, const Mat& k, const Mat& v);

Mat retnet_forward(const Mat& q, const Mat& k, const Mat& v, const DecaySpec& spec,
                   const std::optional<ChunkPlan>& plan = std::nullopt);
/// (Q K^T masked by D_nm = gamma^(n-m)) V.
Mat retnet_parallel(const Mat& q, const Mat& k, const Mat& v, const DecaySpec& spec);

namespace testing {
/// While alive, chunkwise_forward scales the intra-chunk V by B instead of
/// 1/B and divides the intra term by B afterwards. Used to prove the
/// verification suite catches a wrong scaling direction.
class FaultInjection {
 public:
  FaultInjection() noexcept;
  ~FaultInjection();
  FaultInjection(const FaultInjection&) = delete;
  FaultInjection& operator=(const FaultInjection&) = delete;

 private:
  bool previous_;
};
bool fault_active() noexcept;
}  // namespace testing

}  // namespace gla
