// SPDX-License-Identifier: Apache-2.0
//
// Dense real64 matrices and the handful of kernels the attention forms
// are built from. Matrices are row-major and own their storage.
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

namespace gla {

/// Precision semantics last applied to a matrix's elements.
enum class Precision : std::uint8_t { exact64, exact32, emulated16 };

/// Matmul execution mode. mixed16 rounds both operands to binary16 and
/// accumulates in real64 (tensor-core semantics).
enum class MatmulMode : std::uint8_t { exact64, mixed16 };

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat identity(std::size_t n);
  static Mat column(std::initializer_list<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  Precision precision() const noexcept { return precision_; }
  void set_precision(Precision p) noexcept { precision_ = p; }

  bool same_shape(const Mat& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Mat& a, const Mat& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
  Precision precision_ = Precision::exact64;
};

/// splitmix64 generator with Box-Muller normals. One instance per worker.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double normal() noexcept;
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

// -- products ---------------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b, MatmulMode mode = MatmulMode::exact64);
/// a * b^T without materializing the transpose in the caller.
Mat matmul_nt(const Mat& a, const Mat& b, MatmulMode mode = MatmulMode::exact64);
/// a^T * b.
Mat matmul_tn(const Mat& a, const Mat& b, MatmulMode mode = MatmulMode::exact64);
Mat transpose(const Mat& a);

// -- precision emulation ----------------------------------------------------

/// IEEE binary16 round-to-nearest-even; saturates at +-65504; NaN passes through.
double round16(double x) noexcept;
Mat round16(const Mat& x);
Mat round32(const Mat& x);

// -- elementwise ------------------------------------------------------------

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat hadamard(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double s);
void add_inplace(Mat& acc, const Mat& b);
void axpy_inplace(Mat& acc, double alpha, const Mat& b);

double sigmoid(double x) noexcept;
double logsigmoid(double x) noexcept;
double swish(double x) noexcept;
/// d/dx [x * sigmoid(x)].
double swish_grad(double x) noexcept;

Mat sigmoid(const Mat& x);
Mat logsigmoid(const Mat& x);
Mat swish(const Mat& x);

/// Optional learned affine for layernorm (gain and bias are 1 x cols).
struct NormAffine {
  Mat gain;
  Mat bias;
};

/// Per-row inverse standard deviations recorded by layernorm for backward.
struct NormStats {
  std::vector<double> inv_std;
};

/// Row-wise standardization: (x - mean) / sqrt(var + eps), population variance.
Mat layernorm(const Mat& x, double eps = 1e-6, const NormAffine* affine = nullptr,
              NormStats* stats = nullptr);
/// Gradient wrt x of an affine-free layernorm given its output y.
Mat layernorm_backward(const Mat& dy, const Mat& y, const NormStats& stats);

// -- construction and slicing ----------------------------------------------

Mat randn(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0);
Mat slice_rows(const Mat& a, std::size_t begin, std::size_t end);
Mat slice_cols(const Mat& a, std::size_t begin, std::size_t end);
void set_cols(Mat& dst, std::size_t begin, const Mat& src);
void set_rows(Mat& dst, std::size_t begin, const Mat& src);
Mat column_sums(const Mat& a);
double sum(const Mat& a);
double max_abs(const Mat& a);
bool all_finite(const Mat& a);

/// max_ij |a - b| / max(|a|, |b|, floor): the library-wide relative error.
double max_rel_error(const Mat& a, const Mat& b, double floor = 1e-8);
double max_abs_error(const Mat& a, const Mat& b);

}  // namespace gla
