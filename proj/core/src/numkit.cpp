// SPDX-License-Identifier: Apache-2.0
#include "gla/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gla/errors.hpp"
#include "gla/instrument.hpp"

namespace gla {

namespace {

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                     shape_str(b));
  }
}

// c[m x n] = a[m x k] * b[k x n]; c must be zeroed. Four output rows share
// each streamed row of b; columns are processed in L1-sized panels.
void gemm(const double* __restrict a, const double* __restrict b, double* __restrict c,
          std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kPanel = 256;
  for (std::size_t j0 = 0; j0 < n; j0 += kPanel) {
    const std::size_t j1 = std::min(n, j0 + kPanel);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      double* __restrict c0 = c + i * n;
      double* __restrict c1 = c0 + n;
      double* __restrict c2 = c1 + n;
      double* __restrict c3 = c2 + n;
      for (std::size_t p = 0; p < k; ++p) {
        const double a0 = a[i * k + p];
        const double a1 = a[(i + 1) * k + p];
        const double a2 = a[(i + 2) * k + p];
        const double a3 = a[(i + 3) * k + p];
        const double* __restrict br = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) {
          const double bv = br[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      double* __restrict ci = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double ai = a[i * k + p];
        const double* __restrict br = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) ci[j] += ai * br[j];
      }
    }
  }
}

Mat product(const Mat& a, const Mat& b, MatmulMode mode) {
  Mat out(a.rows(), b.cols());
  instrument::count_matmul(2ULL * a.rows() * a.cols() * b.cols());
  if (a.rows() == 0 || b.cols() == 0 || a.cols() == 0) return out;
  if (mode == MatmulMode::mixed16) {
    const Mat ar = round16(a);
    const Mat br = round16(b);
    gemm(ar.data(), br.data(), out.data(), a.rows(), a.cols(), b.cols());
  } else {
    gemm(a.data(), b.data(), out.data(), a.rows(), a.cols(), b.cols());
  }
  return out;
}

template <typename F>
Mat map(const Mat& x, F f) {
  Mat out(x.rows(), x.cols());
  const auto in = x.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) dst[i] = f(in[i]);
  return out;
}

}  // namespace

// -- Mat -----------------------------------------------------------------------

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Mat: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Mat::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Mat(r, c, std::move(data));
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::column(std::initializer_list<double> values) {
  return Mat(values.size(), 1, std::vector<double>(values));
}

// -- Rng -----------------------------------------------------------------------

std::uint64_t Rng::next_u64() noexcept {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() noexcept {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(theta);
  return radius * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) noexcept {
  return n == 0 ? 0 : static_cast<std::size_t>(next_u64() % n);
}

// -- products --------------------------------------------------------------------

Mat matmul(const Mat& a, const Mat& b, MatmulMode mode) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
  }
  return product(a, b, mode);
}

Mat matmul_nt(const Mat& a, const Mat& b, MatmulMode mode) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: " + shape_str(a) + " * (" + shape_str(b) + ")^T");
  }
  return product(a, transpose(b), mode);
}

Mat matmul_tn(const Mat& a, const Mat& b, MatmulMode mode) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: (" + shape_str(a) + ")^T * " + shape_str(b));
  }
  return product(transpose(a), b, mode);
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  }
  return t;
}

// -- precision -------------------------------------------------------------------

double round16(double x) noexcept {
  constexpr double kMax = 65504.0;
  if (std::isnan(x)) return x;
  if (x == 0.0) return x;
  const double mag = std::fabs(x);
  if (mag >= kMax) return std::copysign(kMax, x);
  int exponent = 0;
  std::frexp(mag, &exponent);  // mag = f * 2^exponent, f in [0.5, 1)
  // binary16 keeps 11 significant bits for normals; subnormals share the
  // fixed quantum 2^-24.
  const int quantum_exp = std::max(exponent - 11, -24);
  const double q = std::ldexp(1.0, quantum_exp);
  const double rounded = std::nearbyint(mag / q) * q;
  return std::copysign(std::min(rounded, kMax), x);
}

Mat round16(const Mat& x) {
  Mat out = map(x, [](double v) { return round16(v); });
  out.set_precision(Precision::emulated16);
  return out;
}

Mat round32(const Mat& x) {
  Mat out = map(x, [](double v) { return static_cast<double>(static_cast<float>(v)); });
  out.set_precision(Precision::exact32);
  return out;
}

// -- elementwise -----------------------------------------------------------------

Mat add(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "add");
  Mat out = a;
  add_inplace(out, b);
  return out;
}

Mat sub(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "sub");
  Mat out = a;
  axpy_inplace(out, -1.0, b);
  return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "hadamard");
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  return out;
}

Mat scale(const Mat& a, double s) {
  return map(a, [s](double v) { return v * s; });
}

void add_inplace(Mat& acc, const Mat& b) {
  require_same_shape(acc, b, "add_inplace");
  double* __restrict dst = acc.data();
  const double* __restrict src = b.data();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
}

void axpy_inplace(Mat& acc, double alpha, const Mat& b) {
  require_same_shape(acc, b, "axpy_inplace");
  double* __restrict dst = acc.data();
  const double* __restrict src = b.data();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += alpha * src[i];
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logsigmoid(double x) noexcept {
  // -softplus(-x)
  return -(std::log1p(std::exp(-std::fabs(x))) + std::max(-x, 0.0));
}

double swish(double x) noexcept { return x * sigmoid(x); }

double swish_grad(double x) noexcept {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Mat sigmoid(const Mat& x) {
  return map(x, [](double v) { return sigmoid(v); });
}
Mat logsigmoid(const Mat& x) {
  return map(x, [](double v) { return logsigmoid(v); });
}
Mat swish(const Mat& x) {
  return map(x, [](double v) { return swish(v); });
}

Mat layernorm(const Mat& x, double eps, const NormAffine* affine, NormStats* stats) {
  if (x.cols() == 0) throw ShapeError("layernorm: zero columns");
  if (affine && (affine->gain.cols() != x.cols() || affine->bias.cols() != x.cols())) {
    throw ShapeError("layernorm: affine width mismatch");
  }
  Mat out(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  if (stats) stats->inv_std.assign(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto in = x.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    if (stats) stats->inv_std[r] = inv;
    auto dst = out.row(r);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      double y = (in[c] - mean) * inv;
      if (affine) y = y * affine->gain(0, c) + affine->bias(0, c);
      dst[c] = y;
    }
  }
  return out;
}

// dx = s * (dy - mean(dy) - y * mean(dy * y)); exact including eps.
Mat layernorm_backward(const Mat& dy, const Mat& y, const NormStats& stats) {
  require_same_shape(dy, y, "layernorm_backward");
  if (stats.inv_std.size() != y.rows()) throw ShapeError("layernorm_backward: stats rows");
  Mat dx(y.rows(), y.cols());
  const double n = static_cast<double>(y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto g = dy.row(r);
    const auto yr = y.row(r);
    double mean_g = 0.0;
    double mean_gy = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) {
      mean_g += g[c];
      mean_gy += g[c] * yr[c];
    }
    mean_g /= n;
    mean_gy /= n;
    auto out = dx.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) {
      out[c] = stats.inv_std[r] * (g[c] - mean_g - yr[c] * mean_gy);
    }
  }
  return dx;
}

// -- construction and slicing ----------------------------------------------------

Mat randn(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Mat out(rows, cols);
  for (double& v : out.values()) v = rng.normal() * scale;
  return out;
}

Mat slice_rows(const Mat& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.rows()) throw IndexError("slice_rows: bad range");
  Mat out(end - begin, a.cols());
  std::copy(a.data() + begin * a.cols(), a.data() + end * a.cols(), out.data());
  return out;
}

Mat slice_cols(const Mat& a, std::size_t begin, std::size_t end) {
  if (begin > end || end > a.cols()) throw IndexError("slice_cols: bad range");
  Mat out(a.rows(), end - begin);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.data() + r * a.cols() + begin, a.data() + r * a.cols() + end,
              out.data() + r * out.cols());
  }
  return out;
}

void set_cols(Mat& dst, std::size_t begin, const Mat& src) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw ShapeError("set_cols: " + shape_str(src) + " into " + shape_str(dst));
  }
  for (std::size_t r = 0; r < src.rows(); ++r) {
    std::copy(src.data() + r * src.cols(), src.data() + (r + 1) * src.cols(),
              dst.data() + r * dst.cols() + begin);
  }
}

void set_rows(Mat& dst, std::size_t begin, const Mat& src) {
  if (src.cols() != dst.cols() || begin + src.rows() > dst.rows()) {
    throw ShapeError("set_rows: " + shape_str(src) + " into " + shape_str(dst));
  }
  std::copy(src.data(), src.data() + src.size(), dst.data() + begin * dst.cols());
}

Mat column_sums(const Mat& a) {
  Mat out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += a(r, c);
  }
  return out;
}

double sum(const Mat& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

double max_abs(const Mat& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::fabs(v));
  return m;
}

bool all_finite(const Mat& a) {
  return std::all_of(a.values().begin(), a.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double max_rel_error(const Mat& a, const Mat& b, double floor) {
  require_same_shape(a, b, "max_rel_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i];
    const double y = b.data()[i];
    if (std::isnan(x) || std::isnan(y)) return std::numeric_limits<double>::infinity();
    const double denom = std::max({std::fabs(x), std::fabs(y), floor});
    worst = std::max(worst, std::fabs(x - y) / denom);
  }
  return worst;
}

double max_abs_error(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "max_abs_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(a.data()[i] - b.data()[i]);
    if (std::isnan(d)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, d);
  }
  return worst;
}

}  // namespace gla
