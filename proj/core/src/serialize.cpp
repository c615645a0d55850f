// SPDX-License-Identifier: Apache-2.0
#include "gla/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

#include "gla/errors.hpp"

namespace gla {

namespace {

constexpr std::array<char, 4> kMagic{'G', 'L', 'A', '1'};
constexpr std::uint64_t kMaxEntries = 1u << 20;
constexpr std::uint32_t kMaxName = 4096;
constexpr const char* kMeta = "__meta__";

template <typename U>
void put(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw FormatError("GLA1: truncated input");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

const Mat& find(const NamedArrays& arrays, const std::string& name) {
  for (const auto& [n, m] : arrays) {
    if (n == name) return m;
  }
  throw FormatError("GLA1: missing array '" + name + "'");
}

}  // namespace

void write_arrays(std::ostream& out, const NamedArrays& arrays) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint64_t>(out, arrays.size());
  for (const auto& [name, m] : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, m.rows());
    put<std::uint64_t>(out, m.cols());
  }
  for (const auto& [name, m] : arrays) {
    for (double v : m.values()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw FormatError("GLA1: write failed");
}

NamedArrays read_arrays(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw FormatError("GLA1: bad magic");
  const auto count = get<std::uint64_t>(in);
  if (count > kMaxEntries) throw FormatError("GLA1: implausible entry count");
  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::uint64_t>>> manifest;
  manifest.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in);
    if (len > kMaxName) throw FormatError("GLA1: name too long");
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!in) throw FormatError("GLA1: truncated name");
    const auto rows = get<std::uint64_t>(in);
    const auto cols = get<std::uint64_t>(in);
    if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) {
      throw FormatError("GLA1: array too large");
    }
    manifest.emplace_back(std::move(name), std::make_pair(rows, cols));
  }
  NamedArrays arrays;
  arrays.reserve(count);
  for (auto& [name, shape] : manifest) {
    // Grow while reading so a lying manifest hits truncation, not a huge allocation.
    const std::uint64_t n = shape.first * shape.second;
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 16)));
    for (std::uint64_t i = 0; i < n; ++i) {
      data.push_back(std::bit_cast<double>(get<std::uint64_t>(in)));
    }
    arrays.emplace_back(std::move(name), Mat(shape.first, shape.second, std::move(data)));
  }
  return arrays;
}

NamedArrays to_arrays(const GLAParams& p) {
  NamedArrays arrays;
  const double rank = p.gate.rank ? static_cast<double>(*p.gate.rank) : 0.0;
  arrays.emplace_back(kMeta, Mat(1, 9, {static_cast<double>(p.d), static_cast<double>(p.dk),
                                        static_cast<double>(p.dv), static_cast<double>(p.heads),
                                        static_cast<double>(p.ffn_hidden), p.gate.tau, rank,
                                        p.gate.use_beta ? 1.0 : 0.0,
                                        p.ffn_residual ? 1.0 : 0.0}));
  for (const auto& [name, m] : p.named()) arrays.emplace_back(name, *m);
  return arrays;
}

GLAParams from_arrays(const NamedArrays& arrays) {
  const Mat& meta = find(arrays, kMeta);
  if (meta.rows() != 1 || meta.cols() != 9) throw FormatError("GLA1: bad metadata block");
  for (std::size_t i = 0; i < 9; ++i) {
    const double x = meta(0, i);
    const bool integral = i == 5 || x == std::floor(x);
    if (!std::isfinite(x) || x < 0.0 || x > 1e15 || !integral) {
      throw FormatError("GLA1: bad metadata value");
    }
  }
  GLAParams p;
  p.d = static_cast<std::size_t>(meta(0, 0));
  p.dk = static_cast<std::size_t>(meta(0, 1));
  p.dv = static_cast<std::size_t>(meta(0, 2));
  p.heads = static_cast<std::size_t>(meta(0, 3));
  p.ffn_hidden = static_cast<std::size_t>(meta(0, 4));
  p.gate.tau = meta(0, 5);
  if (meta(0, 6) > 0.0) {
    p.gate.rank = static_cast<std::size_t>(meta(0, 6));
  } else {
    p.gate.rank.reset();
  }
  p.gate.use_beta = meta(0, 7) != 0.0;
  p.ffn_residual = meta(0, 8) != 0.0;
  for (auto& [name, m] : p.named()) *m = find(arrays, name);
  p.validate();
  return p;
}

void save_params(const std::string& path, const GLAParams& p) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_arrays(out, to_arrays(p));
}

GLAParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return from_arrays(read_arrays(in));
}

}  // namespace gla
