// SPDX-License-Identifier: Apache-2.0
//
// "GLA1" container: a flat list of named real64 arrays.
//
//   magic   4 bytes  "GLA1"
//   count   u64
//   count x { name_len u32, name bytes, rows u64, cols u64 }
//   count x { rows*cols real64, row-major }
//
// All integers and reals are little-endian.
#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gla/layer.hpp"
#include "gla/numkit.hpp"

namespace gla {

using NamedArrays = std::vector<std::pair<std::string, Mat>>;

void write_arrays(std::ostream& out, const NamedArrays& arrays);
/// Throws FormatError on a bad magic, truncation or oversized manifest.
NamedArrays read_arrays(std::istream& in);

NamedArrays to_arrays(const GLAParams& p);
GLAParams from_arrays(const NamedArrays& arrays);

void save_params(const std::string& path, const GLAParams& p);
GLAParams load_params(const std::string& path);

}  // namespace gla
