// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace gla {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not compose.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (temperature, learning rate, preset...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Chunk plan does not tile the sequence.
class PlanError : public Error {
 public:
  using Error::Error;
};

/// A computation would leave the representable real64 range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Position or index outside the valid range, or in the wrong order.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// Backward pass invoked without the forward states it needs.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace gla
