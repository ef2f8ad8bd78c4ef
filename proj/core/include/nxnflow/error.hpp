#pragma once

#include <stdexcept>
#include <string>

namespace nxnflow {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/parameter extents do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Object used in the wrong lifecycle state (uninitialized ActNorm, stale cache).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, degenerate statistics, singular matrices.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input data violates its declared range.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Malformed file. The message names the byte offset of the failure.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid configuration key or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace nxnflow
