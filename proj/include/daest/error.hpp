#pragma once

#include <stdexcept>
#include <string>

namespace daest {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape, extent or group-count disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a numerically undefined request.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed, truncated or corrupted serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace daest
