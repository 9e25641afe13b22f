#pragma once

#include <stdexcept>
#include <string>

namespace utged {

// Every failure raised by the library derives from Error so callers can
// catch one type. The CLI maps UsageError to exit code 1 and everything
// else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes that do not agree for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required, or a diverged run.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: bad arguments, unknown modes, malformed input files.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or unsatisfiable configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Corrupt or incompatible serialized data.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace utged
