#pragma once

#include <stdexcept>
#include <string>

namespace fuselab {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor or image extents.
struct DimensionError : Error {
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Zero-norm vectors and similar inputs a computation cannot be defined on.
struct DegenerateInputError : Error {
  using Error::Error;
};

/// NaN or Inf produced during a forward computation.
struct NonFiniteError : Error {
  using Error::Error;
};

/// Malformed file contents (CSV rows, PGM headers, checkpoints).
struct ParseError : Error {
  using Error::Error;
};

/// Invalid or unknown configuration keys/values.
struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace fuselab
