#pragma once

#include <stdexcept>
#include <string>

namespace ccl {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Incompatible matrix dimensions.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid scalar argument (temperature, batch size, ...).
struct ParamError : Error {
  using Error::Error;
};

// Invalid configuration object (fractions, dims, toggles).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite value where a finite one is required.
struct NumericError : Error {
  using Error::Error;
};

// Zero-norm input where the caller disabled the epsilon floor.
struct DegenerateInputError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, unwritable directory, refusal).
struct IoError : Error {
  using Error::Error;
};

// Malformed manifest or blob (bad magic, truncation, shape or label range).
struct FormatError : Error {
  using Error::Error;
};

}  // namespace ccl
