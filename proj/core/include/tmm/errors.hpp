#pragma once

#include <stdexcept>
#include <string>

namespace tmm {

// Base of every error raised by the library. Subtypes map onto the error
// categories callers are expected to distinguish (the CLI maps all of them
// to exit code 1, except UsageError which maps to 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand extents are incompatible.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A non-finite value was produced or a numeric precondition failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (unknown activation kind, infeasible spec, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid data contents (label out of range, non-simplex input, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

// A column or sample has zero variance where a correlation is required.
class ZeroVarianceError : public DataError {
 public:
  using DataError::DataError;
};

// Malformed input file. The message carries the path and line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Fold construction is impossible for the given labels.
class SplitError : public Error {
 public:
  using Error::Error;
};

// A statistic is undefined for the given input (e.g. AUC on one class).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

// A file could not be opened, read or written. The message carries the path.
class IoError : public Error {
 public:
  using Error::Error;
};

// API misuse or bad command-line usage.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace tmm
