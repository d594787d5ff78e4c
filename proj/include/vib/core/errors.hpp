#pragma once

#include <stdexcept>
#include <string>

namespace vib {

// Base for every error the library raises. Callers that only need a message
// catch this; the CLI maps each subclass to a distinct summary prefix.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or axis sizes that do not fit an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values outside an operation's domain (labels out of range, sigma <= 0, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, vib_loss on a baseline model, bad flags.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data (bad magic, truncation, unparseable log lines).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dataset-level problems: missing cache entries, empty classes, file counts.
class DataError : public Error {
 public:
  using Error::Error;
};

// Audio files that cannot be decoded.
class IngestionError : public Error {
 public:
  using Error::Error;
};

// Training diverged (NaN/Inf gradient).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vib
