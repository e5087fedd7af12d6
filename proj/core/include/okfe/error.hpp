#pragma once

#include <stdexcept>
#include <string>

namespace okfe {

// Root of every exception thrown by the library. The CLI maps subclasses onto
// process exit codes, so new error kinds should derive from the closest fit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or parameter dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A configuration value is outside its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Frames were fed out of order to a streaming state.
class OnlineContractError : public Error {
 public:
  using Error::Error;
};

// Loss or objective became NaN/Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized data (FTS1, JSON, word vectors).
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class DimsOverflowError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Schema-level problem in otherwise well-formed input.
class ValidationError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace okfe
