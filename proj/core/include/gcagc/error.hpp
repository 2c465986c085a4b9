#pragma once

#include <stdexcept>
#include <string>

namespace gcagc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyper-parameters or model configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad user-supplied data (image sizes, non-binary masks, missing files).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data (image headers, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written with a format version this build cannot read.
class UnsupportedVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Value outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite intermediate values.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward() on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Clustering assignment with an empty cluster.
class DegenerateAssignmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcagc
