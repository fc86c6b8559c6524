// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace infillgen {

/// Base for every error raised by the library. The CLI maps the concrete
/// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, bad configuration, violated preconditions.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or malformed input data.
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf during training or an otherwise impossible numeric state.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Kernel input shapes do not conform to the kernel contract.
class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

}  // namespace infillgen
