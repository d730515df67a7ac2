// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ctta {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument lies outside the operation's domain (e.g. a negative probability).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A softmax mask left no entry to normalize over.
class InvalidMaskError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// A domain id does not name a router of the layer.
class RoutingError : public Error {
 public:
  using Error::Error;
};

/// Labeled source or augmented data was read after the initialization phase ended.
class SourceAccessError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration (exit status 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing data/checkpoint file (exit status 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity detected during a run (exit status 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctta
