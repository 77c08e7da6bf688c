// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace freqvfx {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes, axis indices or ranks do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input values violate a mathematical precondition (e.g. negative energy).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Broken internal contract, e.g. tape replay mismatch.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Timestep too close to the pure-noise end for a stable x0 estimate.
class NumericGuardError : public Error {
 public:
  using Error::Error;
};

/// Raised from an optimization loop; carries the offending step.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class AdaptationError : public TrainingError {
 public:
  using TrainingError::TrainingError;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class CrcMismatchError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

class TruncatedError : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

/// Configuration or manifest conflicts detected by the command-line layer.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace freqvfx
