#pragma once

#include <stdexcept>
#include <string>

namespace chgat {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes or hyperparameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a documented invariant (bad ids, cap violations).
class DataError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. replaying a tape recorded against older parameters.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed serialized input (checkpoints, flat sequences, wire frames).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Checkpoint shape table does not match the expected model.
class ShapeError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite gradients or losses, divergence.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Raised when a softmax has no unmasked entries.
class EmptyNeighborhoodError : public Error {
 public:
  using Error::Error;
};

// A metric is undefined for its input (e.g. AUC over one class).
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace chgat
