#pragma once

#include <stdexcept>
#include <string>

namespace drldo {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A caller violated an operation's precondition (bad argument, size mismatch).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// An object was used in a state that forbids the operation (step after done,
/// mutate after freeze).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A computation produced or would produce non-finite / degenerate values.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing a file failed at the OS level.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A file was readable but its contents do not match the expected format.
class MalformedFileError : public Error {
 public:
  using Error::Error;
};

/// Training did not reach the configured quality gate.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A configuration value (or combination) is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace drldo
