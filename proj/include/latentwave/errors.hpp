#pragma once

#include <stdexcept>
#include <string>

namespace latentwave {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, manifest or argument value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or volume shapes that do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values produced by a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class InstabilityError : public NumericalError {
 public:
  explicit InstabilityError(long step)
      : NumericalError("non-finite field value after step " + std::to_string(step)),
        step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

/// A file that cannot be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Problems reading or writing the binary and JSON file formats.
class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A checkpoint whose architecture does not match what the caller asked for.
class SpecMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace latentwave
