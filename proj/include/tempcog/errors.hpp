#pragma once

#include <stdexcept>
#include <string>

namespace tempcog {

// Base of every error raised by the library. The CLI maps these to exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (ln of 0, p > 1, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Too few usable samples after filtering Missing cells.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Shapes, dimensions or stimulus lists that do not line up.
class StructuralError : public Error {
 public:
  using Error::Error;
};

// Non-finite or otherwise unusable values inside otherwise well-formed input.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad template, temperature != 0, digest mismatch on resume.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Network or endpoint failure; retryable by the collectors.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace tempcog
