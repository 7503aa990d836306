#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stvo {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input too small for the requested stencil or operation.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite loss or parameter.
class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A loss had no valid pixels to average over.
class EmptyOverlapError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : what + " (line " + std::to_string(line) + ")"),
        line_(line) {}

  /// 1-based line number, 0 when not applicable.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace stvo
