#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace menode {

// Root of every error raised by the library. The CLI maps subclasses onto
// distinct exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation (log of a
// non-positive value, non-positive scale parameter, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite state produced while integrating a trajectory.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. line() is 1-based; 0 when the error is not tied to a
// particular line (e.g. a missing header column).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Corrupt or truncated persisted state.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

class UnsupportedVersionError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

}  // namespace menode
