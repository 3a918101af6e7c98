#pragma once

#include <stdexcept>
#include <string>

namespace deparadox {

// Base of every error thrown by the library. The CLI maps InputError
// subclasses to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with user-supplied data or configuration.
class InputError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : InputError(what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class NumericError : public InputError {
 public:
  using InputError::InputError;
};

class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t required_bytes)
      : Error(what), required_bytes_(required_bytes) {}

  std::size_t required_bytes() const noexcept { return required_bytes_; }

 private:
  std::size_t required_bytes_;
};

// A treatment arm is too small for the requested statistic.
class DegenerateArmError : public Error {
 public:
  using Error::Error;
};

// A cross-fitting training complement contains a single treatment class.
class FoldDegeneracyError : public Error {
 public:
  using Error::Error;
};

// Precondition of an operation violated by the caller.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace deparadox
