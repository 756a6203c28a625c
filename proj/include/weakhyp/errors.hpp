#pragma once

#include <stdexcept>
#include <string>

namespace weakhyp {

// Base of every exception the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad index, size mismatch or violated precondition on an argument.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input is well formed but carries no usable information (all-zero roots, zero Psi).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Equation outside the families the reductions know how to handle.
class UnsupportedStructure : public Error {
 public:
  using Error::Error;
};

// Malformed expression or configuration text.
class ParseError : public Error {
 public:
  ParseError(const std::string& field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace weakhyp
