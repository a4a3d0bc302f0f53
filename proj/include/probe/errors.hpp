#pragma once

#include <stdexcept>
#include <string>

namespace probe {

/// Bad input: missing columns, malformed files, precondition violations.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: non-finite intermediates, underflow, stiffness.
/// The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace probe
