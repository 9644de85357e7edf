#pragma once

#include <stdexcept>
#include <string>

namespace loal {

// Bad input data or configuration; the CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure (singular design, separation, positivity, ...); exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace loal
