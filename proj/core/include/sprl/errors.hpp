#pragma once

#include <stdexcept>
#include <string>

namespace sprl {

/// Thrown when a computation leaves the representable range or a matrix
/// that must be positive definite cannot be factorized.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, std::string field = {}, int line = 0)
      : std::runtime_error(message), field_(std::move(field)), line_(line) {}

  [[nodiscard]] const std::string& field() const { return field_; }
  [[nodiscard]] int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

}  // namespace sprl
