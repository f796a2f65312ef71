#pragma once

#include <stdexcept>
#include <string>

namespace fsg {

// Bad input shapes, ranges, file layouts or configuration values.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN or infinity reaching an operator that requires finite input.
class NonFiniteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Non-finite training loss or activations.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, double lr, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), lr_(lr) {}

  int epoch() const noexcept { return epoch_; }
  double lr() const noexcept { return lr_; }

 private:
  int epoch_;
  double lr_;
};

}  // namespace fsg
