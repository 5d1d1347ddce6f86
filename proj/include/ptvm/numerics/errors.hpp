#pragma once

#include <stdexcept>
#include <string>

namespace ptvm::num {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivisionByZero : public NumericError {
 public:
  DivisionByZero() : NumericError("division by zero") {}
};

class NegativeSqrt : public NumericError {
 public:
  NegativeSqrt() : NumericError("square root of a negative value") {}
};

// The value lies outside the set the exact field can represent (for example the
// square root of an irrational value). Never produced by the construction itself.
class Unrepresentable : public NumericError {
 public:
  explicit Unrepresentable(const std::string& what) : NumericError(what) {}
};

class PrecisionExhausted : public NumericError {
 public:
  explicit PrecisionExhausted(const std::string& what)
      : NumericError("precision exhausted: " + what) {}
};

}  // namespace ptvm::num
