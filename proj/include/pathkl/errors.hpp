#pragma once

#include <stdexcept>
#include <string>

namespace pathkl {

// Bad caller input: empty sample sets, off-grid indices, non-dyadic grids.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A diffusion matrix (or covariance that must be inverted) is not
// strictly positive definite.
class PositiveDefinitenessError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A model callback produced a non-finite value.
class ModelEvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The requested combination is outside what the library supports
// (unknown scenario, missing Hessian, unsupported initial-law pair).
class CapabilityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// An iterative optimizer ran out of iterations. Carries the best objective
// value seen so callers can still report something.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_value)
      : std::runtime_error(what), best_value_(best_value) {}
  double best_value() const noexcept { return best_value_; }

 private:
  double best_value_;
};

// Monte Carlo produced no usable events at all.
class InsufficientSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pathkl
