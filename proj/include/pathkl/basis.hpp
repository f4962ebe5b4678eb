#pragma once

#include "pathkl/diffusion.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pathkl {

// Smooth compactly supported window on an axis-aligned box: the product over
// coordinates of C-infinity steps rising over [lo, lo + margin] and falling
// over [hi - margin, hi]. Equal to one on the inner plateau, zero outside.
struct BoxWindow {
  Vec lo;
  Vec hi;
  double margin = 1.0;

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(std::span<const double> x) const;
  // Value plus optional gradient (length d) and Hessian (d*d, row-major).
  void evaluate(std::span<const double> x, double& value, double* grad, double* hess) const;
};

// Fills value, grad (length d) and, when hess is non-null, the row-major
// Hessian (d*d). grad is never null.
using BasisEvalFn = std::function<void(std::span<const double> x, double& value, double* grad, double* hess)>;

class BasisFunction {
 public:
  BasisFunction(int dim, BasisEvalFn eval, bool has_hessian, std::string label);

  int dim() const { return dim_; }
  bool has_hessian() const { return has_hessian_; }
  const std::string& label() const { return label_; }

  // Raw evaluation into caller buffers; throws CapabilityError if a Hessian
  // is requested from a function that has none.
  void evaluate(std::span<const double> x, double& value, double* grad, double* hess) const;

  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  Mat hessian(const Vec& x) const;

 private:
  int dim_;
  BasisEvalFn eval_;
  bool has_hessian_;
  std::string label_;
};

BasisFunction windowed_gaussian(const Vec& center, double scale, const BoxWindow& window);
// prod_j x_j^{exponents_j} times the window.
BasisFunction windowed_monomial(const std::vector<int>& exponents, const BoxWindow& window);
BasisFunction scaled(const BasisFunction& f, double alpha);
// From user callbacks; hessian may be empty.
BasisFunction custom_basis_function(int dim, std::function<double(const Vec&)> value,
                                    std::function<Vec(const Vec&)> gradient,
                                    std::function<Mat(const Vec&)> hessian, std::string label);

struct BasisConfig {
  std::string family = "mixed";  // gauss | poly | mixed
  int count = 10;                // bumps per axis (gauss, mixed)
  int degree = 2;                // max monomial degree (poly, mixed)
  std::vector<double> lo{-6.0};
  std::vector<double> hi{6.0};
  double margin = 1.0;
  double scale = 0.0;  // bump width; 0 selects the center spacing
};

class FunctionBasis {
 public:
  FunctionBasis(std::vector<BasisFunction> functions, BoxWindow window);

  std::size_t size() const { return functions_.size(); }
  int dim() const { return window_.dim(); }
  const BasisFunction& operator[](std::size_t k) const { return functions_[k]; }
  const std::vector<BasisFunction>& functions() const { return functions_; }
  const BoxWindow& window() const { return window_; }

  // Copy with f appended.
  FunctionBasis with(const BasisFunction& f) const;
  // Copy with every function multiplied by alpha.
  FunctionBasis scaled_by(double alpha) const;

  // Values (N x K) over a sample list.
  Mat value_matrix(std::span<const Vec> samples) const;

 private:
  std::vector<BasisFunction> functions_;
  BoxWindow window_;
};

BoxWindow make_window(const std::vector<double>& lo, const std::vector<double>& hi, double margin);
// Bumps centred on a tensor grid spanning the window plateau.
FunctionBasis gaussian_bumps(const BoxWindow& window, int per_axis, double scale = 0.0);
// All windowed monomials with total degree 1..degree.
FunctionBasis polynomial_basis(const BoxWindow& window, int degree);
FunctionBasis build_basis(const BasisConfig& config);

}  // namespace pathkl
