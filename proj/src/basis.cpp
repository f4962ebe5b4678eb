#include "pathkl/basis.hpp"

#include "pathkl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pathkl {

namespace {

// psi(u) = exp(-1/u) for u > 0, with first and second derivatives. Below
// u = 0.01 every term is under 1e-35 and is flushed to zero.
struct Psi {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

Psi psi(double u) {
  if (u <= 0.01) return {};
  const double v = std::exp(-1.0 / u);
  const double u2 = u * u;
  return {v, v / u2, v * (1.0 - 2.0 * u) / (u2 * u2)};
}

// C-infinity step: 0 for u <= 0, 1 for u >= 1.
struct Step {
  double v = 0.0, d1 = 0.0, d2 = 0.0;
};

Step smooth_step(double u) {
  if (u <= 0.0) return {0.0, 0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0, 0.0};
  const Psi a = psi(u);
  const Psi b = psi(1.0 - u);
  // Derivatives of B(u) = psi(1 - u).
  const double b1 = -b.d1;
  const double b2 = b.d2;
  const double den = a.v + b.v;
  const double den1 = a.d1 + b1;
  const double den2 = a.d2 + b2;
  const double num1 = a.d1 * den - a.v * den1;
  const double v = a.v / den;
  const double d1 = num1 / (den * den);
  const double d2 = (a.d2 * den - a.v * den2) / (den * den) - 2.0 * den1 * num1 / (den * den * den);
  return {v, d1, d2};
}

std::string describe(const Vec& v) {
  std::ostringstream out;
  out << "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  out << ")";
  return out.str();
}

}  // namespace

bool BoxWindow::contains(std::span<const double> x) const {
  for (int j = 0; j < dim(); ++j) {
    if (x[static_cast<std::size_t>(j)] <= lo[j] || x[static_cast<std::size_t>(j)] >= hi[j]) return false;
  }
  return true;
}

void BoxWindow::evaluate(std::span<const double> x, double& value, double* grad, double* hess) const {
  const int d = dim();
  double w[8], w1[8], w2[8];
  std::vector<double> wv, w1v, w2v;
  double* pw = w;
  double* pw1 = w1;
  double* pw2 = w2;
  if (d > 8) {
    wv.resize(static_cast<std::size_t>(d));
    w1v.resize(static_cast<std::size_t>(d));
    w2v.resize(static_cast<std::size_t>(d));
    pw = wv.data();
    pw1 = w1v.data();
    pw2 = w2v.data();
  }
  const double inv_m = 1.0 / margin;
  for (int j = 0; j < d; ++j) {
    const double xj = x[static_cast<std::size_t>(j)];
    const Step rise = smooth_step((xj - lo[j]) * inv_m);
    const Step fall = smooth_step((hi[j] - xj) * inv_m);
    pw[j] = rise.v * fall.v;
    pw1[j] = (rise.d1 * fall.v - rise.v * fall.d1) * inv_m;
    pw2[j] = (rise.d2 * fall.v - 2.0 * rise.d1 * fall.d1 + rise.v * fall.d2) * inv_m * inv_m;
  }
  auto product_except = [&](int skip_a, int skip_b) {
    double p = 1.0;
    for (int i = 0; i < d; ++i) {
      if (i != skip_a && i != skip_b) p *= pw[i];
    }
    return p;
  };
  value = product_except(-1, -1);
  if (grad) {
    for (int j = 0; j < d; ++j) grad[j] = pw1[j] * product_except(j, -1);
  }
  if (hess) {
    for (int j = 0; j < d; ++j) {
      for (int k = 0; k < d; ++k) {
        hess[j * d + k] = (j == k) ? pw2[j] * product_except(j, -1) : pw1[j] * pw1[k] * product_except(j, k);
      }
    }
  }
}

BasisFunction::BasisFunction(int dim, BasisEvalFn eval, bool has_hessian, std::string label)
    : dim_(dim), eval_(std::move(eval)), has_hessian_(has_hessian), label_(std::move(label)) {
  if (dim_ < 1) throw ArgumentError("basis function dimension must be positive");
}

void BasisFunction::evaluate(std::span<const double> x, double& value, double* grad, double* hess) const {
  if (hess && !has_hessian_) throw CapabilityError("basis function '" + label_ + "' has no Hessian");
  eval_(x, value, grad, hess);
}

double BasisFunction::value(const Vec& x) const {
  double v = 0.0;
  Vec g(dim_);
  evaluate({x.data(), static_cast<std::size_t>(x.size())}, v, g.data(), nullptr);
  return v;
}

Vec BasisFunction::gradient(const Vec& x) const {
  double v = 0.0;
  Vec g(dim_);
  evaluate({x.data(), static_cast<std::size_t>(x.size())}, v, g.data(), nullptr);
  return g;
}

Mat BasisFunction::hessian(const Vec& x) const {
  double v = 0.0;
  Vec g(dim_);
  std::vector<double> h(static_cast<std::size_t>(dim_ * dim_));
  evaluate({x.data(), static_cast<std::size_t>(x.size())}, v, g.data(), h.data());
  Mat out(dim_, dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) out(i, j) = h[static_cast<std::size_t>(i * dim_ + j)];
  return out;
}

BasisFunction windowed_gaussian(const Vec& center, double scale, const BoxWindow& window) {
  if (!(scale > 0.0)) throw ArgumentError("Gaussian bump scale must be positive");
  if (center.size() != window.dim()) throw ArgumentError("bump center dimension does not match window");
  const int d = window.dim();
  auto eval = [center, scale, window, d](std::span<const double> x, double& value, double* grad, double* hess) {
    double w = 0.0;
    double wg[8];
    double wh[64];
    std::vector<double> wg_big, wh_big;
    double* pwg = wg;
    double* pwh = wh;
    if (d > 8) {
      wg_big.resize(static_cast<std::size_t>(d));
      wh_big.resize(static_cast<std::size_t>(d * d));
      pwg = wg_big.data();
      pwh = wh_big.data();
    }
    window.evaluate(x, w, pwg, hess ? pwh : nullptr);
    const double inv_s2 = 1.0 / (scale * scale);
    double r2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double dx = x[static_cast<std::size_t>(j)] - center[j];
      r2 += dx * dx;
    }
    const double g = std::exp(-0.5 * r2 * inv_s2);
    value = g * w;
    // grad g = -g dx / s^2
    for (int j = 0; j < d; ++j) {
      const double gj = -g * (x[static_cast<std::size_t>(j)] - center[j]) * inv_s2;
      grad[j] = gj * w + g * pwg[j];
    }
    if (hess) {
      for (int j = 0; j < d; ++j) {
        const double dxj = x[static_cast<std::size_t>(j)] - center[j];
        const double gj = -g * dxj * inv_s2;
        for (int k = 0; k < d; ++k) {
          const double dxk = x[static_cast<std::size_t>(k)] - center[k];
          const double gk = -g * dxk * inv_s2;
          const double gjk = g * (dxj * dxk * inv_s2 * inv_s2 - (j == k ? inv_s2 : 0.0));
          hess[j * d + k] = gjk * w + gj * pwg[k] + gk * pwg[j] + g * pwh[j * d + k];
        }
      }
    }
  };
  return BasisFunction(d, eval, true, "gauss" + describe(center));
}

BasisFunction windowed_monomial(const std::vector<int>& exponents, const BoxWindow& window) {
  const int d = window.dim();
  if (static_cast<int>(exponents.size()) != d) throw ArgumentError("monomial exponents do not match window");
  std::ostringstream label;
  label << "mono(";
  for (int j = 0; j < d; ++j) {
    if (exponents[static_cast<std::size_t>(j)] < 0) throw ArgumentError("monomial exponents must be >= 0");
    label << (j ? "," : "") << exponents[static_cast<std::size_t>(j)];
  }
  label << ")";
  auto eval = [exponents, window, d](std::span<const double> x, double& value, double* grad, double* hess) {
    std::vector<double> wg(static_cast<std::size_t>(d)), wh(hess ? static_cast<std::size_t>(d * d) : 0);
    double w = 0.0;
    window.evaluate(x, w, wg.data(), hess ? wh.data() : nullptr);
    // Per-coordinate power, first and second derivatives.
    std::vector<double> p(static_cast<std::size_t>(d)), p1(static_cast<std::size_t>(d)), p2(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      const int e = exponents[static_cast<std::size_t>(j)];
      const double xj = x[static_cast<std::size_t>(j)];
      const auto uj = static_cast<std::size_t>(j);
      p[uj] = std::pow(xj, e);
      p1[uj] = e >= 1 ? e * std::pow(xj, e - 1) : 0.0;
      p2[uj] = e >= 2 ? e * (e - 1) * std::pow(xj, e - 2) : 0.0;
    }
    auto prod_except = [&](int a, int b) {
      double r = 1.0;
      for (int i = 0; i < d; ++i) {
        if (i != a && i != b) r *= p[static_cast<std::size_t>(i)];
      }
      return r;
    };
    const double m = prod_except(-1, -1);
    value = m * w;
    std::vector<double> mg(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      mg[static_cast<std::size_t>(j)] = p1[static_cast<std::size_t>(j)] * prod_except(j, -1);
      grad[j] = mg[static_cast<std::size_t>(j)] * w + m * wg[static_cast<std::size_t>(j)];
    }
    if (hess) {
      for (int j = 0; j < d; ++j) {
        for (int k = 0; k < d; ++k) {
          const double mjk = j == k ? p2[static_cast<std::size_t>(j)] * prod_except(j, -1)
                                    : p1[static_cast<std::size_t>(j)] * p1[static_cast<std::size_t>(k)] * prod_except(j, k);
          hess[j * d + k] = mjk * w + mg[static_cast<std::size_t>(j)] * wg[static_cast<std::size_t>(k)] +
                            mg[static_cast<std::size_t>(k)] * wg[static_cast<std::size_t>(j)] +
                            m * wh[static_cast<std::size_t>(j * d + k)];
        }
      }
    }
  };
  return BasisFunction(d, eval, true, label.str());
}

BasisFunction scaled(const BasisFunction& f, double alpha) {
  const int d = f.dim();
  auto eval = [f, alpha, d](std::span<const double> x, double& value, double* grad, double* hess) {
    f.evaluate(x, value, grad, hess);
    value *= alpha;
    for (int j = 0; j < d; ++j) grad[j] *= alpha;
    if (hess) {
      for (int j = 0; j < d * d; ++j) hess[j] *= alpha;
    }
  };
  std::ostringstream label;
  label << alpha << "*" << f.label();
  return BasisFunction(d, eval, f.has_hessian(), label.str());
}

BasisFunction custom_basis_function(int dim, std::function<double(const Vec&)> value,
                                    std::function<Vec(const Vec&)> gradient, std::function<Mat(const Vec&)> hessian,
                                    std::string label) {
  if (!value || !gradient) throw ArgumentError("custom basis function needs value and gradient");
  const bool has_hessian = static_cast<bool>(hessian);
  auto eval = [dim, value, gradient, hessian](std::span<const double> x, double& v, double* grad, double* hess) {
    const Vec point = Eigen::Map<const Vec>(x.data(), dim);
    v = value(point);
    const Vec g = gradient(point);
    std::copy(g.data(), g.data() + dim, grad);
    if (hess) {
      const Mat h = hessian(point);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) hess[i * dim + j] = h(i, j);
    }
  };
  return BasisFunction(dim, eval, has_hessian, std::move(label));
}

FunctionBasis::FunctionBasis(std::vector<BasisFunction> functions, BoxWindow window)
    : functions_(std::move(functions)), window_(std::move(window)) {
  if (functions_.empty()) throw ArgumentError("function basis must contain at least one function");
  for (const auto& f : functions_) {
    if (f.dim() != window_.dim()) throw ArgumentError("basis function dimension does not match the domain box");
  }
}

FunctionBasis FunctionBasis::with(const BasisFunction& f) const {
  auto copy = functions_;
  copy.push_back(f);
  return FunctionBasis(std::move(copy), window_);
}

FunctionBasis FunctionBasis::scaled_by(double alpha) const {
  std::vector<BasisFunction> copy;
  copy.reserve(functions_.size());
  for (const auto& f : functions_) copy.push_back(scaled(f, alpha));
  return FunctionBasis(std::move(copy), window_);
}

Mat FunctionBasis::value_matrix(std::span<const Vec> samples) const {
  Mat out(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(size()));
  Vec grad(dim());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::span<const double> x(samples[i].data(), static_cast<std::size_t>(samples[i].size()));
    for (std::size_t k = 0; k < size(); ++k) {
      double v = 0.0;
      functions_[k].evaluate(x, v, grad.data(), nullptr);
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
    }
  }
  return out;
}

BoxWindow make_window(const std::vector<double>& lo, const std::vector<double>& hi, double margin) {
  if (lo.empty() || lo.size() != hi.size()) throw ArgumentError("domain box bounds must be nonempty and equal length");
  if (!(margin > 0.0)) throw ArgumentError("window margin must be positive");
  BoxWindow w;
  w.lo = Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  w.hi = Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size()));
  w.margin = margin;
  for (Eigen::Index j = 0; j < w.lo.size(); ++j) {
    if (!(w.hi[j] - w.lo[j] > 2.0 * margin)) throw ArgumentError("domain box is narrower than twice the margin");
  }
  return w;
}

FunctionBasis gaussian_bumps(const BoxWindow& window, int per_axis, double scale) {
  if (per_axis < 1) throw ArgumentError("need at least one bump per axis");
  const int d = window.dim();
  std::vector<std::vector<double>> axis_centers(static_cast<std::size_t>(d));
  double spacing = 0.0;
  for (int j = 0; j < d; ++j) {
    const double a = window.lo[j] + window.margin;
    const double b = window.hi[j] - window.margin;
    auto& centers = axis_centers[static_cast<std::size_t>(j)];
    if (per_axis == 1) {
      centers.push_back(0.5 * (a + b));
      spacing = std::max(spacing, 0.5 * (b - a));
    } else {
      const double h = (b - a) / (per_axis - 1);
      spacing = std::max(spacing, h);
      for (int i = 0; i < per_axis; ++i) centers.push_back(a + h * i);
    }
  }
  const double s = scale > 0.0 ? scale : spacing;
  std::vector<BasisFunction> functions;
  std::vector<int> index(static_cast<std::size_t>(d), 0);
  while (true) {
    Vec c(d);
    for (int j = 0; j < d; ++j) c[j] = axis_centers[static_cast<std::size_t>(j)][static_cast<std::size_t>(index[static_cast<std::size_t>(j)])];
    functions.push_back(windowed_gaussian(c, s, window));
    int j = 0;
    while (j < d && ++index[static_cast<std::size_t>(j)] == per_axis) index[static_cast<std::size_t>(j++)] = 0;
    if (j == d) break;
  }
  return FunctionBasis(std::move(functions), window);
}

FunctionBasis polynomial_basis(const BoxWindow& window, int degree) {
  if (degree < 1) throw ArgumentError("polynomial degree must be at least 1");
  const int d = window.dim();
  std::vector<BasisFunction> functions;
  for (int total = 1; total <= degree; ++total) {
    // Exponent vectors of the given total degree, last coordinate fastest.
    std::vector<int> e(static_cast<std::size_t>(d), 0);
    auto recurse = [&](auto&& self, int j, int remaining) -> void {
      if (j == d - 1) {
        e[static_cast<std::size_t>(j)] = remaining;
        functions.push_back(windowed_monomial(e, window));
        return;
      }
      for (int p = remaining; p >= 0; --p) {
        e[static_cast<std::size_t>(j)] = p;
        self(self, j + 1, remaining - p);
      }
    };
    recurse(recurse, 0, total);
  }
  return FunctionBasis(std::move(functions), window);
}

FunctionBasis build_basis(const BasisConfig& config) {
  const BoxWindow window = make_window(config.lo, config.hi, config.margin);
  if (config.family == "gauss") return gaussian_bumps(window, config.count, config.scale);
  if (config.family == "poly") return polynomial_basis(window, config.degree);
  if (config.family == "mixed") {
    auto functions = polynomial_basis(window, config.degree).functions();
    const FunctionBasis bumps = gaussian_bumps(window, config.count, config.scale);
    for (const auto& f : bumps.functions()) functions.push_back(f);
    return FunctionBasis(std::move(functions), window);
  }
  throw ArgumentError("unknown basis family '" + config.family + "'");
}

}  // namespace pathkl
