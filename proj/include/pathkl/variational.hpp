#pragma once

#include "pathkl/basis.hpp"
#include "pathkl/diffusion.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace pathkl {

// Relative cutoff for the pseudo-inverse of a Gram matrix.
inline constexpr double kSvdTol = 1e-8;

// c_k = <theta, f_k> for a signed distribution theta acting on the basis.
// `covariance` is the Monte Carlo covariance of the estimate of c when it
// came from samples, empty otherwise.
struct MarginalAction {
  Vec c;
  double t = 0.0;
  Mat covariance;
};

// Q_kl = E^nu[grad f_k^T a(t,y) grad f_l].
struct GramData {
  Mat q;
  std::size_t samples = 0;
  double t = 0.0;
  double condition_number = 0.0;
};

struct NFormResult {
  double value = 0.0;  // 1/2 c^T Q^+ c, computed as quadratic_energy(g, Q)
  Vec maximizer;       // g = Q^+ c
  std::size_t rank = 0;
  // |c - Q g| / |c|; nonzero when c has a component outside range(Q), in
  // which case the supremum over the span is really +inf.
  double range_residual = 0.0;
};

// h(y) = a(t,y) sum_k g_k grad f_k(y).
class HField {
 public:
  HField(Vec coefficients, double t, double energy, std::shared_ptr<const FunctionBasis> basis,
         std::shared_ptr<const DiffusionSpec> spec);

  Vec operator()(const Vec& y) const;
  const Vec& coefficients() const { return coefficients_; }
  double t() const { return t_; }
  // 1/2 g^T Q g, identical to the nform value it was recovered from.
  double energy() const { return energy_; }

 private:
  Vec coefficients_;
  double t_;
  double energy_;
  std::shared_ptr<const FunctionBasis> basis_;
  std::shared_ptr<const DiffusionSpec> spec_;
};

GramData gram_matrix(const DiffusionSpec& spec, double t, std::span<const Vec> samples,
                     const FunctionBasis& basis);

// Central difference of <mu_t, f_k> over +-window grid steps minus
// E^{mu_t}[L_t f_k], with L_t the generator of spec_P.
MarginalAction marginal_time_action(const PathEnsemble& ensemble, const DiffusionSpec& spec_P,
                                    const FunctionBasis& basis, std::size_t t_index, std::size_t window);

// Same, with an explicit difference stencil [lo_index, hi_index] around t_index
// (lo_index <= t_index <= hi_index, lo_index < hi_index).
MarginalAction marginal_time_action_between(const PathEnsemble& ensemble, const DiffusionSpec& spec_P,
                                            const FunctionBasis& basis, std::size_t t_index,
                                            std::size_t lo_index, std::size_t hi_index);

// Symmetric pseudo-inverse dropping eigenvalues below rel_cutoff * max |eigenvalue|.
Mat pseudo_inverse(const Mat& q, double rel_cutoff, std::size_t* rank = nullptr);

double quadratic_energy(const Vec& g, const Mat& q);

NFormResult nform_value(const MarginalAction& action, const GramData& gram, double svd_tol = kSvdTol);

HField recover_h(const MarginalAction& action, const GramData& gram, const FunctionBasis& basis,
                 const DiffusionSpec& spec, double t, double svd_tol = kSvdTol);

struct NFormSweepConfig {
  std::size_t stride = 1;  // evaluate every stride-th grid point
  std::size_t window = 1;  // half-width of the time-difference stencil, in grid steps
  double svd_tol = kSvdTol;
  bool debias = true;  // subtract the Monte Carlo noise floor 1/2 tr(Q^+ Cov c)
};

struct NFormSlice {
  double t = 0.0;
  double value = 0.0;       // reported (debiased if enabled, floored at 0)
  double raw_value = 0.0;   // 1/2 c^T Q^+ c
  double noise_bias = 0.0;  // 1/2 tr(Q^+ Cov c)
  double std_error = 0.0;   // delta method, sqrt(g^T Cov c g)
  std::size_t rank = 0;
  double condition_number = 0.0;
};

struct NFormSweep {
  std::vector<NFormSlice> slices;
  double integral = 0.0;   // trapezoid of slice values over time
  double std_error = 0.0;  // trapezoid of slice errors (assumes full correlation)
};

// Slices of n(t, mu_dot - L*_t mu_t, mu_t)^2 along the grid of ensemble_mu.
// Near the ends the centred stencil narrows to stay inside the grid; the
// endpoints themselves use a one-sided difference.
NFormSweep nform_sweep(const PathEnsemble& ensemble_mu, const DiffusionSpec& spec_P,
                       const FunctionBasis& basis, const NFormSweepConfig& config);

}  // namespace pathkl
