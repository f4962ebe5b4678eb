#pragma once

#include "pathkl/basis.hpp"
#include "pathkl/diffusion.hpp"
#include "pathkl/estimate.hpp"
#include "pathkl/variational.hpp"

#include <string>
#include <vector>

namespace pathkl {

// R(nu || mu_I) + 1/2 E^mu int_0^T |b - e|^2_{a^{-1}} ds, with the time
// integral taken by the trapezoid rule on the ensemble grid. A diffusion
// mismatch short-circuits to +inf before any integration.
EntropyEstimate girsanov_entropy(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 const PathEnsemble& ensemble_mu, double tol_match = 1e-6);

// R_0 + int_0^T n(t)^2 dt from the finite-basis quadratic functional along
// the mu-ensemble marginals. The per-slice values go to sweep_out if given.
EntropyEstimate nform_entropy(const DiffusionSpec& spec_P, const InitialLaw& init_mu, const InitialLaw& init_P,
                              const PathEnsemble& ensemble_mu, const FunctionBasis& basis,
                              const NFormSweepConfig& config, NFormSweep* sweep_out = nullptr);

// Closed-form scenarios:
//   constant_drift   {theta, T, a}        1/2 theta^2 T / a
//   ou_vs_bm         {gamma, T}           OU(gamma) from 0 against standard BM
//   linear_vs_linear {A_mu, b_mu, A_P, b_P, a, T, m0, S0}
struct ScenarioOracle {
  std::string id;
  ParamRecord params;
};

std::vector<std::string> scenario_ids();
double analytic_entropy(const ScenarioOracle& scenario);

}  // namespace pathkl
