#pragma once

#include "pathkl/diffusion.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace pathkl {

enum class Observable { terminal, time_average };

std::string to_string(Observable observable);
Observable observable_from_string(const std::string& name);

struct RateExperiment {
  Observable observable = Observable::terminal;
  std::size_t component = 0;
  double threshold = 1.0;
  std::vector<std::size_t> sample_sizes{5, 10, 20, 40};
  std::size_t trials = 10000;
  std::uint64_t seed = 1;
  double horizon = 1.0;
  std::size_t steps = 32;
  InitialLaw init = InitialLaw::point_mass(Vec::Zero(1));
  // Constant drift added to the observed component while sampling; each
  // trial is reweighted by the exact Euler-chain likelihood ratio. Zero means
  // plain Monte Carlo.
  double tilt = 0.0;
};

struct RateRow {
  std::size_t n = 0;
  std::size_t count = 0;  // trials with empirical mean >= threshold
  double p_hat = 0.0;
  double p_std_error = 0.0;
  double rate = 0.0;  // -(1/n) log p_hat
  double rate_std_error = 0.0;
  bool zero_count = false;
  double oracle = 0.0;  // Cramer rate when available, NaN otherwise
};

std::vector<RateRow> empirical_rate(const DiffusionSpec& spec_P, const RateExperiment& experiment);

// Rate of {empirical mean of component of X_T >= z} for models whose terminal
// law is Gaussian N(m, s^2): (z - m)^2 / (2 s^2) above the mean, zero below.
// Throws CapabilityError for models without a closed-form terminal law.
double cramer_rate(const DiffusionSpec& spec_P, const InitialLaw& init, double horizon, double threshold,
                   std::size_t component = 0);

}  // namespace pathkl
