#pragma once

#include "pathkl/basis.hpp"
#include "pathkl/diffusion.hpp"
#include "pathkl/estimate.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pathkl {

struct Box {
  Vec lo;
  Vec hi;
};

// Regular grid of disjoint half-open boxes [lo, hi) over a bounded region plus
// one remainder cell (index box_count()) holding everything else in R^d.
class SpacePartition {
 public:
  static SpacePartition uniform(Vec lo, Vec hi, std::vector<int> cells_per_axis);

  // Halves every box along every axis. The remainder cell is unchanged.
  SpacePartition refined() const;

  int dim() const { return static_cast<int>(lo_.size()); }
  int level() const { return level_; }
  std::size_t box_count() const;
  std::size_t cell_count() const { return box_count() + 1; }
  std::size_t remainder_index() const { return box_count(); }
  Box box(std::size_t index) const;
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  const std::vector<int>& cells_per_axis() const { return cells_; }
  std::size_t locate(std::span<const double> x) const;

 private:
  SpacePartition(Vec lo, Vec hi, std::vector<int> cells, int level);

  Vec lo_;
  Vec hi_;
  std::vector<int> cells_;
  int level_ = 0;
};

// Probabilities of every cell (boxes then remainder). std_error is empty for
// exact providers; for Monte Carlo providers it holds the sample count used.
struct CellProbabilities {
  std::vector<double> p;
  std::size_t samples = 0;  // 0 means exact
};

using CellProbabilityFn = std::function<CellProbabilities(const SpacePartition&)>;

// Exact cell probabilities of a Gaussian with diagonal covariance.
CellProbabilityFn gaussian_cells(const GaussianLaw& law);
// Empirical frequencies of a reference sample.
CellProbabilityFn empirical_cells(std::vector<Vec> samples);

// sum_A p(A) log(p(A)/q(A)); terms with p(A) = 0 are zero, p(A) > 0 with
// q(A) = 0 gives +inf.
double cell_kl(std::span<const double> p, std::span<const double> q);

EntropyEstimate histogram_kl(std::span<const Vec> samples_mu, const CellProbabilityFn& nu_cells,
                             const SpacePartition& partition);

struct DvConfig {
  double gtol = 1e-8;
  int max_iter = 500;
};

// Donsker-Varadhan lower bound sup_g { mean_mu f_g - log mean_nu exp f_g }
// over f_g = sum_k g_k f_k. Newton ascent with backtracking from g = 0.
EntropyEstimate dv_estimate(std::span<const Vec> samples_mu, std::span<const Vec> samples_nu,
                            const FunctionBasis& basis, const DvConfig& config = {});

double gaussian_kl(const GaussianLaw& p, const GaussianLaw& q);

// R(init_mu || init_P). Empirical-vs-Gaussian pairs are handled by whitening
// with the Gaussian and binning against standard-normal cell probabilities.
EntropyEstimate initial_entropy(const InitialLaw& init_mu, const InitialLaw& init_P);

}  // namespace pathkl
