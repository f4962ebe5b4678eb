#pragma once

#include "pathkl/diffusion.hpp"
#include "pathkl/estimate.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pathkl {

// Ordered subset of grid indices containing the first and last grid point.
class Partition {
 public:
  Partition(std::shared_ptr<const TimeGrid> grid, std::vector<std::size_t> indices);

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::vector<double> times() const;
  std::size_t size() const { return indices_.size(); }
  std::size_t intervals() const { return indices_.size() - 1; }
  double mesh() const;
  // Largest partition time <= t.
  double floor_time(double t) const;
  // True if every point of this partition is also in other.
  bool subset_of(const Partition& other) const;
  const TimeGrid& grid() const { return *grid_; }

 private:
  std::shared_ptr<const TimeGrid> grid_;
  std::vector<std::size_t> indices_;
};

enum class StepMethod {
  gauss,  // KL between Gaussian transition laws over the interval
  dv,     // DV estimate between resimulated endpoint clouds
  path,   // KL of the path segment: sum of one-step Gaussian KLs along mu-paths
};

std::string to_string(StepMethod method);
StepMethod step_method_from_string(const std::string& name);

struct StepConfig {
  StepMethod method = StepMethod::gauss;
  std::size_t dv_paths = 64;    // mu-paths used as conditioning points (dv)
  std::size_t dv_cloud = 2000;  // resimulated endpoint samples per law (dv)
  int dv_bumps = 6;             // bumps in the local DV basis
  std::uint64_t seed = 0;       // resimulation seed (dv)
};

struct StepResult {
  double value = 0.0;
  double std_error = 0.0;
  std::vector<double> per_path;  // contribution of each conditioning path
};

// E over mu-paths x of R(mu_{t1 | t0, x} || P_{t1 | t0, x}) for the grid
// interval [lo_index, hi_index].
StepResult step_kl(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const PathEnsemble& ensemble_mu,
                   std::size_t lo_index, std::size_t hi_index, const StepConfig& config = {});

struct ChainStep {
  double t0 = 0.0;
  double t1 = 0.0;
  double value = 0.0;
  double std_error = 0.0;
};

struct ChainEstimate {
  EntropyEstimate total;
  std::vector<ChainStep> per_step;
  std::optional<Partition> partition;
  StepMethod method = StepMethod::gauss;
  double initial_term = 0.0;
};

// R_0 + sum_j step_kl over consecutive partition intervals, all on one ensemble.
ChainEstimate chain_estimate(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const InitialLaw& init_mu,
                             const InitialLaw& init_P, const PathEnsemble& ensemble_mu, const Partition& partition,
                             const StepConfig& config = {});

// Samples the mu-ensemble itself on the partition's grid.
ChainEstimate chain_estimate(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const InitialLaw& init_mu,
                             const InitialLaw& init_P, const Partition& partition, std::size_t n_paths,
                             std::uint64_t seed, const StepConfig& config = {});

// Nested dyadic partitions with 1, 2, 4, ... 2^(levels-1) intervals.
std::vector<Partition> refine_sequence(std::shared_ptr<const TimeGrid> grid, std::size_t levels);

struct SweepConfig {
  std::size_t levels = 1;
  StepConfig step;
  double divergence_threshold = 1e3;
  double tol_match = 1e-6;
};

struct RefinementSweep {
  std::vector<ChainEstimate> levels;
  // (value_n - value_{n-1}) / (intervals_n - intervals_{n-1}); entry 0 unused.
  std::vector<double> slope_per_step;
  // Levels n with value_n < value_{n-1} - 3 * combined SE (plus kTolLinalg
  // relative slack for rounding when the SE is zero).
  std::vector<std::size_t> monotonicity_violations;
  double extrapolation_gap = 0.0;  // finest minus second-finest
  bool diverged = false;           // some level exceeded divergence_threshold
  bool diffusion_mismatch = false;
  EntropyEstimate supremum;  // finest level, or +inf when diverged
};

RefinementSweep refinement_sweep(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 const PathEnsemble& ensemble_mu, const SweepConfig& config);

RefinementSweep refinement_sweep(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 std::shared_ptr<const TimeGrid> grid, std::size_t n_paths, std::uint64_t seed,
                                 const SweepConfig& config);

struct MatchReport {
  bool pass = true;
  double max_distance = 0.0;  // max over (t, x_t) of ||c - a||_2 / ||a||_2
  double tolerance = 0.0;
  double t_at_max = 0.0;
};

MatchReport diffusion_match_check(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                  const PathEnsemble& ensemble_mu, double tol_match = 1e-6);

}  // namespace pathkl
