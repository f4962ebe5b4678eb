#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pathkl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Smallest admissible eigenvalue of a diffusion matrix.
inline constexpr double kEpsPd = 1e-10;
// Relative tolerance for linear-algebra identities.
inline constexpr double kTolLinalg = 1e-9;

// Named numeric parameters of a catalog model. Scalars are length-1 vectors.
using ParamRecord = std::map<std::string, std::vector<double>>;

// Writes the drift b(t, x) into out (length d).
using DriftFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
// Writes the diffusion matrix a(t, x) row-major into out (length d*d).
using DiffusionFn = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

// Coefficients of a Markov diffusion with generator
//   L_t f = 1/2 sum a^{jk} d_j d_k f + sum b^j d_j f.
// `diffusion` returns the matrix a itself, not a square root.
struct DiffusionSpec {
  int dim = 1;
  DriftFn drift;
  DiffusionFn diffusion;
  std::string model_id = "custom";
  ParamRecord params;
  // Set when a(t, x) is the same matrix everywhere; lets the sampler factor it once.
  bool constant_diffusion = false;
  // Set when the drift is affine in x with time-independent coefficients:
  // b(x) = drift_matrix * x + drift_offset.
  bool affine_drift = false;
  Mat drift_matrix;
  Vec drift_offset;
};

// Catalog ids: "brownian", "drift_bm", "ou", "double_well", "linear".
// Every model accepts "a" (scalar, diagonal of length d, or full d*d row-major)
// and "dim"; see README for the model-specific keys.
DiffusionSpec make_model(const std::string& id, const ParamRecord& params);
std::vector<std::string> catalog_ids();
std::string catalog_description(const std::string& id);

Vec drift_eval(const DiffusionSpec& spec, double t, const Vec& x);

struct DiffusionValue {
  Mat a;
  Mat a_inv;
};

// Evaluates a(t, x) and its inverse. Throws PositiveDefinitenessError if the
// smallest eigenvalue is not above kEpsPd.
DiffusionValue diffusion_eval(const DiffusionSpec& spec, double t, const Vec& x);

// u^T a(t,x)^{-1} v.
double weighted_inner(const DiffusionSpec& spec, double t, const Vec& x, const Vec& u, const Vec& v);

class BasisFunction;
// 1/2 trace(a Hess f) + b . grad f at (t, x).
double apply_generator(const DiffusionSpec& spec, double t, const BasisFunction& f, const Vec& x);

struct InitialLaw {
  enum class Kind { point, gaussian, empirical };
  Kind kind = Kind::point;
  int dim = 1;
  Vec point;                 // point mass location
  Vec mean;                  // gaussian
  Mat covariance;            // gaussian
  std::vector<Vec> samples;  // empirical

  static InitialLaw point_mass(Vec x0);
  static InitialLaw gaussian(Vec mean, Mat covariance);
  static InitialLaw empirical(std::vector<Vec> samples);
};

class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> points);
  static TimeGrid uniform(double horizon, std::size_t steps);

  const std::vector<double>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::size_t steps() const { return points_.size() - 1; }
  double horizon() const { return points_.back(); }
  double dt_max() const { return dt_max_; }
  double operator[](std::size_t k) const { return points_[k]; }

 private:
  std::vector<double> points_;
  double dt_max_ = 0.0;
};

// N paths on a shared grid, stored path-major: state(i, k) is the d-vector of
// path i at grid index k.
class PathEnsemble {
 public:
  PathEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t paths, int dim, std::uint64_t seed);

  const TimeGrid& grid() const { return *grid_; }
  std::shared_ptr<const TimeGrid> grid_ptr() const { return grid_; }
  std::size_t paths() const { return paths_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  std::span<const double> state(std::size_t path, std::size_t k) const {
    return {data_.data() + offset(path, k), static_cast<std::size_t>(dim_)};
  }
  std::span<double> state(std::size_t path, std::size_t k) {
    return {data_.data() + offset(path, k), static_cast<std::size_t>(dim_)};
  }
  Vec state_vec(std::size_t path, std::size_t k) const {
    return Eigen::Map<const Vec>(data_.data() + offset(path, k), dim_);
  }
  // All path states at grid index k.
  std::vector<Vec> slice(std::size_t k) const;

  const std::vector<double>& raw() const { return data_; }

 private:
  std::size_t offset(std::size_t path, std::size_t k) const {
    return (path * grid_->size() + k) * static_cast<std::size_t>(dim_);
  }

  std::shared_ptr<const TimeGrid> grid_;
  std::size_t paths_;
  int dim_;
  std::uint64_t seed_;
  std::vector<double> data_;
};

// Euler-Maruyama: X_{k+1} = X_k + b dt + chol(a) sqrt(dt) Z. Path i draws from
// the Philox substream (seed, i); results do not depend on the thread count.
PathEnsemble sample_paths(const DiffusionSpec& spec, const InitialLaw& init, const TimeGrid& grid,
                          std::size_t n, std::uint64_t seed);

struct GaussianLaw {
  Vec mean;
  Mat covariance;
};

// One Euler step from (t, x): N(x + b(t,x) dt, a(t,x) dt).
GaussianLaw euler_step_law(const DiffusionSpec& spec, double t, const Vec& x, double dt);

// Exact law at time t of dX = (A X + b) dt + sqrt(a) dW with X_0 ~ N(m0, S0),
// via matrix exponentials (Van Loan for the covariance).
GaussianLaw affine_moments(const Mat& A, const Vec& b, const Mat& a, const Vec& m0, const Mat& S0, double t);

// Exact marginal of a catalog model with affine drift and constant diffusion
// started from a point mass or Gaussian. Throws CapabilityError otherwise.
GaussianLaw exact_marginal(const DiffusionSpec& spec, const InitialLaw& init, double t);

// Symmetrizes, checks symmetry, clamps eigenvalues in [-eps_sym, 0) to zero.
GaussianLaw make_gaussian_law(Vec mean, Mat covariance, double eps_sym = 1e-12);

}  // namespace pathkl
