#include "pathkl/girsanov.hpp"

#include "pathkl/chain_entropy.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/marginal_entropy.hpp"
#include "pathkl/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace pathkl {

namespace {

const std::vector<double>& require(const ParamRecord& params, const std::string& key) {
  auto it = params.find(key);
  if (it == params.end() || it->second.empty()) throw ArgumentError("scenario parameter '" + key + "' is missing");
  return it->second;
}

double scalar(const ParamRecord& params, const std::string& key, double fallback) {
  auto it = params.find(key);
  if (it == params.end()) return fallback;
  if (it->second.size() != 1) throw ArgumentError("scenario parameter '" + key + "' must be a scalar");
  return it->second[0];
}

void check_keys(const ScenarioOracle& s, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : s.params) {
    if (!allowed.count(key)) throw ArgumentError("scenario '" + s.id + "' has unknown parameter '" + key + "'");
  }
}

Mat square(const ParamRecord& params, const std::string& key, int d, double diag) {
  auto it = params.find(key);
  if (it == params.end()) return diag * Mat::Identity(d, d);
  const auto& v = it->second;
  if (v.size() == 1) return v[0] * Mat::Identity(d, d);
  if (v.size() == static_cast<std::size_t>(d)) return Eigen::Map<const Vec>(v.data(), d).asDiagonal();
  if (v.size() == static_cast<std::size_t>(d * d)) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), d, d);
  }
  throw ArgumentError("scenario parameter '" + key + "' has the wrong length");
}

Vec vector(const ParamRecord& params, const std::string& key, int d) {
  auto it = params.find(key);
  if (it == params.end()) return Vec::Zero(d);
  const auto& v = it->second;
  if (v.size() == 1) return Vec::Constant(d, v[0]);
  if (v.size() == static_cast<std::size_t>(d)) return Eigen::Map<const Vec>(v.data(), d);
  throw ArgumentError("scenario parameter '" + key + "' has the wrong length");
}

// 1/2 int_0^T E|(A_mu - A_P) X + b_mu - b_P|^2_{a^{-1}} dt for the linear SDE
// dX = (A_mu X + b_mu) dt + sqrt(a) dW, X_0 ~ N(m0, S0).
double linear_entropy(const ScenarioOracle& s) {
  int d = 1;
  for (const char* key : {"b_mu", "b_P", "m0"}) {
    auto it = s.params.find(key);
    if (it != s.params.end() && it->second.size() > 1) d = static_cast<int>(it->second.size());
  }
  for (const char* key : {"A_mu", "A_P", "a", "S0"}) {
    auto it = s.params.find(key);
    if (it != s.params.end() && it->second.size() > 1) {
      const auto root = static_cast<int>(std::lround(std::sqrt(static_cast<double>(it->second.size()))));
      if (root * root == static_cast<int>(it->second.size()) && root > d) d = root;
    }
  }
  const Mat A = square(s.params, "A_mu", d, 0.0);
  const Mat dA = A - square(s.params, "A_P", d, 0.0);
  const Vec b = vector(s.params, "b_mu", d);
  const Vec db = b - vector(s.params, "b_P", d);
  const Mat a = square(s.params, "a", d, 1.0);
  const double T = scalar(s.params, "T", 1.0);
  const Vec m0 = vector(s.params, "m0", d);
  const Mat S0 = square(s.params, "S0", d, 0.0);
  if (!(T >= 0.0)) throw ArgumentError("scenario horizon must be nonnegative");
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success) throw PositiveDefinitenessError("scenario diffusion matrix is not PD");
  const Mat a_inv = llt.solve(Mat::Identity(d, d));
  const Mat weight = dA.transpose() * a_inv * dA;

  auto density = [&](double t) {
    const GaussianLaw law = affine_moments(A, b, a, m0, S0, t);
    const Vec r = dA * law.mean + db;
    return 0.5 * (r.dot(a_inv * r) + (weight * law.covariance).trace());
  };

  constexpr int kPanels = 32;
  double total = 0.0;
  for (int p = 0; p < kPanels; ++p) {
    const double lo = T * p / kPanels;
    const double hi = T * (p + 1) / kPanels;
    total += boost::math::quadrature::gauss<double, 20>::integrate(density, lo, hi);
  }
  return total;
}

}  // namespace

EntropyEstimate girsanov_entropy(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 const PathEnsemble& ensemble_mu, double tol_match) {
  const MatchReport match = diffusion_match_check(spec_mu, spec_P, ensemble_mu, tol_match);
  if (!match.pass) {
    auto out = EntropyEstimate::infinity(
        "girsanov", "diffusion matrices differ: relative distance " + std::to_string(match.max_distance) +
                        " exceeds " + std::to_string(tol_match));
    out.diagnostics["match_distance"] = match.max_distance;
    out.diagnostics["match_t"] = match.t_at_max;
    return out;
  }
  const EntropyEstimate initial = initial_entropy(init_mu, init_P);
  if (initial.infinite) {
    auto out = EntropyEstimate::infinity("girsanov", initial.notes.front());
    out.diagnostics["match_distance"] = match.max_distance;
    return out;
  }

  const int d = spec_P.dim;
  const auto& grid = ensemble_mu.grid();
  const std::size_t n = ensemble_mu.paths();
  const bool constant = spec_P.constant_diffusion;
  Mat a_inv_const;
  if (constant) a_inv_const = diffusion_eval(spec_P, 0.0, Vec::Zero(d)).a_inv;

  std::vector<double> per_path(n);
  parallel_for(n, [&](std::size_t i) {
    Vec b_mu(d), b_p(d), x(d);
    double integral = 0.0;
    double prev = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto state = ensemble_mu.state(i, k);
      spec_mu.drift(grid[k], state, {b_mu.data(), static_cast<std::size_t>(d)});
      spec_P.drift(grid[k], state, {b_p.data(), static_cast<std::size_t>(d)});
      const Vec diff = b_mu - b_p;
      double value = 0.0;
      if (constant) {
        value = 0.5 * diff.dot(a_inv_const * diff);
      } else {
        x = Eigen::Map<const Vec>(state.data(), d);
        value = 0.5 * diff.dot(diffusion_eval(spec_P, grid[k], x).a_inv * diff);
      }
      if (k > 0) integral += 0.5 * (grid[k] - grid[k - 1]) * (value + prev);
      prev = value;
    }
    if (!std::isfinite(integral)) throw ModelEvaluationError("girsanov_entropy: non-finite path integral");
    per_path[i] = integral;
  });

  const auto stats = mean_and_error(per_path);
  auto out = EntropyEstimate::finite(initial.value + stats.mean, std::hypot(stats.std_error, initial.std_error),
                                     "girsanov");
  const double largest = *std::max_element(per_path.begin(), per_path.end());
  out.diagnostics["initial_term"] = initial.value;
  out.diagnostics["paths"] = static_cast<double>(n);
  out.diagnostics["steps"] = static_cast<double>(grid.steps());
  out.diagnostics["match_distance"] = match.max_distance;
  // Share of the total carried by the single largest path; large values
  // indicate a heavy-tailed integrand and an unreliable mean.
  const double sum = stats.mean * static_cast<double>(n);
  out.diagnostics["max_path_share"] = sum > 0.0 ? largest / sum : 0.0;
  if (sum > 0.0 && largest / sum > 0.05) out.notes.push_back("heavy-tailed path integrals: one path carries > 5%");
  return out;
}

EntropyEstimate nform_entropy(const DiffusionSpec& spec_P, const InitialLaw& init_mu, const InitialLaw& init_P,
                              const PathEnsemble& ensemble_mu, const FunctionBasis& basis,
                              const NFormSweepConfig& config, NFormSweep* sweep_out) {
  const EntropyEstimate initial = initial_entropy(init_mu, init_P);
  if (initial.infinite) return EntropyEstimate::infinity("nform", initial.notes.front());
  const NFormSweep sweep = nform_sweep(ensemble_mu, spec_P, basis, config);
  auto out = EntropyEstimate::finite(initial.value + sweep.integral, std::hypot(sweep.std_error, initial.std_error),
                                     "nform");
  std::size_t min_rank = basis.size();
  double worst_condition = 0.0;
  for (const auto& s : sweep.slices) {
    min_rank = std::min(min_rank, s.rank);
    worst_condition = std::max(worst_condition, s.condition_number);
  }
  out.diagnostics["initial_term"] = initial.value;
  out.diagnostics["slices"] = static_cast<double>(sweep.slices.size());
  out.diagnostics["basis_size"] = static_cast<double>(basis.size());
  out.diagnostics["min_rank"] = static_cast<double>(min_rank);
  out.diagnostics["max_condition_number"] = worst_condition;
  if (sweep_out) *sweep_out = sweep;
  return out;
}

std::vector<std::string> scenario_ids() { return {"constant_drift", "ou_vs_bm", "linear_vs_linear"}; }

double analytic_entropy(const ScenarioOracle& scenario) {
  const auto& p = scenario.params;
  if (scenario.id == "constant_drift") {
    check_keys(scenario, {"theta", "T", "a"});
    const double theta = scalar(p, "theta", 1.0);
    const double T = scalar(p, "T", 1.0);
    const double a = scalar(p, "a", 1.0);
    if (!(a > 0.0)) throw PositiveDefinitenessError("scenario diffusion must be positive");
    return 0.5 * theta * theta * T / a;
  }
  if (scenario.id == "ou_vs_bm") {
    check_keys(scenario, {"gamma", "T"});
    const double gamma = require(p, "gamma")[0];
    const double T = scalar(p, "T", 1.0);
    if (gamma == 0.0) return 0.0;
    return 0.25 * gamma * (T + std::expm1(-2.0 * gamma * T) / (2.0 * gamma));
  }
  if (scenario.id == "linear_vs_linear") {
    check_keys(scenario, {"A_mu", "b_mu", "A_P", "b_P", "a", "T", "m0", "S0"});
    return linear_entropy(scenario);
  }
  throw CapabilityError("no closed form for scenario '" + scenario.id + "'");
}

}  // namespace pathkl
