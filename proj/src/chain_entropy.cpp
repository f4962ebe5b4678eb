#include "pathkl/chain_entropy.hpp"

#include "pathkl/basis.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/marginal_entropy.hpp"
#include "pathkl/parallel.hpp"
#include "pathkl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pathkl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gaussian approximation of the transition law over several Euler steps:
// mean and covariance propagated through the linearized drift.
struct MomentPropagator {
  const DiffusionSpec& spec;
  int d;
  Vec b, b_shift, m_shift;
  Mat jac, a;
  std::vector<double> flat;

  explicit MomentPropagator(const DiffusionSpec& s)
      : spec(s), d(s.dim), b(d), b_shift(d), m_shift(d), jac(d, d), a(d, d), flat(static_cast<std::size_t>(d * d)) {}

  void drift_at(double t, const Vec& x, Vec& out) {
    spec.drift(t, {x.data(), static_cast<std::size_t>(d)}, {out.data(), static_cast<std::size_t>(d)});
  }

  void drift_jacobian(double t, const Vec& m) {
    if (spec.affine_drift) {
      jac = spec.drift_matrix;
      return;
    }
    for (int j = 0; j < d; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(m[j]));
      m_shift = m;
      m_shift[j] += h;
      drift_at(t, m_shift, b_shift);
      jac.col(j) = (b_shift - b) / h;
    }
  }

  void run(const TimeGrid& grid, std::size_t lo, std::size_t hi, Vec& m, Mat& c) {
    c.setZero();
    for (std::size_t k = lo; k < hi; ++k) {
      const double t = grid[k];
      const double dt = grid[k + 1] - t;
      drift_at(t, m, b);
      if (k > lo) {
        drift_jacobian(t, m);
        const Mat step = Mat::Identity(d, d) + dt * jac;
        c = step * c * step.transpose();
      }
      spec.diffusion(t, {m.data(), static_cast<std::size_t>(d)}, flat);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = flat[static_cast<std::size_t>(i * d + j)];
      c += dt * 0.5 * (a + a.transpose());
      m += dt * b;
    }
    if (!m.allFinite() || !c.allFinite()) throw ModelEvaluationError("step_kl: non-finite transition moments");
  }
};

// Scalar version of MomentPropagator::run for d = 1.
void propagate_scalar(const DiffusionSpec& spec, const TimeGrid& grid, std::size_t lo, std::size_t hi, double& m,
                      double& v) {
  v = 0.0;
  double b = 0.0, a = 0.0;
  for (std::size_t k = lo; k < hi; ++k) {
    const double t = grid[k];
    const double dt = grid[k + 1] - t;
    spec.drift(t, {&m, 1}, {&b, 1});
    if (k > lo) {
      double slope = 0.0;
      if (spec.affine_drift) {
        slope = spec.drift_matrix(0, 0);
      } else {
        double shifted = m + 1e-6 * std::max(1.0, std::abs(m));
        double b_shift = 0.0;
        spec.drift(t, {&shifted, 1}, {&b_shift, 1});
        slope = (b_shift - b) / (shifted - m);
      }
      const double j = 1.0 + dt * slope;
      v *= j * j;
    }
    spec.diffusion(t, {&m, 1}, {&a, 1});
    v += dt * a;
    m += dt * b;
  }
  if (!std::isfinite(m) || !std::isfinite(v)) throw ModelEvaluationError("step_kl: non-finite transition moments");
}

double scalar_gaussian_kl(double mp, double vp, double mq, double vq) {
  if (!(vq > 0.0)) throw PositiveDefinitenessError("step_kl: degenerate reference transition variance");
  const double ratio = vp / vq;
  const double dm = mq - mp;
  return 0.5 * (ratio + dm * dm / vq - 1.0 - std::log(ratio));
}

void check_interval(const PathEnsemble& ensemble, std::size_t lo, std::size_t hi) {
  if (!(lo < hi && hi < ensemble.grid().size())) throw ArgumentError("step_kl: interval is not on the ensemble grid");
}

std::vector<double> gauss_step(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                               const PathEnsemble& ensemble, std::size_t lo, std::size_t hi) {
  const std::size_t n = ensemble.paths();
  const auto& grid = ensemble.grid();
  std::vector<double> kl(n);
  if (ensemble.dim() == 1) {
    parallel_for(n, [&](std::size_t i) {
      double m_mu = ensemble.state(i, lo)[0], m_p = m_mu, v_mu = 0.0, v_p = 0.0;
      propagate_scalar(spec_mu, grid, lo, hi, m_mu, v_mu);
      propagate_scalar(spec_P, grid, lo, hi, m_p, v_p);
      kl[i] = scalar_gaussian_kl(m_mu, v_mu, m_p, v_p);
    });
    return kl;
  }
  const int d = ensemble.dim();
  // One propagator pair per fixed block of paths keeps scratch allocation low.
  constexpr std::size_t kBlock = 256;
  parallel_for((n + kBlock - 1) / kBlock, [&](std::size_t blk) {
    MomentPropagator mu(spec_mu), p(spec_P);
    Vec m_mu(d), m_p(d);
    Mat c_mu(d, d), c_p(d, d);
    for (std::size_t i = blk * kBlock; i < std::min(n, (blk + 1) * kBlock); ++i) {
      m_mu = ensemble.state_vec(i, lo);
      m_p = m_mu;
      mu.run(grid, lo, hi, m_mu, c_mu);
      p.run(grid, lo, hi, m_p, c_p);
      kl[i] = gaussian_kl({m_mu, c_mu}, {m_p, c_p});
    }
  });
  return kl;
}

std::vector<double> path_step(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                              const PathEnsemble& ensemble, std::size_t lo, std::size_t hi) {
  const std::size_t n = ensemble.paths();
  const auto& grid = ensemble.grid();
  std::vector<double> kl(n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    double sum = 0.0;
    for (std::size_t k = lo; k < hi; ++k) {
      const Vec x = ensemble.state_vec(i, k);
      const double dt = grid[k + 1] - grid[k];
      sum += gaussian_kl(euler_step_law(spec_mu, grid[k], x, dt), euler_step_law(spec_P, grid[k], x, dt));
    }
    kl[i] = sum;
  });
  return kl;
}

std::vector<double> dv_step(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const PathEnsemble& ensemble,
                            std::size_t lo, std::size_t hi, const StepConfig& config) {
  if (config.dv_paths == 0 || config.dv_cloud < 2) throw ArgumentError("step_kl: dv needs paths >= 1 and cloud >= 2");
  const auto& grid = ensemble.grid();
  const TimeGrid sub(std::vector<double>(grid.points().begin() + static_cast<std::ptrdiff_t>(lo),
                                         grid.points().begin() + static_cast<std::ptrdiff_t>(hi) + 1));
  const std::size_t count = std::min(config.dv_paths, ensemble.paths());
  const int d = ensemble.dim();
  std::vector<double> kl(count);
  for (std::size_t j = 0; j < count; ++j) {
    const std::size_t i = j * ensemble.paths() / count;
    const auto init = InitialLaw::point_mass(ensemble.state_vec(i, lo));
    const std::uint64_t tag = (static_cast<std::uint64_t>(i) << 24) ^ static_cast<std::uint64_t>(lo);
    const auto cloud_mu = sample_paths(spec_mu, init, sub, config.dv_cloud, derive_seed(config.seed, 2 * tag))
                              .slice(sub.size() - 1);
    const auto cloud_p = sample_paths(spec_P, init, sub, config.dv_cloud, derive_seed(config.seed, 2 * tag + 1))
                             .slice(sub.size() - 1);

    // Local window covering both clouds generously.
    Vec lo_box = Vec::Constant(d, kInf), hi_box = Vec::Constant(d, -kInf);
    for (const auto* cloud : {&cloud_mu, &cloud_p}) {
      for (const auto& x : *cloud) {
        lo_box = lo_box.cwiseMin(x);
        hi_box = hi_box.cwiseMax(x);
      }
    }
    const double margin = std::max(1e-8, 0.5 * (hi_box - lo_box).maxCoeff());
    std::vector<double> wl(static_cast<std::size_t>(d)), wh(static_cast<std::size_t>(d));
    for (int r = 0; r < d; ++r) {
      wl[static_cast<std::size_t>(r)] = lo_box[r] - margin;
      wh[static_cast<std::size_t>(r)] = hi_box[r] + margin;
    }
    const BoxWindow window = make_window(wl, wh, margin);
    FunctionBasis basis = gaussian_bumps(window, config.dv_bumps);
    const FunctionBasis polys = polynomial_basis(window, 2);
    for (const auto& f : polys.functions()) basis = basis.with(f);
    kl[j] = dv_estimate(cloud_mu, cloud_p, basis).value;
  }
  return kl;
}

}  // namespace

Partition::Partition(std::shared_ptr<const TimeGrid> grid, std::vector<std::size_t> indices)
    : grid_(std::move(grid)), indices_(std::move(indices)) {
  if (!grid_) throw ArgumentError("partition: grid is null");
  if (indices_.size() < 2) throw ArgumentError("partition: needs at least the two endpoints");
  if (indices_.front() != 0 || indices_.back() != grid_->size() - 1) {
    throw ArgumentError("partition: must start at 0 and end at T");
  }
  for (std::size_t j = 1; j < indices_.size(); ++j) {
    if (indices_[j] <= indices_[j - 1]) throw ArgumentError("partition: indices must be strictly increasing");
  }
}

std::vector<double> Partition::times() const {
  std::vector<double> out;
  out.reserve(indices_.size());
  for (std::size_t k : indices_) out.push_back((*grid_)[k]);
  return out;
}

double Partition::mesh() const {
  double mesh = 0.0;
  for (std::size_t j = 1; j < indices_.size(); ++j) {
    mesh = std::max(mesh, (*grid_)[indices_[j]] - (*grid_)[indices_[j - 1]]);
  }
  return mesh;
}

double Partition::floor_time(double t) const {
  if (t < (*grid_)[0]) throw ArgumentError("partition: time precedes the partition");
  double out = (*grid_)[0];
  for (std::size_t k : indices_) {
    if ((*grid_)[k] <= t) out = (*grid_)[k];
  }
  return out;
}

bool Partition::subset_of(const Partition& other) const {
  const auto mine = times();
  const auto theirs = other.times();
  return std::includes(theirs.begin(), theirs.end(), mine.begin(), mine.end());
}

std::string to_string(StepMethod method) {
  switch (method) {
    case StepMethod::gauss: return "gauss";
    case StepMethod::dv: return "dv";
    case StepMethod::path: return "path";
  }
  return "gauss";
}

StepMethod step_method_from_string(const std::string& name) {
  if (name == "gauss") return StepMethod::gauss;
  if (name == "dv") return StepMethod::dv;
  if (name == "path") return StepMethod::path;
  throw ArgumentError("unknown step method '" + name + "'");
}

StepResult step_kl(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const PathEnsemble& ensemble_mu,
                   std::size_t lo_index, std::size_t hi_index, const StepConfig& config) {
  check_interval(ensemble_mu, lo_index, hi_index);
  if (spec_mu.dim != ensemble_mu.dim() || spec_P.dim != ensemble_mu.dim()) {
    throw ArgumentError("step_kl: dimension mismatch");
  }
  StepResult out;
  switch (config.method) {
    case StepMethod::gauss: out.per_path = gauss_step(spec_mu, spec_P, ensemble_mu, lo_index, hi_index); break;
    case StepMethod::path: out.per_path = path_step(spec_mu, spec_P, ensemble_mu, lo_index, hi_index); break;
    case StepMethod::dv: out.per_path = dv_step(spec_mu, spec_P, ensemble_mu, lo_index, hi_index, config); break;
  }
  const auto stats = mean_and_error(out.per_path);
  out.value = stats.mean;
  out.std_error = stats.std_error;
  return out;
}

ChainEstimate chain_estimate(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const InitialLaw& init_mu,
                             const InitialLaw& init_P, const PathEnsemble& ensemble_mu, const Partition& partition,
                             const StepConfig& config) {
  if (partition.grid().points() != ensemble_mu.grid().points()) {
    throw ArgumentError("chain_estimate: partition is not on the ensemble grid");
  }
  ChainEstimate out;
  out.partition = partition;
  out.method = config.method;

  const EntropyEstimate initial = initial_entropy(init_mu, init_P);
  if (initial.infinite) {
    out.total = EntropyEstimate::infinity("chain:" + to_string(config.method), initial.notes.front());
    out.initial_term = kInf;
    return out;
  }
  out.initial_term = initial.value;

  const auto& idx = partition.indices();
  std::vector<double> per_path_total;
  double total = out.initial_term;
  for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
    const StepResult step = step_kl(spec_mu, spec_P, ensemble_mu, idx[j], idx[j + 1], config);
    out.per_step.push_back({ensemble_mu.grid()[idx[j]], ensemble_mu.grid()[idx[j + 1]], step.value, step.std_error});
    total += step.value;
    if (per_path_total.empty()) per_path_total.assign(step.per_path.size(), 0.0);
    for (std::size_t i = 0; i < per_path_total.size(); ++i) per_path_total[i] += step.per_path[i];
  }
  const double path_se = mean_and_error(per_path_total).std_error;
  out.total = EntropyEstimate::finite(total, std::hypot(path_se, initial.std_error), "chain:" + to_string(config.method));
  out.total.diagnostics["intervals"] = static_cast<double>(partition.intervals());
  out.total.diagnostics["mesh"] = partition.mesh();
  out.total.diagnostics["paths"] = static_cast<double>(ensemble_mu.paths());
  out.total.diagnostics["initial_term"] = out.initial_term;
  for (const auto& step : out.per_step) {
    if (step.value < -3.0 * step.std_error) {
      out.total.notes.push_back("negative step contribution beyond 3 SE on [" + std::to_string(step.t0) + ", " +
                                std::to_string(step.t1) + "]");
    }
  }
  return out;
}

ChainEstimate chain_estimate(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P, const InitialLaw& init_mu,
                             const InitialLaw& init_P, const Partition& partition, std::size_t n_paths,
                             std::uint64_t seed, const StepConfig& config) {
  const PathEnsemble ensemble = sample_paths(spec_mu, init_mu, partition.grid(), n_paths, seed);
  return chain_estimate(spec_mu, spec_P, init_mu, init_P, ensemble,
                        Partition(ensemble.grid_ptr(), partition.indices()), config);
}

std::vector<Partition> refine_sequence(std::shared_ptr<const TimeGrid> grid, std::size_t levels) {
  if (!grid) throw ArgumentError("refine_sequence: grid is null");
  if (levels == 0) throw ArgumentError("refine_sequence: levels must be >= 1");
  if (levels > 60) throw ArgumentError("refine_sequence: too many levels");
  const std::size_t steps = grid->steps();
  const std::size_t finest = std::size_t{1} << (levels - 1);
  if (steps % finest != 0) {
    throw ArgumentError("refine_sequence: " + std::to_string(steps) + " grid steps are not divisible by " +
                        std::to_string(finest));
  }
  std::vector<Partition> out;
  for (std::size_t level = 0; level < levels; ++level) {
    const std::size_t intervals = std::size_t{1} << level;
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j <= intervals; ++j) idx.push_back(j * (steps / intervals));
    out.emplace_back(grid, std::move(idx));
  }
  return out;
}

RefinementSweep refinement_sweep(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 const PathEnsemble& ensemble_mu, const SweepConfig& config) {
  RefinementSweep out;
  const MatchReport match = diffusion_match_check(spec_mu, spec_P, ensemble_mu, config.tol_match);
  out.diffusion_mismatch = !match.pass;

  for (const auto& partition : refine_sequence(ensemble_mu.grid_ptr(), config.levels)) {
    out.levels.push_back(chain_estimate(spec_mu, spec_P, init_mu, init_P, ensemble_mu, partition, config.step));
  }

  out.slope_per_step.assign(out.levels.size(), 0.0);
  for (std::size_t n = 0; n < out.levels.size(); ++n) {
    const auto& cur = out.levels[n].total;
    if (cur.infinite || cur.value > config.divergence_threshold) out.diverged = true;
    if (n == 0) continue;
    const auto& prev = out.levels[n - 1].total;
    if (cur.infinite || prev.infinite) continue;
    const double added = static_cast<double>(out.levels[n].partition->intervals() -
                                             out.levels[n - 1].partition->intervals());
    out.slope_per_step[n] = (cur.value - prev.value) / added;
    const double slack = 3.0 * std::hypot(cur.std_error, prev.std_error) + kTolLinalg * std::max(1.0, std::abs(prev.value));
    if (cur.value < prev.value - slack) {
      out.monotonicity_violations.push_back(n);
    }
  }

  const auto& finest = out.levels.back().total;
  if (out.levels.size() >= 2) {
    out.extrapolation_gap = finest.value - out.levels[out.levels.size() - 2].total.value;
  }

  if (out.diverged || out.diffusion_mismatch || finest.infinite) {
    std::string reason = out.diffusion_mismatch ? "diffusion matrices differ (relative distance " +
                                                      std::to_string(match.max_distance) + ")"
                                                : "chain sum exceeded the divergence threshold";
    out.supremum = EntropyEstimate::infinity("chain-sweep", reason);
  } else {
    out.supremum = finest;
    out.supremum.method = "chain-sweep";
  }
  out.supremum.diagnostics["levels"] = static_cast<double>(out.levels.size());
  out.supremum.diagnostics["extrapolation_gap"] = out.extrapolation_gap;
  out.supremum.diagnostics["match_distance"] = match.max_distance;
  out.supremum.diagnostics["monotonicity_violations"] = static_cast<double>(out.monotonicity_violations.size());
  if (out.levels.size() >= 2) out.supremum.diagnostics["slope_per_step"] = out.slope_per_step.back();
  return out;
}

RefinementSweep refinement_sweep(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                 const InitialLaw& init_mu, const InitialLaw& init_P,
                                 std::shared_ptr<const TimeGrid> grid, std::size_t n_paths, std::uint64_t seed,
                                 const SweepConfig& config) {
  if (!grid) throw ArgumentError("refinement_sweep: grid is null");
  refine_sequence(grid, config.levels);  // validates divisibility before sampling
  const PathEnsemble ensemble = sample_paths(spec_mu, init_mu, *grid, n_paths, seed);
  return refinement_sweep(spec_mu, spec_P, init_mu, init_P, ensemble, config);
}

MatchReport diffusion_match_check(const DiffusionSpec& spec_mu, const DiffusionSpec& spec_P,
                                  const PathEnsemble& ensemble_mu, double tol_match) {
  if (spec_mu.dim != spec_P.dim || spec_mu.dim != ensemble_mu.dim()) {
    throw ArgumentError("diffusion_match_check: dimension mismatch");
  }
  const int d = spec_mu.dim;
  const auto dd = static_cast<std::size_t>(d * d);
  const auto& grid = ensemble_mu.grid();

  auto distance = [d](const std::vector<double>& c, const std::vector<double>& a) {
    if (d == 1) return std::abs(c[0] - a[0]) / std::abs(a[0]);
    const Mat cm = Eigen::Map<const Mat>(c.data(), d, d);
    const Mat am = Eigen::Map<const Mat>(a.data(), d, d);
    Eigen::SelfAdjointEigenSolver<Mat> diff(0.5 * (cm - am + (cm - am).transpose()), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat> base(0.5 * (am + am.transpose()), Eigen::EigenvaluesOnly);
    return diff.eigenvalues().cwiseAbs().maxCoeff() / base.eigenvalues().cwiseAbs().maxCoeff();
  };

  MatchReport out;
  out.tolerance = tol_match;
  if (spec_mu.constant_diffusion && spec_P.constant_diffusion) {
    std::vector<double> c(dd), a(dd), origin(static_cast<std::size_t>(d), 0.0);
    spec_mu.diffusion(0.0, origin, c);
    spec_P.diffusion(0.0, origin, a);
    out.max_distance = distance(c, a);
  } else {
    const std::size_t n = ensemble_mu.paths();
    std::vector<double> worst(n, 0.0), worst_t(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
      std::vector<double> c(dd), a(dd);
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto x = ensemble_mu.state(i, k);
        spec_mu.diffusion(grid[k], x, c);
        spec_P.diffusion(grid[k], x, a);
        const double dist = distance(c, a);
        if (dist > worst[i]) {
          worst[i] = dist;
          worst_t[i] = grid[k];
        }
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (worst[i] > out.max_distance) {
        out.max_distance = worst[i];
        out.t_at_max = worst_t[i];
      }
    }
  }
  out.pass = out.max_distance <= tol_match;
  return out;
}

}  // namespace pathkl
