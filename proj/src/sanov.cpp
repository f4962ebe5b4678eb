#include "pathkl/sanov.hpp"

#include "pathkl/errors.hpp"
#include "pathkl/parallel.hpp"
#include "pathkl/rng.hpp"

#include <cmath>
#include <limits>

namespace pathkl {

namespace {

void validate(const DiffusionSpec& spec, const RateExperiment& e) {
  if (e.sample_sizes.empty()) throw ArgumentError("rate experiment: sample size list is empty");
  for (std::size_t j = 0; j < e.sample_sizes.size(); ++j) {
    if (e.sample_sizes[j] == 0) throw ArgumentError("rate experiment: sample sizes must be positive");
    if (j > 0 && e.sample_sizes[j] <= e.sample_sizes[j - 1]) {
      throw ArgumentError("rate experiment: sample sizes must be strictly increasing");
    }
  }
  if (e.trials < 100) throw ArgumentError("rate experiment: need at least 100 trials");
  if (!(e.horizon > 0.0) || e.steps == 0) throw ArgumentError("rate experiment: horizon and steps must be positive");
  if (e.component >= static_cast<std::size_t>(spec.dim)) throw ArgumentError("rate experiment: component out of range");
  if (e.init.dim != spec.dim) throw ArgumentError("rate experiment: initial law dimension does not match the model");
  if (!std::isfinite(e.tilt) || !std::isfinite(e.threshold)) {
    throw ArgumentError("rate experiment: threshold and tilt must be finite");
  }
  if (e.tilt != 0.0 && !spec.constant_diffusion) {
    throw CapabilityError("rate experiment: tilted sampling needs a constant diffusion matrix");
  }
}

Mat factor_of(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

}  // namespace

std::string to_string(Observable observable) {
  return observable == Observable::terminal ? "terminal" : "time_average";
}

Observable observable_from_string(const std::string& name) {
  if (name == "terminal") return Observable::terminal;
  if (name == "time_average") return Observable::time_average;
  throw ArgumentError("unknown observable '" + name + "'");
}

std::vector<RateRow> empirical_rate(const DiffusionSpec& spec_P, const RateExperiment& e) {
  validate(spec_P, e);
  const int d = spec_P.dim;
  const auto c = static_cast<Eigen::Index>(e.component);
  const TimeGrid grid = TimeGrid::uniform(e.horizon, e.steps);

  Mat init_factor;
  if (e.init.kind == InitialLaw::Kind::gaussian) init_factor = factor_of(e.init.covariance);
  Mat const_factor;
  Vec a_inv_row;  // row c of a^{-1}, for the likelihood ratio
  if (spec_P.constant_diffusion) {
    const auto value = diffusion_eval(spec_P, 0.0, Vec::Zero(d));
    const_factor = value.a.llt().matrixL();
    a_inv_row = value.a_inv.row(c).transpose();
  }

  std::vector<RateRow> rows;
  for (std::size_t n : e.sample_sizes) {
    const std::uint64_t seed = derive_seed(e.seed, n);
    std::vector<double> weight(e.trials, 0.0);
    std::vector<unsigned char> hit(e.trials, 0);

    parallel_for(e.trials, [&](std::size_t trial) {
      Substream rng(seed, trial);
      Vec x(d), b(d), z(d), incr(d);
      Mat factor = const_factor;
      double total = 0.0;
      double log_w = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        switch (e.init.kind) {
          case InitialLaw::Kind::point: x = e.init.point; break;
          case InitialLaw::Kind::gaussian:
            for (int j = 0; j < d; ++j) z[j] = rng.normal();
            x = e.init.mean + init_factor * z;
            break;
          case InitialLaw::Kind::empirical: x = e.init.samples[rng.below(e.init.samples.size())]; break;
        }
        double running = 0.5 * x[c];
        for (std::size_t k = 0; k < grid.steps(); ++k) {
          const double t = grid[k];
          const double dt = grid[k + 1] - t;
          spec_P.drift(t, {x.data(), static_cast<std::size_t>(d)}, {b.data(), static_cast<std::size_t>(d)});
          if (!spec_P.constant_diffusion) factor = diffusion_eval(spec_P, t, x).a.llt().matrixL();
          for (int j = 0; j < d; ++j) z[j] = rng.normal();
          incr.noalias() = std::sqrt(dt) * (factor * z);
          x += dt * b + incr;
          if (e.tilt != 0.0) {
            x[c] += e.tilt * dt;
            log_w -= e.tilt * a_inv_row.dot(incr) + 0.5 * e.tilt * e.tilt * a_inv_row[c] * dt;
          }
          running += (k + 1 == grid.steps() ? 0.5 : 1.0) * x[c];
        }
        if (!x.allFinite()) throw ModelEvaluationError("rate experiment: path left the finite range");
        total += e.observable == Observable::terminal ? x[c] : running / static_cast<double>(grid.steps());
      }
      if (total / static_cast<double>(n) >= e.threshold) {
        hit[trial] = 1;
        weight[trial] = std::exp(log_w);
      }
    });

    RateRow row;
    row.n = n;
    for (unsigned char h : hit) row.count += h;
    const auto stats = mean_and_error(weight);
    row.p_hat = stats.mean;
    row.p_std_error = stats.std_error;
    row.zero_count = row.count == 0;
    const double nd = static_cast<double>(n);
    if (row.zero_count || !(row.p_hat > 0.0)) {
      row.rate = std::numeric_limits<double>::infinity();
      row.rate_std_error = std::numeric_limits<double>::infinity();
    } else {
      row.rate = -std::log(row.p_hat) / nd;
      row.rate_std_error = row.p_std_error / (nd * row.p_hat);
    }
    row.oracle = std::numeric_limits<double>::quiet_NaN();
    if (e.observable == Observable::terminal) {
      try {
        row.oracle = cramer_rate(spec_P, e.init, e.horizon, e.threshold, e.component);
      } catch (const CapabilityError&) {
      }
    }
    rows.push_back(row);
  }

  bool any = false;
  for (const auto& row : rows) any = any || !row.zero_count;
  if (!any) throw InsufficientSamplingError("rate experiment: no trial hit the threshold at any sample size");
  return rows;
}

double cramer_rate(const DiffusionSpec& spec_P, const InitialLaw& init, double horizon, double threshold,
                   std::size_t component) {
  if (component >= static_cast<std::size_t>(spec_P.dim)) throw ArgumentError("cramer_rate: component out of range");
  const GaussianLaw law = exact_marginal(spec_P, init, horizon);
  const auto c = static_cast<Eigen::Index>(component);
  const double m = law.mean[c];
  const double v = law.covariance(c, c);
  if (!(v > 0.0)) throw CapabilityError("cramer_rate: degenerate terminal law");
  if (threshold <= m) return 0.0;
  return (threshold - m) * (threshold - m) / (2.0 * v);
}

}  // namespace pathkl
