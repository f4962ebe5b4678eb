#include "pathkl/marginal_entropy.hpp"

#include "pathkl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace pathkl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(a <= Z < b) for standard normal Z without cancellation in either tail.
double normal_mass(double a, double b) {
  if (a >= 0.0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

}  // namespace

SpacePartition::SpacePartition(Vec lo, Vec hi, std::vector<int> cells, int level)
    : lo_(std::move(lo)), hi_(std::move(hi)), cells_(std::move(cells)), level_(level) {}

SpacePartition SpacePartition::uniform(Vec lo, Vec hi, std::vector<int> cells_per_axis) {
  if (lo.size() == 0 || lo.size() != hi.size() || static_cast<std::size_t>(lo.size()) != cells_per_axis.size()) {
    throw ArgumentError("space partition: bounds and cell counts must have equal, nonzero length");
  }
  for (Eigen::Index j = 0; j < lo.size(); ++j) {
    if (!(hi[j] > lo[j])) throw ArgumentError("space partition: empty box");
    if (cells_per_axis[static_cast<std::size_t>(j)] < 1) throw ArgumentError("space partition: need >= 1 cell per axis");
  }
  return SpacePartition(std::move(lo), std::move(hi), std::move(cells_per_axis), 0);
}

SpacePartition SpacePartition::refined() const {
  auto cells = cells_;
  for (auto& c : cells) c *= 2;
  return SpacePartition(lo_, hi_, std::move(cells), level_ + 1);
}

std::size_t SpacePartition::box_count() const {
  std::size_t n = 1;
  for (int c : cells_) n *= static_cast<std::size_t>(c);
  return n;
}

Box SpacePartition::box(std::size_t index) const {
  if (index >= box_count()) throw ArgumentError("space partition: box index out of range");
  Box b{Vec(dim()), Vec(dim())};
  for (int j = 0; j < dim(); ++j) {
    const auto c = static_cast<std::size_t>(cells_[static_cast<std::size_t>(j)]);
    const std::size_t i = index % c;
    index /= c;
    const double width = hi_[j] - lo_[j];
    b.lo[j] = lo_[j] + width * (static_cast<double>(i) / static_cast<double>(c));
    b.hi[j] = (i + 1 == c) ? hi_[j] : lo_[j] + width * (static_cast<double>(i + 1) / static_cast<double>(c));
  }
  return b;
}

std::size_t SpacePartition::locate(std::span<const double> x) const {
  std::size_t index = 0;
  std::size_t stride = 1;
  for (int j = 0; j < dim(); ++j) {
    const double xj = x[static_cast<std::size_t>(j)];
    if (!(xj >= lo_[j] && xj < hi_[j])) return remainder_index();
    const int c = cells_[static_cast<std::size_t>(j)];
    const double r = (xj - lo_[j]) / (hi_[j] - lo_[j]);
    auto i = static_cast<std::size_t>(std::floor(r * c));
    i = std::min(i, static_cast<std::size_t>(c - 1));
    index += i * stride;
    stride *= static_cast<std::size_t>(c);
  }
  return index;
}

CellProbabilityFn gaussian_cells(const GaussianLaw& law) {
  const Eigen::Index d = law.mean.size();
  const Mat& s = law.covariance;
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (i != j && std::abs(s(i, j)) > 1e-12 * scale) {
        throw CapabilityError("gaussian_cells: exact cell probabilities need a diagonal covariance");
      }
    }
    if (!(s(i, i) > 0.0)) throw PositiveDefinitenessError("gaussian_cells: degenerate covariance");
  }
  return [law](const SpacePartition& partition) {
    const int dim = partition.dim();
    if (dim != law.mean.size()) throw ArgumentError("gaussian_cells: dimension mismatch");
    Vec sd(dim);
    for (int j = 0; j < dim; ++j) sd[j] = std::sqrt(law.covariance(j, j));
    CellProbabilities out;
    out.p.resize(partition.cell_count());
    for (std::size_t i = 0; i < partition.box_count(); ++i) {
      const Box b = partition.box(i);
      double p = 1.0;
      for (int j = 0; j < dim; ++j) {
        p *= normal_mass((b.lo[j] - law.mean[j]) / sd[j], (b.hi[j] - law.mean[j]) / sd[j]);
      }
      out.p[i] = p;
    }
    // 1 - prod_j (1 - outside_j), evaluated without cancellation.
    double log_inside = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double outside = normal_cdf((partition.lo()[j] - law.mean[j]) / sd[j]) +
                             normal_cdf(-(partition.hi()[j] - law.mean[j]) / sd[j]);
      log_inside += std::log1p(-outside);
    }
    out.p[partition.remainder_index()] = -std::expm1(log_inside);
    return out;
  };
}

CellProbabilityFn empirical_cells(std::vector<Vec> samples) {
  if (samples.empty()) throw ArgumentError("empirical_cells: reference sample is empty");
  return [samples = std::move(samples)](const SpacePartition& partition) {
    CellProbabilities out;
    out.p.assign(partition.cell_count(), 0.0);
    for (const auto& x : samples) {
      out.p[partition.locate({x.data(), static_cast<std::size_t>(x.size())})] += 1.0;
    }
    for (auto& p : out.p) p /= static_cast<double>(samples.size());
    out.samples = samples.size();
    return out;
  };
}

double cell_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ArgumentError("cell_kl: probability vectors differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return kInf;
    sum += p[i] * std::log(p[i] / q[i]);
  }
  return sum;
}

EntropyEstimate histogram_kl(std::span<const Vec> samples_mu, const CellProbabilityFn& nu_cells,
                             const SpacePartition& partition) {
  if (samples_mu.empty()) throw ArgumentError("histogram_kl: sample list is empty");
  std::vector<double> p(partition.cell_count(), 0.0);
  for (const auto& x : samples_mu) {
    if (x.size() != partition.dim()) throw ArgumentError("histogram_kl: sample dimension mismatch");
    p[partition.locate({x.data(), static_cast<std::size_t>(x.size())})] += 1.0;
  }
  const double n = static_cast<double>(samples_mu.size());
  for (auto& v : p) v /= n;

  const CellProbabilities q = nu_cells(partition);
  if (q.p.size() != p.size()) throw ArgumentError("histogram_kl: provider returned the wrong number of cells");

  const double value = cell_kl(p, q.p);
  if (std::isinf(value)) {
    std::size_t cell = 0;
    while (cell < p.size() && !(p[cell] > 0.0 && q.p[cell] <= 0.0)) ++cell;
    std::ostringstream reason;
    reason << "cell " << cell << " has mu-mass " << p[cell] << " and zero reference mass";
    auto out = EntropyEstimate::infinity("histogram", reason.str());
    out.diagnostics["cells"] = static_cast<double>(p.size());
    out.diagnostics["offending_cell"] = static_cast<double>(cell);
    return out;
  }

  // Delta method: Var over mu of log(p/q) at the sample's cell, plus the
  // multinomial error of q when it is itself estimated.
  double m1 = 0.0, m2 = 0.0, nu_term = 0.0;
  std::size_t occupied = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    ++occupied;
    const double l = std::log(p[i] / q.p[i]);
    m1 += p[i] * l;
    m2 += p[i] * l * l;
    nu_term += p[i] * p[i] / q.p[i];
  }
  double variance = std::max(0.0, m2 - m1 * m1) / n;
  if (q.samples > 0) variance += std::max(0.0, nu_term - 1.0) / static_cast<double>(q.samples);

  auto out = EntropyEstimate::finite(value, std::sqrt(variance), "histogram");
  out.diagnostics["cells"] = static_cast<double>(p.size());
  out.diagnostics["occupied_cells"] = static_cast<double>(occupied);
  out.diagnostics["samples_mu"] = n;
  out.diagnostics["samples_nu"] = static_cast<double>(q.samples);
  out.diagnostics["level"] = partition.level();
  return out;
}

EntropyEstimate dv_estimate(std::span<const Vec> samples_mu, std::span<const Vec> samples_nu,
                            const FunctionBasis& basis, const DvConfig& config) {
  if (samples_mu.empty() || samples_nu.empty()) throw ArgumentError("dv_estimate: both sample lists must be nonempty");
  const Mat fm = basis.value_matrix(samples_mu);
  const Mat fn = basis.value_matrix(samples_nu);
  const Vec mean_mu = fm.colwise().mean().transpose();
  const auto K = static_cast<Eigen::Index>(basis.size());
  const double n_nu = static_cast<double>(samples_nu.size());

  struct Eval {
    double value;
    Vec weights;  // softmax of f_g over nu samples
    Vec grad;
  };
  auto evaluate = [&](const Vec& g, bool want_grad) {
    const Vec a = fn * g;
    const double top = a.maxCoeff();
    // Terms below e^-700 are irrelevant to the sum; clamping them avoids
    // denormal arithmetic when the objective runs away.
    const Vec e = (a.array() - top).max(-700.0).exp().matrix();
    const double sum = e.sum();
    Eval out{mean_mu.dot(g) - (top + std::log(sum / n_nu)), Vec(), Vec()};
    if (want_grad) {
      out.weights = e / sum;
      out.grad = mean_mu - fn.transpose() * out.weights;
    }
    return out;
  };

  Vec g = Vec::Zero(K);
  Eval current = evaluate(g, true);
  int iterations = 0;
  bool stalled = false;
  while (current.grad.norm() > config.gtol) {
    if (iterations >= config.max_iter) {
      throw ConvergenceError("dv_estimate: no convergence after " + std::to_string(config.max_iter) + " iterations",
                             std::max(0.0, current.value));
    }
    ++iterations;
    // Newton step on the concave objective: (Cov_w + ridge) delta = grad.
    const Vec wf = fn.transpose() * current.weights;
    Mat cov = fn.transpose() * current.weights.asDiagonal() * fn - wf * wf.transpose();
    const double ridge = 1e-12 * std::max(1.0, cov.trace());
    cov.diagonal().array() += ridge;
    Vec direction = cov.ldlt().solve(current.grad);
    if (!direction.allFinite() || direction.dot(current.grad) <= 0.0) direction = current.grad;

    const double slope = direction.dot(current.grad);
    const double flat = 1e-13 * (1.0 + std::abs(current.value));
    double step = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings) {
      const Vec trial = g + step * direction;
      if (trial == g) break;
      Eval next = evaluate(trial, true);
      // Near the optimum the objective is flat to rounding; there the step
      // is judged by the gradient instead.
      const bool ascent = next.value >= current.value + 1e-4 * step * slope && next.value > current.value - flat;
      const bool polish = std::abs(next.value - current.value) <= flat && next.grad.norm() < current.grad.norm();
      if (std::isfinite(next.value) && (ascent || polish)) {
        g = trial;
        current = std::move(next);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No representable ascent left; accept only if the gradient is already tiny.
      if (current.grad.norm() <= std::sqrt(config.gtol)) {
        stalled = true;
        break;
      }
      throw ConvergenceError("dv_estimate: line search failed", std::max(0.0, current.value));
    }
  }

  // Standard error by the delta method on both sample means.
  const Vec f_mu = fm * g;
  const Vec a = fn * g;
  const Vec e = (a.array() - a.maxCoeff()).exp().matrix();
  const double n_mu = static_cast<double>(samples_mu.size());
  const double var_f = n_mu > 1 ? (f_mu.array() - f_mu.mean()).square().sum() / (n_mu - 1) : 0.0;
  const double mean_e = e.mean();
  const double var_e = n_nu > 1 ? (e.array() - mean_e).square().sum() / (n_nu - 1) : 0.0;
  const double se = std::sqrt(var_f / n_mu + var_e / (n_nu * mean_e * mean_e));

  auto out = EntropyEstimate::finite(current.value, se, "dv");
  if (out.value < 0.0) {
    if (out.value < -3.0 * se) out.notes.push_back("negative DV objective beyond 3 SE, clamped to 0");
    out.diagnostics["unclamped_value"] = out.value;
    out.value = 0.0;
  }
  if (stalled) out.notes.push_back("line search stalled with gradient below sqrt(gtol)");
  out.diagnostics["iterations"] = iterations;
  out.diagnostics["gradient_norm"] = current.grad.norm();
  out.diagnostics["samples_mu"] = n_mu;
  out.diagnostics["samples_nu"] = n_nu;
  out.diagnostics["basis_size"] = static_cast<double>(K);
  return out;
}

double gaussian_kl(const GaussianLaw& p, const GaussianLaw& q) {
  const Eigen::Index d = p.mean.size();
  if (q.mean.size() != d || p.covariance.rows() != d || q.covariance.rows() != d) {
    throw ArgumentError("gaussian_kl: dimension mismatch");
  }
  if (d == 1) {
    const double vq = q.covariance(0, 0);
    const double vp = p.covariance(0, 0);
    if (!(vq > 0.0)) throw PositiveDefinitenessError("gaussian_kl: reference variance is not positive");
    if (!(vp > 0.0)) return kInf;
    const double dm = q.mean[0] - p.mean[0];
    const double ratio = vp / vq;
    return 0.5 * (ratio + dm * dm / vq - 1.0 - std::log(ratio));
  }
  Eigen::LLT<Mat> lq(q.covariance);
  if (lq.info() != Eigen::Success) throw PositiveDefinitenessError("gaussian_kl: reference covariance is not PD");
  Eigen::LLT<Mat> lp(p.covariance);
  if (lp.info() != Eigen::Success) return kInf;
  const Mat lq_m = lq.matrixL();
  const Mat lp_m = lp.matrixL();
  const double logdet_q = 2.0 * lq_m.diagonal().array().log().sum();
  const double logdet_p = 2.0 * lp_m.diagonal().array().log().sum();
  const Vec dm = q.mean - p.mean;
  const double trace = lq.solve(p.covariance).trace();
  const double maha = dm.dot(lq.solve(dm));
  return 0.5 * (trace + maha - static_cast<double>(d) + logdet_q - logdet_p);
}

EntropyEstimate initial_entropy(const InitialLaw& init_mu, const InitialLaw& init_P) {
  using Kind = InitialLaw::Kind;
  if (init_mu.dim != init_P.dim) throw ArgumentError("initial_entropy: dimension mismatch");

  if (init_mu.kind == Kind::point && init_P.kind == Kind::point) {
    if (init_mu.point == init_P.point) return EntropyEstimate::finite(0.0, 0.0, "initial:point");
    return EntropyEstimate::infinity("initial:point", "distinct point masses are mutually singular");
  }
  if (init_mu.kind == Kind::gaussian && init_P.kind == Kind::gaussian) {
    const double v = gaussian_kl({init_mu.mean, init_mu.covariance}, {init_P.mean, init_P.covariance});
    if (std::isinf(v)) return EntropyEstimate::infinity("initial:gaussian", "degenerate Gaussian against a PD Gaussian");
    return EntropyEstimate::finite(v, 0.0, "initial:gaussian");
  }
  if (init_mu.kind == Kind::point && init_P.kind == Kind::gaussian) {
    return EntropyEstimate::infinity("initial:point-gaussian", "a point mass is singular w.r.t. a nondegenerate Gaussian");
  }
  if (init_mu.kind == Kind::gaussian && init_P.kind == Kind::point) {
    return EntropyEstimate::infinity("initial:gaussian-point", "a Gaussian is not absolutely continuous w.r.t. a point mass");
  }
  if (init_mu.kind == Kind::empirical && init_P.kind == Kind::point) {
    const bool all_equal = std::all_of(init_mu.samples.begin(), init_mu.samples.end(),
                                       [&](const Vec& x) { return x == init_P.point; });
    if (all_equal) return EntropyEstimate::finite(0.0, 0.0, "initial:empirical-point");
    return EntropyEstimate::infinity("initial:empirical-point", "samples off the reference point mass");
  }
  if (init_mu.kind == Kind::empirical && init_P.kind == Kind::gaussian) {
    // Whiten with the reference Gaussian; KL is invariant under the bijection
    // and the reference becomes N(0, I), whose cell masses are exact.
    const int d = init_mu.dim;
    Eigen::LLT<Mat> llt(init_P.covariance);
    if (llt.info() != Eigen::Success) throw PositiveDefinitenessError("initial_entropy: reference covariance is not PD");
    std::vector<Vec> white;
    white.reserve(init_mu.samples.size());
    for (const auto& x : init_mu.samples) white.push_back(llt.matrixL().solve(x - init_P.mean));
    const double n = static_cast<double>(white.size());
    const int cells = std::max(2, static_cast<int>(std::lround(2.0 * std::pow(n, 1.0 / (d + 2)))));
    const auto partition = SpacePartition::uniform(Vec::Constant(d, -5.0), Vec::Constant(d, 5.0),
                                                   std::vector<int>(static_cast<std::size_t>(d), cells));
    auto out = histogram_kl(white, gaussian_cells({Vec::Zero(d), Mat::Identity(d, d)}), partition);
    out.method = "initial:empirical-gaussian";
    return out;
  }
  throw CapabilityError("initial_entropy: unsupported pair of initial-law kinds");
}

}  // namespace pathkl
