#include "pathkl/variational.hpp"

#include "pathkl/errors.hpp"
#include "pathkl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pathkl {

namespace {

// Samples are processed in fixed-size blocks whose partial sums are combined
// in block order, so the result is independent of the thread count.
constexpr std::size_t kBlock = 512;

std::size_t block_count(std::size_t n) { return (n + kBlock - 1) / kBlock; }

void read_diffusion(const DiffusionSpec& spec, double t, std::span<const double> x, Mat& a) {
  const int d = spec.dim;
  std::vector<double> flat(static_cast<std::size_t>(d * d));
  spec.diffusion(t, x, flat);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = flat[static_cast<std::size_t>(i * d + j)];
}

double condition_of(const Mat& q) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(q, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// Per-path action samples y_ik; c is their mean.
Mat action_samples(const PathEnsemble& ensemble, const DiffusionSpec& spec_P, const FunctionBasis& basis,
                   std::size_t t_index, std::size_t lo_index, std::size_t hi_index) {
  const auto& grid = ensemble.grid();
  const double t = grid[t_index];
  const double span_t = grid[hi_index] - grid[lo_index];
  const int d = ensemble.dim();
  const auto K = static_cast<Eigen::Index>(basis.size());
  const std::size_t n = ensemble.paths();
  Mat y(static_cast<Eigen::Index>(n), K);

  parallel_for(block_count(n), [&](std::size_t b) {
    Vec grad(d), drift(d);
    std::vector<double> hess(static_cast<std::size_t>(d * d));
    Mat a(d, d);
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const auto x_lo = ensemble.state(i, lo_index);
      const auto x_hi = ensemble.state(i, hi_index);
      const auto x_t = ensemble.state(i, t_index);
      spec_P.drift(t, x_t, {drift.data(), static_cast<std::size_t>(d)});
      read_diffusion(spec_P, t, x_t, a);
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto& f = basis[static_cast<std::size_t>(k)];
        double f_lo = 0.0, f_hi = 0.0, f_t = 0.0;
        f.evaluate(x_lo, f_lo, grad.data(), nullptr);
        f.evaluate(x_hi, f_hi, grad.data(), nullptr);
        f.evaluate(x_t, f_t, grad.data(), hess.data());
        double generator = drift.dot(grad);
        for (int r = 0; r < d; ++r)
          for (int s = 0; s < d; ++s) generator += 0.5 * a(r, s) * hess[static_cast<std::size_t>(r * d + s)];
        y(static_cast<Eigen::Index>(i), k) = (f_hi - f_lo) / span_t - generator;
      }
    }
  });
  return y;
}

// Column means and covariance of the mean estimate.
void mean_and_covariance(const Mat& y, Vec& mean, Mat& cov_of_mean) {
  const std::size_t n = static_cast<std::size_t>(y.rows());
  const Eigen::Index K = y.cols();
  const std::size_t blocks = block_count(n);
  std::vector<Vec> partial(blocks, Vec::Zero(K));
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) partial[b] += y.row(static_cast<Eigen::Index>(i)).transpose();
  });
  mean = Vec::Zero(K);
  for (const auto& p : partial) mean += p;
  mean /= static_cast<double>(n);

  cov_of_mean = Mat::Zero(K, K);
  if (n < 2) return;
  std::vector<Mat> partial_cov(blocks, Mat::Zero(K, K));
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const Vec r = y.row(static_cast<Eigen::Index>(i)).transpose() - mean;
      partial_cov[b].noalias() += r * r.transpose();
    }
  });
  for (const auto& p : partial_cov) cov_of_mean += p;
  cov_of_mean /= static_cast<double>(n - 1) * static_cast<double>(n);
}

}  // namespace

HField::HField(Vec coefficients, double t, double energy, std::shared_ptr<const FunctionBasis> basis,
               std::shared_ptr<const DiffusionSpec> spec)
    : coefficients_(std::move(coefficients)), t_(t), energy_(energy), basis_(std::move(basis)), spec_(std::move(spec)) {}

Vec HField::operator()(const Vec& y) const {
  const int d = basis_->dim();
  Vec field = Vec::Zero(d);
  Vec grad(d);
  for (std::size_t k = 0; k < basis_->size(); ++k) {
    double v = 0.0;
    (*basis_)[k].evaluate({y.data(), static_cast<std::size_t>(d)}, v, grad.data(), nullptr);
    field += coefficients_[static_cast<Eigen::Index>(k)] * grad;
  }
  Mat a(d, d);
  read_diffusion(*spec_, t_, {y.data(), static_cast<std::size_t>(d)}, a);
  return a * field;
}

GramData gram_matrix(const DiffusionSpec& spec, double t, std::span<const Vec> samples, const FunctionBasis& basis) {
  if (samples.empty()) throw ArgumentError("gram_matrix: sample list is empty");
  if (basis.dim() != spec.dim) throw ArgumentError("gram_matrix: basis and model dimensions differ");
  const int d = spec.dim;
  const auto K = static_cast<Eigen::Index>(basis.size());
  const std::size_t n = samples.size();
  const std::size_t blocks = block_count(n);
  std::vector<Mat> partial(blocks, Mat::Zero(K, K));

  parallel_for(blocks, [&](std::size_t b) {
    Mat grads(K, d);
    Vec g(d);
    Mat a(d, d);
    const std::size_t end = std::min(n, (b + 1) * kBlock);
    for (std::size_t i = b * kBlock; i < end; ++i) {
      const std::span<const double> x(samples[i].data(), static_cast<std::size_t>(d));
      for (Eigen::Index k = 0; k < K; ++k) {
        double v = 0.0;
        basis[static_cast<std::size_t>(k)].evaluate(x, v, g.data(), nullptr);
        grads.row(k) = g.transpose();
      }
      read_diffusion(spec, t, x, a);
      partial[b].noalias() += grads * a * grads.transpose();
    }
  });

  GramData out;
  out.q = Mat::Zero(K, K);
  for (const auto& p : partial) out.q += p;
  out.q /= static_cast<double>(n);
  out.q = 0.5 * (out.q + out.q.transpose());
  if (!out.q.allFinite()) throw ModelEvaluationError("gram_matrix: non-finite entries");
  out.samples = n;
  out.t = t;
  out.condition_number = condition_of(out.q);
  return out;
}

MarginalAction marginal_time_action(const PathEnsemble& ensemble, const DiffusionSpec& spec_P,
                                    const FunctionBasis& basis, std::size_t t_index, std::size_t window) {
  if (window == 0) throw ArgumentError("marginal_time_action: window must be at least one step");
  if (t_index < window || t_index + window >= ensemble.grid().size()) {
    throw ArgumentError("marginal_time_action: t_index +- window leaves the grid");
  }
  return marginal_time_action_between(ensemble, spec_P, basis, t_index, t_index - window, t_index + window);
}

MarginalAction marginal_time_action_between(const PathEnsemble& ensemble, const DiffusionSpec& spec_P,
                                            const FunctionBasis& basis, std::size_t t_index, std::size_t lo_index,
                                            std::size_t hi_index) {
  if (!(lo_index <= t_index && t_index <= hi_index && lo_index < hi_index && hi_index < ensemble.grid().size())) {
    throw ArgumentError("marginal_time_action: stencil indices outside the grid");
  }
  if (basis.dim() != ensemble.dim() || spec_P.dim != ensemble.dim()) {
    throw ArgumentError("marginal_time_action: dimension mismatch");
  }
  const Mat y = action_samples(ensemble, spec_P, basis, t_index, lo_index, hi_index);
  MarginalAction out;
  out.t = ensemble.grid()[t_index];
  mean_and_covariance(y, out.c, out.covariance);
  if (!out.c.allFinite()) throw ModelEvaluationError("marginal_time_action: non-finite action");
  return out;
}

Mat pseudo_inverse(const Mat& q, double rel_cutoff, std::size_t* rank) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (q + q.transpose()));
  const Vec& lambda = eig.eigenvalues();
  const double cutoff = rel_cutoff * (lambda.size() ? lambda.cwiseAbs().maxCoeff() : 0.0);
  Vec inv = Vec::Zero(lambda.size());
  std::size_t kept = 0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda[i] > cutoff && lambda[i] > 0.0) {
      inv[i] = 1.0 / lambda[i];
      ++kept;
    }
  }
  if (rank) *rank = kept;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

double quadratic_energy(const Vec& g, const Mat& q) { return 0.5 * g.dot(q * g); }

NFormResult nform_value(const MarginalAction& action, const GramData& gram, double svd_tol) {
  if (action.c.size() != gram.q.rows() || gram.q.rows() != gram.q.cols()) {
    throw ArgumentError("nform_value: action and Gram dimensions differ");
  }
  NFormResult out;
  const Mat q_pinv = pseudo_inverse(gram.q, svd_tol, &out.rank);
  out.maximizer = q_pinv * action.c;
  out.value = quadratic_energy(out.maximizer, gram.q);
  const double norm_c = action.c.norm();
  out.range_residual = norm_c > 0.0 ? (action.c - gram.q * out.maximizer).norm() / norm_c : 0.0;
  return out;
}

HField recover_h(const MarginalAction& action, const GramData& gram, const FunctionBasis& basis,
                 const DiffusionSpec& spec, double t, double svd_tol) {
  if (static_cast<std::size_t>(action.c.size()) != basis.size()) {
    throw ArgumentError("recover_h: action length differs from basis size");
  }
  const NFormResult n = nform_value(action, gram, svd_tol);
  return HField(n.maximizer, t, n.value, std::make_shared<const FunctionBasis>(basis),
                std::make_shared<const DiffusionSpec>(spec));
}

NFormSweep nform_sweep(const PathEnsemble& ensemble_mu, const DiffusionSpec& spec_P, const FunctionBasis& basis,
                       const NFormSweepConfig& config) {
  if (config.stride == 0 || config.window == 0) throw ArgumentError("nform_sweep: stride and window must be >= 1");
  const auto& grid = ensemble_mu.grid();
  const std::size_t last = grid.size() - 1;
  std::vector<std::size_t> indices;
  for (std::size_t k = 0; k < last; k += config.stride) indices.push_back(k);
  indices.push_back(last);

  NFormSweep out;
  for (std::size_t k : indices) {
    // Centred stencil, narrowed near the ends; one-sided only at t = 0 and T.
    std::size_t half = std::min({config.window, k, last - k});
    std::size_t lo = k - half, hi = k + half;
    if (half == 0) {
      lo = k == 0 ? 0 : k - std::min(config.window, k);
      hi = k == 0 ? std::min(last, config.window) : k;
    }
    const MarginalAction action = marginal_time_action_between(ensemble_mu, spec_P, basis, k, lo, hi);
    const auto samples = ensemble_mu.slice(k);
    const GramData gram = gram_matrix(spec_P, grid[k], samples, basis);

    std::size_t rank = 0;
    const Mat q_pinv = pseudo_inverse(gram.q, config.svd_tol, &rank);
    const Vec g = q_pinv * action.c;

    NFormSlice slice;
    slice.t = grid[k];
    slice.raw_value = quadratic_energy(g, gram.q);
    slice.noise_bias = 0.5 * (q_pinv * action.covariance).trace();
    slice.std_error = std::sqrt(std::max(0.0, g.dot(action.covariance * g)));
    slice.rank = rank;
    slice.condition_number = gram.condition_number;
    slice.value = config.debias ? std::max(0.0, slice.raw_value - slice.noise_bias) : slice.raw_value;
    out.slices.push_back(slice);
  }

  for (std::size_t s = 1; s < out.slices.size(); ++s) {
    const double h = out.slices[s].t - out.slices[s - 1].t;
    out.integral += 0.5 * h * (out.slices[s].value + out.slices[s - 1].value);
    out.std_error += 0.5 * h * (out.slices[s].std_error + out.slices[s - 1].std_error);
  }
  return out;
}

}  // namespace pathkl
