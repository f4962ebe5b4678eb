#include "pathkl/diffusion.hpp"

#include "pathkl/basis.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/parallel.hpp"
#include "pathkl/rng.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace pathkl {

namespace {

const std::vector<double>* find_param(const ParamRecord& params, const std::string& key) {
  const auto it = params.find(key);
  return it == params.end() ? nullptr : &it->second;
}

double scalar_param(const ParamRecord& params, const std::string& key, double fallback) {
  const auto* v = find_param(params, key);
  if (!v) return fallback;
  if (v->size() != 1) throw ArgumentError("parameter '" + key + "' must be a scalar");
  return v->front();
}

void require_known_keys(const std::string& id, const ParamRecord& params, const std::set<std::string>& allowed) {
  for (const auto& [key, value] : params) {
    if (!allowed.contains(key)) throw ArgumentError("model '" + id + "' has no parameter '" + key + "'");
  }
}

// Dimension from "dim" if given, else from the first vector-valued key present.
int infer_dim(const ParamRecord& params, std::initializer_list<const char*> vector_keys) {
  if (const auto* d = find_param(params, "dim")) {
    if (d->size() != 1 || d->front() < 1 || d->front() != std::floor(d->front())) {
      throw ArgumentError("parameter 'dim' must be a positive integer");
    }
    return static_cast<int>(d->front());
  }
  for (const char* key : vector_keys) {
    if (const auto* v = find_param(params, key); v && v->size() > 1) return static_cast<int>(v->size());
  }
  return 1;
}

Vec vector_param(const ParamRecord& params, const std::string& key, int dim, double fallback) {
  const auto* v = find_param(params, key);
  if (!v) return Vec::Constant(dim, fallback);
  if (v->size() == 1) return Vec::Constant(dim, v->front());
  if (static_cast<int>(v->size()) != dim) {
    throw ArgumentError("parameter '" + key + "' must have length 1 or " + std::to_string(dim));
  }
  return Eigen::Map<const Vec>(v->data(), dim);
}

// Scalar, diagonal of length d, or full d*d row-major.
Mat matrix_param(const ParamRecord& params, const std::string& key, int dim, double fallback_diag) {
  const auto* v = find_param(params, key);
  if (!v) return fallback_diag * Mat::Identity(dim, dim);
  const auto n = static_cast<int>(v->size());
  if (n == 1) return v->front() * Mat::Identity(dim, dim);
  if (n == dim * dim) {
    Mat m(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) m(i, j) = (*v)[static_cast<std::size_t>(i * dim + j)];
    return m;
  }
  if (n == dim) return Eigen::Map<const Vec>(v->data(), dim).asDiagonal();
  throw ArgumentError("parameter '" + key + "' must have length 1, d or d*d");
}

void check_pd(const Mat& a, const char* what) {
  if (!a.allFinite()) throw ModelEvaluationError(std::string(what) + " is not finite");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > kTolLinalg * scale) {
    throw PositiveDefinitenessError(std::string(what) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= kEpsPd) {
    std::ostringstream msg;
    msg << what << " is not positive definite (smallest eigenvalue " << eig.eigenvalues().minCoeff() << ")";
    throw PositiveDefinitenessError(msg.str());
  }
}

DiffusionFn constant_diffusion_fn(const Mat& a) {
  const int d = static_cast<int>(a.rows());
  std::vector<double> flat(static_cast<std::size_t>(d * d));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) flat[static_cast<std::size_t>(i * d + j)] = a(i, j);
  return [flat](double, std::span<const double>, std::span<double> out) {
    std::copy(flat.begin(), flat.end(), out.begin());
  };
}

void attach_affine(DiffusionSpec& spec, Mat matrix, Vec offset) {
  spec.affine_drift = true;
  spec.drift_matrix = matrix;
  spec.drift_offset = offset;
  spec.drift = [matrix = std::move(matrix), offset = std::move(offset)](double, std::span<const double> x,
                                                                         std::span<double> out) {
    const auto d = static_cast<Eigen::Index>(x.size());
    Eigen::Map<Vec> result(out.data(), d);
    result.noalias() = matrix * Eigen::Map<const Vec>(x.data(), d);
    result += offset;
  };
}

struct CatalogEntry {
  const char* id;
  const char* description;
};

constexpr CatalogEntry kCatalog[] = {
    {"brownian", "b = 0; keys: a, dim"},
    {"drift_bm", "b = theta (constant); keys: theta, a, dim"},
    {"ou", "b = -gamma (x - mean); keys: gamma, mean, a, dim"},
    {"double_well", "b = x - x^3 componentwise; keys: a, dim"},
    {"linear", "b = A x + b; keys: A (d*d row-major), b, a, dim"},
};

// In-place lower Cholesky of a row-major d*d matrix.
void cholesky_in_place(std::span<double> m, int d) {
  for (int j = 0; j < d; ++j) {
    double diag = m[static_cast<std::size_t>(j * d + j)];
    for (int k = 0; k < j; ++k) diag -= m[static_cast<std::size_t>(j * d + k)] * m[static_cast<std::size_t>(j * d + k)];
    if (!(diag > kEpsPd)) throw PositiveDefinitenessError("Cholesky factorization of a(t,x) failed");
    const double ljj = std::sqrt(diag);
    m[static_cast<std::size_t>(j * d + j)] = ljj;
    for (int i = j + 1; i < d; ++i) {
      double s = m[static_cast<std::size_t>(i * d + j)];
      for (int k = 0; k < j; ++k) s -= m[static_cast<std::size_t>(i * d + k)] * m[static_cast<std::size_t>(j * d + k)];
      m[static_cast<std::size_t>(i * d + j)] = s / ljj;
    }
    for (int k = j + 1; k < d; ++k) m[static_cast<std::size_t>(j * d + k)] = 0.0;
  }
}

}  // namespace

std::vector<std::string> catalog_ids() {
  std::vector<std::string> ids;
  for (const auto& entry : kCatalog) ids.emplace_back(entry.id);
  return ids;
}

std::string catalog_description(const std::string& id) {
  for (const auto& entry : kCatalog) {
    if (id == entry.id) return entry.description;
  }
  throw ArgumentError("unknown model id '" + id + "'");
}

DiffusionSpec make_model(const std::string& id, const ParamRecord& params) {
  DiffusionSpec spec;
  spec.model_id = id;
  spec.params = params;

  if (id == "brownian") {
    require_known_keys(id, params, {"a", "dim"});
    spec.dim = infer_dim(params, {"a"});
    attach_affine(spec, Mat::Zero(spec.dim, spec.dim), Vec::Zero(spec.dim));
  } else if (id == "drift_bm") {
    require_known_keys(id, params, {"theta", "a", "dim"});
    spec.dim = infer_dim(params, {"theta", "a"});
    attach_affine(spec, Mat::Zero(spec.dim, spec.dim), vector_param(params, "theta", spec.dim, 1.0));
  } else if (id == "ou") {
    require_known_keys(id, params, {"gamma", "mean", "a", "dim"});
    spec.dim = infer_dim(params, {"mean", "a"});
    const double gamma = scalar_param(params, "gamma", 1.0);
    const Vec mean = vector_param(params, "mean", spec.dim, 0.0);
    attach_affine(spec, -gamma * Mat::Identity(spec.dim, spec.dim), gamma * mean);
  } else if (id == "double_well") {
    require_known_keys(id, params, {"a", "dim"});
    spec.dim = infer_dim(params, {"a"});
    spec.drift = [](double, std::span<const double> x, std::span<double> out) {
      for (std::size_t j = 0; j < x.size(); ++j) out[j] = x[j] - x[j] * x[j] * x[j];
    };
  } else if (id == "linear") {
    require_known_keys(id, params, {"A", "b", "a", "dim"});
    int dim = infer_dim(params, {"b"});
    if (!find_param(params, "dim") && !find_param(params, "b")) {
      if (const auto* A = find_param(params, "A")) {
        dim = static_cast<int>(std::lround(std::sqrt(static_cast<double>(A->size()))));
      }
    }
    spec.dim = dim;
    const auto* A = find_param(params, "A");
    if (A && A->size() != static_cast<std::size_t>(dim * dim) && A->size() != 1) {
      throw ArgumentError("parameter 'A' must have length d*d");
    }
    attach_affine(spec, matrix_param(params, "A", dim, 0.0), vector_param(params, "b", dim, 0.0));
  } else {
    throw ArgumentError("unknown model id '" + id + "'");
  }

  const Mat a = matrix_param(params, "a", spec.dim, 1.0);
  check_pd(a, "diffusion matrix");
  spec.diffusion = constant_diffusion_fn(a);
  spec.constant_diffusion = true;
  return spec;
}

Vec drift_eval(const DiffusionSpec& spec, double t, const Vec& x) {
  Vec out(spec.dim);
  spec.drift(t, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
             std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  if (!out.allFinite()) throw ModelEvaluationError("drift of model '" + spec.model_id + "' is not finite");
  return out;
}

DiffusionValue diffusion_eval(const DiffusionSpec& spec, double t, const Vec& x) {
  const int d = spec.dim;
  std::vector<double> flat(static_cast<std::size_t>(d * d));
  spec.diffusion(t, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), flat);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = flat[static_cast<std::size_t>(i * d + j)];
  check_pd(a, "diffusion matrix");
  a = 0.5 * (a + a.transpose());
  Mat a_inv = a.llt().solve(Mat::Identity(d, d));
  a_inv = 0.5 * (a_inv + a_inv.transpose());
  return {std::move(a), std::move(a_inv)};
}

double weighted_inner(const DiffusionSpec& spec, double t, const Vec& x, const Vec& u, const Vec& v) {
  const auto value = diffusion_eval(spec, t, x);
  return u.dot(value.a_inv * v);
}

double apply_generator(const DiffusionSpec& spec, double t, const BasisFunction& f, const Vec& x) {
  if (!f.has_hessian()) throw CapabilityError("generator needs a basis function with a Hessian");
  const Mat hess = f.hessian(x);
  const Vec grad = f.gradient(x);
  const auto value = diffusion_eval(spec, t, x);
  return 0.5 * (value.a.cwiseProduct(hess)).sum() + drift_eval(spec, t, x).dot(grad);
}

InitialLaw InitialLaw::point_mass(Vec x0) {
  InitialLaw law;
  law.kind = Kind::point;
  law.dim = static_cast<int>(x0.size());
  law.point = std::move(x0);
  return law;
}

InitialLaw InitialLaw::gaussian(Vec mean, Mat covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw ArgumentError("Gaussian initial law: covariance shape does not match mean");
  }
  const GaussianLaw checked = make_gaussian_law(mean, covariance);
  InitialLaw law;
  law.kind = Kind::gaussian;
  law.dim = static_cast<int>(mean.size());
  law.mean = checked.mean;
  law.covariance = checked.covariance;
  return law;
}

InitialLaw InitialLaw::empirical(std::vector<Vec> samples) {
  if (samples.empty()) throw ArgumentError("empirical initial law needs at least one sample");
  InitialLaw law;
  law.kind = Kind::empirical;
  law.dim = static_cast<int>(samples.front().size());
  for (const auto& s : samples) {
    if (s.size() != law.dim) throw ArgumentError("empirical initial law: inconsistent sample dimension");
  }
  law.samples = std::move(samples);
  return law;
}

TimeGrid::TimeGrid(std::vector<double> points) : points_(std::move(points)) {
  if (points_.size() < 2) throw ArgumentError("time grid needs at least two points");
  if (points_.front() != 0.0) throw ArgumentError("time grid must start at 0");
  for (std::size_t k = 1; k < points_.size(); ++k) {
    const double dt = points_[k] - points_[k - 1];
    if (!(dt > 0.0)) throw ArgumentError("time grid must be strictly increasing");
    dt_max_ = std::max(dt_max_, dt);
  }
}

TimeGrid TimeGrid::uniform(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || steps == 0) throw ArgumentError("uniform grid needs T > 0 and steps >= 1");
  std::vector<double> points(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    points[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  points.back() = horizon;
  return TimeGrid(std::move(points));
}

PathEnsemble::PathEnsemble(std::shared_ptr<const TimeGrid> grid, std::size_t paths, int dim, std::uint64_t seed)
    : grid_(std::move(grid)), paths_(paths), dim_(dim), seed_(seed),
      data_(paths * grid_->size() * static_cast<std::size_t>(dim), 0.0) {}

std::vector<Vec> PathEnsemble::slice(std::size_t k) const {
  std::vector<Vec> out;
  out.reserve(paths_);
  for (std::size_t i = 0; i < paths_; ++i) out.push_back(state_vec(i, k));
  return out;
}

PathEnsemble sample_paths(const DiffusionSpec& spec, const InitialLaw& init, const TimeGrid& grid, std::size_t n,
                          std::uint64_t seed) {
  if (n == 0) throw ArgumentError("sample_paths: ensemble size must be at least 1");
  if (init.dim != spec.dim) throw ArgumentError("sample_paths: initial law dimension does not match the model");
  const int d = spec.dim;
  const auto dd = static_cast<std::size_t>(d);

  PathEnsemble ensemble(std::make_shared<const TimeGrid>(grid), n, d, seed);

  std::vector<double> constant_factor;
  if (spec.constant_diffusion) {
    constant_factor.resize(dd * dd);
    std::vector<double> origin(dd, 0.0);
    spec.diffusion(0.0, origin, constant_factor);
    cholesky_in_place(constant_factor, d);
  }
  Mat init_factor;
  if (init.kind == InitialLaw::Kind::gaussian) {
    // Covariances may be only semidefinite; fall back to a symmetric square root.
    Eigen::SelfAdjointEigenSolver<Mat> eig(init.covariance);
    init_factor = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }

  const auto& t = grid.points();
  parallel_for(n, [&](std::size_t i) {
    Substream rng(seed, i);
    std::vector<double> drift(dd), factor(dd * dd), noise(dd);
    auto x0 = ensemble.state(i, 0);
    switch (init.kind) {
      case InitialLaw::Kind::point:
        std::copy(init.point.data(), init.point.data() + d, x0.begin());
        break;
      case InitialLaw::Kind::gaussian: {
        Vec z(d);
        for (int j = 0; j < d; ++j) z[j] = rng.normal();
        const Vec x = init.mean + init_factor * z;
        std::copy(x.data(), x.data() + d, x0.begin());
        break;
      }
      case InitialLaw::Kind::empirical: {
        const Vec& x = init.samples[rng.below(init.samples.size())];
        std::copy(x.data(), x.data() + d, x0.begin());
        break;
      }
    }

    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
      const double dt = t[k + 1] - t[k];
      const double sqrt_dt = std::sqrt(dt);
      const auto x = ensemble.state(i, k);
      auto next = ensemble.state(i, k + 1);
      spec.drift(t[k], x, drift);
      const double* l = constant_factor.data();
      if (!spec.constant_diffusion) {
        spec.diffusion(t[k], x, factor);
        cholesky_in_place(factor, d);
        l = factor.data();
      }
      for (std::size_t j = 0; j < dd; ++j) noise[j] = rng.normal();
      for (std::size_t j = 0; j < dd; ++j) {
        double shock = 0.0;
        for (std::size_t m = 0; m <= j; ++m) shock += l[j * dd + m] * noise[m];
        next[j] = x[j] + drift[j] * dt + shock * sqrt_dt;
        if (!std::isfinite(next[j])) {
          throw ModelEvaluationError("path of model '" + spec.model_id + "' left the finite range");
        }
      }
    }
  });
  return ensemble;
}

GaussianLaw make_gaussian_law(Vec mean, Mat covariance, double eps_sym) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw ArgumentError("Gaussian law: covariance shape does not match mean");
  }
  if (!mean.allFinite() || !covariance.allFinite()) throw ArgumentError("Gaussian law: non-finite entries");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > kTolLinalg * scale) {
    throw ArgumentError("Gaussian law: covariance is not symmetric");
  }
  Mat sym = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.eigenvalues().size() > 0 && eig.eigenvalues().minCoeff() < -eps_sym * scale) {
    throw ArgumentError("Gaussian law: covariance is not positive semidefinite");
  }
  if (eig.eigenvalues().size() > 0 && eig.eigenvalues().minCoeff() < 0.0) {
    sym = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() * eig.eigenvectors().transpose();
  }
  return {std::move(mean), std::move(sym)};
}

GaussianLaw euler_step_law(const DiffusionSpec& spec, double t, const Vec& x, double dt) {
  if (!(dt > 0.0)) throw ArgumentError("euler_step_law: dt must be positive");
  const Vec mean = x + drift_eval(spec, t, x) * dt;
  return {mean, diffusion_eval(spec, t, x).a * dt};
}

GaussianLaw affine_moments(const Mat& A, const Vec& b, const Mat& a, const Vec& m0, const Mat& S0, double t) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || b.size() != d || a.rows() != d || a.cols() != d || m0.size() != d || S0.rows() != d ||
      S0.cols() != d) {
    throw ArgumentError("affine_moments: dimension mismatch");
  }
  Mat aug = Mat::Zero(d + 1, d + 1);
  aug.topLeftCorner(d, d) = A * t;
  aug.topRightCorner(d, 1) = b * t;
  Vec start(d + 1);
  start << m0, 1.0;
  const Vec mean = (aug.exp() * start).head(d);

  Mat van = Mat::Zero(2 * d, 2 * d);
  van.topLeftCorner(d, d) = -A * t;
  van.topRightCorner(d, d) = a * t;
  van.bottomRightCorner(d, d) = A.transpose() * t;
  const Mat e = van.exp();
  const Mat phi = e.bottomRightCorner(d, d).transpose();
  Mat cov = phi * S0 * phi.transpose() + phi * e.topRightCorner(d, d);
  cov = 0.5 * (cov + cov.transpose());
  return {mean, cov};
}

GaussianLaw exact_marginal(const DiffusionSpec& spec, const InitialLaw& init, double t) {
  if (!spec.affine_drift || !spec.constant_diffusion) {
    throw CapabilityError("exact_marginal: model '" + spec.model_id + "' is not affine with constant diffusion");
  }
  const int d = spec.dim;
  Vec m0;
  Mat S0;
  if (init.kind == InitialLaw::Kind::point) {
    m0 = init.point;
    S0 = Mat::Zero(d, d);
  } else if (init.kind == InitialLaw::Kind::gaussian) {
    m0 = init.mean;
    S0 = init.covariance;
  } else {
    throw CapabilityError("exact_marginal: empirical initial laws have no closed-form marginal");
  }
  const Mat a = diffusion_eval(spec, 0.0, Vec::Zero(d)).a;
  return affine_moments(spec.drift_matrix, spec.drift_offset, a, m0, S0, t);
}

}  // namespace pathkl
