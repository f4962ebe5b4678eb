#include "pathkl/basis.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/variational.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

using namespace pathkl;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

BasisFunction identity_x() {
  return custom_basis_function(
      1, [](const Vec& x) { return x[0]; }, [](const Vec&) { return Vec::Ones(1); },
      [](const Vec&) { return Mat::Zero(1, 1); }, "x");
}

void check_derivatives(const BasisFunction& f, const Vec& x) {
  const int d = f.dim();
  const double h = 1e-5;
  const Vec grad = f.gradient(x);
  const Mat hess = f.hessian(x);
  for (int j = 0; j < d; ++j) {
    Vec up = x, down = x;
    up[j] += h;
    down[j] -= h;
    const double fd = (f.value(up) - f.value(down)) / (2.0 * h);
    CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    const Vec fd_row = (f.gradient(up) - f.gradient(down)) / (2.0 * h);
    for (int k = 0; k < d; ++k) CHECK(hess(j, k) == doctest::Approx(fd_row[k]).epsilon(1e-5).scale(1.0));
  }
  CHECK((hess - hess.transpose()).norm() <= 1e-12 * (1.0 + hess.norm()));
}

}  // namespace

TEST_SUITE("basis") {
  TEST_CASE("finite-difference gradients and Hessians") {
    const auto window = make_window({-2.0, -1.0}, {3.0, 2.5}, 0.8);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> ux(-2.2, 3.2), uy(-1.2, 2.7);
    const std::vector<BasisFunction> fs = {
        windowed_gaussian((Vec(2) << 0.5, 0.3).finished(), 0.9, window),
        windowed_monomial({1, 2}, window),
        windowed_monomial({0, 1}, window),
    };
    for (int trial = 0; trial < 40; ++trial) {
      const Vec x = (Vec(2) << ux(rng), uy(rng)).finished();
      for (const auto& f : fs) check_derivatives(f, x);
    }
  }

  TEST_CASE("window support and plateau") {
    const auto window = make_window({-1.0}, {1.0}, 0.5);
    const auto f = windowed_monomial({1}, window);
    CHECK(f.value(v1(1.0)) == 0.0);
    CHECK(f.value(v1(-1.3)) == 0.0);
    CHECK(f.gradient(v1(2.0))[0] == 0.0);
    CHECK(f.value(v1(0.25)) == doctest::Approx(0.25));
    CHECK(f.gradient(v1(0.25))[0] == doctest::Approx(1.0));
  }

  TEST_CASE("build_basis sizes") {
    BasisConfig config;
    config.family = "mixed";
    config.count = 6;
    config.degree = 2;
    CHECK(build_basis(config).size() == 8);
    config.family = "poly";
    CHECK(build_basis(config).size() == 2);
    config.family = "gauss";
    CHECK(build_basis(config).size() == 6);
    config.family = "other";
    CHECK_THROWS_AS(build_basis(config), ArgumentError);
  }
}

TEST_SUITE("variational") {
  TEST_CASE("Gram matrix examples") {
    const FunctionBasis single({identity_x()}, make_window({-10.0}, {10.0}, 1.0));
    const std::vector<Vec> samples = {v1(-1.0), v1(0.3), v1(2.0)};
    const auto unit = gram_matrix(make_model("brownian", {}), 0.0, samples, single);
    CHECK(unit.q(0, 0) == doctest::Approx(1.0));
    const auto two = gram_matrix(make_model("brownian", {{"a", {2.0}}}), 0.0, samples, single);
    CHECK(two.q(0, 0) == doctest::Approx(2.0));

    const FunctionBasis twice({identity_x(), identity_x()}, make_window({-10.0}, {10.0}, 1.0));
    const auto dup = gram_matrix(make_model("brownian", {}), 0.0, samples, twice);
    MarginalAction action{Vec::Ones(2), 0.0, {}};
    const auto r = nform_value(action, dup);
    CHECK(r.rank == 1);
    // Duplicated direction: sup over lambda (f1 + f2) of 2 lambda - 2 lambda^2 = 0.5.
    CHECK(r.value == doctest::Approx(0.5));
    CHECK(r.range_residual == doctest::Approx(0.0).scale(1.0));
  }

  TEST_CASE("nform closed cases") {
    GramData gram;
    gram.q = Mat::Identity(1, 1);
    CHECK(nform_value({v1(1.0), 0.0, {}}, gram).value == doctest::Approx(0.5));
    CHECK(nform_value({v1(0.0), 0.0, {}}, gram).value == 0.0);
  }

  TEST_CASE("nform matches independent maximization, energy identity, convexity") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto random_instance = [&](Vec& c, Mat& q) {
      Mat b(3, 3);
      for (int i = 0; i < 9; ++i) b(i / 3, i % 3) = normal(rng);
      q = b.transpose() * b + 0.1 * Mat::Identity(3, 3);
      c = Vec(3);
      for (int i = 0; i < 3; ++i) c[i] = normal(rng);
    };
    for (int trial = 0; trial < 50; ++trial) {
      Vec c;
      GramData gram;
      random_instance(c, gram.q);
      const auto r = nform_value({c, 0.0, {}}, gram);
      // Gradient ascent on c.g - 1/2 g.Q.g with step 1/lambda_max.
      const double lmax = Eigen::SelfAdjointEigenSolver<Mat>(gram.q).eigenvalues().maxCoeff();
      Vec g = Vec::Zero(3);
      for (int it = 0; it < 200000; ++it) {
        const Vec step = (c - gram.q * g) / lmax;
        g += step;
        if (step.norm() < 1e-15) break;
      }
      const double brute = c.dot(g) - 0.5 * g.dot(gram.q * g);
      CHECK(std::abs(r.value - brute) <= 1e-6);
      CHECK(r.value == quadratic_energy(r.maximizer, gram.q));

      Vec c2;
      Mat unused;
      random_instance(c2, unused);
      const double lambda = unit(rng);
      const double mixed = nform_value({lambda * c + (1 - lambda) * c2, 0.0, {}}, gram).value;
      const double bound = lambda * r.value + (1 - lambda) * nform_value({c2, 0.0, {}}, gram).value;
      CHECK(mixed <= bound + 1e-9);
    }
  }

  TEST_CASE("pseudo-inverse drops small eigenvalues") {
    Mat q = Mat::Zero(2, 2);
    q(0, 0) = 1.0;
    q(1, 1) = 1e-12;
    std::size_t rank = 0;
    const Mat p = pseudo_inverse(q, kSvdTol, &rank);
    CHECK(rank == 1);
    CHECK(p(0, 0) == doctest::Approx(1.0));
    CHECK(p(1, 1) == 0.0);
  }

  TEST_CASE("marginal action examples") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const TimeGrid grid = TimeGrid::uniform(1.0, 50);
    const std::size_t mid = 25;

    const auto ens_P = sample_paths(bm, init, grid, 20000, 31);
    const auto bumps = gaussian_bumps(make_window({-4.0}, {4.0}, 1.0), 5);
    const auto null_action = marginal_time_action(ens_P, bm, bumps, mid, 5);
    for (Eigen::Index k = 0; k < null_action.c.size(); ++k) {
      CHECK(std::abs(null_action.c[k]) <= 3.0 * std::sqrt(null_action.covariance(k, k)));
    }

    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto ens_mu = sample_paths(drift, init, grid, 20000, 32);
    const FunctionBasis lin({windowed_monomial({1}, make_window({-12.0}, {12.0}, 1.0))},
                            make_window({-12.0}, {12.0}, 1.0));
    const auto action = marginal_time_action(ens_mu, bm, lin, mid, 5);
    CHECK(std::abs(action.c[0] - 1.0) <= 3.0 * std::sqrt(action.covariance(0, 0)));

    // A bump much wider than the spread of mu_t is nearly flat there.
    const auto wide_window = make_window({-400.0}, {400.0}, 1.0);
    const FunctionBasis flat({windowed_gaussian(v1(0.0), 100.0, wide_window)}, wide_window);
    CHECK(std::abs(marginal_time_action(ens_mu, bm, flat, mid, 5).c[0]) < 1e-3);
  }

  TEST_CASE("h recovery") {
    const auto bm = make_model("brownian", {});
    const auto spec = std::make_shared<const DiffusionSpec>(bm);
    const auto basis = std::make_shared<const FunctionBasis>(gaussian_bumps(make_window({-4.0}, {4.0}, 1.0), 8));
    GramData gram;
    gram.q = Mat::Identity(8, 8);
    const auto zero = recover_h({Vec::Zero(8), 0.5, {}}, gram, *basis, bm, 0.5);
    for (double y : {-2.0, 0.0, 1.5}) CHECK(zero(v1(y)).norm() == 0.0);
    CHECK(zero.energy() == 0.0);

    // OU(gamma) against BM: h(y) = -gamma y.
    const double gamma = 1.0;
    const auto ou = make_model("ou", {{"gamma", {gamma}}});
    const TimeGrid grid = TimeGrid::uniform(1.0, 100);
    const auto ens = sample_paths(ou, InitialLaw::point_mass(v1(0.0)), grid, 100000, 41);
    BasisConfig config;
    config.count = 10;
    config.lo = {-3.0};
    config.hi = {3.0};
    const auto rich = build_basis(config);
    const auto action = marginal_time_action(ens, bm, rich, 50, 5);
    const auto slice = ens.slice(50);
    const auto q = gram_matrix(bm, 0.5, slice, rich);
    const auto h = recover_h(action, q, rich, bm, 0.5);
    for (double y : {-0.6, -0.3, 0.0, 0.3, 0.6}) CHECK(std::abs(h(v1(y))[0] + gamma * y) < 0.1);
    CHECK(h.energy() == doctest::Approx(nform_value(action, q).value));
  }
}
