#include "pathkl/basis.hpp"
#include "pathkl/diffusion.hpp"
#include "pathkl/errors.hpp"
#include "pathkl/parallel.hpp"

#include <doctest.h>

#include <cmath>

using namespace pathkl;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

Vec v2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("catalog drifts") {
    CHECK(drift_eval(make_model("brownian", {}), 0.3, v1(1.7)).norm() == 0.0);
    CHECK(drift_eval(make_model("ou", {{"gamma", {1.0}}}), 0.0, v1(2.0))[0] == doctest::Approx(-2.0));
    CHECK(drift_eval(make_model("double_well", {}), 0.0, v1(0.5))[0] == doctest::Approx(0.375));
    CHECK(drift_eval(make_model("drift_bm", {{"theta", {1.5}}}), 0.0, v1(-3.0))[0] == doctest::Approx(1.5));

    const auto lin = make_model("linear", {{"A", {0.0, 1.0, -1.0, 0.0}}, {"b", {1.0, 2.0}}});
    CHECK(lin.dim == 2);
    const Vec b = drift_eval(lin, 0.0, v2(3.0, 4.0));
    CHECK(b[0] == doctest::Approx(5.0));
    CHECK(b[1] == doctest::Approx(-1.0));
  }

  TEST_CASE("catalog rejects bad input") {
    CHECK_THROWS_AS(make_model("nope", {}), ArgumentError);
    CHECK_THROWS_AS(make_model("ou", {{"sigma", {1.0}}}), ArgumentError);
    CHECK_THROWS_AS(make_model("brownian", {{"a", {-1.0}}}), PositiveDefinitenessError);
    CHECK_THROWS_AS(make_model("brownian", {{"a", {1.0, 2.0, 0.0, 1.0}}}), PositiveDefinitenessError);
    CHECK_THROWS_AS(make_model("brownian", {{"a", {1e-12}}}), PositiveDefinitenessError);
  }

  TEST_CASE("diffusion matrix and inverse") {
    const auto unit = diffusion_eval(make_model("brownian", {{"dim", {3.0}}}), 0.0, Vec::Zero(3));
    CHECK(unit.a.isApprox(Mat::Identity(3, 3)));
    CHECK(unit.a_inv.isApprox(Mat::Identity(3, 3)));

    const auto scalar = diffusion_eval(make_model("brownian", {{"a", {2.0}}}), 0.0, v1(0.0));
    CHECK(scalar.a(0, 0) == 2.0);
    CHECK(scalar.a_inv(0, 0) == doctest::Approx(0.5));

    const auto diag = diffusion_eval(make_model("brownian", {{"a", {1.0, 4.0}}}), 0.0, Vec::Zero(2));
    CHECK(diag.a_inv(0, 0) == doctest::Approx(1.0));
    CHECK(diag.a_inv(1, 1) == doctest::Approx(0.25));
    CHECK(diag.a_inv(0, 1) == doctest::Approx(0.0));
  }

  TEST_CASE("weighted inner product") {
    const auto unit = make_model("brownian", {{"dim", {2.0}}});
    CHECK(weighted_inner(unit, 0.0, Vec::Zero(2), v2(3, 4), v2(3, 4)) == doctest::Approx(25.0));
    const auto two = make_model("brownian", {{"a", {2.0}}});
    CHECK(weighted_inner(two, 0.0, v1(0), v1(2), v1(2)) == doctest::Approx(2.0));
    const auto diag = make_model("brownian", {{"a", {1.0, 4.0}}});
    CHECK(weighted_inner(diag, 0.0, Vec::Zero(2), v2(1, 2), v2(1, 2)) == doctest::Approx(2.0));
  }

  TEST_CASE("generator") {
    const auto window = make_window({-50.0}, {50.0}, 1.0);
    const auto quad = windowed_monomial({2}, window);  // x^2 on the plateau
    const auto bm = make_model("brownian", {});
    // f = x^2 / 2 gives 1/2 tr(a) = 0.5
    CHECK(apply_generator(bm, 0.0, scaled(quad, 0.5), v1(0.3)) == doctest::Approx(0.5));

    const auto window2 = make_window({-50.0, -50.0}, {50.0, 50.0}, 1.0);
    const auto x1 = windowed_monomial({1, 0}, window2);
    const auto lin = make_model("linear", {{"b", {3.0, 0.0}}, {"a", {2.0, 0.5, 0.5, 1.0}}});
    CHECK(apply_generator(lin, 0.0, x1, v2(0.1, -0.4)) == doctest::Approx(3.0));

    const auto bump = windowed_gaussian(v1(0.0), 1.0 / std::sqrt(2.0), window);  // exp(-x^2)
    CHECK(bump.value(v1(0.0)) == doctest::Approx(1.0));
    CHECK(apply_generator(bm, 0.0, bump, v1(0.0)) == doctest::Approx(-1.0));
  }

  TEST_CASE("generator is linear in f") {
    const auto window = make_window({-4.0}, {4.0}, 1.0);
    const auto f = windowed_gaussian(v1(0.5), 0.7, window);
    const auto g = windowed_monomial({3}, window);
    const auto sum = custom_basis_function(
        1, [&](const Vec& x) { return 2.0 * f.value(x) - 3.0 * g.value(x); },
        [&](const Vec& x) { return Vec(2.0 * f.gradient(x) - 3.0 * g.gradient(x)); },
        [&](const Vec& x) { return Mat(2.0 * f.hessian(x) - 3.0 * g.hessian(x)); }, "2f-3g");
    const auto ou = make_model("ou", {{"gamma", {1.3}}, {"a", {0.7}}});
    for (double x : {-3.5, -1.0, 0.0, 0.4, 2.9}) {
      const double lhs = apply_generator(ou, 0.0, sum, v1(x));
      const double rhs = 2.0 * apply_generator(ou, 0.0, f, v1(x)) - 3.0 * apply_generator(ou, 0.0, g, v1(x));
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }

  TEST_CASE("generator needs a Hessian") {
    const auto f = custom_basis_function(
        1, [](const Vec& x) { return x[0]; }, [](const Vec&) { return Vec::Ones(1); }, {}, "x");
    CHECK_THROWS_AS(apply_generator(make_model("brownian", {}), 0.0, f, v1(0.0)), CapabilityError);
  }

  TEST_CASE("Euler step law") {
    const auto bm = euler_step_law(make_model("brownian", {{"dim", {2.0}}}), 0.0, Vec::Zero(2), 0.1);
    CHECK(bm.mean.norm() == 0.0);
    CHECK(bm.covariance.isApprox(0.1 * Mat::Identity(2, 2)));
    const auto ou = euler_step_law(make_model("ou", {{"gamma", {1.0}}}), 0.0, v1(1.0), 0.1);
    CHECK(ou.mean[0] == doctest::Approx(0.9));
    CHECK(ou.covariance(0, 0) == doctest::Approx(0.1));
    const auto two = euler_step_law(make_model("brownian", {{"a", {2.0}}}), 0.0, v1(0.7), 0.5);
    CHECK(two.mean[0] == doctest::Approx(0.7));
    CHECK(two.covariance(0, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("sampler") {
    const auto bm = make_model("brownian", {});
    const TimeGrid grid = TimeGrid::uniform(1.0, 20);
    CHECK_THROWS_AS(sample_paths(bm, InitialLaw::point_mass(v1(0)), grid, 0, 1), ArgumentError);

    const std::size_t n = 10000;
    const auto ens = sample_paths(bm, InitialLaw::point_mass(v1(0)), grid, n, 11);
    std::vector<double> end(n);
    for (std::size_t i = 0; i < n; ++i) end[i] = ens.state(i, grid.steps())[0];
    CHECK(std::abs(mean_and_error(end).mean) <= 4.0 / std::sqrt(static_cast<double>(n)));

    const auto ou = make_model("ou", {{"gamma", {1.0}}});
    const auto ens_ou = sample_paths(ou, InitialLaw::point_mass(v1(0)), TimeGrid::uniform(1.0, 200), n, 12);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = std::pow(ens_ou.state(i, 200)[0], 2);
    const auto stats = mean_and_error(sq);
    CHECK(std::abs(stats.mean - 0.5 * (1.0 - std::exp(-2.0))) <= 5.0 * stats.std_error);
  }

  TEST_CASE("sampler is thread-count invariant") {
    const auto ou = make_model("ou", {{"gamma", {0.5}}, {"dim", {2.0}}});
    const auto init = InitialLaw::gaussian(Vec::Zero(2), Mat::Identity(2, 2));
    const TimeGrid grid = TimeGrid::uniform(1.0, 16);
    set_num_threads(1);
    const auto one = sample_paths(ou, init, grid, 777, 5);
    set_num_threads(3);
    const auto three = sample_paths(ou, init, grid, 777, 5);
    set_num_threads(1);
    CHECK(one.raw() == three.raw());
  }

  TEST_CASE("exact marginal") {
    const auto ou = make_model("ou", {{"gamma", {2.0}}});
    const auto law = exact_marginal(ou, InitialLaw::point_mass(v1(1.0)), 0.5);
    CHECK(law.mean[0] == doctest::Approx(std::exp(-1.0)));
    CHECK(law.covariance(0, 0) == doctest::Approx((1.0 - std::exp(-2.0)) / 4.0));
    CHECK_THROWS_AS(exact_marginal(make_model("double_well", {}), InitialLaw::point_mass(v1(0)), 1.0),
                    CapabilityError);
  }

  TEST_CASE("time grid validation") {
    CHECK_THROWS_AS(TimeGrid({0.0}), ArgumentError);
    CHECK_THROWS_AS(TimeGrid({0.1, 0.2}), ArgumentError);
    CHECK_THROWS_AS(TimeGrid({0.0, 0.5, 0.5}), ArgumentError);
    CHECK(TimeGrid::uniform(2.0, 4).dt_max() == doctest::Approx(0.5));
  }
}
