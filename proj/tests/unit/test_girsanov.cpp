#include "pathkl/errors.hpp"
#include "pathkl/girsanov.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>

using namespace pathkl;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

// 1/2 int_0^T gamma^2 Var(X_t) dt for OU(gamma) from 0 against BM, by adaptive quadrature.
double ou_by_quadrature(double gamma, double T) {
  auto f = [gamma](double t) { return 0.5 * gamma * gamma * (1.0 - std::exp(-2.0 * gamma * t)) / (2.0 * gamma); };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, T, 10, 1e-14);
}

}  // namespace

TEST_SUITE("girsanov") {
  TEST_CASE("analytic scenarios") {
    CHECK(analytic_entropy({"constant_drift", {{"theta", {2.0}}, {"T", {0.5}}, {"a", {1.0}}}}) == doctest::Approx(1.0));
    CHECK(analytic_entropy({"constant_drift", {{"theta", {0.0}}}}) == 0.0);
    CHECK(analytic_entropy({"ou_vs_bm", {{"gamma", {1.0}}, {"T", {1.0}}}}) ==
          doctest::Approx(0.14191691040457661).epsilon(1e-12));
    CHECK(analytic_entropy({"ou_vs_bm", {{"gamma", {2.0}}, {"T", {1.0}}}}) ==
          doctest::Approx(0.5 * (1.0 - (1.0 - std::exp(-4.0)) / 4.0)).epsilon(1e-12));
    CHECK_THROWS_AS(analytic_entropy({"double_well", {}}), CapabilityError);
    CHECK_THROWS_AS(analytic_entropy({"ou_vs_bm", {{"gamma", {1.0}}, {"tau", {1.0}}}}), ArgumentError);
  }

  TEST_CASE("closed forms agree with independent quadrature") {
    for (double gamma : {0.3, 1.0, 2.0, 5.0}) {
      for (double T : {0.25, 1.0, 3.0}) {
        const double exact = analytic_entropy({"ou_vs_bm", {{"gamma", {gamma}}, {"T", {T}}}});
        CHECK(std::abs(exact - ou_by_quadrature(gamma, T)) <= 1e-8);
        const double linear = analytic_entropy({"linear_vs_linear", {{"A_mu", {-gamma}}, {"T", {T}}}});
        CHECK(std::abs(linear - exact) <= 1e-8);
      }
    }
    const double shifted = analytic_entropy({"linear_vs_linear", {{"b_mu", {1.5}}, {"T", {2.0}}, {"a", {3.0}}}});
    CHECK(shifted == doctest::Approx(0.5 * 1.5 * 1.5 * 2.0 / 3.0).epsilon(1e-10));
  }

  TEST_CASE("path-space estimator") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const TimeGrid grid = TimeGrid::uniform(1.0, 200);

    const auto ens_bm = sample_paths(bm, init, grid, 1000, 3);
    CHECK(girsanov_entropy(bm, bm, init, init, ens_bm).value == 0.0);

    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto ens_drift = sample_paths(drift, init, grid, 10000, 4);
    CHECK(girsanov_entropy(drift, bm, init, init, ens_drift).value == doctest::Approx(0.5).epsilon(0.02));

    const auto ou = make_model("ou", {{"gamma", {1.0}}});
    const auto ens_ou = sample_paths(ou, init, grid, 10000, 5);
    const auto e = girsanov_entropy(ou, bm, init, init, ens_ou);
    CHECK(e.value == doctest::Approx(0.14191691040457661).epsilon(0.02));
    CHECK(e.diagnostics.at("max_path_share") < 0.05);

    const auto wide = make_model("brownian", {{"a", {2.0}}});
    const auto ens_wide = sample_paths(wide, init, grid, 100, 6);
    CHECK(girsanov_entropy(wide, bm, init, init, ens_wide).infinite);

    CHECK(girsanov_entropy(bm, bm, init, InitialLaw::point_mass(v1(1.0)), ens_bm).infinite);
  }

  TEST_CASE("nform pipeline") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto ens = sample_paths(drift, init, TimeGrid::uniform(1.0, 50), 20000, 8);
    BasisConfig config;
    config.lo = {-4.0};
    config.hi = {5.0};
    NFormSweepConfig sweep_config;
    sweep_config.stride = 5;
    NFormSweep sweep;
    const auto e = nform_entropy(bm, init, init, ens, build_basis(config), sweep_config, &sweep);
    CHECK(e.value == doctest::Approx(0.5).epsilon(0.15));
    CHECK(sweep.slices.size() == 11);
    for (const auto& s : sweep.slices) CHECK(s.value >= 0.0);
  }
}
