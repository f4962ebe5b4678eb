#include "pathkl/chain_entropy.hpp"
#include "pathkl/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace pathkl;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

const double kVarianceTerm = 0.5 * (1.0 - std::log(2.0));  // KL(N(0,2) || N(0,1))

std::shared_ptr<const TimeGrid> grid_of(double T, std::size_t steps) {
  return std::make_shared<const TimeGrid>(TimeGrid::uniform(T, steps));
}

}  // namespace

TEST_SUITE("chain_entropy") {
  TEST_CASE("one-step Gaussian KL") {
    const auto bm = make_model("brownian", {});
    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const auto ens = sample_paths(drift, init, TimeGrid::uniform(0.01, 1), 50, 3);

    CHECK(step_kl(drift, drift, ens, 0, 1).value <= 1e-12);
    const auto one = step_kl(drift, bm, ens, 0, 1);
    CHECK(one.value == doctest::Approx(0.005).epsilon(1e-12));
    for (double v : one.per_path) CHECK(v == doctest::Approx(0.005).epsilon(1e-12));

    const auto wide = make_model("brownian", {{"a", {2.0}}});
    for (double dt : {0.01, 0.3}) {
      const auto e = sample_paths(wide, init, TimeGrid::uniform(dt, 1), 20, 4);
      CHECK(step_kl(wide, bm, e, 0, 1).value == doctest::Approx(kVarianceTerm).epsilon(1e-12));
    }
  }

  TEST_CASE("chain totals") {
    const auto bm = make_model("brownian", {});
    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const auto grid = grid_of(1.0, 256);
    const auto finest = refine_sequence(grid, 9).back();

    const auto same = chain_estimate(bm, bm, init, init, finest, 2000, 5);
    CHECK(std::abs(same.total.value) <= 3.0 * same.total.std_error + 1e-12);

    const auto e = chain_estimate(drift, bm, init, init, finest, 2000, 5);
    CHECK(e.total.value == doctest::Approx(0.5).epsilon(0.02));

    const auto ou = make_model("ou", {{"gamma", {1.0}}});
    const auto o = chain_estimate(ou, bm, init, init, finest, 20000, 6);
    CHECK(o.total.value == doctest::Approx(0.14191691040457661).epsilon(0.03));
  }

  TEST_CASE("chain rule: total is the initial term plus the interval sum") {
    const auto bm = make_model("brownian", {});
    const auto ou = make_model("ou", {{"gamma", {1.5}}});
    const auto init_mu = InitialLaw::gaussian(v1(0.5), Mat::Identity(1, 1));
    const auto init_P = InitialLaw::gaussian(v1(0.0), Mat::Identity(1, 1));
    const auto grid = grid_of(1.0, 64);
    const auto ens = sample_paths(ou, init_mu, *grid, 3000, 9);
    const Partition partition(grid, {0, 16, 40, 64});
    const auto e = chain_estimate(ou, bm, init_mu, init_P, ens, partition);
    double sum = e.initial_term;
    for (const auto& s : e.per_step) sum += s.value;
    CHECK(e.total.value == sum);
    CHECK(e.initial_term == doctest::Approx(0.125));
    CHECK(e.per_step.size() == 3);
  }

  TEST_CASE("dyadic refinement") {
    const auto grid = grid_of(1.0, 8);
    const auto one = refine_sequence(grid, 1);
    REQUIRE(one.size() == 1);
    CHECK(one[0].times() == std::vector<double>{0.0, 1.0});

    const auto three = refine_sequence(grid, 3);
    REQUIRE(three.size() == 3);
    CHECK(three[1].times() == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(three[2].times() == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    for (std::size_t n = 1; n < three.size(); ++n) {
      CHECK(three[n - 1].subset_of(three[n]));
      CHECK(three[n].mesh() == doctest::Approx(0.5 * three[n - 1].mesh()));
    }
    CHECK_THROWS_AS(refine_sequence(grid_of(1.0, 100), 4), ArgumentError);
    CHECK_THROWS_AS(refine_sequence(grid, 5), ArgumentError);
  }

  TEST_CASE("partition validation") {
    const auto grid = grid_of(1.0, 8);
    CHECK_THROWS_AS(Partition(grid, {0, 4}), ArgumentError);
    CHECK_THROWS_AS(Partition(grid, {1, 8}), ArgumentError);
    CHECK_THROWS_AS(Partition(grid, {0, 5, 3, 8}), ArgumentError);
    CHECK_THROWS_AS(Partition(grid, {0, 9}), ArgumentError);
    CHECK(Partition(grid, {0, 2, 8}).floor_time(0.3) == doctest::Approx(0.25));
  }

  TEST_CASE("refinement sweep") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const auto grid = grid_of(1.0, 64);
    SweepConfig config;
    config.levels = 7;

    const auto null_sweep = refinement_sweep(bm, bm, init, init, grid, 500, 2, config);
    for (const auto& level : null_sweep.levels) CHECK(std::abs(level.total.value) <= 1e-12);

    const auto drift = make_model("drift_bm", {{"theta", {1.0}}});
    const auto up = refinement_sweep(drift, bm, init, init, grid, 2000, 2, config);
    CHECK(up.monotonicity_violations.empty());
    CHECK(up.supremum.value == doctest::Approx(0.5).epsilon(0.05));

    const auto wide = make_model("brownian", {{"a", {2.0}}});
    config.divergence_threshold = 5.0;
    const auto diverging = refinement_sweep(wide, bm, init, init, grid, 200, 2, config);
    for (std::size_t n = 0; n < diverging.levels.size(); ++n) {
      const double intervals = std::pow(2.0, static_cast<double>(n));
      CHECK(diverging.levels[n].total.value == doctest::Approx(intervals * kVarianceTerm).epsilon(1e-9));
    }
    CHECK(diverging.diverged);
    CHECK(diverging.supremum.infinite);
  }

  TEST_CASE("diffusion match check") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    const auto ens = sample_paths(bm, init, TimeGrid::uniform(1.0, 20), 1000, 14);

    const auto same = diffusion_match_check(bm, bm, ens);
    CHECK(same.pass);
    CHECK(same.max_distance == 0.0);

    const auto doubled = diffusion_match_check(make_model("brownian", {{"a", {2.0}}}), bm, ens);
    CHECK_FALSE(doubled.pass);
    CHECK(doubled.max_distance == doctest::Approx(1.0));

    DiffusionSpec wobble = bm;
    wobble.model_id = "wobble";
    wobble.constant_diffusion = false;
    wobble.diffusion = [](double, std::span<const double> x, std::span<double> out) {
      out[0] = 1.0 + 0.5 * std::sin(x[0]);
    };
    const auto varying = diffusion_match_check(wobble, bm, ens);
    CHECK_FALSE(varying.pass);
    CHECK(varying.max_distance == doctest::Approx(0.5).epsilon(0.02));
  }
}
