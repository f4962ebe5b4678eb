#include "pathkl/errors.hpp"
#include "pathkl/sanov.hpp"

#include <doctest.h>

#include <cmath>

using namespace pathkl;

namespace {
Vec v1(double x) { return Vec::Constant(1, x); }
}  // namespace

TEST_SUITE("sanov") {
  TEST_CASE("Cramer rate") {
    const auto bm = make_model("brownian", {});
    const auto init = InitialLaw::point_mass(v1(0.0));
    CHECK(cramer_rate(bm, init, 1.0, 0.0) == 0.0);
    CHECK(cramer_rate(bm, init, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(cramer_rate(bm, init, 4.0, 2.0) == doctest::Approx(0.5));
    CHECK(cramer_rate(bm, init, 1.0, -3.0) == 0.0);
    CHECK_THROWS_AS(cramer_rate(make_model("double_well", {}), init, 1.0, 1.0), CapabilityError);
  }

  TEST_CASE("typical events have rate near zero") {
    RateExperiment e;
    e.threshold = -0.5;
    e.trials = 2000;
    const auto rows = empirical_rate(make_model("brownian", {}), e);
    for (const auto& row : rows) CHECK(row.rate < 0.1);
  }

  TEST_CASE("tilted rates trend toward the Cramer rate") {
    for (double z : {1.0, 2.0}) {
      RateExperiment e;
      e.threshold = z;
      e.tilt = z;
      e.trials = 4000;
      e.steps = 16;
      const auto rows = empirical_rate(make_model("brownian", {}), e);
      const double oracle = 0.5 * z * z;
      for (std::size_t j = 0; j < rows.size(); ++j) {
        CHECK(rows[j].oracle == doctest::Approx(oracle));
        CHECK(rows[j].rate >= oracle - 3.0 * rows[j].rate_std_error);
        if (j > 0) CHECK(rows[j].rate <= rows[j - 1].rate + 2.0 * rows[j].rate_std_error);
      }
      CHECK(rows.back().rate - oracle < rows.front().rate - oracle);
    }
  }

  TEST_CASE("direct sampling reports zero counts as infinite") {
    RateExperiment e;
    e.threshold = 3.0;
    e.trials = 200;
    e.sample_sizes = {1, 40};
    const auto rows = empirical_rate(make_model("brownian", {}), e);
    CHECK_FALSE(rows[0].zero_count);
    CHECK(rows[1].zero_count);
    CHECK(std::isinf(rows[1].rate));

    e.sample_sizes = {40};
    CHECK_THROWS_AS(empirical_rate(make_model("brownian", {}), e), InsufficientSamplingError);
  }

  TEST_CASE("validation") {
    RateExperiment e;
    e.trials = 10;
    CHECK_THROWS_AS(empirical_rate(make_model("brownian", {}), e), ArgumentError);
    e.trials = 100;
    e.sample_sizes = {5, 5};
    CHECK_THROWS_AS(empirical_rate(make_model("brownian", {}), e), ArgumentError);
    e.sample_sizes = {5};
    e.component = 1;
    CHECK_THROWS_AS(empirical_rate(make_model("brownian", {}), e), ArgumentError);
  }
}
