#include "pathkl/errors.hpp"
#include "pathkl/marginal_entropy.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace pathkl;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

std::vector<Vec> normal_samples(double mean, double sd, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(mean, sd);
  std::vector<Vec> out(n);
  for (auto& x : out) x = v1(normal(rng));
  return out;
}

GaussianLaw law1(double mean, double var) { return {v1(mean), Mat::Constant(1, 1, var)}; }

}  // namespace

TEST_SUITE("marginal_entropy") {
  TEST_CASE("Gaussian KL") {
    CHECK(gaussian_kl(law1(0.3, 2.0), law1(0.3, 2.0)) == 0.0);
    CHECK(gaussian_kl(law1(1.0, 1.0), law1(0.0, 1.0)) == doctest::Approx(0.5));
    CHECK(gaussian_kl(law1(0.0, 2.0), law1(0.0, 1.0)) == doctest::Approx(0.5 * (1.0 - std::log(2.0))));

    GaussianLaw p{Vec::Zero(2), Mat::Identity(2, 2)};
    GaussianLaw q{Vec::Ones(2), 2.0 * Mat::Identity(2, 2)};
    // 1/2 (tr(q^-1 p) - d + m^T q^-1 m + log det q / det p)
    CHECK(gaussian_kl(p, q) == doctest::Approx(0.5 * (1.0 - 2.0 + 1.0 + 2.0 * std::log(2.0))));
  }

  TEST_CASE("initial entropy") {
    const auto d0 = InitialLaw::point_mass(v1(0.0));
    CHECK(initial_entropy(d0, d0).value == 0.0);
    const auto n1 = InitialLaw::gaussian(v1(1.0), Mat::Identity(1, 1));
    const auto n0 = InitialLaw::gaussian(v1(0.0), Mat::Identity(1, 1));
    CHECK(initial_entropy(n1, n0).value == doctest::Approx(0.5));
    CHECK(initial_entropy(d0, n0).infinite);
    CHECK(initial_entropy(InitialLaw::point_mass(v1(1.0)), d0).infinite);

    const auto cloud = InitialLaw::empirical(normal_samples(1.0, 1.0, 20000, 5));
    const auto e = initial_entropy(cloud, n0);
    CHECK_FALSE(e.infinite);
    CHECK(e.value == doctest::Approx(0.5).epsilon(0.1));
  }

  TEST_CASE("cell KL is nonnegative on the simplex") {
    std::mt19937_64 rng(8);
    std::gamma_distribution<double> g(0.7);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> p(7), q(7);
      double sp = 0.0, sq = 0.0;
      for (int i = 0; i < 7; ++i) {
        p[i] = g(rng);
        q[i] = g(rng) + 1e-300;
        sp += p[i];
        sq += q[i];
      }
      for (int i = 0; i < 7; ++i) {
        p[i] /= sp;
        q[i] /= sq;
      }
      CHECK(cell_kl(p, q) >= -1e-15);
    }
    const std::vector<double> p{0.5, 0.5, 0.0};
    CHECK(cell_kl(p, p) == 0.0);
    CHECK(std::isinf(cell_kl(std::vector<double>{0.5, 0.5, 0.0}, std::vector<double>{1.0, 0.0, 0.0})));
    CHECK(cell_kl(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("partition refinement never decreases exact cell KL") {
    auto part = SpacePartition::uniform(v1(-6.0), v1(7.0), {4});
    const auto mu = gaussian_cells(law1(1.0, 1.0));
    const auto nu = gaussian_cells(law1(0.0, 1.0));
    double prev = 0.0;
    for (int level = 0; level < 6; ++level) {
      const double value = cell_kl(mu(part).p, nu(part).p);
      CHECK(value >= prev - 1e-14);
      CHECK(value <= 0.5);
      prev = value;
      part = part.refined();
    }
    CHECK(prev == doctest::Approx(0.5).epsilon(0.01));
  }

  TEST_CASE("space partition geometry") {
    const auto part = SpacePartition::uniform(Vec::Zero(2), Vec::Ones(2), {2, 4});
    CHECK(part.box_count() == 8);
    CHECK(part.cell_count() == 9);
    const std::vector<double> inside{0.6, 0.3};
    const std::vector<double> outside{1.0, 0.3};
    CHECK(part.locate(inside) < part.box_count());
    CHECK(part.locate(outside) == part.remainder_index());
    const auto box = part.box(part.locate(inside));
    CHECK(box.lo[0] <= 0.6);
    CHECK(box.hi[0] > 0.6);
    CHECK(part.refined().box_count() == 32);
  }

  TEST_CASE("histogram estimator") {
    const auto samples = normal_samples(1.0, 1.0, 100000, 21);
    const auto part = SpacePartition::uniform(v1(-6.0), v1(7.0), {64});
    const auto e = histogram_kl(samples, gaussian_cells(law1(0.0, 1.0)), part);
    CHECK(e.value > 0.0);
    CHECK(e.value <= 0.5 + 3.0 * e.std_error);

    const auto same = histogram_kl(samples, empirical_cells(samples), part);
    CHECK(same.value == 0.0);

    const std::vector<Vec> far{v1(10.0), v1(10.5)};
    const auto part_far = SpacePartition::uniform(v1(-1.0), v1(12.0), {13});
    CHECK(histogram_kl(far, empirical_cells({v1(0.0), v1(0.2)}), part_far).infinite);
  }

  TEST_CASE("DV estimator") {
    const auto a = normal_samples(1.0, 1.0, 10000, 1);
    const auto b = normal_samples(0.0, 1.0, 10000, 2);
    const auto poly = polynomial_basis(make_window({-8.0}, {8.0}, 1.0), 2);
    CHECK(std::abs(dv_estimate(a, a, poly).value) <= 1e-12);
    const auto e = dv_estimate(a, b, poly);
    CHECK(e.value == doctest::Approx(0.5).epsilon(0.1));
    CHECK_THROWS_AS(dv_estimate(std::vector<Vec>{}, b, poly), ArgumentError);
  }
}
