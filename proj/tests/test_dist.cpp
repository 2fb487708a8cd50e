#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cpfs/dist.hpp"
#include "test_util.hpp"

using namespace cpfs;

TEST_CASE("deterministic offspring is a point mass") {
  auto d = OffspringDist::deterministic(2);
  RandomStream rng(1, 0);
  for (int i = 0; i < 100; ++i) REQUIRE(d.sample(rng) == 2);
  REQUIRE(d.mean() == 2.0);
  REQUIRE(d.pmf(2) == 1.0);
  REQUIRE(d.pmf(3) == 0.0);
}

TEST_CASE("poisson offspring sample mean") {
  auto d = OffspringDist::poisson(2.0);
  RandomStream rng(2, 0);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<double>(d.sample(rng)));
  REQUIRE(cpfs::test::mean_within_ci(xs, 2.0));
  REQUIRE(d.pmf(0) == Catch::Approx(std::exp(-2.0)));
}

TEST_CASE("empirical offspring mean and validation") {
  auto d = OffspringDist::empirical({{0, 0.5}, {3, 0.5}});
  REQUIRE(d.mean() == Catch::Approx(1.5));
  RandomStream rng(3, 0);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(static_cast<double>(d.sample(rng)));
  REQUIRE(cpfs::test::mean_within_ci(xs, 1.5));
  REQUIRE_THROWS_AS(OffspringDist::empirical({{0, 0.5}, {3, 0.6}}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringDist::empirical({{0, -0.1}, {3, 1.1}}),
                    std::invalid_argument);
}

TEST_CASE("power law requires a finite mean") {
  REQUIRE_THROWS_AS(OffspringDist::power_law(1.5), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringDist::power_law(0.8), std::invalid_argument);
  REQUIRE_NOTHROW(OffspringDist::power_law(1.5, 100));
  auto d = OffspringDist::power_law(3.0);
  // P(X=1) = 1/zeta(3)
  RandomStream rng(4, 0);
  uint64_t ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += d.sample(rng) == 1;
  REQUIRE(cpfs::test::proportion_within_ci(ones, n, 1.0 / 1.2020569031595943));
  REQUIRE(d.mean() == Catch::Approx(1.6449340668 / 1.2020569032).epsilon(1e-4));
}

TEST_CASE("power law with cutoff stays in support") {
  auto d = OffspringDist::power_law(1.2, 50);
  RandomStream rng(5, 0);
  for (int i = 0; i < 10000; ++i) {
    uint64_t k = d.sample(rng);
    REQUIRE(k >= 1);
    REQUIRE(k <= 50);
  }
}

TEST_CASE("stretched exponential pmf is normalized with finite mean") {
  auto d = OffspringDist::stretched_exp(0.5);
  REQUIRE(std::isfinite(d.mean()));
  double total = 0.0;
  for (uint64_t k = 0; k < 3000; ++k) total += d.pmf(k);
  REQUIRE(total == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fitness families respect the support floor") {
  RandomStream rng(6, 0);
  REQUIRE(FitnessDist::constant_one().sample(rng) == 1.0);
  REQUIRE(FitnessDist::constant(4.0).sample(rng) == 4.0);
  REQUIRE_THROWS_AS(FitnessDist::constant(0.5), std::invalid_argument);
  REQUIRE_THROWS_AS(FitnessDist::bounded_uniform(0.5, 2.0), std::invalid_argument);
  REQUIRE_THROWS_AS(FitnessDist::empirical({{0.5, 1.0}}), std::invalid_argument);
  auto u = FitnessDist::bounded_uniform(1.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    double f = u.sample(rng);
    REQUIRE(f >= 1.0);
    REQUIRE(f <= 3.0);
  }
}

TEST_CASE("pareto tail frequency matches the closed form") {
  auto d = FitnessDist::pareto(2.0);
  RandomStream rng(7, 0);
  const int n = 1000000;
  uint64_t above = 0;
  for (int i = 0; i < n; ++i) above += d.sample(rng) > 10.0;
  // P(F > 10) = 10^-2 within 3 standard errors
  double p = 0.01;
  double se = std::sqrt(p * (1 - p) / n);
  double phat = static_cast<double>(above) / n;
  REQUIRE(std::abs(phat - p) <= 3 * se);
  REQUIRE(d.tail(10.0) == Catch::Approx(0.01));
  REQUIRE(d.tail(1.0) == 1.0);
}

TEST_CASE("distribution mini-language") {
  RandomStream rng(8, 0);
  REQUIRE(OffspringDist::parse("det:2").sample(rng) == 2);
  REQUIRE(OffspringDist::parse("pois:2.0").mean() == 2.0);
  REQUIRE(OffspringDist::parse("geom:0.5").mean() == Catch::Approx(1.0));
  REQUIRE(OffspringDist::parse("emp:0=0.5,3=0.5").mean() == Catch::Approx(1.5));
  REQUIRE(FitnessDist::parse("const:4").sample(rng) == 4.0);
  REQUIRE(FitnessDist::parse("pareto:2").tail(10.0) == Catch::Approx(0.01));
  REQUIRE(FitnessDist::parse("unif:1,3").tail(3.5) == 0.0);
  REQUIRE_THROWS_AS(OffspringDist::parse("nope:1"), std::invalid_argument);
  REQUIRE_THROWS_AS(OffspringDist::parse("det"), std::invalid_argument);
  REQUIRE_THROWS_AS(FitnessDist::parse("unif:1"), std::invalid_argument);
}
