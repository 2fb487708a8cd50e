#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cpfs/coupling.hpp"
#include "test_util.hpp"

using namespace cpfs;

namespace {
std::vector<int32_t> root_only{0};
}

TEST_CASE("identical layers give identical trajectories") {
  WeightedTree g2 = make_star(2, 1.0, 1.0);
  for (uint64_t i = 0; i < 2000; ++i) {
    RandomStream rng(1, i);
    CoupledOutcome out = couple_monotone(g2, 1.0, 1.0, g2.fitness, g2.fitness,
                                         root_only, 1e9, rng);
    REQUIRE(out.violations == 0);
    REQUIRE(out.layers[0].extinction_time == out.layers[1].extinction_time);
  }
}

TEST_CASE("monotone coupling in lambda: no violations, ordered extinctions") {
  WeightedTree g4 = make_star(4, 1.0, 1.0);
  uint64_t violations = 0;
  for (uint64_t i = 0; i < 10000; ++i) {
    RandomStream rng(2, i);
    CoupledOutcome out = couple_monotone(g4, 0.5, 1.0, g4.fitness, g4.fitness,
                                         root_only, 1e9, rng);
    violations += out.violations;
    REQUIRE(out.layers[0].extinction_time <=
            out.layers[1].extinction_time + 1e-12);
  }
  REQUIRE(violations == 0);
}

TEST_CASE("monotone coupling in fitness raises extinction times") {
  WeightedTree g1 = make_star(1, 1.0, 1.0);
  std::vector<double> low_fit{1.0, 1.0}, high_fit{2.0, 2.0};
  double sum_low = 0, sum_high = 0;
  for (uint64_t i = 0; i < 100000; ++i) {
    RandomStream rng(3, i);
    CoupledOutcome out =
        couple_monotone(g1, 1.0, 1.0, low_fit, high_fit, root_only, 1e9, rng);
    REQUIRE(out.violations == 0);
    sum_low += out.layers[0].extinction_time;
    sum_high += out.layers[1].extinction_time;
  }
  REQUIRE(sum_low < sum_high);
}

TEST_CASE("rate dominance is validated at setup") {
  WeightedTree g1 = make_star(1, 1.0, 1.0);
  std::vector<double> low{2.0, 2.0}, high{1.0, 1.0};
  RandomStream rng(4, 0);
  REQUIRE_THROWS_AS(
      couple_monotone(g1, 1.0, 1.0, low, high, root_only, 10.0, rng),
      std::invalid_argument);
  // lambda ordering can compensate fitness ordering
  REQUIRE_NOTHROW(couple_monotone(g1, 0.1, 1.0, low, high, root_only, 10.0, rng));
}

TEST_CASE("ignore-recoveries coupling dominates the base process") {
  WeightedTree g2 = make_star(2, 1.0, 1.0);
  ProcessParams params;
  params.lambda = 1.0;

  SECTION("empty ignored set leaves the processes identical") {
    IgnoredRecoveries none;
    none.vertex = 0;
    for (uint64_t i = 0; i < 2000; ++i) {
      RandomStream rng(5, i);
      CoupledOutcome out =
          couple_ignore_recoveries(g2, params, root_only, none, 1e9, rng);
      REQUIRE(out.violations == 0);
      REQUIRE(out.layers[0].extinction_time == out.layers[1].extinction_time);
    }
  }

  SECTION("ignoring all root recoveries keeps the root infected") {
    IgnoredRecoveries all;
    all.vertex = 0;
    all.intervals = {{0.0, std::numeric_limits<double>::infinity()}};
    for (uint64_t i = 0; i < 500; ++i) {
      RandomStream rng(6, i);
      CoupledOutcome out =
          couple_ignore_recoveries(g2, params, root_only, all, 50.0, rng);
      REQUIRE(out.violations == 0);
      // the modified layer can never absorb: its root recovery marks are void
      REQUIRE(std::isnan(out.layers[1].extinction_time));
      REQUIRE(out.root_infected[1] == 1);
    }
  }

  SECTION("random interval sets never break the subset order") {
    uint64_t violations = 0;
    for (uint64_t i = 0; i < 10000; ++i) {
      RandomStream rng(7, i);
      IgnoredRecoveries ign;
      ign.vertex = static_cast<int32_t>(rng.pick(3));
      double t0 = rng.uniform_range(0.0, 2.0);
      double t1 = t0 + rng.uniform_range(0.0, 3.0);
      double t2 = t1 + rng.uniform_range(0.0, 2.0);
      ign.intervals = {{t0, t1}, {t2, t2 + 1.0}};
      CoupledOutcome out =
          couple_ignore_recoveries(g2, params, root_only, ign, 30.0, rng);
      violations += out.violations;
    }
    REQUIRE(violations == 0);
  }
}

TEST_CASE("percolation component collapses as t0 vanishes") {
  RandomStream rng(8, 0);
  auto one = FitnessDist::constant_one();
  WeightedTree tree =
      generate_tree(OffspringDist::deterministic(2), one, 10, 5000, rng);
  int singletons = 0;
  for (uint64_t i = 0; i < 10000; ++i) {
    RandomStream r(9, i);
    PercolationResult res = percolation_component(tree, 1.0, 1e-12, r);
    singletons += res.component.size() == 1;
  }
  REQUIRE(singletons >= 9990);
}

TEST_CASE("chain percolation gives a geometric component size") {
  // deterministic(1) path: open probability p per edge, size - 1 ~ Geom
  auto off = OffspringDist::deterministic(1);
  auto one = FitnessDist::constant_one();
  double t0 = 0.7;
  double p = 1.0 - std::exp(-t0);
  GrowthSpec growth{&off, &one, 100000};
  std::vector<double> xs;
  for (uint64_t i = 0; i < 100000; ++i) {
    RandomStream r(10, i);
    WeightedTree seed = make_lazy_seed(one, r);
    PercolationResult res = percolation_component(seed, 1.0, t0, r, &growth);
    xs.push_back(static_cast<double>(res.component.size() - 1));
  }
  REQUIRE(cpfs::test::mean_within_ci(xs, p / (1.0 - p)));
}

TEST_CASE("doubling fitness enlarges the component under shared uniforms") {
  RandomStream rng(11, 0);
  auto one = FitnessDist::constant_one();
  WeightedTree tree =
      generate_tree(OffspringDist::deterministic(2), one, 8, 5000, rng);
  double lambda = 1.0, t0 = 0.2;
  for (uint64_t trial = 0; trial < 2000; ++trial) {
    RandomStream r(12, trial);
    // shared per-edge uniforms; edge key = child vertex id
    std::vector<double> u(tree.size());
    for (size_t v = 1; v < tree.size(); ++v) u[v] = r.uniform();
    auto component_size = [&](double fscale) {
      std::vector<int32_t> stack{0};
      size_t count = 1;
      while (!stack.empty()) {
        int32_t v = stack.back();
        stack.pop_back();
        for (int32_t c : tree.children[static_cast<size_t>(v)]) {
          double rate = lambda * fscale * fscale;
          double open_p = 1.0 - std::exp(-rate * t0);
          if (u[static_cast<size_t>(c)] < open_p) {
            ++count;
            stack.push_back(c);
          }
        }
      }
      return count;
    };
    REQUIRE(component_size(1.0) <= component_size(2.0));
  }
}
