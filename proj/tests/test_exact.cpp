#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cpfs/exact.hpp"
#include "cpfs/verify.hpp"
#include "test_util.hpp"

using namespace cpfs;

namespace {
WeightedTree single_vertex(double fitness = 1.0) {
  WeightedTree t;
  t.add_vertex(-1, fitness, 0, false);
  return t;
}
}  // namespace

TEST_CASE("single-vertex generator, plain: one recovery transition") {
  ProcessParams params;
  params.lambda = 1.0;
  GeneratorMatrix g = build_generator(single_vertex(), params);
  REQUIRE(g.n_states == 2);
  REQUIRE(g.rate_between(1, 0) == 1.0);
  REQUIRE(g.out_rate[0] == 0.0);  // absorbing
}

TEST_CASE("single vertex with permanent parent: two-state birth-death") {
  double phi = 3.0, lambda = 0.7;
  WeightedTree plus = attach_extra_root(single_vertex(phi));
  ProcessParams params;
  params.lambda = lambda;
  params.variant = Variant::extra_root_permanent;
  GeneratorMatrix g = build_generator(plus, params);
  REQUIRE(g.n_states == 2);
  REQUIRE(g.rate_between(0, 1) == Catch::Approx(lambda * phi));
  REQUIRE(g.rate_between(1, 0) == 1.0);

  // pi(0) = 1/(1 + lambda phi); equals 1/2 when lambda phi = 1
  StationaryVector pi = stationary_distribution(g);
  REQUIRE(pi.p[0] == Catch::Approx(1.0 / (1.0 + lambda * phi)).margin(1e-12));
  ProcessParams unit;
  unit.lambda = 1.0;
  unit.variant = Variant::extra_root_permanent;
  GeneratorMatrix g1 = build_generator(attach_extra_root(single_vertex(1.0)), unit);
  REQUIRE(stationary_distribution(g1).p[0] == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("G_1 with permanent parent matches the hand enumeration") {
  WeightedTree plus = attach_extra_root(make_star(1, 1.0, 1.0));
  ProcessParams params;
  params.lambda = 1.0;
  params.variant = Variant::extra_root_permanent;
  GeneratorMatrix g = build_generator(plus, params);
  REQUIRE(g.n_states == 4);
  // encoding: bit0 = rho, bit1 = leaf
  REQUIRE(g.rate_between(0b00, 0b01) == Catch::Approx(1.0));  // rho+ infects rho
  REQUIRE(g.rate_between(0b00, 0b10) == 0.0);                 // leaf unreachable from 0
  REQUIRE(g.rate_between(0b01, 0b11) == Catch::Approx(1.0));  // rho infects leaf
  REQUIRE(g.rate_between(0b01, 0b00) == 1.0);
  REQUIRE(g.rate_between(0b10, 0b11) == Catch::Approx(2.0));  // rho+ and leaf push rho
  REQUIRE(g.rate_between(0b11, 0b01) == 1.0);
  REQUIRE(g.rate_between(0b11, 0b10) == 1.0);
}

TEST_CASE("expected hitting times") {
  SECTION("single vertex to absorption") {
    ProcessParams params;
    params.lambda = 1.0;
    GeneratorMatrix g = build_generator(single_vertex(), params);
    REQUIRE(expected_extinction_time(g, 1) == Catch::Approx(1.0));
  }
  SECTION("single-leaf star gives 1 + lambda/2") {
    for (double lambda : {0.5, 1.0, 2.0}) {
      ProcessParams params;
      params.lambda = lambda;
      GeneratorMatrix g = build_generator(make_star(1, 1.0, 1.0), params);
      REQUIRE(expected_extinction_time(g, 1) ==
              Catch::Approx(1.0 + lambda / 2.0).margin(1e-10));
    }
  }
  SECTION("delayed single vertex with parent scales by theta^{-1}") {
    WeightedTree plus = attach_extra_root(single_vertex());
    ProcessParams plain;
    plain.lambda = 1.0;
    plain.variant = Variant::extra_root_permanent;
    ProcessParams delayed = plain;
    delayed.variant = Variant::delayed;
    delayed.theta = 0.3;
    GeneratorMatrix gp = build_generator(plus, plain);
    GeneratorMatrix gd = build_generator(plus, delayed);
    uint32_t start = state_bit_of_vertex(gp, plus.root);
    REQUIRE(expected_extinction_time(gd, start) ==
            Catch::Approx(expected_extinction_time(gp, start) / 0.3).margin(1e-10));
  }
  SECTION("unreachable target is an error") {
    ProcessParams params;
    params.lambda = 1.0;
    GeneratorMatrix g = build_generator(single_vertex(), params);
    std::vector<uint32_t> target{1};
    REQUIRE_THROWS_AS(expected_hitting_time(g, target, 0), std::invalid_argument);
  }
}

TEST_CASE("stationary solve refuses absorbing chains, naming the state") {
  ProcessParams params;
  params.lambda = 1.0;
  GeneratorMatrix g = build_generator(make_star(1, 1.0, 1.0), params);
  try {
    stationary_distribution(g);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    REQUIRE(std::string(e.what()).find("state 0") != std::string::npos);
  }
}

TEST_CASE("stationary identity on a path hanging from a fitted parent") {
  // two-vertex path below a permanent parent with its own fitness
  WeightedTree sub;
  sub.add_vertex(-1, 2.0, 0, false);
  sub.add_vertex(0, 1.5, 1, false);
  double phi = 2.5, lambda = 0.8;
  GeneratorMatrix g =
      build_forest_generator(std::span<const WeightedTree>(&sub, 1), phi, lambda);
  StationaryVector pi = stationary_distribution(g);
  double es = expected_extinction_time(g, 1);  // from 1_{v}
  double predicted = 1.0 / (1.0 + lambda * phi * sub.fitness[0] * es);
  REQUIRE(std::abs(pi.p[0] - predicted) < 1e-10);
  REQUIRE(pi.residual_norm < 1e-10);
}

TEST_CASE("delayed reweighting") {
  SECTION("all-depth-zero states reweight to the identity") {
    StationaryVector pi;
    pi.p = {0.25, 0.75};
    std::vector<int32_t> depth{0, 0};
    StationaryVector nu = delayed_reweight(pi, 0.5, depth);
    REQUIRE(nu.p[0] == Catch::Approx(0.25));
    REQUIRE(nu.p[1] == Catch::Approx(0.75));
  }
  SECTION("two-state chain with depth 1: ratio doubles at theta 1/2") {
    StationaryVector pi;
    pi.p = {0.4, 0.6};
    std::vector<int32_t> depth{0, 1};
    StationaryVector nu = delayed_reweight(pi, 0.5, depth);
    REQUIRE(nu.p[1] / nu.p[0] == Catch::Approx(2.0 * 0.6 / 0.4));
  }
  SECTION("agrees with the direct delayed solve on random instances") {
    RandomStream rng(3, 0);
    for (int i = 0; i < 100; ++i) {
      WeightedTree plus = attach_extra_root(random_tree(rng, 1, 5));
      double lambda = rng.uniform_range(0.1, 2.0);
      double theta = rng.uniform_range(0.1, 0.9);
      ProcessParams plain;
      plain.lambda = lambda;
      plain.variant = Variant::extra_root_permanent;
      ProcessParams delayed = plain;
      delayed.variant = Variant::delayed;
      delayed.theta = theta;
      GeneratorMatrix gp = build_generator(plus, plain);
      GeneratorMatrix gd = build_generator(plus, delayed);
      StationaryVector nu1 = stationary_distribution(gd);
      StationaryVector nu2 = delayed_reweight(stationary_distribution(gp), theta,
                                              gp.depth_r);
      for (uint32_t x = 0; x < gp.n_states; ++x)
        REQUIRE(std::abs(nu1.p[x] - nu2.p[x]) < 1e-10);
    }
  }
}

TEST_CASE("product chain factorizes") {
  WeightedTree a = single_vertex(1.0), b = single_vertex(1.0);
  std::vector<ProductChainSpec> specs{{&a, 1.0}, {&b, 1.0}};
  ProductChainReport rep = product_chain_check(specs, 1.0);
  REQUIRE(rep.max_deviation < 1e-10);
  REQUIRE(std::abs(rep.pi0_joint - rep.pi0_product) < 1e-10);
  REQUIRE(std::abs(rep.pi0_joint - rep.pi0_formula) < 1e-10);

  std::vector<ProductChainSpec> bad{{&a, 1.0}, {&b, 2.0}};
  REQUIRE_THROWS_AS(product_chain_check(bad, 1.0), std::invalid_argument);
}

TEST_CASE("depth hit probabilities") {
  SECTION("h = 1 from the root start is certain") {
    WeightedTree plus = attach_extra_root(make_star(2, 1.0, 1.0));
    DepthHitResult r = exact_depth_hit_probability(plus, 0.5, 1);
    REQUIRE(r.probability == 1.0);
  }
  SECTION("tiny lambda: first-order bound on reaching depth 2") {
    // 3-vertex path rho - a - b with extra root
    WeightedTree path;
    path.add_vertex(-1, 1.0, 0, false);
    path.add_vertex(0, 1.0, 1, false);
    path.add_vertex(1, 1.0, 2, false);
    WeightedTree plus = attach_extra_root(path);
    DepthHitResult r = exact_depth_hit_probability(plus, 1e-6, 2);
    REQUIRE(r.probability > 0.0);
    REQUIRE(r.probability <= 2e-6);
  }
  SECTION("beyond the deepest reachable level returns 0 with a flag") {
    WeightedTree plus = attach_extra_root(make_star(2, 1.0, 1.0));
    DepthHitResult r = exact_depth_hit_probability(plus, 0.5, 5);
    REQUIRE(r.beyond_height);
    REQUIRE(r.probability == 0.0);
    DepthHitResult edge = exact_depth_hit_probability(plus, 0.5, 2);
    REQUIRE(!edge.beyond_height);
    REQUIRE(edge.probability > 0.0);
  }
}

TEST_CASE("excursion identity") {
  SECTION("one child: both routes give 1 + lambda") {
    WeightedTree plus = attach_extra_root(make_star(1, 1.0, 1.0));
    ExcursionReport rep = excursion_identity_check(plus, 1.0);
    REQUIRE(rep.deviation < 1e-10);
    REQUIRE(rep.frozen_direct == Catch::Approx(2.0).margin(1e-10));
    REQUIRE(rep.plain_excursion <= rep.frozen_direct + 1e-12);
  }
  SECTION("two leaves at lambda 0.5") {
    WeightedTree plus = attach_extra_root(make_star(2, 1.0, 1.0));
    ExcursionReport rep = excursion_identity_check(plus, 0.5);
    REQUIRE(rep.deviation < 1e-10);
    REQUIRE(rep.plain_excursion <= rep.frozen_direct + 1e-12);
  }
}

TEST_CASE("generator size cap") {
  RandomStream rng(4, 0);
  auto one = FitnessDist::constant_one();
  WeightedTree big = generate_tree(OffspringDist::deterministic(2), one, 4, 100, rng);
  REQUIRE(big.size() == 31);
  ProcessParams params;
  params.lambda = 1.0;
  REQUIRE_THROWS_AS(build_generator(big, params), std::invalid_argument);
}

TEST_CASE("verification battery passes") {
  auto rows = run_exact_verification(12345, 30, 5);
  for (auto& r : rows) {
    INFO(r.check_name << " #" << r.instance_id << " dev " << r.deviation);
    REQUIRE(r.pass);
  }
}
