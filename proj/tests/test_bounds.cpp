#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpfs/bounds.hpp"

using namespace cpfs;

TEST_CASE("S formula and its second display agree") {
  double s1 = compute_S(1.0, 1.0, 3, 0.25);
  REQUIRE(s1 == Catch::Approx(std::sqrt(1.5) / 18.0).epsilon(1e-12));
  REQUIRE(s1 == Catch::Approx(0.068041).epsilon(1e-4));
  for (double lambda : {0.3, 1.0, 2.5})
    for (double f : {1.0, 4.0, 32.0})
      for (int64_t k : {3ll, 64ll, 512ll}) {
        double a = compute_S(lambda, f, k, 0.1);
        double b = compute_S_second_form(lambda, f, k, 0.1);
        REQUIRE(a == Catch::Approx(b).epsilon(1e-12));
      }
  REQUIRE_THROWS_AS(compute_S(1.0, 1.0, 3, 0.6), std::invalid_argument);
}

TEST_CASE("S grows in f once the exponent clears 1") {
  double prev = 0.0;
  for (double f : {8.0, 16.0, 32.0, 64.0}) {
    int64_t L = compute_L(1.0, f, 64);
    REQUIRE(static_cast<double>(L) * (1.0 - 0.2) > 1.0);
    double s = compute_log_S(1.0, f, 64, 0.1);
    REQUIRE(s > prev);
    prev = s;
  }
}

TEST_CASE("C, lambda-hat, C-hat") {
  REQUIRE(compute_C_lambda_f(1.0, 1.0) == Catch::Approx(1.0));
  auto [lhat, chat] = compute_lhat_Chat(1.0, 1.0);
  REQUIRE(lhat == Catch::Approx(0.5));
  REQUIRE(chat == Catch::Approx(0.25));
  // f -> infinity limit: ((lambda+1)/lambda)^2
  REQUIRE(compute_C_lambda_f(0.5, 1e12) == Catch::Approx(9.0).epsilon(1e-6));
  // with f = 1 the two factors cancel exactly at every lambda
  for (double lambda : {0.1, 1.0, 10.0, 1e6})
    REQUIRE(compute_C_lambda_f(lambda, 1.0) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("R evaluation, decay, homogeneity") {
  BoundParams ones;
  ones.c = ones.c_hat1 = ones.c2 = 1.0;
  REQUIRE(compute_R(10.0, 1000, 1.0, ones) == Catch::Approx(0.1101).epsilon(1e-12));
  BoundParams def;
  REQUIRE(compute_R(1e9, 1000, 1.0, def) < 1e-8);
  // doubling f halves R exactly
  double r1 = compute_R(5.0, 64, 1.0, def);
  double r2 = compute_R(10.0, 64, 1.0, def);
  REQUIRE(2.0 * r2 == r1);
}

TEST_CASE("r(f,k) from the counting identity") {
  // mu = 2, interior product 1/16 -> r = log(16)/log(2) = 4
  REQUIRE(compute_r_of_fk(2.0, 1, 2.0, 1.0, 0.25, 0.5) == 4);
  // clamped to 1 when the product clears mu
  REQUIRE(compute_r_of_fk(2.0, 100, 2.0, 1.0, 1.0, 1.0) == 1);
  REQUIRE_THROWS_AS(compute_r_of_fk(2.0, 1, 2.0, 1.0, 0.0, 0.5),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(compute_r_of_fk(2.0, 1, 0.9, 1.0, 0.25, 0.5),
                    std::invalid_argument);
}

TEST_CASE("condition (S window vs relay cost) at a working point") {
  Condition62 c = check_condition_62(1.0, 1e4, 1000, 0.1, 10);
  REQUIRE(c.holds);
  REQUIRE(c.lhs_log > c.rhs_log);
  // hopeless point: tiny star
  Condition62 bad = check_condition_62(1.0, 1.0, 3, 0.1, 50);
  REQUIRE(!bad.holds);
}

TEST_CASE("persistence kernel bound value") {
  // (3 + lambda f)(1 + lambda f/2)^{-eps L} at lambda=1, f=4, k=64, eps=0.1
  int64_t L = compute_L(1.0, 4.0, 64);
  REQUIRE(L == 29);
  double b = persistence_kernel_bound(1.0, 4.0, 64, 0.1);
  REQUIRE(b == Catch::Approx(7.0 * std::pow(3.0, -2.9)).epsilon(1e-12));
  REQUIRE(b < 1.0);
}

TEST_CASE("relay bound combines the window term with R") {
  BoundParams def;
  double b = relay_bound(1.0, 8.0, 64, 3, 200.0, def);
  REQUIRE(b > 0.0);
  REQUIRE(b < 1.0);
  // f = 1 makes the bound vacuous through R
  double vac = relay_bound(1.0, 1.0, 8, 3, 200.0, def);
  REQUIRE(vac > 1.0);
}
