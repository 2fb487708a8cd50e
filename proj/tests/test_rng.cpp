#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include "cpfs/rng.hpp"
#include "test_util.hpp"

using namespace cpfs;

TEST_CASE("streams are pure functions of (seed, stream)") {
  RandomStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::vector<uint64_t> xa, xb;
  bool c_differs = false, d_differs = false;
  for (int i = 0; i < 100; ++i) {
    uint64_t va = a.next_u64();
    xa.push_back(va);
    xb.push_back(b.next_u64());
    c_differs |= c.next_u64() != va;
    d_differs |= d.next_u64() != va;
  }
  REQUIRE(xa == xb);
  REQUIRE(c_differs);
  REQUIRE(d_differs);
}

TEST_CASE("substream derivation is deterministic and distinct") {
  RandomStream base(1, 0);
  RandomStream s1 = base.substream(3);
  RandomStream s2 = RandomStream(1, 0).substream(3);
  RandomStream s3 = base.substream(4);
  REQUIRE(s1.next_u64() == s2.next_u64());
  REQUIRE(s1.next_u64() != s3.next_u64());
}

TEST_CASE("uniform stays in [0,1)") {
  RandomStream rng(5, 0);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
  }
}

TEST_CASE("exponential mean") {
  RandomStream rng(6, 0);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(rng.exponential(2.0));
  REQUIRE(cpfs::test::mean_within_ci(xs, 0.5));
}

TEST_CASE("poisson sampling, small and split-range means") {
  RandomStream rng(7, 0);
  std::vector<double> small, large;
  for (int i = 0; i < 100000; ++i)
    small.push_back(static_cast<double>(rng.poisson(2.0)));
  for (int i = 0; i < 20000; ++i)
    large.push_back(static_cast<double>(rng.poisson(120.0)));
  REQUIRE(cpfs::test::mean_within_ci(small, 2.0));
  REQUIRE(cpfs::test::mean_within_ci(large, 120.0));
}

TEST_CASE("geometric mean matches (1-p)/p") {
  RandomStream rng(8, 0);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i)
    xs.push_back(static_cast<double>(rng.geometric(0.5)));
  REQUIRE(cpfs::test::mean_within_ci(xs, 1.0));
}

TEST_CASE("pick is uniform over [0,n)") {
  RandomStream rng(9, 0);
  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) counts[rng.pick(5)]++;
  for (int c : counts)
    REQUIRE(cpfs::test::proportion_within_ci(c, 50000, 0.2, 0.999));
}
