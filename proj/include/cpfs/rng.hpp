#pragma once

#include <cmath>
#include <cstdint>

namespace cpfs {

// Counter-based splittable random stream. Output i of stream s under master
// seed m is a pure function of (m, s, i), so trial results do not depend on
// scheduling order. The generator is the SplitMix64 finalizer applied to a
// Weyl counter, keyed per stream.
class RandomStream {
 public:
  RandomStream() : RandomStream(0, 0) {}
  RandomStream(uint64_t master_seed, uint64_t stream)
      : key_(mix64(mix64(master_seed + kGolden) ^ mix64(stream * kMul + 1))),
        ctr_(0) {}

  // Derived stream, independent of this one for practical purposes.
  RandomStream substream(uint64_t index) const {
    RandomStream r;
    r.key_ = mix64(key_ ^ mix64(index * kMul + kGolden));
    r.ctr_ = 0;
    return r;
  }

  uint64_t next_u64() {
    ctr_ += kGolden;
    return mix64(key_ + ctr_);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1.
  uint64_t pick(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

  // Geometric on {0,1,2,...} with P(k) = p (1-p)^k.
  uint64_t geometric(double p) {
    if (p >= 1.0) return 0;
    double u = uniform_pos();
    return static_cast<uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
  }

  // Exact Poisson sampling; large means are split additively so the
  // product-of-uniforms loop never underflows.
  uint64_t poisson(double mu) {
    uint64_t total = 0;
    while (mu > 50.0) {
      total += poisson_small(50.0);
      mu -= 50.0;
    }
    if (mu > 0.0) total += poisson_small(mu);
    return total;
  }

  static uint64_t mix64(uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

 private:
  static constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  static constexpr uint64_t kMul = 0xD1342543DE82EF95ULL;

  uint64_t poisson_small(double mu) {
    const double limit = std::exp(-mu);
    uint64_t k = 0;
    double prod = 1.0;
    do {
      ++k;
      prod *= uniform_pos();
    } while (prod > limit);
    return k - 1;
  }

  uint64_t key_;
  uint64_t ctr_;
};

}  // namespace cpfs
