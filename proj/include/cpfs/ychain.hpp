#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cpfs/rng.hpp"

namespace cpfs {

// Cut-off level L = ceil(lambda f k / (1 + 2 lambda f)).
inline int64_t compute_L(double lambda, double f, int64_t k) {
  if (!(lambda > 0.0) || !(f >= 1.0) || k < 1)
    throw std::invalid_argument("compute_L: need lambda > 0, f >= 1, k >= 1");
  return static_cast<int64_t>(
      std::ceil(lambda * f * static_cast<double>(k) / (1.0 + 2.0 * lambda * f)));
}

// Number of leaf recoveries while the star's center is healthy: shifted
// geometric with success probability lambda f / (lambda f + 1), so
// P(N = j) = (1/(lambda f + 1))^j * (lambda f/(lambda f + 1)) and the mean is
// 1/(lambda f).
inline uint64_t sample_frakN(double lambda, double f, RandomStream& rng) {
  double lf = lambda * f;
  if (!(lf > 0.0)) throw std::invalid_argument("sample_frakN: lambda*f must be > 0");
  return rng.geometric(lf / (lf + 1.0));
}

inline double frakN_pmf(double lambda, double f, uint64_t j) {
  double lf = lambda * f;
  return std::pow(1.0 / (lf + 1.0), static_cast<double>(j)) * (lf / (lf + 1.0));
}

struct YChainParams {
  double lambda = 1.0;
  double f = 1.0;
  int64_t k = 1;
  int64_t L() const { return compute_L(lambda, f, k); }
};

struct YChainResult {
  double t_hit_L = std::numeric_limits<double>::quiet_NaN();  // T_L^Y
  double t_return_0 = std::numeric_limits<double>::quiet_NaN();  // R_0^Y
  bool censored = false;
  int64_t final_y = 0;
  double final_time = 0.0;
  // displacement/time pairs let callers run drift checks via optional stopping
  double displacement = 0.0;
  double elapsed = 0.0;

  bool hit_first() const { return !std::isnan(t_hit_L); }
};

struct YChainStep {
  double time;
  int64_t y;
};

// The auxiliary leaf-count lower bound: down 1 at rate L, up (capped at L) at
// rate lambda f (k - L), down by a frakN burst at rate 1. Runs until the
// chain reaches L (or the horizon censors); a return to 0 is recorded only
// when it happens on the way, which settles the order of T_L^Y and R_0^Y.
// Once pinned at L a return fights the full drift and takes time exponential
// in L, so the chain is not run past T_L.
template <class Observer>
YChainResult simulate_Y_chain(const YChainParams& p, double horizon, RandomStream& rng,
                              int64_t y0, Observer&& observer) {
  const int64_t L = p.L();
  const double lf = p.lambda * p.f;
  const double up_rate = lf * static_cast<double>(p.k - L);
  const double down_rate = static_cast<double>(L);
  const double burst_rate = 1.0;
  const double total = up_rate + down_rate + burst_rate;
  if (!(total > 0.0)) throw std::invalid_argument("simulate_Y_chain: degenerate rates");

  YChainResult res;
  int64_t y = y0;
  double time = 0.0;
  bool seen_1 = y >= 1;
  if (y >= L) res.t_hit_L = 0.0;
  observer(YChainStep{0.0, y});
  while (std::isnan(res.t_hit_L)) {
    double dt = rng.exponential(total);
    if (time + dt > horizon) {
      time = horizon;
      res.censored = true;
      break;
    }
    time += dt;
    double u = rng.uniform() * total;
    if (u < down_rate) {
      y -= 1;
    } else if (u < down_rate + up_rate) {
      y = std::min(y + 1, L);
    } else {
      y -= static_cast<int64_t>(sample_frakN(p.lambda, p.f, rng));
    }
    observer(YChainStep{time, y});
    if (y >= 1) seen_1 = true;
    if (y >= L) res.t_hit_L = time;
    if (seen_1 && y <= 0 && std::isnan(res.t_hit_L)) res.t_return_0 = time;
  }
  res.final_y = y;
  res.final_time = time;
  res.displacement = static_cast<double>(y - y0);
  res.elapsed = time;
  return res;
}

inline YChainResult simulate_Y_chain(const YChainParams& p, double horizon,
                                     RandomStream& rng, int64_t y0 = 0) {
  return simulate_Y_chain(p, horizon, rng, y0, [](const YChainStep&) {});
}

// One trial for the drift check: run from 0 until the chain reaches L or the
// cap elapses, and return (Y_tau, tau). E[Y_tau - mu tau] = 0 exactly for the
// bounded stopping time tau = T_L ^ cap, which makes mu testable without bias.
inline std::pair<double, double> y_displacement_trial(const YChainParams& p, double cap,
                                                      RandomStream& rng) {
  const int64_t L = p.L();
  const double lf = p.lambda * p.f;
  const double up_rate = lf * static_cast<double>(p.k - L);
  const double down_rate = static_cast<double>(L);
  const double total = up_rate + down_rate + 1.0;
  int64_t y = 0;
  double time = 0.0;
  while (y < L) {
    double dt = rng.exponential(total);
    if (time + dt > cap) {
      time = cap;
      break;
    }
    time += dt;
    double u = rng.uniform() * total;
    if (u < down_rate)
      y -= 1;
    else if (u < down_rate + up_rate)
      y = std::min(y + 1, L);
    else
      y -= static_cast<int64_t>(sample_frakN(p.lambda, p.f, rng));
  }
  return {static_cast<double>(y), time};
}

// Drift of Y_t below the cut-off: -L + lambda f (k - L) - 1/(lambda f).
inline double y_drift(const YChainParams& p) {
  const int64_t L = p.L();
  const double lf = p.lambda * p.f;
  return -static_cast<double>(L) + lf * static_cast<double>(p.k - L) - 1.0 / lf;
}

struct SupermartingaleCheck {
  double max_drift = -std::numeric_limits<double>::infinity();
  int64_t argmax_state = -1;
  int64_t L = 0;
  bool holds(double tol = 1e-12) const { return max_drift <= tol; }
};

// One-step expectation of phi(Z) = (1 + lambda f/2)^{-Z} for the embedded
// jump chain, enumerated exactly over the three jump types; the geometric
// burst term sums in closed form: E[(1+lambda f/2)^{frakN}] = 2. Returns the
// largest E[phi(Z_{n+1}) | Z_n = z] - phi(z) over interior states z in (0,L).
// Negative everywhere means phi(Z_n) is a supermartingale there; small
// lambda*f can make the drift positive, which is reported, not an error.
inline SupermartingaleCheck embedded_Z_supermartingale_check(double lambda, double f,
                                                             int64_t k) {
  YChainParams p{lambda, f, k};
  const int64_t L = p.L();
  const double lf = lambda * f;
  const double a = 1.0 + lf / 2.0;
  const double up_rate = lf * static_cast<double>(k - L);
  const double down_rate = static_cast<double>(L);
  const double total = up_rate + down_rate + 1.0;
  // E[a^frakN]: geometric series with ratio a/(lf+1) < 1 always
  const double burst_factor = (lf / (lf + 1.0)) / (1.0 - a / (lf + 1.0));

  SupermartingaleCheck out;
  out.L = L;
  for (int64_t z = 1; z < L; ++z) {
    double phi = std::pow(a, -static_cast<double>(z));
    double up_target = std::min(z + 1, L);
    double e = down_rate / total * std::pow(a, -static_cast<double>(z - 1)) +
               up_rate / total * std::pow(a, -up_target) +
               1.0 / total * phi * burst_factor;
    double drift = e - phi;
    if (drift > out.max_drift) {
      out.max_drift = drift;
      out.argmax_state = z;
    }
  }
  if (L <= 1) out.max_drift = 0.0;  // no interior states
  return out;
}

}  // namespace cpfs
