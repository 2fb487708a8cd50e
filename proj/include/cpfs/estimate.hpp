#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "cpfs/exact.hpp"
#include "cpfs/process.hpp"
#include "cpfs/tree.hpp"

namespace cpfs {

// Inverse standard normal CDF (Acklam's rational approximation, |err| < 1.2e-9).
inline double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probit: p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

// Wilson score interval for a binomial proportion.
inline std::pair<double, double> wilson_interval(uint64_t successes, uint64_t n,
                                                 double level) {
  if (n < 1) throw std::invalid_argument("wilson_interval: n >= 1");
  if (successes > n) throw std::invalid_argument("wilson_interval: successes <= n");
  double z = probit(0.5 + level / 2.0);
  double nn = static_cast<double>(n);
  double phat = static_cast<double>(successes) / nn;
  double z2 = z * z;
  double denom = 1.0 + z2 / nn;
  double center = (phat + z2 / (2.0 * nn)) / denom;
  double half = z / denom * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct MCEstimate {
  uint64_t n = 0;           // trials contributing to the point estimate
  double sum = 0.0;         // successes (proportions) or sum of values (means)
  double point = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double level = 0.99;
  uint64_t censored = 0;    // trials reported separately, see each estimator
  uint64_t master_seed = 0;
};

inline MCEstimate proportion_estimate(uint64_t successes, uint64_t n, double level,
                                      uint64_t censored, uint64_t seed) {
  MCEstimate e;
  e.n = n;
  e.sum = static_cast<double>(successes);
  e.point = n ? static_cast<double>(successes) / static_cast<double>(n) : 0.0;
  if (n) std::tie(e.ci_lo, e.ci_hi) = wilson_interval(successes, n, level);
  e.level = level;
  e.censored = censored;
  e.master_seed = seed;
  return e;
}

// Normal-approximation interval for a mean.
inline MCEstimate mean_estimate(double sum, double sumsq, uint64_t n, double level,
                                uint64_t censored, uint64_t seed) {
  MCEstimate e;
  e.n = n;
  e.sum = sum;
  e.level = level;
  e.censored = censored;
  e.master_seed = seed;
  if (n == 0) return e;
  double nn = static_cast<double>(n);
  e.point = sum / nn;
  double var = std::max(0.0, sumsq / nn - e.point * e.point);
  double half = probit(0.5 + level / 2.0) * std::sqrt(var / nn);
  e.ci_lo = e.point - half;
  e.ci_hi = e.point + half;
  return e;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    double fa = static_cast<double>(i) / static_cast<double>(a.size());
    double fb = static_cast<double>(j) / static_cast<double>(b.size());
    d = std::max(d, std::abs(fa - fb));
  }
  return d;
}

inline double ks_critical(size_t n, size_t m, double alpha) {
  double c;
  if (alpha <= 0.001)
    c = 1.95;
  else if (alpha <= 0.01)
    c = 1.628;
  else if (alpha <= 0.05)
    c = 1.358;
  else
    c = 1.224;
  return c * std::sqrt(static_cast<double>(n + m) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

// Runs n independent trials with per-trial streams derived from
// (master_seed, stream_base + index). Results land in index order, so the
// reduction is identical at any job count.
template <class R, class MakeWorker>
std::vector<R> run_trials(uint64_t n, uint64_t master_seed, uint64_t stream_base,
                          int jobs, MakeWorker&& make_worker) {
  std::vector<R> results(n);
  if (jobs <= 1) {
    auto worker = make_worker();
    for (uint64_t i = 0; i < n; ++i) {
      RandomStream rng(master_seed, stream_base + i);
      results[i] = worker(i, rng);
    }
    return results;
  }
  std::atomic<uint64_t> next{0};
  std::vector<std::thread> pool;
  const uint64_t chunk = 64;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t]() {
      auto worker = make_worker();
      while (true) {
        uint64_t start = next.fetch_add(chunk);
        if (start >= n) break;
        uint64_t stop = std::min(n, start + chunk);
        for (uint64_t i = start; i < stop; ++i) {
          RandomStream rng(master_seed, stream_base + i);
          results[i] = worker(i, rng);
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  return results;
}

// Order-independent sum (results are reduced in trial order).
inline double neumaier_sum(std::span<const double> xs) {
  double sum = 0.0, comp = 0.0;
  for (double x : xs) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

struct SurvivalOptions {
  double horizon = 50.0;
  uint64_t trials = 10000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  size_t max_vertices = 100000;
  uint64_t event_cap = 1u << 26;
  double level = 0.99;
};

struct SurvivalResult {
  MCEstimate estimate;
  uint64_t survived_censored = 0;  // budget hit with the infection alive
  bool subcritical_warning = false;
};

namespace detail {

enum class TrialOutcome : uint8_t { died, alive_at_horizon, budget_censored };

template <class G>
TrialOutcome survival_trial(Simulator& sim, const G& growth, double lambda,
                            double horizon, RandomStream& rng) {
  WeightedTree seed = make_lazy_seed(*growth.fitness, rng);
  ProcessParams params;
  params.lambda = lambda;
  params.time_horizon = horizon;
  int32_t root = 0;
  try {
    SimResult r = sim.run(seed, params, std::span<const int32_t>(&root, 1), rng, &growth);
    if (!r.obs.censored) return TrialOutcome::died;
    return r.final_infected.empty() ? TrialOutcome::died : TrialOutcome::alive_at_horizon;
  } catch (const VertexBudgetError&) {
    return TrialOutcome::budget_censored;
  }
}

}  // namespace detail

/// P(X_T != 0) from a single infected root on a lazily grown tree. Trials
/// that exhaust the vertex budget while the infection is alive are recorded
/// as survived-censored: they count as survival and the count is reported so
/// downstream consumers can exclude them.
inline SurvivalResult estimate_survival(const OffspringDist& offspring,
                                        const FitnessDist& fitness, double lambda,
                                        const SurvivalOptions& opt) {
  GrowthSpec growth{&offspring, &fitness, opt.max_vertices};
  auto outcomes = run_trials<detail::TrialOutcome>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t, RandomStream& rng) {
          return detail::survival_trial(*sim, growth, lambda, opt.horizon, rng);
        };
      });
  uint64_t survived = 0, censored = 0;
  for (auto o : outcomes) {
    if (o == detail::TrialOutcome::budget_censored) {
      ++censored;
      ++survived;
    } else if (o == detail::TrialOutcome::alive_at_horizon) {
      ++survived;
    }
  }
  SurvivalResult res;
  res.estimate =
      proportion_estimate(survived, opt.trials, opt.level, censored, opt.master_seed);
  res.survived_censored = censored;
  res.subcritical_warning = offspring.mean() <= 1.0;
  return res;
}

struct ReinfectionResult {
  MCEstimate estimate;
  uint64_t truncated = 0;  // trials that ran on a budget-truncated tree
  bool subcritical_warning = false;
};

/// P(rho in X_T): success is the root being infected exactly at time T.
/// Trials that outgrow the vertex budget continue on the realized tree, so
/// the estimate is a lower bound on the infinite-tree quantity (restriction
/// to a subtree only removes infection); the truncated count is reported.
inline ReinfectionResult estimate_root_reinfection(const OffspringDist& offspring,
                                                   const FitnessDist& fitness,
                                                   double lambda,
                                                   const SurvivalOptions& opt) {
  GrowthSpec growth{&offspring, &fitness, opt.max_vertices, true};
  struct Out {
    uint8_t hit = 0, truncated = 0;
  };
  auto outcomes = run_trials<Out>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t, RandomStream& rng) -> Out {
          WeightedTree seed = make_lazy_seed(fitness, rng);
          ProcessParams params;
          params.lambda = lambda;
          params.time_horizon = opt.horizon;
          params.event_cap = opt.event_cap;
          int32_t root = 0;
          SimResult r =
              sim->run(seed, params, std::span<const int32_t>(&root, 1), rng, &growth);
          Out o;
          o.truncated = r.obs.growth_truncated ? 1 : 0;
          // an event-cap censor ends before T; counting it as a miss keeps
          // the lower-bound reading
          if (r.obs.censored && r.final_time >= opt.horizon)
            o.hit = std::binary_search(r.final_infected.begin(),
                                       r.final_infected.end(), 0)
                        ? 1
                        : 0;
          return o;
        };
      });
  uint64_t hits = 0, truncated = 0;
  for (auto o : outcomes) {
    hits += o.hit;
    truncated += o.truncated;
  }
  ReinfectionResult res;
  res.truncated = truncated;
  res.estimate =
      proportion_estimate(hits, opt.trials, opt.level, truncated, opt.master_seed);
  res.subcritical_warning = offspring.mean() <= 1.0;
  return res;
}

struct DepthTailOptions {
  std::vector<int> h_grid;
  uint64_t trials = 100000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  double level = 0.99;
  uint64_t event_cap = 1u << 26;
};

struct DepthTailResult {
  std::vector<int> h_grid;
  std::vector<MCEstimate> tail;  // P(H >= h) per grid entry
  double log_slope = std::numeric_limits<double>::quiet_NaN();
  bool slope_valid = false;
  bool lambda_warning = false;  // the regime of interest is small lambda
};

/// Depth-tail experiment on a fixed tree: excursions of the permanently
/// rooted chain from 1_rho, recording the maximal depth H (measured from
/// rho+). Fits the log-tail slope over grid points with at least 10 hits.
template <class TreeProvider>
DepthTailResult estimate_depth_tail(TreeProvider&& make_tree, double lambda,
                                    const DepthTailOptions& opt) {
  auto depths = run_trials<int32_t>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t trial, RandomStream& rng) -> int32_t {
          // providers may return by const reference to skip the copy
          decltype(auto) tree = make_tree(trial, rng);
          ProcessParams params;
          params.lambda = lambda;
          params.variant = Variant::extra_root_permanent;
          params.event_cap = opt.event_cap;
          int32_t root = tree.root;
          SimResult r =
              sim->run(tree, params, std::span<const int32_t>(&root, 1), rng, nullptr);
          return r.obs.max_depth;
        };
      });
  DepthTailResult res;
  res.h_grid = opt.h_grid;
  res.lambda_warning = lambda > 1.0;
  std::vector<double> xs, ys;
  for (int h : opt.h_grid) {
    uint64_t hits = 0;
    for (int32_t d : depths) hits += d >= h;
    res.tail.push_back(
        proportion_estimate(hits, opt.trials, opt.level, 0, opt.master_seed));
    if (hits >= 10) {
      xs.push_back(static_cast<double>(h));
      ys.push_back(std::log(static_cast<double>(hits) / static_cast<double>(opt.trials)));
    }
  }
  if (xs.size() >= 2) {
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      mx += xs[i];
      my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double num = 0, den = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
      num += (xs[i] - mx) * (ys[i] - my);
      den += (xs[i] - mx) * (xs[i] - mx);
    }
    if (den > 0) {
      res.log_slope = num / den;
      res.slope_valid = true;
    }
  }
  return res;
}

}  // namespace cpfs
