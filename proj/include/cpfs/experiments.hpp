#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "cpfs/bounds.hpp"
#include "cpfs/coupling.hpp"
#include "cpfs/estimate.hpp"
#include "cpfs/process.hpp"
#include "cpfs/tree.hpp"
#include "cpfs/ychain.hpp"

namespace cpfs {

// ---------------------------------------------------------------------------
// Star hitting (level-L before extinction, and before time 1)

struct StarOptions {
  double lambda = 1.0;
  double f = 8.0;
  int64_t k = 512;
  double eps = 0.1;
  double cap = 100.0;         // simulated window; the full horizon S is usually huge
  bool start_at_L = false;    // (L,1) start instead of (0,1)
  uint64_t trials = 10000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  double level = 0.99;
  BoundParams consts;
};

struct StarHittingResult {
  int64_t L = 0;
  MCEstimate p_level_after_death;  // P(T_L > T_{0,0})
  MCEstimate p_level_after_one;    // P(T_L > 1)
  double mean_t_level = 0.0;       // mean T_L over trials that reached L
  double bound_level_vs_death = 0.0;  // c/(lambda f k^{1/3})
  double bound_level_vs_one = 0.0;    // c_hat1/(lambda f) + c/(lambda f k^{1/3})
  bool small_regime = false;       // f or k below the working thresholds
};

namespace detail {

struct StarTrialOut {
  uint8_t hit_before_death = 0;
  double t_hit = std::numeric_limits<double>::infinity();
};

// Leaf/total infection counters driven by simulator events. Leaves are the
// depth-1 vertices of the star.
struct StarCounter {
  const WeightedTree* tree;
  int64_t leaves = 0;
  int64_t all = 0;

  void apply(const SimEvent& ev) {
    int delta = ev.kind == EventKind::infect ? 1 : -1;
    all += delta;
    if (tree->depth[static_cast<size_t>(ev.vertex)] == 1) leaves += delta;
  }
};

}  // namespace detail

/// Level-hitting experiment on the comparison star (root fitness f, leaves
/// fitness 1) started from the root only; reports the probabilities that the
/// infected leaf count fails to reach L before extinction and before time 1,
/// next to the closed-form bounds evaluated with surrogate constants.
inline StarHittingResult star_hitting_experiment(const StarOptions& opt) {
  const int64_t L = compute_L(opt.lambda, opt.f, opt.k);
  WeightedTree star = make_star(static_cast<int>(opt.k), opt.f, 1.0);

  auto outs = run_trials<detail::StarTrialOut>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t, RandomStream& rng) {
          detail::StarTrialOut out;
          ProcessParams params;
          params.lambda = opt.lambda;
          detail::StarCounter counter{&star};
          counter.all = 1;  // the root seed
          bool done = false;
          double t_hit = std::numeric_limits<double>::infinity();
          // stop at the first time the leaf count reaches L, or at extinction
          int32_t root = 0;
          sim->run(star, params, std::span<const int32_t>(&root, 1), rng, nullptr,
                   [&](const SimEvent& ev) {
                     counter.apply(ev);
                     if (counter.leaves >= L) {
                       done = true;
                       t_hit = ev.time;
                     }
                     return done;
                   });
          out.hit_before_death = done ? 1 : 0;
          out.t_hit = t_hit;
          return out;
        };
      });

  uint64_t miss_death = 0, miss_one = 0, hits = 0;
  double sum_t = 0.0;
  for (auto& o : outs) {
    if (!o.hit_before_death) ++miss_death;
    if (!(o.hit_before_death && o.t_hit <= 1.0)) ++miss_one;
    if (o.hit_before_death) {
      ++hits;
      sum_t += o.t_hit;
    }
  }
  StarHittingResult res;
  res.L = L;
  res.p_level_after_death =
      proportion_estimate(miss_death, opt.trials, opt.level, 0, opt.master_seed);
  res.p_level_after_one =
      proportion_estimate(miss_one, opt.trials, opt.level, 0, opt.master_seed);
  res.mean_t_level = hits ? sum_t / static_cast<double>(hits) : 0.0;
  double lf = opt.lambda * opt.f;
  res.bound_level_vs_death =
      opt.consts.c / (lf * std::cbrt(static_cast<double>(opt.k)));
  res.bound_level_vs_one = opt.consts.c_hat1 / lf + res.bound_level_vs_death;
  res.small_regime = opt.f < 8.0 / opt.lambda || opt.k < 64;
  return res;
}

// ---------------------------------------------------------------------------
// Star persistence: infimum of the infected count over a time window,
// from the root-only start or from (L,1)

struct StarPersistenceResult {
  int64_t L = 0;
  double eps_level = 0.0;       // eps * L
  double log_S = 0.0;           // log of the full persistence horizon S
  double window = 0.0;          // horizon actually simulated: min(cap, S)
  MCEstimate failure_leaves;    // inf over [1, window] of |Lambda_t| <= eps L
  MCEstimate failure_all;       // inf over [0, window] of |X_t| <= eps L
  double kernel_bound = 0.0;    // (3 + lambda f)(1 + lambda f/2)^{-eps L}
  double r_bound = 0.0;         // R(f, k, lambda) with surrogates
  bool kernel_vacuous = false;
  bool r_vacuous = false;
  bool precondition_stress = false;  // eps near 1/2 or small star
};

inline StarPersistenceResult star_persistence_experiment(const StarOptions& opt) {
  if (!(opt.eps > 0.0 && opt.eps < 0.5))
    throw std::invalid_argument("persistence: eps must be in (0, 1/2)");
  const int64_t L = compute_L(opt.lambda, opt.f, opt.k);
  const double eps_level = opt.eps * static_cast<double>(L);
  WeightedTree star = make_star(static_cast<int>(opt.k), opt.f, 1.0);
  const double log_s = compute_log_S(opt.lambda, opt.f, opt.k, opt.eps);
  const double window =
      log_s > std::log(opt.cap) ? opt.cap : std::min(opt.cap, std::exp(log_s));

  std::vector<int32_t> initial{0};
  if (opt.start_at_L)
    for (int64_t i = 1; i <= L; ++i) initial.push_back(static_cast<int32_t>(i));

  struct Out {
    uint8_t fail_leaves, fail_all;
  };
  auto outs = run_trials<Out>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t, RandomStream& rng) {
          ProcessParams params;
          params.lambda = opt.lambda;
          params.time_horizon = window;
          detail::StarCounter counter{&star};
          counter.all = static_cast<int64_t>(initial.size());
          counter.leaves = static_cast<int64_t>(initial.size()) - 1;
          double prev_t = 0.0;
          int64_t inf_leaves_after_1 = std::numeric_limits<int64_t>::max();
          int64_t inf_all = std::numeric_limits<int64_t>::max();
          auto note_segment = [&](double from, double to) {
            if (to > from) {
              inf_all = std::min(inf_all, counter.all);
              if (to > 1.0 && from < window)
                if (std::max(from, 1.0) < to)
                  inf_leaves_after_1 = std::min(inf_leaves_after_1, counter.leaves);
            }
          };
          // counters reflect state on [prev_t, ev.time); fold each segment in
          SimResult r = sim->run(star, params, initial, rng, nullptr,
                                 [&](const SimEvent& ev) {
                                   note_segment(prev_t, ev.time);
                                   counter.apply(ev);
                                   prev_t = ev.time;
                                 });
          note_segment(prev_t, r.final_time);
          // closed right end: the state at the window end counts too
          inf_all = std::min(inf_all, counter.all);
          if (r.final_time >= 1.0)
            inf_leaves_after_1 = std::min(inf_leaves_after_1, counter.leaves);
          Out o;
          o.fail_leaves = inf_leaves_after_1 <= static_cast<int64_t>(eps_level) ? 1 : 0;
          o.fail_all = inf_all <= static_cast<int64_t>(eps_level) ? 1 : 0;
          return o;
        };
      });

  uint64_t fl = 0, fa = 0;
  for (auto& o : outs) {
    fl += o.fail_leaves;
    fa += o.fail_all;
  }
  StarPersistenceResult res;
  res.L = L;
  res.eps_level = eps_level;
  res.log_S = log_s;
  res.window = window;
  res.failure_leaves =
      proportion_estimate(fl, opt.trials, opt.level, 0, opt.master_seed);
  res.failure_all = proportion_estimate(fa, opt.trials, opt.level, 0, opt.master_seed);
  res.kernel_bound = persistence_kernel_bound(opt.lambda, opt.f, opt.k, opt.eps);
  res.r_bound = compute_R(opt.f, opt.k, opt.lambda, opt.consts);
  res.kernel_vacuous = res.kernel_bound >= 1.0;
  res.r_vacuous = res.r_bound >= 1.0;
  res.precondition_stress = opt.eps > 0.45 || opt.k < 64 || opt.f < 8.0 / opt.lambda;
  return res;
}

// ---------------------------------------------------------------------------
// Path transmission

struct PathTransmissionOptions {
  double lambda = 1.0;
  std::vector<double> fitness;  // length r+1 for a path v_0..v_r
  uint64_t trials = 100000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  double level = 0.99;
  BoundParams consts;
};

struct PathTransmissionResult {
  MCEstimate p_relay;           // P(B): each v_{i-1} infects v_i before recovering
  double exact_product = 0.0;   // prod lambda F F / (1 + lambda F F)
  MCEstimate p_relay_in_time;   // P(B and T <= 2r)
  MCEstimate p_hit_by_2r;       // P(v_r infected at some time <= 2r)
  uint64_t containment_violations = 0;  // (B and T<=2r) without a hit by 2r
  double transmission_lower_bound = 0.0;  // (1 - e^{-gamma r}) * product
};

/// Full-clock simulation of the path: recovery marks and both arrow
/// directions are generated regardless of state, which is what makes the
/// sequential relay event B observable with its exact product probability.
inline PathTransmissionResult path_transmission_experiment(
    const PathTransmissionOptions& opt) {
  const size_t n = opt.fitness.size();
  if (n < 2) throw std::invalid_argument("path: need r >= 1 (two vertices)");
  for (double f : opt.fitness)
    if (f < 1.0) throw std::invalid_argument("path: fitness below 1");
  const int r = static_cast<int>(n) - 1;
  const double horizon_b = 2.0 * r + 1000.0;  // safety cap for resolving B

  struct Out {
    uint8_t b = 0, b_in_time = 0, hit = 0, violation = 0;
  };
  auto outs = run_trials<Out>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        return [&](uint64_t, RandomStream& rng) {
          std::vector<double> arrow(2 * (n - 1));  // (i->i+1), (i+1->i) pairs
          double arrow_total = 0.0;
          for (size_t i = 0; i + 1 < n; ++i) {
            double rate = opt.lambda * opt.fitness[i] * opt.fitness[i + 1];
            arrow[2 * i] = rate;
            arrow[2 * i + 1] = rate;
            arrow_total += 2.0 * rate;
          }
          const double total = static_cast<double>(n) + arrow_total;
          std::vector<uint8_t> infected(n, 0);
          infected[0] = 1;
          int stage = 1;  // waiting for v_{stage-1} to infect v_stage
          bool b_resolved = false, b_success = false;
          double t_relay = std::numeric_limits<double>::infinity();
          bool hit = false;
          double time = 0.0;
          while (true) {
            if (b_resolved && time > 2.0 * r) break;
            if (time > horizon_b) break;
            time += rng.exponential(total);
            double u = rng.uniform() * total;
            if (u < static_cast<double>(n)) {
              size_t v = static_cast<size_t>(rng.pick(n));
              if (!b_resolved && v == static_cast<size_t>(stage - 1)) {
                b_resolved = true;  // relay source recovered first
              }
              infected[v] = 0;
            } else {
              u -= static_cast<double>(n);
              size_t e = 0;
              while (e + 1 < arrow.size() && u >= arrow[e]) {
                u -= arrow[e];
                ++e;
              }
              size_t from = e / 2 + (e % 2);
              size_t to = e % 2 ? e / 2 : e / 2 + 1;
              if (!b_resolved && from == static_cast<size_t>(stage - 1) &&
                  to == static_cast<size_t>(stage)) {
                ++stage;
                if (stage > r) {
                  b_resolved = true;
                  b_success = true;
                  t_relay = time;
                }
              }
              if (infected[from] && !infected[to]) {
                infected[to] = 1;
                if (to == n - 1 && time <= 2.0 * r) hit = true;
              }
            }
          }
          Out o;
          o.b = b_success ? 1 : 0;
          o.b_in_time = (b_success && t_relay <= 2.0 * r) ? 1 : 0;
          o.hit = hit ? 1 : 0;
          o.violation = (o.b_in_time && !o.hit) ? 1 : 0;
          return o;
        };
      });

  uint64_t b = 0, bt = 0, hits = 0, viol = 0;
  for (auto& o : outs) {
    b += o.b;
    bt += o.b_in_time;
    hits += o.hit;
    viol += o.violation;
  }
  PathTransmissionResult res;
  res.p_relay = proportion_estimate(b, opt.trials, opt.level, 0, opt.master_seed);
  res.p_relay_in_time =
      proportion_estimate(bt, opt.trials, opt.level, 0, opt.master_seed);
  res.p_hit_by_2r = proportion_estimate(hits, opt.trials, opt.level, 0, opt.master_seed);
  res.containment_violations = viol;
  res.exact_product = 1.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    double lff = opt.lambda * opt.fitness[i] * opt.fitness[i + 1];
    res.exact_product *= lff / (1.0 + lff);
  }
  res.transmission_lower_bound =
      (1.0 - std::exp(-opt.consts.gamma * r)) * res.exact_product;
  return res;
}

// ---------------------------------------------------------------------------
// Star plus path relay

struct RelayOptions {
  double lambda = 1.0;
  double f = 8.0;
  int64_t k = 64;
  int r = 3;
  double cap = 200.0;
  uint64_t trials = 2000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  double level = 0.99;
  BoundParams consts;
};

struct RelayResult {
  int64_t L = 0;
  double window = 0.0;
  MCEstimate never_infected;  // P(u_r not infected during [0, window])
  double bound = 0.0;         // (1 - Chat lhat^r)^{window/(2r+1)} + R
  bool bound_vacuous = false;
};

/// Star with a path joined to one leaf: F_rho = f, F_{u_r} = f, everything
/// else fitness 1; failure is the path tip never getting infected inside the
/// simulated window.
inline RelayResult star_path_relay_experiment(const RelayOptions& opt) {
  if (opt.r < 1) throw std::invalid_argument("relay: r >= 1");
  std::vector<double> path_fitness(static_cast<size_t>(opt.r), 1.0);
  path_fitness.back() = opt.f;
  WeightedTree graph = make_star_with_path(static_cast<int>(opt.k), opt.r, opt.f,
                                           path_fitness);
  const int32_t target = opt.r == 1
                             ? 1
                             : static_cast<int32_t>(opt.k + opt.r - 1);
  const double log_s =
      compute_log_S(opt.lambda, opt.f, opt.k, opt.consts.eps);
  const double window =
      log_s > std::log(opt.cap) ? opt.cap : std::min(opt.cap, std::exp(log_s));

  auto outs = run_trials<uint8_t>(
      opt.trials, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        auto sim = std::make_shared<Simulator>();
        return [&, sim](uint64_t, RandomStream& rng) -> uint8_t {
          ProcessParams params;
          params.lambda = opt.lambda;
          params.time_horizon = window;
          bool reached = false;
          int32_t root = 0;
          sim->run(graph, params, std::span<const int32_t>(&root, 1), rng, nullptr,
                   [&](const SimEvent& ev) {
                     if (ev.kind == EventKind::infect && ev.vertex == target)
                       reached = true;
                     return reached;
                   });
          return reached ? 0 : 1;
        };
      });
  uint64_t misses = 0;
  for (auto o : outs) misses += o;
  RelayResult res;
  res.L = compute_L(opt.lambda, opt.f, opt.k);
  res.window = window;
  res.never_infected =
      proportion_estimate(misses, opt.trials, opt.level, 0, opt.master_seed);
  res.bound = relay_bound(opt.lambda, opt.f, opt.k, opt.r, window, opt.consts);
  res.bound_vacuous = res.bound >= 1.0;
  return res;
}

// ---------------------------------------------------------------------------
// Good vertices (Section 6 counting)

/// Exact per-generation counts of vertices with fitness >= f and exactly k
/// children. Requires a fully expanded tree.
inline std::vector<int64_t> count_good_vertices(const WeightedTree& tree, double f,
                                                int64_t k) {
  if (tree.frontier_count() > 0)
    throw std::invalid_argument(
        "count_good_vertices: tree has unexpanded frontier vertices");
  std::vector<int64_t> counts(static_cast<size_t>(tree.height()) + 1, 0);
  for (size_t v = 0; v < tree.size(); ++v) {
    if (static_cast<int32_t>(v) == tree.extra_root) continue;
    if (tree.fitness[v] >= f &&
        static_cast<int64_t>(tree.children[v].size()) == k)
      counts[static_cast<size_t>(tree.depth[v])] += 1;
  }
  return counts;
}

struct GoodVerticesOptions {
  double f = 2.0;
  int64_t k = 3;
  int generation = 5;
  int max_gen = 6;
  uint64_t trees = 10000;
  uint64_t master_seed = 1;
  uint64_t stream_base = 0;
  int jobs = 1;
  double level = 0.99;
  size_t max_vertices = 2000000;
};

struct GoodVerticesResult {
  MCEstimate mean_count;   // J_r averaged over trees with a k-child root
  double exact_mean = 0.0;  // k mu^{r-1} P(xi = k) P(F >= f) for r >= 1
};

/// Mean number of good vertices in one generation, over trees conditioned on
/// the root having exactly k children (the conditioning the counting argument
/// uses); the comparison value k mu^{r-1} P(xi=k) P(F>=f) is then an equality.
inline GoodVerticesResult estimate_good_vertices(const OffspringDist& offspring,
                                                 const FitnessDist& fitness,
                                                 const GoodVerticesOptions& opt) {
  if (opt.generation < 1 || opt.generation > opt.max_gen)
    throw std::invalid_argument("good vertices: need 1 <= generation <= max_gen");
  auto counts = run_trials<double>(
      opt.trees, opt.master_seed, opt.stream_base, opt.jobs, [&]() {
        return [&](uint64_t, RandomStream& rng) -> double {
          // root forced to k children, generations below sampled normally
          WeightedTree tree;
          tree.add_vertex(-1, sample_fitness(fitness, rng), 0, false);
          for (int64_t i = 0; i < opt.k; ++i)
            tree.add_vertex(0, sample_fitness(fitness, rng), 1, false);
          size_t next = 1;
          while (next < tree.size()) {
            size_t v = next++;
            if (tree.depth[v] >= opt.max_gen) continue;
            uint64_t c = offspring.sample(rng);
            if (tree.size() + c > opt.max_vertices)
              throw VertexBudgetError(tree.size() + c, opt.max_vertices);
            for (uint64_t i = 0; i < c; ++i)
              tree.add_vertex(static_cast<int32_t>(v), sample_fitness(fitness, rng),
                              tree.depth[v] + 1, false);
          }
          auto j = count_good_vertices(tree, opt.f, opt.k);
          size_t r = static_cast<size_t>(opt.generation);
          return r < j.size() ? static_cast<double>(j[r]) : 0.0;
        };
      });
  double sum = neumaier_sum(counts);
  double sumsq = 0.0;
  for (double c : counts) sumsq += c * c;
  GoodVerticesResult res;
  res.mean_count =
      mean_estimate(sum, sumsq, opt.trees, opt.level, 0, opt.master_seed);
  res.exact_mean = static_cast<double>(opt.k) *
                   std::pow(offspring.mean(), opt.generation - 1) *
                   offspring.pmf(static_cast<uint64_t>(opt.k)) *
                   fitness.tail(opt.f);
  return res;
}

}  // namespace cpfs
