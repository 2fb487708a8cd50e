#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cpfs/process.hpp"
#include "cpfs/tree.hpp"

namespace cpfs {

// One process layer riding the shared graphical representation. Layers must
// be ordered so that every edge rate is dominated by the top layer's rate.
struct CoupleLayer {
  double lambda = 1.0;
  std::vector<double> fitness;  // per vertex; empty = use the tree's fitness
};

struct IgnoredRecoveries {
  int32_t vertex = -1;
  std::vector<std::pair<double, double>> intervals;  // finite union, half-open

  bool covers(double t) const {
    for (auto& [a, b] : intervals)
      if (t >= a && t < b) return true;
    return false;
  }
};

struct CoupledOutcome {
  std::vector<Observables> layers;
  uint64_t violations = 0;  // subset-order failures observed at event sites
  bool budget_exhausted = false;  // lazy growth hit the vertex budget
  std::vector<uint8_t> root_infected;  // per layer, at the final time
};

// Fitness sampling contract under lazy growth: either all layers share one
// distribution (one draw, broadcast) or per-layer draws must come out
// ordered; anything else breaks edgewise rate dominance and is an error.
struct CoupledGrowth {
  const OffspringDist* offspring = nullptr;
  std::vector<const FitnessDist*> fitness;  // one per layer, may alias
  size_t max_vertices = 1000000;
};

// Drives several contact processes from one graphical representation:
// recovery marks at rate 1 on every vertex, infection arrows per directed
// edge at the top layer's rate, thinned for lower layers with a shared
// uniform. Lower layers stay subsets of higher ones; the violation counter
// re-checks that at every event site rather than trusting the construction.
class GraphicalCoupler {
 public:
  CoupledOutcome run(const WeightedTree& base, std::span<const CoupleLayer> layers,
                     std::span<const int32_t> initial, double horizon,
                     RandomStream& rng, const CoupledGrowth* growth = nullptr,
                     const IgnoredRecoveries* ignored = nullptr,
                     uint64_t event_cap = 1u << 30) {
    if (layers.empty()) throw std::invalid_argument("coupling: no layers");
    if (base.has_extra_root())
      throw std::invalid_argument("coupling: extra-root variants not supported here");
    tree_ = base;
    n_layers_ = layers.size();
    fitness_.assign(n_layers_, {});
    lambda_.resize(n_layers_);
    for (size_t j = 0; j < n_layers_; ++j) {
      lambda_[j] = layers[j].lambda;
      fitness_[j] = layers[j].fitness.empty() ? tree_.fitness : layers[j].fitness;
      if (fitness_[j].size() != tree_.size())
        throw std::invalid_argument("coupling: fitness vector length mismatch");
    }
    validate_dominance();

    infected_.assign(n_layers_, std::vector<uint8_t>(tree_.size(), 0));
    active_count_.assign(n_layers_, 0);
    CoupledOutcome out;
    out.layers.assign(n_layers_, Observables{});

    edges_.clear();
    edge_weight_.reset(16);
    for (size_t v = 0; v < tree_.size(); ++v)
      for (int32_t c : tree_.children[v]) add_edge_pair(static_cast<int32_t>(v), c);

    double time = 0.0;
    for (int32_t v : initial) {
      if (growth != nullptr && tree_.frontier[static_cast<size_t>(v)])
        expand(v, rng, growth);
      for (size_t j = 0; j < n_layers_; ++j) set_infected(j, v, out.layers[j]);
    }
    for (size_t j = 0; j < n_layers_; ++j) out.layers[j].root_reinfections = 0;

    uint64_t events = 0;
    while (true) {
      if (alive_layers() == 0) break;
      double rec_rate = static_cast<double>(tree_.size());
      double arr_rate = edge_weight_.total();
      double total = rec_rate + arr_rate;
      time += rng.exponential(total);
      if (time > horizon) {
        for (size_t j = 0; j < n_layers_; ++j)
          if (active_count_[j] > 0) out.layers[j].censored = true;
        time = horizon;
        break;
      }
      ++events;
      if (rng.uniform() * total < rec_rate) {
        int32_t v = static_cast<int32_t>(rng.pick(tree_.size()));
        for (size_t j = 0; j < n_layers_; ++j) {
          if (!infected_[j][static_cast<size_t>(v)]) continue;
          if (ignored != nullptr && j + 1 == n_layers_ && v == ignored->vertex &&
              ignored->covers(time))
            continue;  // modified layer drops this recovery mark
          clear_infected(j, v, time, out.layers[j]);
        }
        out.violations += check_site(v);
      } else {
        size_t e = edge_weight_.sample(rng.uniform() * arr_rate);
        auto [u, v] = edges_[e];
        double top = edge_rate(n_layers_ - 1, u, v);
        double uni = rng.uniform();
        auto accepts = [&](size_t j) {
          return uni * top < edge_rate(j, u, v) &&
                 infected_[j][static_cast<size_t>(u)] &&
                 !infected_[j][static_cast<size_t>(v)];
        };
        bool any = false;
        for (size_t j = 0; j < n_layers_ && !any; ++j) any = accepts(j);
        if (any && growth != nullptr && tree_.frontier[static_cast<size_t>(v)]) {
          try {
            expand(v, rng, growth);
          } catch (const VertexBudgetError&) {
            out.budget_exhausted = true;
            for (size_t j = 0; j < n_layers_; ++j)
              if (active_count_[j] > 0) out.layers[j].censored = true;
            break;
          }
        }
        for (size_t j = 0; j < n_layers_; ++j)
          if (accepts(j)) set_infected(j, v, out.layers[j]);
        out.violations += check_site(v);
      }
      for (size_t j = 0; j < n_layers_; ++j) {
        Observables& o = out.layers[j];
        o.event_count = events;
        if (active_count_[j] == 0 && std::isnan(o.extinction_time))
          o.extinction_time = time;
      }
      if (events >= event_cap) {
        for (size_t j = 0; j < n_layers_; ++j)
          if (active_count_[j] > 0) out.layers[j].censored = true;
        break;
      }
    }
    out.root_infected.resize(n_layers_);
    for (size_t j = 0; j < n_layers_; ++j) {
      out.layers[j].end_time = time;
      out.root_infected[j] = infected_[j][static_cast<size_t>(tree_.root)];
    }
    return out;
  }

 private:
  double edge_rate(size_t layer, int32_t u, int32_t v) const {
    return lambda_[layer] * fitness_[layer][static_cast<size_t>(u)] *
           fitness_[layer][static_cast<size_t>(v)];
  }

  void validate_dominance() const {
    for (size_t v = 0; v < tree_.size(); ++v)
      for (int32_t c : tree_.children[v])
        for (size_t j = 0; j + 1 < n_layers_; ++j)
          if (edge_rate(j, static_cast<int32_t>(v), c) >
              edge_rate(j + 1, static_cast<int32_t>(v), c) * (1.0 + 1e-12))
            throw std::invalid_argument(
                "coupling: edge rate dominance violated between layers");
  }

  void add_edge_pair(int32_t u, int32_t v) {
    edge_weight_.ensure(edges_.size() + 2);
    edges_.emplace_back(u, v);
    edge_weight_.set(edges_.size() - 1, edge_rate(n_layers_ - 1, u, v));
    edges_.emplace_back(v, u);
    edge_weight_.set(edges_.size() - 1, edge_rate(n_layers_ - 1, v, u));
  }

  void expand(int32_t v, RandomStream& rng, const CoupledGrowth* growth) {
    size_t before = tree_.size();
    uint64_t count = growth->offspring->sample(rng);
    if (before + count > growth->max_vertices)
      throw VertexBudgetError(before + count, growth->max_vertices);
    tree_.frontier[static_cast<size_t>(v)] = 0;
    for (uint64_t i = 0; i < count; ++i) {
      int32_t c = tree_.add_vertex(v, 1.0, tree_.depth[static_cast<size_t>(v)] + 1, true);
      double shared = std::numeric_limits<double>::quiet_NaN();
      double prev = 0.0;
      for (size_t j = 0; j < n_layers_; ++j) {
        double f;
        if (growth->fitness[j] == growth->fitness[0] && j > 0) {
          f = shared;
        } else {
          f = sample_fitness(*growth->fitness[j], rng);
          shared = f;
        }
        if (f < prev)
          throw std::invalid_argument(
              "coupling: lazy fitness draws came out unordered across layers");
        prev = f;
        fitness_[j].push_back(f);
      }
      tree_.fitness[static_cast<size_t>(c)] = fitness_[n_layers_ - 1].back();
      for (size_t j = 0; j < n_layers_; ++j) infected_[j].push_back(0);
      add_edge_pair(v, c);
    }
  }

  void set_infected(size_t layer, int32_t v, Observables& obs) {
    size_t vi = static_cast<size_t>(v);
    if (infected_[layer][vi]) return;
    infected_[layer][vi] = 1;
    active_count_[layer] += 1;
    if (tree_.depth[vi] > obs.max_depth) obs.max_depth = tree_.depth[vi];
    if (v == tree_.root) ++obs.root_reinfections;
  }

  void clear_infected(size_t layer, int32_t v, double, Observables&) {
    size_t vi = static_cast<size_t>(v);
    infected_[layer][vi] = 0;
    active_count_[layer] -= 1;
  }

  uint64_t check_site(int32_t v) const {
    uint64_t bad = 0;
    size_t vi = static_cast<size_t>(v);
    for (size_t j = 0; j + 1 < n_layers_; ++j)
      if (infected_[j][vi] > infected_[j + 1][vi]) ++bad;
    return bad;
  }

  size_t alive_layers() const {
    size_t n = 0;
    for (size_t c : active_count_) n += c > 0;
    return n;
  }

  WeightedTree tree_;
  size_t n_layers_ = 0;
  std::vector<double> lambda_;
  std::vector<std::vector<double>> fitness_;
  std::vector<std::vector<uint8_t>> infected_;
  std::vector<size_t> active_count_;
  std::vector<std::pair<int32_t, int32_t>> edges_;
  FenwickSampler edge_weight_;
};

/// Monotone coupling of a dominated and a dominating process on one tree.
/// Requires lambda_low * F1_u * F1_v <= lambda_high * F2_u * F2_v edgewise.
inline CoupledOutcome couple_monotone(const WeightedTree& tree, double lambda_low,
                                      double lambda_high,
                                      std::span<const double> fitness_low,
                                      std::span<const double> fitness_high,
                                      std::span<const int32_t> initial, double horizon,
                                      RandomStream& rng) {
  std::vector<CoupleLayer> layers(2);
  layers[0].lambda = lambda_low;
  layers[0].fitness.assign(fitness_low.begin(), fitness_low.end());
  layers[1].lambda = lambda_high;
  layers[1].fitness.assign(fitness_high.begin(), fitness_high.end());
  GraphicalCoupler coupler;
  return coupler.run(tree, layers, initial, horizon, rng);
}

/// Base process plus a copy that ignores recovery marks at one vertex inside
/// the given time set; the copy dominates the base pointwise.
inline CoupledOutcome couple_ignore_recoveries(const WeightedTree& tree,
                                               const ProcessParams& params,
                                               std::span<const int32_t> initial,
                                               const IgnoredRecoveries& ignored,
                                               double horizon, RandomStream& rng) {
  if (params.variant != Variant::plain)
    throw std::invalid_argument("couple_ignore_recoveries: plain variant only");
  std::vector<CoupleLayer> layers(2);
  layers[0].lambda = params.lambda;
  layers[1].lambda = params.lambda;
  GraphicalCoupler coupler;
  return coupler.run(tree, layers, initial, horizon, rng, nullptr, &ignored);
}

struct PercolationResult {
  std::vector<int32_t> component;  // vertices of the root's component in G_t0
  size_t realized_vertices = 0;
};

/// Component of the root in the percolation graph G_t0: every parent-child
/// edge is open independently with probability 1 - exp(-lambda F_u F_v t0).
/// Frontier vertices reached by an open edge are expanded lazily.
inline PercolationResult percolation_component(WeightedTree tree, double lambda,
                                               double t0, RandomStream& rng,
                                               const GrowthSpec* growth = nullptr) {
  if (!(t0 > 0.0)) throw std::invalid_argument("percolation: t0 must be > 0");
  PercolationResult out;
  std::vector<int32_t> stack{tree.root};
  out.component.push_back(tree.root);
  while (!stack.empty()) {
    int32_t v = stack.back();
    stack.pop_back();
    size_t vi = static_cast<size_t>(v);
    if (tree.frontier[vi] && growth != nullptr)
      extend_vertex(tree, v, *growth->offspring, *growth->fitness, rng,
                    growth->max_vertices);
    for (int32_t c : tree.children[vi]) {
      double open_p =
          1.0 - std::exp(-lambda * tree.fitness[vi] *
                         tree.fitness[static_cast<size_t>(c)] * t0);
      if (rng.bernoulli(open_p)) {
        out.component.push_back(c);
        stack.push_back(c);
      }
    }
  }
  out.realized_vertices = tree.size();
  std::sort(out.component.begin(), out.component.end());
  return out;
}

}  // namespace cpfs
