#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "cpfs/tree.hpp"

namespace cpfs {

enum class Variant { plain, extra_root_permanent, root_frozen_recovery, delayed };

struct ProcessParams {
  double lambda = 1.0;
  Variant variant = Variant::plain;
  double theta = 0.0;  // delayed variant only, in (0,1)
  double time_horizon = std::numeric_limits<double>::infinity();
  uint64_t event_cap = 1u << 30;

  void validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("params: lambda must be > 0");
    if (variant == Variant::delayed && !(theta > 0.0 && theta < 1.0))
      throw std::invalid_argument("params: delayed variant needs theta in (0,1)");
  }
};

struct GrowthSpec {
  const OffspringDist* offspring = nullptr;
  const FitnessDist* fitness = nullptr;
  size_t max_vertices = 1000000;
  // On budget overflow: false raises VertexBudgetError; true stops growing
  // and continues on the realized tree, which lower-bounds the true process
  // by monotonicity in the graph. The truncation is flagged in Observables.
  bool freeze_at_budget = false;
};

struct Observables {
  double extinction_time = std::numeric_limits<double>::quiet_NaN();
  bool censored = false;       // horizon or event cap reached before absorption
  double end_time = 0.0;       // absorption or censor time
  int32_t max_depth = 0;       // max over time of r(X_t)
  uint64_t root_reinfections = 0;
  uint64_t event_count = 0;
  uint32_t touched_vertices = 0;
  bool growth_truncated = false;  // ran on a budget-truncated tree
};

enum class EventKind : uint8_t { infect, recover };

struct SimEvent {
  double time;
  EventKind kind;
  int32_t vertex;
};

namespace detail {

// Observers may return bool to request an early stop (recorded as censored).
template <class Observer>
bool notify(Observer& obs, const SimEvent& ev) {
  if constexpr (std::is_void_v<std::invoke_result_t<Observer&, const SimEvent&>>) {
    obs(ev);
    return false;
  } else {
    return static_cast<bool>(obs(ev));
  }
}

}  // namespace detail

// Weighted sampler over vertex ids with O(log n) updates; grows by doubling.
class FenwickSampler {
 public:
  void reset(size_t n) {
    size_t cap = 64;
    while (cap < n) cap <<= 1;
    if (cap != cap_) {
      cap_ = cap;
      tree_.assign(cap_ + 1, 0.0);
      leaf_.assign(cap_, 0.0);
    } else {
      std::fill(tree_.begin(), tree_.end(), 0.0);
      std::fill(leaf_.begin(), leaf_.end(), 0.0);
    }
  }

  void ensure(size_t n) {
    if (n <= cap_) return;
    std::vector<double> old = leaf_;
    reset(n);
    for (size_t i = 0; i < old.size(); ++i)
      if (old[i] != 0.0) set(i, old[i]);
  }

  void set(size_t i, double w) {
    double delta = w - leaf_[i];
    if (delta == 0.0) return;
    leaf_[i] = w;
    for (size_t j = i + 1; j <= cap_; j += j & (~j + 1)) tree_[j] += delta;
  }

  double get(size_t i) const { return leaf_[i]; }

  // cap_ is a power of two, so the top node covers every leaf.
  double total() const { return tree_[cap_]; }

  // Smallest index whose cumulative weight exceeds u; u in [0, total).
  size_t sample(double u) const {
    size_t pos = 0;
    for (size_t mask = cap_ >> 1; mask > 0; mask >>= 1) {
      size_t next = pos + mask;
      if (tree_[next] <= u) {
        u -= tree_[next];
        pos = next;
      }
    }
    // fp boundary guard: land on a vertex that actually carries weight
    size_t fwd = pos;
    while (fwd < cap_ && leaf_[fwd] == 0.0) ++fwd;
    if (fwd < cap_) return fwd;
    while (pos > 0 && leaf_[pos] == 0.0) --pos;
    return pos;
  }

 private:
  size_t cap_ = 0;
  std::vector<double> tree_;
  std::vector<double> leaf_;
};

struct SimResult {
  Observables obs;
  std::vector<int32_t> final_infected;  // excludes the permanent extra root
  double final_time = 0.0;
};

// Aggregate-rate event-driven simulation: at each step the total active rate
// determines an exponential holding time and a categorical event choice.
// Rates follow the model definition: recovery 1 per infected vertex, infection
// lambda * F_u * F_v along each edge from infected u to healthy v. The delayed
// variant leaves jump probabilities unchanged and stretches holding times by
// theta^{-r(x)}.
class Simulator {
 public:
  template <class Observer>
  SimResult run(const WeightedTree& base, const ProcessParams& params,
                std::span<const int32_t> initial, RandomStream& rng,
                const GrowthSpec* growth, Observer&& observer) {
    params.validate();
    bool needs_parent =
        params.variant != Variant::plain;
    if (needs_parent && !base.has_extra_root())
      throw std::invalid_argument("simulate: variant requires a tree with an extra root");
    if (!needs_parent && base.has_extra_root())
      throw std::invalid_argument("simulate: plain variant on a tree with extra root");
    if (initial.empty() && params.variant == Variant::plain)
      throw std::invalid_argument("simulate: empty initial set");

    cleanup();  // also clears leftovers from a run that threw
    if (growth != nullptr) {
      owned_ = base;
      t_ = &owned_;
    } else {
      t_ = &base;  // no growth, no copy
    }
    growth_ = growth;
    ensure_capacity(t_->size());

    SimResult result;
    Observables& obs = result.obs;

    // permanent parent pressure on the root
    if (needs_parent) {
      mark_dirty(t_->root);
      nbr_count_[static_cast<size_t>(t_->root)] += 1;
      pressure_[static_cast<size_t>(t_->root)] += 1.0;  // F_{rho+} = 1
      refresh_weight(t_->root, params.lambda);
    }

    double time = 0.0;
    for (int32_t v : initial) {
      if (v < 0 || static_cast<size_t>(v) >= t_->size() || v == t_->extra_root)
        throw std::invalid_argument("simulate: bad initial vertex");
      if (!infected_[static_cast<size_t>(v)]) apply_infect(v, params, obs, rng);
    }
    fix_root_eligibility(params);
    obs.root_reinfections = 0;  // seeding is not an infection event

    while (true) {
      if (active_.empty()) {
        obs.extinction_time = time;
        break;
      }
      double total_inf = inf_weight_.total();
      double total = static_cast<double>(eligible_.size()) + total_inf;
      double scale = params.variant == Variant::delayed
                         ? std::pow(params.theta, -static_cast<double>(max_r_))
                         : 1.0;
      double dt = rng.exponential(total) * scale;
      if (time + dt > params.time_horizon) {
        time = params.time_horizon;
        obs.censored = true;
        break;
      }
      time += dt;
      ++obs.event_count;
      bool stop = false;
      if (rng.uniform() * total < static_cast<double>(eligible_.size())) {
        int32_t v = eligible_[rng.pick(eligible_.size())];
        apply_recover(v, params, obs);
        stop = detail::notify(observer, SimEvent{time, EventKind::recover, v});
      } else {
        int32_t v = static_cast<int32_t>(inf_weight_.sample(rng.uniform() * total_inf));
        apply_infect(v, params, obs, rng);
        stop = detail::notify(observer, SimEvent{time, EventKind::infect, v});
      }
      fix_root_eligibility(params);
      if (stop || obs.event_count >= params.event_cap) {
        if (!active_.empty()) obs.censored = true;
        if (active_.empty()) obs.extinction_time = time;
        break;
      }
    }

    obs.end_time = time;
    result.final_time = time;
    result.final_infected = active_;
    std::sort(result.final_infected.begin(), result.final_infected.end());
    cleanup();
    return result;
  }

  SimResult run(const WeightedTree& base, const ProcessParams& params,
                std::span<const int32_t> initial, RandomStream& rng,
                const GrowthSpec* growth = nullptr) {
    return run(base, params, initial, rng, growth, [](const SimEvent&) {});
  }

  const WeightedTree& tree() const { return *t_; }
  size_t infected_count() const { return active_.size(); }

 private:
  int depth_offset() const { return t_->has_extra_root() ? 1 : 0; }

  int32_t r_of(int32_t v) const {
    return t_->depth[static_cast<size_t>(v)] + depth_offset();
  }

  void mark_dirty(int32_t v) {
    if (!dirty_flag_[static_cast<size_t>(v)]) {
      dirty_flag_[static_cast<size_t>(v)] = 1;
      dirty_.push_back(v);
    }
  }

  // Restores all per-vertex state touched by the previous run; O(touched).
  void cleanup() {
    for (int32_t v : dirty_) {
      size_t i = static_cast<size_t>(v);
      infected_[i] = 0;
      touched_[i] = 0;
      nbr_count_[i] = 0;
      pressure_[i] = 0.0;
      inf_weight_.set(i, 0.0);
      active_pos_[i] = -1;
      eligible_pos_[i] = -1;
      dirty_flag_[i] = 0;
    }
    dirty_.clear();
    active_.clear();
    eligible_.clear();
    std::fill(depth_count_.begin(), depth_count_.end(), 0);
    max_r_ = 0;
  }

  void ensure_capacity(size_t n) {
    if (infected_.size() >= n) return;
    infected_.resize(n, 0);
    touched_.resize(n, 0);
    nbr_count_.resize(n, 0);
    pressure_.resize(n, 0.0);
    active_pos_.resize(n, -1);
    eligible_pos_.resize(n, -1);
    dirty_flag_.resize(n, 0);
    inf_weight_.ensure(n);
  }

  void refresh_weight(int32_t v, double lambda) {
    size_t idx = static_cast<size_t>(v);
    double w = 0.0;
    if (!infected_[idx] && nbr_count_[idx] > 0)
      w = lambda * t_->fitness[idx] * pressure_[idx];
    inf_weight_.set(idx, w);
  }

  void apply_infect(int32_t v, const ProcessParams& params, Observables& obs,
                    RandomStream& rng) {
    size_t idx = static_cast<size_t>(v);
    if (t_->frontier[idx] && growth_ != nullptr) {
      try {
        extend_vertex(owned_, v, *growth_->offspring, *growth_->fitness, rng,
                      growth_->max_vertices);
        ensure_capacity(owned_.size());
      } catch (const VertexBudgetError&) {
        if (!growth_->freeze_at_budget) throw;
        owned_.frontier[idx] = 0;  // permanently a leaf from here on
        obs.growth_truncated = true;
      }
    }
    mark_dirty(v);
    infected_[idx] = 1;
    if (!touched_[idx]) {
      touched_[idx] = 1;
      ++obs.touched_vertices;
    }
    active_pos_[idx] = static_cast<int32_t>(active_.size());
    active_.push_back(v);
    if (params.variant != Variant::root_frozen_recovery || v != t_->root)
      eligible_add(v);
    inf_weight_.set(idx, 0.0);
    t_->for_each_neighbor(v, [&](int32_t nb) {
      if (nb == t_->extra_root) return;
      size_t nidx = static_cast<size_t>(nb);
      if (infected_[nidx]) return;
      mark_dirty(nb);
      nbr_count_[nidx] += 1;
      pressure_[nidx] += t_->fitness[idx];
      refresh_weight(nb, params.lambda);
    });
    int32_t r = r_of(v);
    if (static_cast<size_t>(r) >= depth_count_.size()) depth_count_.resize(r + 1, 0);
    depth_count_[static_cast<size_t>(r)] += 1;
    if (r > max_r_) max_r_ = r;
    if (max_r_ > obs.max_depth) obs.max_depth = max_r_;
    if (v == t_->root) ++obs.root_reinfections;
  }

  void apply_recover(int32_t v, const ProcessParams& params, Observables&) {
    size_t idx = static_cast<size_t>(v);
    infected_[idx] = 0;
    active_remove(v);
    eligible_remove(v);
    // rebuild v's own incoming pressure from scratch
    int32_t count = 0;
    double press = 0.0;
    if (v == t_->root && params.variant != Variant::plain) {
      count += 1;
      press += 1.0;
    }
    t_->for_each_neighbor(v, [&](int32_t nb) {
      if (nb == t_->extra_root) return;
      size_t nidx = static_cast<size_t>(nb);
      if (infected_[nidx]) {
        count += 1;
        press += t_->fitness[nidx];
      } else {
        nbr_count_[nidx] -= 1;
        if (nbr_count_[nidx] == 0)
          pressure_[nidx] = 0.0;
        else
          pressure_[nidx] -= t_->fitness[idx];
        refresh_weight(nb, params.lambda);
      }
    });
    nbr_count_[idx] = count;
    pressure_[idx] = press;
    refresh_weight(v, params.lambda);
    int32_t r = r_of(v);
    depth_count_[static_cast<size_t>(r)] -= 1;
    while (max_r_ > 0 && depth_count_[static_cast<size_t>(max_r_)] == 0) --max_r_;
  }

  // Under root-frozen recovery the root's clock is valid only when the root
  // is the sole infected vertex.
  void fix_root_eligibility(const ProcessParams& params) {
    if (params.variant != Variant::root_frozen_recovery) return;
    int32_t root = t_->root;
    bool should = infected_[static_cast<size_t>(root)] && active_.size() == 1;
    bool is = eligible_pos_[static_cast<size_t>(root)] >= 0;
    if (should && !is) eligible_add(root);
    if (!should && is) eligible_remove(root);
  }

  void eligible_add(int32_t v) {
    eligible_pos_[static_cast<size_t>(v)] = static_cast<int32_t>(eligible_.size());
    eligible_.push_back(v);
  }

  void eligible_remove(int32_t v) {
    int32_t pos = eligible_pos_[static_cast<size_t>(v)];
    if (pos < 0) return;
    int32_t last = eligible_.back();
    eligible_[static_cast<size_t>(pos)] = last;
    eligible_pos_[static_cast<size_t>(last)] = pos;
    eligible_.pop_back();
    eligible_pos_[static_cast<size_t>(v)] = -1;
  }

  void active_remove(int32_t v) {
    int32_t pos = active_pos_[static_cast<size_t>(v)];
    int32_t last = active_.back();
    active_[static_cast<size_t>(pos)] = last;
    active_pos_[static_cast<size_t>(last)] = pos;
    active_.pop_back();
    active_pos_[static_cast<size_t>(v)] = -1;
  }

  WeightedTree owned_;
  const WeightedTree* t_ = &owned_;
  const GrowthSpec* growth_ = nullptr;
  std::vector<uint8_t> infected_, touched_;
  std::vector<int32_t> nbr_count_;
  std::vector<double> pressure_;
  FenwickSampler inf_weight_;
  std::vector<int32_t> active_, active_pos_;
  std::vector<int32_t> eligible_, eligible_pos_;
  std::vector<int32_t> dirty_;
  std::vector<uint8_t> dirty_flag_;
  std::vector<int64_t> depth_count_;
  int32_t max_r_ = 0;
};

template <class Observer>
SimResult simulate(const WeightedTree& tree, const ProcessParams& params,
                   std::span<const int32_t> initial, RandomStream& rng,
                   const GrowthSpec* growth, Observer&& observer) {
  Simulator sim;
  return sim.run(tree, params, initial, rng, growth,
                 std::forward<Observer>(observer));
}

inline SimResult simulate(const WeightedTree& tree, const ProcessParams& params,
                          std::span<const int32_t> initial, RandomStream& rng,
                          const GrowthSpec* growth = nullptr) {
  Simulator sim;
  return sim.run(tree, params, initial, rng, growth);
}

// The delayed process via embedded-chain time rescaling: every rate from
// state x carries the common factor theta^{r(x)}, so the jump chain is that
// of the plain process and only holding times stretch. This is the production
// path; a per-transition race over the exact generator serves as the test
// oracle for distributional equality.
inline SimResult simulate_delayed_by_rescaling(const WeightedTree& tree,
                                               const ProcessParams& params,
                                               std::span<const int32_t> initial,
                                               RandomStream& rng) {
  if (params.variant != Variant::delayed)
    throw std::invalid_argument("simulate_delayed_by_rescaling: variant must be delayed");
  return simulate(tree, params, initial, rng, nullptr);
}

}  // namespace cpfs
