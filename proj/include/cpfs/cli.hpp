#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cpfs/config.hpp"
#include "cpfs/coupling.hpp"
#include "cpfs/estimate.hpp"
#include "cpfs/exact.hpp"
#include "cpfs/experiments.hpp"
#include "cpfs/process.hpp"
#include "cpfs/tree.hpp"
#include "cpfs/verify.hpp"
#include "cpfs/ychain.hpp"

namespace cpfs::cli {

using nlohmann::json;

struct Common {
  uint64_t seed = 1;
  uint64_t trials = 10000;
  std::string out;
  double level = 0.99;
  int jobs = 1;
  std::string config_path;
  RunConfig config;
  std::string echo;  // effective configuration for the output preamble

  void note(const std::string& key, const std::string& value) {
    if (!echo.empty()) echo += " ";
    echo += key + "=" + value;
  }
};

inline uint64_t env_seed_fallback() {
  const char* env = std::getenv("CPFS_SEED");
  if (env == nullptr) return 1;
  return std::strtoull(env, nullptr, 10);
}

// Wires the shared flags; config-file values fill in flags the user did not
// pass, and the effective set is echoed into every output header.
inline void add_common(CLI::App* cmd, Common& c) {
  c.seed = env_seed_fallback();
  cmd->add_option("--seed", c.seed, "master seed (env CPFS_SEED as fallback)");
  cmd->add_option("--trials", c.trials, "number of Monte Carlo trials");
  cmd->add_option("--out", c.out, "output file (default: stdout)");
  cmd->add_option("--level", c.level, "confidence level (default 0.99)");
  cmd->add_option("--jobs", c.jobs, "worker threads (results identical at any value)");
  cmd->add_option("--config", c.config_path, "key=value config file; flags override");
}

inline void merge_config(CLI::App* cmd, Common& c) {
  if (c.config_path.empty()) return;
  c.config = load_config(c.config_path);
  auto maybe = [&](const char* flag, const char* key, auto& slot) {
    if (cmd->count(flag) == 0 && c.config.has(key)) {
      std::istringstream in(c.config.get(key));
      in >> slot;
      if (in.fail()) throw std::invalid_argument(std::string("config: bad value for ") + key);
    }
  };
  maybe("--seed", "seed", c.seed);
  maybe("--trials", "trials", c.trials);
  maybe("--level", "level", c.level);
  maybe("--jobs", "jobs", c.jobs);
  if (cmd->count("--out") == 0 && c.config.has("out")) c.out = c.config.get("out");
}

inline void write_output(const Common& c, const std::string& body) {
  std::string full = csv_preamble(c.echo, c.seed) + body;
  if (c.out.empty()) {
    std::cout << full;
  } else {
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file '" + c.out + "'");
    f << full;
  }
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (auto part : detail::split(s, ','))
    out.push_back(detail::parse_number(part, "list entry"));
  return out;
}

// lo:step:hi inclusive grid
inline std::vector<double> parse_grid(const std::string& s) {
  auto parts = detail::split(s, ':');
  if (parts.size() == 1) return {detail::parse_number(parts[0], "grid")};
  if (parts.size() != 3) throw std::invalid_argument("grid must be lo:step:hi");
  double lo = detail::parse_number(parts[0], "grid lo");
  double step = detail::parse_number(parts[1], "grid step");
  double hi = detail::parse_number(parts[2], "grid hi");
  if (!(step > 0.0)) throw std::invalid_argument("grid step must be > 0");
  std::vector<double> out;
  for (double x = lo; x <= hi + step * 1e-9; x += step) out.push_back(x);
  return out;
}

inline WeightedTree load_tree_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open tree file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_tree(ss.str());
}

// ---------------------------------------------------------------------------

inline int cmd_gen_tree(const Common& c, const std::string& offspring_spec,
                        const std::string& fitness_spec, int max_gen,
                        size_t max_vertices, bool extra_root) {
  OffspringDist off = OffspringDist::parse(offspring_spec);
  FitnessDist fit = FitnessDist::parse(fitness_spec);
  RandomStream rng(c.seed, 0);
  WeightedTree tree = generate_tree(off, fit, max_gen, max_vertices, rng);
  if (extra_root) tree = attach_extra_root(tree);
  std::string body = serialize_tree(tree);
  if (c.out.empty()) {
    std::cout << body;
  } else {
    std::ofstream f(c.out, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open output file '" + c.out + "'");
    f << body;
  }
  return 0;
}

struct SimulateArgs {
  std::string tree_path;
  std::string offspring_spec, fitness_spec;
  int max_gen = 6;
  size_t max_vertices = 100000;
  double lambda = 1.0;
  std::string variant = "plain";
  double theta = 0.5;
  double horizon = std::numeric_limits<double>::infinity();
  std::string initial = "0";
  std::string traj_path;
  bool lazy = false;
};

inline Variant parse_variant(const std::string& v) {
  if (v == "plain") return Variant::plain;
  if (v == "extra-root") return Variant::extra_root_permanent;
  if (v == "root-frozen") return Variant::root_frozen_recovery;
  if (v == "delayed") return Variant::delayed;
  throw std::invalid_argument("unknown variant '" + v + "'");
}

inline int cmd_simulate(const Common& c, const SimulateArgs& a) {
  ProcessParams params;
  params.lambda = a.lambda;
  params.variant = parse_variant(a.variant);
  params.theta = a.theta;
  params.time_horizon = a.horizon;

  std::optional<OffspringDist> off;
  std::optional<FitnessDist> fit;
  std::optional<WeightedTree> fixed_tree;
  if (!a.tree_path.empty()) {
    fixed_tree = load_tree_file(a.tree_path);
  } else {
    off = OffspringDist::parse(a.offspring_spec);
    fit = FitnessDist::parse(a.fitness_spec);
  }
  std::vector<int32_t> initial;
  for (double v : parse_double_list(a.initial))
    initial.push_back(static_cast<int32_t>(v));

  GrowthSpec growth;
  if (a.lazy) {
    if (!off || !fit)
      throw std::invalid_argument("simulate: lazy growth needs --offspring/--fitness");
    growth = {&*off, &*fit, a.max_vertices};
  }

  std::string traj;
  struct Out {
    double ext = std::numeric_limits<double>::quiet_NaN();
    uint8_t censored = 0;
    uint8_t budget = 0;
    int32_t max_depth = 0;
    uint64_t reinf = 0;
    double touched = 0;
  };
  auto outs = run_trials<Out>(c.trials, c.seed, 0, c.jobs, [&]() {
    auto sim = std::make_shared<Simulator>();
    return [&, sim](uint64_t trial, RandomStream& rng) -> Out {
      Out o;
      WeightedTree tree = fixed_tree ? *fixed_tree
                                     : generate_tree(*off, *fit, a.max_gen,
                                                     a.max_vertices, rng);
      bool dump = trial == 0 && !a.traj_path.empty() && c.jobs <= 1;
      std::ostringstream tr;
      double last_time = 0.0;
      try {
        SimResult r = sim->run(
            tree, params, initial, rng, a.lazy ? &growth : nullptr,
            [&](const SimEvent& ev) {
              if (dump) {
                tr << csv_double(ev.time) << ","
                   << (ev.kind == EventKind::infect ? "infect" : "recover") << ","
                   << ev.vertex << "," << sim->infected_count() << ","
                   << sim->tree().depth[static_cast<size_t>(ev.vertex)] << "\n";
                last_time = ev.time;
              }
            });
        o.ext = r.obs.extinction_time;
        o.censored = r.obs.censored;
        o.max_depth = r.obs.max_depth;
        o.reinf = r.obs.root_reinfections;
        o.touched = r.obs.touched_vertices;
        if (dump && r.obs.censored)
          tr << csv_double(r.final_time) << ",censor,-1," << r.final_infected.size()
             << ",0\n";
      } catch (const VertexBudgetError&) {
        o.budget = 1;
        o.censored = 1;
        (void)last_time;
      }
      if (dump) traj = tr.str();
      return o;
    };
  });

  uint64_t absorbed = 0, censored = 0, budget = 0;
  double sum = 0.0, sumsq = 0.0;
  for (auto& o : outs) {
    if (o.budget) {
      ++budget;
      ++censored;
    } else if (o.censored) {
      ++censored;
    } else {
      ++absorbed;
      sum += o.ext;
      sumsq += o.ext * o.ext;
    }
  }

  std::string body = experiment_csv_header();
  json pj = {{"lambda", a.lambda},
             {"variant", a.variant},
             {"horizon", a.horizon},
             {"tree", a.tree_path.empty() ? a.offspring_spec + "/" + a.fitness_spec
                                          : a.tree_path}};
  ExperimentRow row;
  row.experiment = "simulate_mean_extinction";
  row.param_json = pj.dump();
  MCEstimate est = mean_estimate(sum, sumsq, absorbed, c.level, censored, c.seed);
  row.estimate = est.point;
  row.ci_lo = est.ci_lo;
  row.ci_hi = est.ci_hi;
  row.n = absorbed;
  row.censored = censored;
  row.seed = c.seed;
  body += to_csv(row);

  if (!a.traj_path.empty()) {
    std::ofstream f(a.traj_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open trajectory file");
    f << "time,event_type,vertex,infected_count,depth\n" << traj;
  }
  write_output(c, body);
  return budget > 0 ? 2 : 0;
}

struct SweepArgs {
  std::string offspring_spec = "pois:2";
  std::string fitness_spec = "const:1";
  std::string lambda_grid = "0.1:0.1:1.0";
  double horizon = 50.0;
  size_t max_vertices = 2000;
  std::string quantity = "survival";  // or "reinfection"
};

// Lambda sweep with all grid points coupled through one graphical
// representation per trial, so the per-level survival indicators are
// monotone pathwise and the reported sequence is exactly nondecreasing.
inline int cmd_sweep(const Common& c, const SweepArgs& a) {
  OffspringDist off = OffspringDist::parse(a.offspring_spec);
  FitnessDist fit = FitnessDist::parse(a.fitness_spec);
  std::vector<double> grid = parse_grid(a.lambda_grid);
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  for (size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw std::invalid_argument("sweep: grid must be increasing");
  const bool reinf = a.quantity == "reinfection";
  if (!reinf && a.quantity != "survival")
    throw std::invalid_argument("sweep: quantity must be survival or reinfection");

  struct Out {
    std::vector<uint8_t> success;
    uint8_t budget = 0;
  };
  auto outs = run_trials<Out>(c.trials, c.seed, 0, c.jobs, [&]() {
    auto coupler = std::make_shared<GraphicalCoupler>();
    return [&, coupler](uint64_t, RandomStream& rng) -> Out {
      Out o;
      o.success.assign(grid.size(), 0);
      WeightedTree seed_tree = make_lazy_seed(fit, rng);
      std::vector<CoupleLayer> layers(grid.size());
      for (size_t g = 0; g < grid.size(); ++g) layers[g].lambda = grid[g];
      CoupledGrowth growth;
      growth.offspring = &off;
      growth.fitness.assign(grid.size(), &fit);
      growth.max_vertices = a.max_vertices;
      int32_t root = 0;
      CoupledOutcome res =
          coupler->run(seed_tree, layers, std::span<const int32_t>(&root, 1),
                       a.horizon, rng, &growth);
      o.budget = res.budget_exhausted ? 1 : 0;
      for (size_t g = 0; g < grid.size(); ++g) {
        const Observables& obs = res.layers[g];
        bool alive = std::isnan(obs.extinction_time);
        o.success[g] = reinf ? (res.root_infected[g] ? 1 : 0) : (alive ? 1 : 0);
      }
      return o;
    };
  });

  std::string body = "lambda,estimate,ci_lo,ci_hi\n";
  uint64_t budget_trials = 0;
  for (auto& o : outs) budget_trials += o.budget;
  for (size_t g = 0; g < grid.size(); ++g) {
    uint64_t succ = 0, denom = 0;
    for (auto& o : outs) {
      if (reinf && o.budget) continue;  // root state at T unknown
      ++denom;
      succ += o.success[g];
    }
    MCEstimate est = proportion_estimate(succ, denom ? denom : 1, c.level,
                                         budget_trials, c.seed);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", grid[g], est.point,
                  est.ci_lo, est.ci_hi);
    body += buf;
  }
  char foot[256];
  std::snprintf(foot, sizeof foot,
                "# censored_trials: %llu (budget; %s)\n",
                static_cast<unsigned long long>(budget_trials),
                reinf ? "excluded from all grid points" : "counted as survival");
  body += foot;
  // threshold proxies are artifact conventions: smallest grid lambda clearing
  // the fixed cutoffs
  double proxy = std::numeric_limits<double>::quiet_NaN();
  double cut = reinf ? 0.02 : 0.05;
  for (size_t g = 0; g < grid.size(); ++g) {
    uint64_t succ = 0, denom = 0;
    for (auto& o : outs) {
      if (reinf && o.budget) continue;
      ++denom;
      succ += o.success[g];
    }
    if (denom && static_cast<double>(succ) / static_cast<double>(denom) > cut) {
      proxy = grid[g];
      break;
    }
  }
  std::snprintf(foot, sizeof foot, "# %s_proxy: %s\n",
                reinf ? "lambda2" : "lambda1",
                std::isnan(proxy) ? "none" : csv_double(proxy).c_str());
  body += foot;
  write_output(c, body);
  return 0;
}

struct DepthTailArgs {
  std::string offspring_spec = "det:2";
  std::string fitness_spec = "const:1";
  double lambda = 0.25;
  int max_gen = 8;
  std::string h_grid = "1,2,3,4";
  size_t max_vertices = 100000;
};

inline int cmd_depth_tail(const Common& c, const DepthTailArgs& a) {
  OffspringDist off = OffspringDist::parse(a.offspring_spec);
  FitnessDist fit = FitnessDist::parse(a.fitness_spec);
  DepthTailOptions opt;
  for (double h : parse_double_list(a.h_grid)) opt.h_grid.push_back(static_cast<int>(h));
  opt.trials = c.trials;
  opt.master_seed = c.seed;
  opt.jobs = c.jobs;
  opt.level = c.level;

  bool fixed_shape = off.family() == OffspringDist::Family::deterministic &&
                     (fit.family() == FitnessDist::Family::constant_one ||
                      fit.family() == FitnessDist::Family::constant);
  std::optional<WeightedTree> cached;
  DepthTailResult res;
  if (fixed_shape) {
    RandomStream rng(c.seed, ~0ull);
    cached = attach_extra_root(generate_tree(off, fit, a.max_gen, a.max_vertices, rng));
    auto provider = [&](uint64_t, RandomStream&) -> const WeightedTree& {
      return *cached;
    };
    res = estimate_depth_tail(provider, a.lambda, opt);
  } else {
    auto provider = [&](uint64_t, RandomStream& rng) -> WeightedTree {
      return attach_extra_root(generate_tree(off, fit, a.max_gen, a.max_vertices, rng));
    };
    res = estimate_depth_tail(provider, a.lambda, opt);
  }

  std::string body = experiment_csv_header();
  for (size_t i = 0; i < res.h_grid.size(); ++i) {
    json pj = {{"lambda", a.lambda}, {"h", res.h_grid[i]}, {"max_gen", a.max_gen},
               {"offspring", a.offspring_spec}, {"fitness", a.fitness_spec}};
    ExperimentRow row;
    row.experiment = "depth_tail";
    row.param_json = pj.dump();
    row.estimate = res.tail[i].point;
    row.ci_lo = res.tail[i].ci_lo;
    row.ci_hi = res.tail[i].ci_hi;
    row.n = res.tail[i].n;
    row.seed = c.seed;
    body += to_csv(row);
  }
  body += "# log_slope: ";
  body += res.slope_valid ? csv_double(res.log_slope) : "insufficient_tail_mass";
  body += "\n";
  if (res.lambda_warning) body += "# warning: lambda > 1; the bound regime is small lambda\n";
  write_output(c, body);
  return 0;
}

struct StarArgs {
  double lambda = 1.0;
  double f = 8.0;
  int64_t k = 512;
  double eps = 0.1;
  double cap = 100.0;
  bool start_at_L = false;
  std::string experiment = "hitting";  // or "persistence"
  double surrogate = 4.0;
};

inline int cmd_star(const Common& c, const StarArgs& a) {
  StarOptions opt;
  opt.lambda = a.lambda;
  opt.f = a.f;
  opt.k = a.k;
  opt.eps = a.eps;
  opt.cap = a.cap;
  opt.start_at_L = a.start_at_L;
  opt.trials = c.trials;
  opt.master_seed = c.seed;
  opt.jobs = c.jobs;
  opt.level = c.level;
  opt.consts.c = opt.consts.c_hat = opt.consts.c_hat1 = opt.consts.c2 = a.surrogate;
  opt.consts.eps = a.eps;

  std::string body = experiment_csv_header();
  json pj = {{"lambda", a.lambda}, {"f", a.f}, {"k", a.k}, {"eps", a.eps},
             {"cap", a.cap}, {"surrogate", a.surrogate}};
  if (a.experiment == "hitting") {
    StarHittingResult res = star_hitting_experiment(opt);
    pj["L"] = res.L;
    ExperimentRow r1;
    r1.experiment = "star_level_miss_vs_death";
    r1.param_json = pj.dump();
    r1.estimate = res.p_level_after_death.point;
    r1.ci_lo = res.p_level_after_death.ci_lo;
    r1.ci_hi = res.p_level_after_death.ci_hi;
    r1.n = c.trials;
    r1.bound_value = res.bound_level_vs_death;
    r1.bound_vacuous = res.bound_level_vs_death >= 1.0 || res.small_regime;
    r1.seed = c.seed;
    body += to_csv(r1);
    ExperimentRow r2 = r1;
    r2.experiment = "star_level_miss_by_time_1";
    r2.estimate = res.p_level_after_one.point;
    r2.ci_lo = res.p_level_after_one.ci_lo;
    r2.ci_hi = res.p_level_after_one.ci_hi;
    r2.bound_value = res.bound_level_vs_one;
    r2.bound_vacuous = res.bound_level_vs_one >= 1.0 || res.small_regime;
    body += to_csv(r2);
  } else if (a.experiment == "persistence") {
    StarPersistenceResult res = star_persistence_experiment(opt);
    pj["L"] = res.L;
    pj["window"] = res.window;
    pj["start"] = a.start_at_L ? "(L,1)" : "(0,1)";
    ExperimentRow r1;
    r1.experiment = "star_persistence_failure_leaves";
    r1.param_json = pj.dump();
    r1.estimate = res.failure_leaves.point;
    r1.ci_lo = res.failure_leaves.ci_lo;
    r1.ci_hi = res.failure_leaves.ci_hi;
    r1.n = c.trials;
    r1.bound_value = res.r_bound;
    r1.bound_vacuous = res.r_vacuous || res.precondition_stress;
    r1.seed = c.seed;
    body += to_csv(r1);
    ExperimentRow r2 = r1;
    r2.experiment = "star_persistence_failure_all";
    r2.estimate = res.failure_all.point;
    r2.ci_lo = res.failure_all.ci_lo;
    r2.ci_hi = res.failure_all.ci_hi;
    r2.bound_value = res.kernel_bound;
    r2.bound_vacuous = res.kernel_vacuous || res.precondition_stress;
    body += to_csv(r2);
  } else {
    throw std::invalid_argument("star: experiment must be hitting or persistence");
  }
  write_output(c, body);
  return 0;
}

struct PathArgs {
  double lambda = 1.0;
  std::string fitness_vector = "1,1,1,1";
  double surrogate = 4.0;
};

inline int cmd_path(const Common& c, const PathArgs& a) {
  PathTransmissionOptions opt;
  opt.lambda = a.lambda;
  opt.fitness = parse_double_list(a.fitness_vector);
  opt.trials = c.trials;
  opt.master_seed = c.seed;
  opt.jobs = c.jobs;
  opt.level = c.level;
  opt.consts.gamma = a.surrogate;
  PathTransmissionResult res = path_transmission_experiment(opt);

  std::string body = experiment_csv_header();
  json pj = {{"lambda", a.lambda}, {"fitness", opt.fitness},
             {"surrogate_gamma", a.surrogate}};
  ExperimentRow r1;
  r1.experiment = "path_relay_probability";
  r1.param_json = pj.dump();
  r1.estimate = res.p_relay.point;
  r1.ci_lo = res.p_relay.ci_lo;
  r1.ci_hi = res.p_relay.ci_hi;
  r1.n = c.trials;
  r1.bound_value = res.exact_product;  // the exact product, for comparison
  r1.seed = c.seed;
  body += to_csv(r1);
  ExperimentRow r2 = r1;
  r2.experiment = "path_tip_hit_by_2r";
  r2.estimate = res.p_hit_by_2r.point;
  r2.ci_lo = res.p_hit_by_2r.ci_lo;
  r2.ci_hi = res.p_hit_by_2r.ci_hi;
  r2.bound_value = res.transmission_lower_bound;
  body += to_csv(r2);
  char foot[128];
  std::snprintf(foot, sizeof foot, "# containment_violations: %llu\n",
                static_cast<unsigned long long>(res.containment_violations));
  body += foot;
  write_output(c, body);
  return 0;
}

struct RelayArgs {
  double lambda = 1.0;
  double f = 8.0;
  int64_t k = 64;
  int r = 3;
  double cap = 200.0;
  double surrogate = 4.0;
  double eps = 0.1;
};

inline int cmd_relay(const Common& c, const RelayArgs& a) {
  RelayOptions opt;
  opt.lambda = a.lambda;
  opt.f = a.f;
  opt.k = a.k;
  opt.r = a.r;
  opt.cap = a.cap;
  opt.trials = c.trials;
  opt.master_seed = c.seed;
  opt.jobs = c.jobs;
  opt.level = c.level;
  opt.consts.c = opt.consts.c_hat = opt.consts.c_hat1 = opt.consts.c2 = a.surrogate;
  opt.consts.eps = a.eps;
  RelayResult res = star_path_relay_experiment(opt);

  std::string body = experiment_csv_header();
  json pj = {{"lambda", a.lambda}, {"f", a.f},   {"k", a.k},
             {"r", a.r},           {"cap", a.cap}, {"window", res.window},
             {"L", res.L}};
  ExperimentRow row;
  row.experiment = "star_path_relay_never_infected";
  row.param_json = pj.dump();
  row.estimate = res.never_infected.point;
  row.ci_lo = res.never_infected.ci_lo;
  row.ci_hi = res.never_infected.ci_hi;
  row.n = c.trials;
  row.bound_value = res.bound;
  row.bound_vacuous = res.bound_vacuous;
  row.seed = c.seed;
  body += to_csv(row);
  write_output(c, body);
  return 0;
}

struct YChainArgs {
  double lambda = 1.0;
  double f = 1.0;
  int64_t k = 3;
  double horizon = 1000.0;
  double surrogate = 4.0;
};

inline int cmd_ychain(const Common& c, const YChainArgs& a) {
  YChainParams p{a.lambda, a.f, a.k};
  const int64_t L = p.L();
  const double mu = y_drift(p);

  struct Out {
    double disp, tau, t_hit;
    uint8_t hit;
    double frak;
  };
  auto outs = run_trials<Out>(c.trials, c.seed, 0, c.jobs, [&]() {
    return [&](uint64_t, RandomStream& rng) -> Out {
      Out o{};
      auto [d, t] = y_displacement_trial(p, a.horizon, rng);
      o.disp = d;
      o.tau = t;
      YChainResult yr = simulate_Y_chain(p, a.horizon, rng, 0);
      o.hit = std::isnan(yr.t_hit_L) ? 0 : 1;
      o.t_hit = o.hit ? yr.t_hit_L : 0.0;
      o.frak = static_cast<double>(sample_frakN(a.lambda, a.f, rng));
      return o;
    };
  });

  double zsum = 0, zsq = 0, tsum = 0, tsq = 0, fsum = 0, fsq = 0;
  uint64_t hits = 0;
  for (auto& o : outs) {
    double z = o.disp - mu * o.tau;  // zero-mean under the drift formula
    zsum += z;
    zsq += z * z;
    if (o.hit) {
      ++hits;
      tsum += o.t_hit;
      tsq += o.t_hit * o.t_hit;
    }
    fsum += o.frak;
    fsq += o.frak * o.frak;
  }
  MCEstimate drift_dev = mean_estimate(zsum, zsq, c.trials, c.level, 0, c.seed);
  MCEstimate t_mean = mean_estimate(tsum, tsq, hits, c.level, c.trials - hits, c.seed);
  MCEstimate frak_mean = mean_estimate(fsum, fsq, c.trials, c.level, 0, c.seed);
  SupermartingaleCheck sm = embedded_Z_supermartingale_check(a.lambda, a.f, a.k);

  json pj = {{"lambda", a.lambda}, {"f", a.f}, {"k", a.k}, {"L", L},
             {"drift_formula", mu}};
  std::string body = experiment_csv_header();
  ExperimentRow r1;
  r1.experiment = "ychain_drift_residual";  // should straddle 0
  r1.param_json = pj.dump();
  r1.estimate = drift_dev.point;
  r1.ci_lo = drift_dev.ci_lo;
  r1.ci_hi = drift_dev.ci_hi;
  r1.n = c.trials;
  r1.seed = c.seed;
  body += to_csv(r1);
  ExperimentRow r2 = r1;
  r2.experiment = "ychain_mean_T_L";
  r2.estimate = t_mean.point;
  r2.ci_lo = t_mean.ci_lo;
  r2.ci_hi = t_mean.ci_hi;
  r2.n = hits;
  r2.censored = c.trials - hits;
  r2.bound_value = a.surrogate / (a.lambda * a.f);
  body += to_csv(r2);
  ExperimentRow r3 = r1;
  r3.experiment = "frakN_mean";
  r3.estimate = frak_mean.point;
  r3.ci_lo = frak_mean.ci_lo;
  r3.ci_hi = frak_mean.ci_hi;
  r3.bound_value = 1.0 / (a.lambda * a.f);  // the exact mean
  body += to_csv(r3);
  ExperimentRow r4 = r1;
  r4.experiment = "z_supermartingale_max_drift";
  r4.estimate = sm.max_drift;
  r4.ci_lo = r4.ci_hi = sm.max_drift;
  r4.bound_value = 0.0;
  body += to_csv(r4);
  write_output(c, body);
  return 0;
}

struct PercolationArgs {
  std::string tree_path;
  std::string offspring_spec = "det:2";
  std::string fitness_spec = "const:1";
  int max_gen = 10;
  double lambda = 1.0;
  double t0 = 0.1;
  size_t max_vertices = 100000;
};

inline int cmd_percolation(const Common& c, const PercolationArgs& a) {
  std::optional<WeightedTree> fixed;
  std::optional<OffspringDist> off;
  std::optional<FitnessDist> fit;
  if (!a.tree_path.empty()) {
    fixed = load_tree_file(a.tree_path);
  } else {
    off = OffspringDist::parse(a.offspring_spec);
    fit = FitnessDist::parse(a.fitness_spec);
  }

  struct Out {
    double size = 0;
    uint8_t singleton = 0;
    uint8_t budget = 0;
  };
  auto outs = run_trials<Out>(c.trials, c.seed, 0, c.jobs, [&]() {
    return [&](uint64_t, RandomStream& rng) -> Out {
      Out o;
      try {
        PercolationResult r;
        if (fixed) {
          r = percolation_component(*fixed, a.lambda, a.t0, rng);
        } else {
          GrowthSpec growth{&*off, &*fit, a.max_vertices};
          WeightedTree seed = make_lazy_seed(*fit, rng);
          r = percolation_component(seed, a.lambda, a.t0, rng, &growth);
        }
        o.size = static_cast<double>(r.component.size());
        o.singleton = r.component.size() == 1;
      } catch (const VertexBudgetError&) {
        o.budget = 1;
      }
      return o;
    };
  });

  uint64_t budget = 0, singles = 0, n_ok = 0;
  double sum = 0, sumsq = 0;
  for (auto& o : outs) {
    if (o.budget) {
      ++budget;
      continue;
    }
    ++n_ok;
    sum += o.size;
    sumsq += o.size * o.size;
    singles += o.singleton;
  }
  MCEstimate mean = mean_estimate(sum, sumsq, n_ok, c.level, budget, c.seed);
  MCEstimate singleton =
      proportion_estimate(singles, n_ok ? n_ok : 1, c.level, budget, c.seed);

  json pj = {{"lambda", a.lambda}, {"t0", a.t0}};
  std::string body = experiment_csv_header();
  ExperimentRow r1;
  r1.experiment = "percolation_component_mean_size";
  r1.param_json = pj.dump();
  r1.estimate = mean.point;
  r1.ci_lo = mean.ci_lo;
  r1.ci_hi = mean.ci_hi;
  r1.n = n_ok;
  r1.censored = budget;
  r1.seed = c.seed;
  body += to_csv(r1);
  ExperimentRow r2 = r1;
  r2.experiment = "percolation_singleton_proportion";
  r2.estimate = singleton.point;
  r2.ci_lo = singleton.ci_lo;
  r2.ci_hi = singleton.ci_hi;
  body += to_csv(r2);
  write_output(c, body);
  return budget == c.trials && c.trials > 0 ? 2 : 0;
}

struct VerifyArgs {
  std::string suite = "exact";
  int max_vertices = 5;
  int instances = 100;
};

inline int cmd_verify(const Common& c, const VerifyArgs& a) {
  if (a.suite != "exact" && a.suite != "all")
    throw std::invalid_argument("verify: suite must be 'exact' or 'all'");
  // 11 vertices plus the extra root keeps the dense stationary solves at
  // 2^12 states; bigger requests are a validation error, not a silent cap
  if (a.max_vertices < 1 || a.max_vertices > 11)
    throw std::invalid_argument("verify: max-vertices must be in [1, 11]");
  std::vector<CheckRow> rows =
      run_exact_verification(c.seed, a.instances, a.max_vertices);
  std::string body = check_csv_header();
  bool all_pass = true;
  for (auto& r : rows) {
    body += to_csv(r);
    all_pass &= r.pass;
  }
  write_output(c, body);
  return all_pass ? 0 : 3;
}

struct GoodVerticesArgs {
  std::string offspring_spec = "pois:2";
  std::string fitness_spec = "pareto:2";
  double f = 2.0;
  int64_t k = 3;
  int generation = 5;
  int max_gen = 6;
};

inline int cmd_good_vertices(const Common& c, const GoodVerticesArgs& a) {
  GoodVerticesOptions opt;
  opt.f = a.f;
  opt.k = a.k;
  opt.generation = a.generation;
  opt.max_gen = a.max_gen;
  opt.trees = c.trials;
  opt.master_seed = c.seed;
  opt.jobs = c.jobs;
  opt.level = c.level;
  GoodVerticesResult res = estimate_good_vertices(
      OffspringDist::parse(a.offspring_spec), FitnessDist::parse(a.fitness_spec), opt);

  json pj = {{"f", a.f}, {"k", a.k}, {"generation", a.generation},
             {"offspring", a.offspring_spec}, {"fitness", a.fitness_spec}};
  std::string body = experiment_csv_header();
  ExperimentRow row;
  row.experiment = "good_vertices_mean";
  row.param_json = pj.dump();
  row.estimate = res.mean_count.point;
  row.ci_lo = res.mean_count.ci_lo;
  row.ci_hi = res.mean_count.ci_hi;
  row.n = c.trials;
  row.bound_value = res.exact_mean;  // exact branching expectation
  row.seed = c.seed;
  body += to_csv(row);
  write_output(c, body);
  return 0;
}

// ---------------------------------------------------------------------------

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"contact process with fitness on Galton-Watson trees"};
  app.require_subcommand(1);

  Common c_gen, c_sim, c_sweep, c_depth, c_star, c_path, c_relay, c_ychain,
      c_perc, c_verify, c_good;

  // gen-tree
  auto* gen = app.add_subcommand("gen-tree", "sample a weighted tree to a file");
  std::string g_off = "det:2", g_fit = "const:1";
  int g_maxgen = 3;
  size_t g_maxv = 1000000;
  bool g_extra = false;
  gen->add_option("--offspring", g_off, "offspring family, e.g. det:2 pois:2 geom:0.5");
  gen->add_option("--fitness", g_fit, "fitness family, e.g. const:1 pareto:2 unif:1,3");
  gen->add_option("--max-gen", g_maxgen, "generations to realize");
  gen->add_option("--max-vertices", g_maxv, "vertex budget (hard error)");
  gen->add_flag("--extra-root", g_extra, "adjoin the permanently infected parent");
  add_common(gen, c_gen);

  // simulate
  auto* sim = app.add_subcommand("simulate", "simulate the process, report extinction");
  SimulateArgs sa;
  sim->add_option("--tree", sa.tree_path, "tree file (else generated per trial)");
  sim->add_option("--offspring", sa.offspring_spec, "offspring family");
  sim->add_option("--fitness", sa.fitness_spec, "fitness family");
  sim->add_option("--max-gen", sa.max_gen, "generations when generating");
  sim->add_option("--max-vertices", sa.max_vertices, "vertex budget");
  sim->add_option("--lambda", sa.lambda, "infection intensity");
  sim->add_option("--variant", sa.variant, "plain|extra-root|root-frozen|delayed");
  sim->add_option("--theta", sa.theta, "delay exponent for the delayed variant");
  sim->add_option("--horizon", sa.horizon, "time horizon (censoring)");
  sim->add_option("--initial", sa.initial, "comma list of initially infected vertices");
  sim->add_option("--traj", sa.traj_path, "dump first-trial trajectory CSV here");
  sim->add_flag("--lazy", sa.lazy, "grow the tree lazily during simulation");
  add_common(sim, c_sim);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "coupled lambda sweep of survival");
  SweepArgs swa;
  sweep->add_option("--offspring", swa.offspring_spec, "offspring family");
  sweep->add_option("--fitness", swa.fitness_spec, "fitness family");
  sweep->add_option("--lambda", swa.lambda_grid, "grid lo:step:hi");
  sweep->add_option("--horizon", swa.horizon, "time horizon");
  sweep->add_option("--max-vertices", swa.max_vertices, "vertex budget per trial");
  sweep->add_option("--quantity", swa.quantity, "survival|reinfection");
  add_common(sweep, c_sweep);

  // depth-tail
  auto* depth = app.add_subcommand("depth-tail", "depth tail of the rooted excursion");
  DepthTailArgs da;
  depth->add_option("--offspring", da.offspring_spec, "offspring family");
  depth->add_option("--fitness", da.fitness_spec, "fitness family");
  depth->add_option("--lambda", da.lambda, "infection intensity");
  depth->add_option("--max-gen", da.max_gen, "tree truncation depth");
  depth->add_option("--h-grid", da.h_grid, "comma list of depths");
  depth->add_option("--max-vertices", da.max_vertices, "vertex budget");
  add_common(depth, c_depth);

  // star
  auto* star = app.add_subcommand("star", "star hitting/persistence experiments");
  StarArgs sta;
  star->add_option("--lambda", sta.lambda, "infection intensity");
  star->add_option("--f", sta.f, "root fitness");
  star->add_option("--k", sta.k, "number of leaves");
  star->add_option("--eps", sta.eps, "epsilon in (0, 1/2)");
  star->add_option("--cap", sta.cap, "simulated window (S is usually huge)");
  star->add_flag("--start-at-L", sta.start_at_L, "start from (L,1) instead of (0,1)");
  star->add_option("--experiment", sta.experiment, "hitting|persistence");
  star->add_option("--surrogate", sta.surrogate, "surrogate constant value");
  add_common(star, c_star);

  // path
  auto* path = app.add_subcommand("path", "path transmission experiment");
  PathArgs pa;
  path->add_option("--lambda", pa.lambda, "infection intensity");
  path->add_option("--fitness-vector", pa.fitness_vector, "comma list, length r+1");
  path->add_option("--surrogate", pa.surrogate, "surrogate gamma");
  add_common(path, c_path);

  // relay
  auto* relay = app.add_subcommand("relay", "star plus path relay experiment");
  RelayArgs ra;
  relay->add_option("--lambda", ra.lambda, "infection intensity");
  relay->add_option("--f", ra.f, "root and tip fitness");
  relay->add_option("--k", ra.k, "star size");
  relay->add_option("--r", ra.r, "path length");
  relay->add_option("--cap", ra.cap, "simulated window");
  relay->add_option("--surrogate", ra.surrogate, "surrogate constants");
  relay->add_option("--eps", ra.eps, "epsilon for S");
  add_common(relay, c_relay);

  // ychain
  auto* ychain = app.add_subcommand("ychain", "auxiliary Y chain diagnostics");
  YChainArgs ya;
  ychain->add_option("--lambda", ya.lambda, "infection intensity");
  ychain->add_option("--f", ya.f, "fitness parameter");
  ychain->add_option("--k", ya.k, "star size");
  ychain->add_option("--horizon", ya.horizon, "per-trial time cap");
  ychain->add_option("--surrogate", ya.surrogate, "surrogate c-hat");
  add_common(ychain, c_ychain);

  // percolation
  auto* perc = app.add_subcommand("percolation", "root component of G_t0");
  PercolationArgs pca;
  perc->add_option("--tree", pca.tree_path, "tree file (else lazy generation)");
  perc->add_option("--offspring", pca.offspring_spec, "offspring family");
  perc->add_option("--fitness", pca.fitness_spec, "fitness family");
  perc->add_option("--max-gen", pca.max_gen, "unused for lazy trees");
  perc->add_option("--lambda", pca.lambda, "infection intensity");
  perc->add_option("--t0", pca.t0, "time window");
  perc->add_option("--max-vertices", pca.max_vertices, "vertex budget");
  add_common(perc, c_perc);

  // verify
  auto* verify = app.add_subcommand("verify", "exact-module verification battery");
  VerifyArgs va;
  verify->add_option("--suite", va.suite, "exact|all");
  verify->add_option("--max-vertices", va.max_vertices, "per-instance tree size cap");
  verify->add_option("--instances", va.instances, "randomized instances per check");
  add_common(verify, c_verify);

  // good-vertices
  auto* good = app.add_subcommand("good-vertices", "good-vertex counts per generation");
  GoodVerticesArgs gva;
  good->add_option("--offspring", gva.offspring_spec, "offspring family");
  good->add_option("--fitness", gva.fitness_spec, "fitness family");
  good->add_option("--f", gva.f, "fitness threshold");
  good->add_option("--k", gva.k, "required child count");
  good->add_option("--generation", gva.generation, "generation r to average");
  good->add_option("--max-gen", gva.max_gen, "tree truncation depth");
  add_common(good, c_good);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      return app.exit(e);
    }
    std::cerr << app.help() << "\n";
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      merge_config(gen, c_gen);
      c_gen.note("cmd", "gen-tree");
      c_gen.note("offspring", g_off);
      c_gen.note("fitness", g_fit);
      c_gen.note("max_gen", std::to_string(g_maxgen));
      return cmd_gen_tree(c_gen, g_off, g_fit, g_maxgen, g_maxv, g_extra);
    }
    if (sim->parsed()) {
      merge_config(sim, c_sim);
      c_sim.note("cmd", "simulate");
      c_sim.note("lambda", csv_double(sa.lambda));
      c_sim.note("variant", sa.variant);
      c_sim.note("trials", std::to_string(c_sim.trials));
      return cmd_simulate(c_sim, sa);
    }
    if (sweep->parsed()) {
      merge_config(sweep, c_sweep);
      c_sweep.note("cmd", "sweep");
      c_sweep.note("offspring", swa.offspring_spec);
      c_sweep.note("fitness", swa.fitness_spec);
      c_sweep.note("lambda", swa.lambda_grid);
      c_sweep.note("horizon", csv_double(swa.horizon));
      c_sweep.note("trials", std::to_string(c_sweep.trials));
      c_sweep.note("quantity", swa.quantity);
      return cmd_sweep(c_sweep, swa);
    }
    if (depth->parsed()) {
      merge_config(depth, c_depth);
      c_depth.note("cmd", "depth-tail");
      c_depth.note("lambda", csv_double(da.lambda));
      c_depth.note("max_gen", std::to_string(da.max_gen));
      c_depth.note("trials", std::to_string(c_depth.trials));
      return cmd_depth_tail(c_depth, da);
    }
    if (star->parsed()) {
      merge_config(star, c_star);
      c_star.note("cmd", "star");
      c_star.note("experiment", sta.experiment);
      c_star.note("lambda", csv_double(sta.lambda));
      c_star.note("f", csv_double(sta.f));
      c_star.note("k", std::to_string(sta.k));
      return cmd_star(c_star, sta);
    }
    if (path->parsed()) {
      merge_config(path, c_path);
      c_path.note("cmd", "path");
      c_path.note("lambda", csv_double(pa.lambda));
      c_path.note("fitness_vector", pa.fitness_vector);
      return cmd_path(c_path, pa);
    }
    if (relay->parsed()) {
      merge_config(relay, c_relay);
      c_relay.note("cmd", "relay");
      c_relay.note("lambda", csv_double(ra.lambda));
      c_relay.note("f", csv_double(ra.f));
      c_relay.note("k", std::to_string(ra.k));
      c_relay.note("r", std::to_string(ra.r));
      return cmd_relay(c_relay, ra);
    }
    if (ychain->parsed()) {
      merge_config(ychain, c_ychain);
      c_ychain.note("cmd", "ychain");
      c_ychain.note("lambda", csv_double(ya.lambda));
      c_ychain.note("f", csv_double(ya.f));
      c_ychain.note("k", std::to_string(ya.k));
      return cmd_ychain(c_ychain, ya);
    }
    if (perc->parsed()) {
      merge_config(perc, c_perc);
      c_perc.note("cmd", "percolation");
      c_perc.note("lambda", csv_double(pca.lambda));
      c_perc.note("t0", csv_double(pca.t0));
      return cmd_percolation(c_perc, pca);
    }
    if (verify->parsed()) {
      merge_config(verify, c_verify);
      c_verify.note("cmd", "verify");
      c_verify.note("suite", va.suite);
      c_verify.note("instances", std::to_string(va.instances));
      return cmd_verify(c_verify, va);
    }
    if (good->parsed()) {
      merge_config(good, c_good);
      c_good.note("cmd", "good-vertices");
      c_good.note("f", csv_double(gva.f));
      c_good.note("k", std::to_string(gva.k));
      c_good.note("generation", std::to_string(gva.generation));
      return cmd_good_vertices(c_good, gva);
    }
  } catch (const VertexBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace cpfs::cli
