#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cpfs/exact.hpp"
#include "cpfs/tree.hpp"

namespace cpfs {

struct CheckRow {
  std::string check_name;
  int instance_id = 0;
  double deviation = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline std::string check_csv_header() {
  return "check_name,instance_id,deviation,tolerance,pass\n";
}

inline std::string to_csv(const CheckRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g,%d\n", r.check_name.c_str(),
                r.instance_id, r.deviation, r.tolerance, r.pass ? 1 : 0);
  return buf;
}

// Random recursive tree: each new vertex picks a uniform parent among the
// existing ones. Fitness uniform on [1, fit_hi].
inline WeightedTree random_tree(RandomStream& rng, int min_vertices, int max_vertices,
                                double fit_hi = 8.0) {
  int n = min_vertices +
          static_cast<int>(rng.pick(static_cast<uint64_t>(max_vertices - min_vertices + 1)));
  WeightedTree tree;
  tree.add_vertex(-1, rng.uniform_range(1.0, fit_hi), 0, false);
  for (int v = 1; v < n; ++v) {
    int32_t parent = static_cast<int32_t>(rng.pick(static_cast<uint64_t>(v)));
    tree.add_vertex(parent, rng.uniform_range(1.0, fit_hi),
                    tree.depth[static_cast<size_t>(parent)] + 1, false);
  }
  return tree;
}

// The exact-module verification battery: per-instance identities from the
// stationary analysis, randomized over small trees, fitness, lambda, theta.
inline std::vector<CheckRow> run_exact_verification(uint64_t master_seed,
                                                    int instances = 100,
                                                    int max_vertices = 5) {
  std::vector<CheckRow> rows;
  RandomStream rng(master_seed, 0);

  auto push = [&rows](const std::string& name, int id, double dev, double tol) {
    rows.push_back({name, id, dev, tol, dev < tol});
  };

  for (int i = 0; i < instances; ++i) {
    // redraw instances whose excursions leave the desk-scale regime: the
    // identity checks are condition-limited once E[S] grows past ~1e2, and
    // the tolerances below assume moderate scales
    WeightedTree plus;
    double lambda = 0.0, theta = rng.uniform_range(0.1, 0.9);
    ProcessParams pp;
    pp.variant = Variant::extra_root_permanent;
    GeneratorMatrix gen;
    double es = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
      plus = attach_extra_root(random_tree(rng, 1, max_vertices));
      lambda = rng.uniform_range(0.1, 2.0);
      pp.lambda = lambda;
      gen = build_generator(plus, pp);
      es = expected_extinction_time(gen, state_bit_of_vertex(gen, plus.root));
      if (es <= 100.0) break;
    }

    // generator row sums: off-diagonal total minus the stored diagonal
    double row_dev = 0.0;
    for (uint32_t x = 0; x < gen.n_states; ++x) {
      double s = 0.0;
      for (uint32_t e = gen.row_ptr[x]; e < gen.row_ptr[x + 1]; ++e) s += gen.rate[e];
      double scale = std::max(1.0, gen.out_rate[x]);
      row_dev = std::max(row_dev, std::abs(s - gen.out_rate[x]) / scale);
    }
    push("generator_row_sums", i, row_dev, 1e-14);

    StationaryVector pi = stationary_distribution(gen);
    push("stationary_residual", i, pi.residual_norm, 1e-10);
    double mass_dev = 0.0, negative = 0.0;
    double total = 0.0;
    for (double p : pi.p) {
      total += p;
      if (p < 0) negative = std::max(negative, -p);
    }
    mass_dev = std::abs(total - 1.0);
    push("stationary_mass", i, mass_dev + negative, 1e-12);

    // pi(0) * (1 + lambda F_rho E[S_L]) = 1 for the permanently rooted chain
    double f_rho = plus.fitness[static_cast<size_t>(plus.root)];
    double identity = pi.p[0] * (1.0 + lambda * f_rho * es);
    push("pi0_identity", i, std::abs(identity - 1.0), 1e-10);

    // delayed stationary equals the reweighted plain stationary
    ProcessParams dp = pp;
    dp.variant = Variant::delayed;
    dp.theta = theta;
    GeneratorMatrix dgen = build_generator(plus, dp);
    StationaryVector nu_direct = stationary_distribution(dgen);
    StationaryVector nu_re = delayed_reweight(pi, theta, gen.depth_r);
    double re_dev = 0.0;
    for (uint32_t x = 0; x < gen.n_states; ++x)
      re_dev = std::max(re_dev, std::abs(nu_direct.p[x] - nu_re.p[x]));
    push("delayed_reweight", i, re_dev, 1e-10);
  }

  // product identity over D = 2, 3 components
  for (int i = 0; i < instances / 2; ++i) {
    int d = 2 + static_cast<int>(rng.pick(2));
    std::vector<WeightedTree> subs;
    for (int j = 0; j < d; ++j) subs.push_back(random_tree(rng, 1, 3));
    double lambda = rng.uniform_range(0.1, 2.0);
    double phi = rng.uniform_range(1.0, 6.0);
    std::vector<ProductChainSpec> specs;
    for (auto& t : subs) specs.push_back({&t, lambda});
    ProductChainReport rep = product_chain_check(specs, phi);
    push("product_identity", i, rep.max_deviation, 1e-10);
    push("product_pi0", i,
         std::abs(rep.pi0_joint - rep.pi0_product) +
             std::abs(rep.pi0_joint - rep.pi0_formula),
         1e-10);
  }

  // root-frozen excursion recursion, and the plain-vs-frozen ordering. The
  // battery stays in a mildly conditioned regime: the recursion goes through
  // a second solve pipeline, and on long excursions the comparison is
  // condition-limited near 1e-10 relative.
  for (int i = 0; i < instances / 2; ++i) {
    WeightedTree plus = attach_extra_root(random_tree(rng, 1, 6, 4.0));
    double lambda = rng.uniform_range(0.1, 1.0);
    ExcursionReport rep = excursion_identity_check(plus, lambda);
    double scale = std::max(1.0, std::abs(rep.frozen_direct));
    push("excursion_identity", i, rep.deviation / scale, 1e-9);
    double order = rep.plain_excursion <= rep.frozen_direct * (1.0 + 1e-9)
                       ? 0.0
                       : (rep.plain_excursion - rep.frozen_direct) / scale;
    push("excursion_order", i, order, 1e-9);
  }

  // exact hitting times nondecreasing in lambda and in each fitness entry
  {
    RandomStream mono = rng.substream(7);
    WeightedTree tree = random_tree(mono, 4, 5);
    int id = 0;
    for (double lambda : {0.2, 0.5, 0.9, 1.4}) {
      ProcessParams pp;
      pp.lambda = lambda;
      pp.variant = Variant::extra_root_permanent;
      WeightedTree plus = attach_extra_root(tree);
      GeneratorMatrix gen = build_generator(plus, pp);
      double base = expected_extinction_time(gen, state_bit_of_vertex(gen, plus.root));
      ProcessParams pp2 = pp;
      pp2.lambda = lambda + 0.05;
      GeneratorMatrix gen2 = build_generator(plus, pp2);
      double up = expected_extinction_time(gen2, state_bit_of_vertex(gen2, plus.root));
      push("hitting_monotone_lambda", id, std::max(0.0, base - up), 1e-12);
      for (size_t v = 0; v < tree.size(); ++v) {
        WeightedTree bumped = tree;
        bumped.fitness[v] += 0.5;
        WeightedTree bplus = attach_extra_root(bumped);
        GeneratorMatrix gen3 = build_generator(bplus, pp);
        double upf =
            expected_extinction_time(gen3, state_bit_of_vertex(gen3, bplus.root));
        push("hitting_monotone_fitness", id * 100 + static_cast<int>(v),
             std::max(0.0, base - upf), 1e-12);
      }
      ++id;
    }
  }

  return rows;
}

}  // namespace cpfs
