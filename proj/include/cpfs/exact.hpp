#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpfs/process.hpp"
#include "cpfs/tree.hpp"

namespace cpfs {

/// Exact CTMC generator over bit-encoded configurations. Bit i of a state is
/// encoded vertex i; a permanently infected parent (rho+ or the shared parent
/// of a product chain) stays outside the encoding since its state never
/// changes. Capped at 20 encoded vertices.
struct GeneratorMatrix {
  uint32_t n_states = 0;
  int n_enc = 0;
  std::vector<int32_t> vertex_of_enc;
  double lambda = 0.0;
  double theta = 1.0;
  Variant variant = Variant::plain;
  std::vector<int32_t> depth_r;  // r(x) per state; 0 for the empty state

  // CSR off-diagonal transitions
  std::vector<uint32_t> row_ptr;
  std::vector<uint32_t> col;
  std::vector<double> rate;
  std::vector<double> out_rate;

  double rate_between(uint32_t x, uint32_t y) const {
    for (uint32_t i = row_ptr[x]; i < row_ptr[x + 1]; ++i)
      if (col[i] == y) return rate[i];
    return 0.0;
  }
};

struct StationaryVector {
  std::vector<double> p;
  double residual_norm = 0.0;
};

namespace detail {

struct EncVertex {
  double fitness = 1.0;
  int32_t depth_from_parent = 0;     // r contribution when infected
  double parent_pressure = 0.0;      // fitness of a permanent parent, 0 if none
  bool frozen_root = false;          // recovery valid only in the lone-root state
  std::vector<int> neighbors;        // encoded indices
};

inline GeneratorMatrix build_from_enc(const std::vector<EncVertex>& enc, double lambda,
                                      double theta, Variant variant,
                                      const std::vector<int32_t>& vertex_of_enc) {
  const int n = static_cast<int>(enc.size());
  if (n > 20) throw std::invalid_argument("exact: state space capped at 20 vertices");
  GeneratorMatrix g;
  g.n_enc = n;
  g.n_states = 1u << n;
  g.vertex_of_enc = vertex_of_enc;
  g.lambda = lambda;
  g.theta = theta;
  g.variant = variant;
  g.depth_r.resize(g.n_states, 0);
  g.row_ptr.resize(g.n_states + 1, 0);
  g.out_rate.resize(g.n_states, 0.0);

  uint32_t frozen_mask = 0;
  for (int i = 0; i < n; ++i)
    if (enc[i].frozen_root) frozen_mask |= 1u << i;

  // depth of the deepest infected vertex, measured from the permanent parent
  for (uint32_t x = 1; x < g.n_states; ++x) {
    int32_t lsb = static_cast<int32_t>(__builtin_ctz(x));
    uint32_t rest = x & (x - 1);
    g.depth_r[x] = std::max(enc[static_cast<size_t>(lsb)].depth_from_parent,
                            g.depth_r[rest]);
  }

  g.col.reserve(static_cast<size_t>(g.n_states) * static_cast<size_t>(n) / 2);
  g.rate.reserve(g.col.capacity());
  for (uint32_t x = 0; x < g.n_states; ++x) {
    double scale =
        variant == Variant::delayed ? std::pow(theta, g.depth_r[x]) : 1.0;
    double out = 0.0;
    for (int i = 0; i < n; ++i) {
      uint32_t bit = 1u << i;
      if (x & bit) {
        if ((bit & frozen_mask) && x != bit) continue;  // frozen root, not alone
        double r = scale;
        g.col.push_back(x & ~bit);
        g.rate.push_back(r);
        out += r;
      } else {
        double press = enc[static_cast<size_t>(i)].parent_pressure;
        for (int nb : enc[static_cast<size_t>(i)].neighbors)
          if (x & (1u << nb)) press += enc[static_cast<size_t>(nb)].fitness;
        if (press > 0.0) {
          double r = scale * lambda * enc[static_cast<size_t>(i)].fitness * press;
          g.col.push_back(x | bit);
          g.rate.push_back(r);
          out += r;
        }
      }
    }
    g.out_rate[x] = out;
    g.row_ptr[x + 1] = static_cast<uint32_t>(g.col.size());
  }
  return g;
}

}  // namespace detail

/// Generator of the process on the given tree. plain forbids an extra root;
/// the other variants require one (it becomes the permanent parent).
inline GeneratorMatrix build_generator(const WeightedTree& tree,
                                       const ProcessParams& params) {
  params.validate();
  bool needs_parent = params.variant != Variant::plain;
  if (needs_parent && !tree.has_extra_root())
    throw std::invalid_argument("build_generator: variant requires an extra root");
  if (!needs_parent && tree.has_extra_root())
    throw std::invalid_argument("build_generator: plain variant on extra-root tree");

  std::vector<int32_t> vertex_of_enc;
  std::vector<int32_t> enc_of_vertex(tree.size(), -1);
  for (size_t v = 0; v < tree.size(); ++v) {
    if (static_cast<int32_t>(v) == tree.extra_root) continue;
    enc_of_vertex[v] = static_cast<int32_t>(vertex_of_enc.size());
    vertex_of_enc.push_back(static_cast<int32_t>(v));
  }
  std::vector<detail::EncVertex> enc(vertex_of_enc.size());
  for (size_t i = 0; i < vertex_of_enc.size(); ++i) {
    int32_t v = vertex_of_enc[i];
    size_t vi = static_cast<size_t>(v);
    enc[i].fitness = tree.fitness[vi];
    enc[i].depth_from_parent = tree.depth[vi] + (needs_parent ? 1 : 0);
    if (needs_parent && v == tree.root) enc[i].parent_pressure = 1.0;  // F_{rho+}
    if (params.variant == Variant::root_frozen_recovery && v == tree.root)
      enc[i].frozen_root = true;
    tree.for_each_neighbor(v, [&](int32_t nb) {
      if (nb == tree.extra_root) return;
      enc[i].neighbors.push_back(enc_of_vertex[static_cast<size_t>(nb)]);
    });
  }
  return detail::build_from_enc(enc, params.lambda, params.theta, params.variant,
                                vertex_of_enc);
}

/// Generator of the product chain: independent subtrees, each hanging from a
/// shared permanently infected parent with the given fitness. Encoded bits
/// are laid out component after component, in order.
inline GeneratorMatrix build_forest_generator(std::span<const WeightedTree> subtrees,
                                              double parent_fitness, double lambda) {
  if (subtrees.empty()) throw std::invalid_argument("forest: no subtrees");
  if (!(parent_fitness >= 1.0))
    throw std::invalid_argument("forest: parent fitness must be >= 1");
  std::vector<detail::EncVertex> enc;
  std::vector<int32_t> vertex_of_enc;
  int base = 0;
  for (const WeightedTree& t : subtrees) {
    if (t.has_extra_root()) throw std::invalid_argument("forest: plain subtrees only");
    for (size_t v = 0; v < t.size(); ++v) {
      detail::EncVertex e;
      e.fitness = t.fitness[v];
      e.depth_from_parent = t.depth[v] + 1;
      if (static_cast<int32_t>(v) == t.root) e.parent_pressure = parent_fitness;
      t.for_each_neighbor(static_cast<int32_t>(v),
                          [&](int32_t nb) { e.neighbors.push_back(base + nb); });
      enc.push_back(std::move(e));
      vertex_of_enc.push_back(base + static_cast<int32_t>(v));
    }
    base += static_cast<int32_t>(t.size());
  }
  return detail::build_from_enc(enc, lambda, 1.0, Variant::extra_root_permanent,
                                vertex_of_enc);
}

namespace detail {

// LU factorization with partial pivoting plus two steps of iterative
// refinement; the identity checks are pinned at 1e-10, which a single solve
// does not always clear on ill-scaled chains.
class DenseLU {
 public:
  DenseLU(std::vector<double> a, size_t n) : lu_(std::move(a)), n_(n), piv_(n) {
    if (n_ > (1u << 14))
      throw std::invalid_argument("exact: dense solve capped at 2^14");
    for (size_t k = 0; k < n_; ++k) {
      size_t piv = k;
      double best = std::abs(lu_[k * n_ + k]);
      for (size_t i = k + 1; i < n_; ++i) {
        double v = std::abs(lu_[i * n_ + k]);
        if (v > best) {
          best = v;
          piv = i;
        }
      }
      if (best < 1e-300) throw std::runtime_error("exact: singular linear system");
      piv_[k] = piv;
      if (piv != k)
        for (size_t j = 0; j < n_; ++j) std::swap(lu_[k * n_ + j], lu_[piv * n_ + j]);
      double inv = 1.0 / lu_[k * n_ + k];
      for (size_t i = k + 1; i < n_; ++i) {
        double m = lu_[i * n_ + k] * inv;
        lu_[i * n_ + k] = m;
        if (m == 0.0) continue;
        for (size_t j = k + 1; j < n_; ++j) lu_[i * n_ + j] -= m * lu_[k * n_ + j];
      }
    }
  }

  std::vector<double> solve(std::vector<double> b) const {
    // the stored L rows are fully permuted, so apply every interchange first
    for (size_t k = 0; k < n_; ++k) std::swap(b[k], b[piv_[k]]);
    for (size_t k = 0; k < n_; ++k)
      for (size_t i = k + 1; i < n_; ++i) b[i] -= lu_[i * n_ + k] * b[k];
    for (size_t k = n_; k-- > 0;) {
      for (size_t j = k + 1; j < n_; ++j) b[k] -= lu_[k * n_ + j] * b[j];
      b[k] /= lu_[k * n_ + k];
    }
    return b;
  }

 private:
  std::vector<double> lu_;
  size_t n_;
  std::vector<size_t> piv_;
};

inline void solve_dense(std::vector<double>& A, std::vector<double>& b, size_t n) {
  DenseLU lu(A, n);  // keep A for the residual passes
  std::vector<double> x = lu.solve(b);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> r(n);
    for (size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (size_t j = 0; j < n; ++j) s -= A[i * n + j] * x[j];
      r[i] = s;
    }
    std::vector<double> d = lu.solve(std::move(r));
    for (size_t i = 0; i < n; ++i) x[i] += d[i];
  }
  b = std::move(x);
}

}  // namespace detail

/// Solves pi Q = 0, sum pi = 1 by dense elimination. Requires a chain without
/// absorbing states (give it a variant with a permanently infected parent).
inline StationaryVector stationary_distribution(const GeneratorMatrix& g) {
  for (uint32_t x = 0; x < g.n_states; ++x)
    if (g.out_rate[x] == 0.0)
      throw std::invalid_argument(
          "stationary_distribution: chain has absorbing state " + std::to_string(x) +
          "; use a permanently-infected-root variant");
  size_t n = g.n_states;
  std::vector<double> A(n * n, 0.0);
  std::vector<double> b(n, 0.0);
  // row y > 0: sum_x pi(x) Q(x, y) = 0; row 0: sum pi = 1
  for (size_t x = 0; x < n; ++x) {
    A[0 * n + x] = 1.0;
    if (x != 0) A[x * n + x] = -g.out_rate[x];
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i) {
      uint32_t y = g.col[i];
      if (y != 0) A[static_cast<size_t>(y) * n + x] += g.rate[i];
    }
  }
  b[0] = 1.0;
  detail::solve_dense(A, b, n);
  StationaryVector out;
  out.p = std::move(b);
  std::vector<double> res(n, 0.0);
  for (size_t x = 0; x < n; ++x) {
    res[x] -= out.p[x] * g.out_rate[x];
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i)
      res[static_cast<size_t>(g.col[i])] += out.p[x] * g.rate[i];
  }
  for (double r : res) out.residual_norm = std::max(out.residual_norm, std::abs(r));
  return out;
}

/// Expected time to reach the target set from the start state: linear solve
/// of the generator restricted to the reachable transient states.
inline double expected_hitting_time(const GeneratorMatrix& g,
                                    std::span<const uint32_t> target_states,
                                    uint32_t start) {
  std::vector<uint8_t> is_target(g.n_states, 0);
  for (uint32_t t : target_states) is_target[t] = 1;
  if (is_target[start]) return 0.0;

  // reachable set from start
  std::vector<uint8_t> seen(g.n_states, 0);
  std::vector<uint32_t> order{start};
  seen[start] = 1;
  bool target_reachable = false;
  for (size_t qi = 0; qi < order.size(); ++qi) {
    uint32_t x = order[qi];
    if (is_target[x]) {
      target_reachable = true;
      continue;  // stop exploring past targets
    }
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i) {
      uint32_t y = g.col[i];
      if (!seen[y]) {
        seen[y] = 1;
        order.push_back(y);
      }
    }
  }
  if (!target_reachable)
    throw std::invalid_argument("expected_hitting_time: target unreachable from start");

  std::vector<int32_t> idx(g.n_states, -1);
  std::vector<uint32_t> transient;
  for (uint32_t x : order)
    if (!is_target[x]) {
      idx[x] = static_cast<int32_t>(transient.size());
      transient.push_back(x);
    }
  size_t n = transient.size();
  std::vector<double> A(n * n, 0.0);
  std::vector<double> b(n, -1.0);
  for (size_t r = 0; r < n; ++r) {
    uint32_t x = transient[r];
    A[r * n + r] = -g.out_rate[x];
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i) {
      uint32_t y = g.col[i];
      if (idx[y] >= 0) A[r * n + static_cast<size_t>(idx[y])] += g.rate[i];
    }
  }
  detail::solve_dense(A, b, n);
  return b[static_cast<size_t>(idx[start])];
}

inline double expected_extinction_time(const GeneratorMatrix& g, uint32_t start) {
  uint32_t zero = 0;
  return expected_hitting_time(g, std::span<const uint32_t>(&zero, 1), start);
}

/// P(hit target set A before hitting avoid set B), from start.
inline double absorption_probability(const GeneratorMatrix& g,
                                     std::span<const uint32_t> target,
                                     std::span<const uint32_t> avoid, uint32_t start) {
  std::vector<uint8_t> kind(g.n_states, 0);  // 1 target, 2 avoid
  for (uint32_t t : target) kind[t] = 1;
  for (uint32_t a : avoid)
    if (kind[a] != 1) kind[a] = 2;
  if (kind[start] == 1) return 1.0;
  if (kind[start] == 2) return 0.0;

  std::vector<int32_t> idx(g.n_states, -1);
  std::vector<uint32_t> transient;
  std::vector<uint32_t> stack{start};
  std::vector<uint8_t> seen(g.n_states, 0);
  seen[start] = 1;
  while (!stack.empty()) {
    uint32_t x = stack.back();
    stack.pop_back();
    if (kind[x] != 0) continue;
    idx[x] = 0;
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i)
      if (!seen[g.col[i]]) {
        seen[g.col[i]] = 1;
        stack.push_back(g.col[i]);
      }
  }
  for (uint32_t x = 0; x < g.n_states; ++x)
    if (seen[x] && kind[x] == 0) {
      idx[x] = static_cast<int32_t>(transient.size());
      transient.push_back(x);
    }
  size_t n = transient.size();
  std::vector<double> A(n * n, 0.0);
  std::vector<double> b(n, 0.0);
  for (size_t r = 0; r < n; ++r) {
    uint32_t x = transient[r];
    A[r * n + r] = -g.out_rate[x];
    for (uint32_t i = g.row_ptr[x]; i < g.row_ptr[x + 1]; ++i) {
      uint32_t y = g.col[i];
      if (kind[y] == 1)
        b[r] -= g.rate[i];
      else if (idx[y] >= 0 && kind[y] == 0)
        A[r * n + static_cast<size_t>(idx[y])] += g.rate[i];
    }
  }
  detail::solve_dense(A, b, n);
  return b[static_cast<size_t>(idx[start])];
}

/// Stationary law of the delayed chain from the plain one:
/// nu(x) = theta^{-r(x)} pi(x) / sum_y theta^{-r(y)} pi(y).
inline StationaryVector delayed_reweight(const StationaryVector& plain, double theta,
                                         std::span<const int32_t> depth_r) {
  if (!(theta > 0.0 && theta < 1.0))
    throw std::invalid_argument("delayed_reweight: theta in (0,1)");
  if (plain.p.size() != depth_r.size())
    throw std::invalid_argument("delayed_reweight: size mismatch");
  StationaryVector out;
  out.p.resize(plain.p.size());
  double z = 0.0;
  for (size_t x = 0; x < plain.p.size(); ++x) {
    out.p[x] = std::pow(theta, -static_cast<double>(depth_r[x])) * plain.p[x];
    z += out.p[x];
  }
  for (double& v : out.p) v /= z;
  out.residual_norm = plain.residual_norm;
  return out;
}

inline uint32_t state_bit_of_vertex(const GeneratorMatrix& g, int32_t vertex) {
  for (size_t i = 0; i < g.vertex_of_enc.size(); ++i)
    if (g.vertex_of_enc[i] == vertex) return 1u << i;
  throw std::invalid_argument("vertex is not encoded in this generator");
}

struct ProductChainSpec {
  const WeightedTree* tree = nullptr;
  double lambda = 1.0;
};

struct ProductChainReport {
  double max_deviation = 0.0;   // joint stationary vs tensor product
  double pi0_joint = 0.0;
  double pi0_product = 0.0;     // product of per-component pi_i(0)
  double pi0_formula = 0.0;     // product of 1/(1 + lambda phi F_vi E[S_i])
};

/// Stationary product identity pi^(D) = tensor of pi_i for independent
/// components sharing one permanently infected parent, plus the closed-form
/// mass of the empty state.
inline ProductChainReport product_chain_check(std::span<const ProductChainSpec> specs,
                                              double parent_fitness) {
  if (specs.size() < 2) throw std::invalid_argument("product chain: need D >= 2");
  double lambda = specs[0].lambda;
  size_t total_vertices = 0;
  for (auto& s : specs) {
    if (s.lambda != lambda)
      throw std::invalid_argument("product chain: mismatched lambda between components");
    total_vertices += s.tree->size();
  }
  if (total_vertices > 16)
    throw std::invalid_argument("product chain: total vertices capped at 16");

  std::vector<WeightedTree> trees;
  for (auto& s : specs) trees.push_back(*s.tree);
  GeneratorMatrix joint = build_forest_generator(trees, parent_fitness, lambda);
  StationaryVector pi_joint = stationary_distribution(joint);

  std::vector<StationaryVector> parts;
  std::vector<int> bits;
  for (auto& t : trees) {
    GeneratorMatrix gi = build_forest_generator(std::span<const WeightedTree>(&t, 1),
                                                parent_fitness, lambda);
    parts.push_back(stationary_distribution(gi));
    bits.push_back(static_cast<int>(t.size()));
  }

  ProductChainReport rep;
  for (uint32_t x = 0; x < joint.n_states; ++x) {
    double prod = 1.0;
    uint32_t rest = x;
    for (size_t i = 0; i < parts.size(); ++i) {
      uint32_t mask = (1u << bits[i]) - 1;
      prod *= parts[i].p[rest & mask];
      rest >>= bits[i];
    }
    rep.max_deviation = std::max(rep.max_deviation, std::abs(prod - pi_joint.p[x]));
  }
  rep.pi0_joint = pi_joint.p[0];
  rep.pi0_product = 1.0;
  rep.pi0_formula = 1.0;
  for (size_t i = 0; i < trees.size(); ++i) {
    rep.pi0_product *= parts[i].p[0];
    GeneratorMatrix gi = build_forest_generator(
        std::span<const WeightedTree>(&trees[i], 1), parent_fitness, lambda);
    double es = expected_extinction_time(gi, 1u << trees[i].root);
    rep.pi0_formula *=
        1.0 / (1.0 + lambda * parent_fitness * trees[i].fitness[0] * es);
  }
  return rep;
}

struct DepthHitResult {
  double probability = 0.0;
  bool beyond_height = false;
};

/// P(the excursion of the permanently-rooted chain from 1_rho reaches depth
/// >= h before emptying), solved exactly. Depth is measured from rho+, so the
/// start state has depth 1 and the deepest reachable value is height + 1.
inline DepthHitResult exact_depth_hit_probability(const WeightedTree& tree,
                                                  double lambda, int h) {
  if (!tree.has_extra_root())
    throw std::invalid_argument("exact_depth_hit_probability: extra root required");
  if (h < 1) throw std::invalid_argument("exact_depth_hit_probability: h >= 1");
  DepthHitResult out;
  if (h > tree.height() + 1) {
    out.beyond_height = true;
    return out;
  }
  ProcessParams params;
  params.lambda = lambda;
  params.variant = Variant::extra_root_permanent;
  GeneratorMatrix g = build_generator(tree, params);
  uint32_t start = state_bit_of_vertex(g, tree.root);
  std::vector<uint32_t> target, avoid{0};
  for (uint32_t x = 1; x < g.n_states; ++x)
    if (g.depth_r[x] >= h) target.push_back(x);
  out.probability = absorption_probability(g, target, avoid, start);
  return out;
}

struct ExcursionReport {
  double frozen_direct = 0.0;   // E[S~_L] by linear solve on the frozen chain
  double frozen_recursive = 0.0;  // 1 + lambda F_rho sum_i F_vi E[S~_i product]
  double deviation = 0.0;
  double plain_excursion = 0.0;  // E[S_L] of the non-frozen chain
};

inline WeightedTree extract_subtree(const WeightedTree& tree, int32_t v) {
  WeightedTree out;
  std::vector<std::pair<int32_t, int32_t>> stack{{v, -1}};
  while (!stack.empty()) {
    auto [orig, par] = stack.back();
    stack.pop_back();
    size_t oi = static_cast<size_t>(orig);
    int32_t id = out.add_vertex(par, tree.fitness[oi],
                                par < 0 ? 0 : out.depth[static_cast<size_t>(par)] + 1,
                                tree.frontier[oi]);
    for (int32_t c : tree.children[oi]) stack.emplace_back(c, id);
  }
  return out;
}

/// Root-frozen excursion time two ways: a direct solve on the frozen chain
/// and through the product-chain recursion, which must agree per instance.
inline ExcursionReport excursion_identity_check(const WeightedTree& tree,
                                                double lambda) {
  if (!tree.has_extra_root())
    throw std::invalid_argument("excursion check: extra-root tree required");
  if (tree.size() > 13)
    throw std::invalid_argument("excursion check: tree too large");
  ExcursionReport rep;

  ProcessParams frozen;
  frozen.lambda = lambda;
  frozen.variant = Variant::root_frozen_recovery;
  GeneratorMatrix gf = build_generator(tree, frozen);
  uint32_t start = state_bit_of_vertex(gf, tree.root);
  rep.frozen_direct = expected_extinction_time(gf, start);

  ProcessParams plain_plus;
  plain_plus.lambda = lambda;
  plain_plus.variant = Variant::extra_root_permanent;
  GeneratorMatrix gp = build_generator(tree, plain_plus);
  rep.plain_excursion = expected_extinction_time(gp, start);

  const double f_rho = tree.fitness[static_cast<size_t>(tree.root)];
  std::vector<WeightedTree> subtrees;
  std::vector<double> child_fitness;
  for (int32_t c : tree.children[static_cast<size_t>(tree.root)]) {
    if (c == tree.extra_root) continue;
    subtrees.push_back(extract_subtree(tree, c));
    child_fitness.push_back(tree.fitness[static_cast<size_t>(c)]);
  }
  double sum = 0.0;
  if (!subtrees.empty()) {
    GeneratorMatrix joint = build_forest_generator(subtrees, f_rho, lambda);
    uint32_t base_bit = 0;
    for (size_t i = 0; i < subtrees.size(); ++i) {
      uint32_t start_i = 1u << base_bit;  // component root infected, rest empty
      double es = expected_extinction_time(joint, start_i);
      sum += child_fitness[i] * es;
      base_bit += static_cast<uint32_t>(subtrees[i].size());
    }
  }
  rep.frozen_recursive = 1.0 + lambda * f_rho * sum;
  rep.deviation = std::abs(rep.frozen_direct - rep.frozen_recursive);
  return rep;
}

}  // namespace cpfs
