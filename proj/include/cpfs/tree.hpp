#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cpfs/dist.hpp"
#include "cpfs/rng.hpp"

namespace cpfs {

// Raised when a growth operation would exceed the vertex budget. Carries the
// number of vertices realized at the point of failure so callers can report
// partial progress instead of silently truncating.
class VertexBudgetError : public std::runtime_error {
 public:
  VertexBudgetError(size_t realized, size_t budget)
      : std::runtime_error("vertex budget exceeded: " + std::to_string(realized) +
                           " realized, budget " + std::to_string(budget)),
        realized_(realized),
        budget_(budget) {}
  size_t realized() const { return realized_; }
  size_t budget() const { return budget_; }

 private:
  size_t realized_, budget_;
};

/// Rooted tree with per-vertex fitness. Vertex 0 is the root; an optional
/// extra parent of the root (fitness pinned to 1, stored depth -1) supports
/// the permanently-infected-parent constructions. Vertices whose children
/// have not been sampled yet carry a frontier flag (lazy growth).
struct WeightedTree {
  std::vector<int32_t> parent;                 // -1 for the topmost vertex
  std::vector<std::vector<int32_t>> children;  // sampled children only
  std::vector<double> fitness;
  std::vector<int32_t> depth;                  // graph distance from root; -1 for rho+
  std::vector<uint8_t> frontier;               // 1 = children not yet sampled
  int32_t root = 0;
  int32_t extra_root = -1;

  size_t size() const { return parent.size(); }
  bool has_extra_root() const { return extra_root >= 0; }

  int32_t height() const {
    int32_t h = 0;
    for (size_t v = 0; v < depth.size(); ++v)
      if (depth[v] > h) h = depth[v];
    return h;
  }

  size_t frontier_count() const {
    size_t n = 0;
    for (uint8_t f : frontier) n += f;
    return n;
  }

  int32_t add_vertex(int32_t par, double fit, int32_t dep, bool on_frontier) {
    int32_t id = static_cast<int32_t>(parent.size());
    parent.push_back(par);
    children.emplace_back();
    fitness.push_back(fit);
    depth.push_back(dep);
    frontier.push_back(on_frontier ? 1 : 0);
    if (par >= 0) children[static_cast<size_t>(par)].push_back(id);
    return id;
  }

  // Neighbors of v in the undirected tree (parent first when present).
  template <class F>
  void for_each_neighbor(int32_t v, F&& f) const {
    if (parent[static_cast<size_t>(v)] >= 0) f(parent[static_cast<size_t>(v)]);
    for (int32_t c : children[static_cast<size_t>(v)]) f(c);
  }

  void validate() const {
    if (parent.empty()) throw std::invalid_argument("tree: empty");
    for (size_t v = 0; v < size(); ++v) {
      if (fitness[v] < 1.0) throw std::invalid_argument("tree: fitness below 1");
      int32_t p = parent[v];
      if (p < 0) {
        int32_t expected_top = has_extra_root() ? extra_root : root;
        if (static_cast<int32_t>(v) != expected_top)
          throw std::invalid_argument("tree: unexpected parentless vertex");
      } else if (static_cast<int32_t>(v) != extra_root &&
                 depth[v] != depth[static_cast<size_t>(p)] + 1) {
        throw std::invalid_argument("tree: depth inconsistency");
      }
    }
    if (has_extra_root()) {
      size_t er = static_cast<size_t>(extra_root);
      if (fitness[er] != 1.0)
        throw std::invalid_argument("tree: extra root must have fitness 1");
      if (children[er].size() != 1)
        throw std::invalid_argument("tree: extra root must have exactly one child");
      if (depth[er] != -1) throw std::invalid_argument("tree: extra root depth flag");
    }
  }
};

inline uint64_t sample_offspring(const OffspringDist& dist, RandomStream& rng) {
  return dist.sample(rng);
}

inline double sample_fitness(const FitnessDist& dist, RandomStream& rng) {
  double f = dist.sample(rng);
  if (f < 1.0) throw std::logic_error("fitness sample below 1");
  return f;
}

/// Samples the children of a frontier vertex exactly once, clearing its
/// frontier flag; the new children join the frontier. Returns the new ids.
inline std::vector<int32_t> extend_vertex(WeightedTree& tree, int32_t v,
                                          const OffspringDist& offspring,
                                          const FitnessDist& fitness, RandomStream& rng,
                                          size_t max_vertices = 1000000) {
  if (v < 0 || static_cast<size_t>(v) >= tree.size())
    throw std::invalid_argument("extend_vertex: no such vertex");
  if (!tree.frontier[static_cast<size_t>(v)])
    throw std::invalid_argument("extend_vertex: vertex already expanded");
  uint64_t count = offspring.sample(rng);
  if (tree.size() + count > max_vertices)
    throw VertexBudgetError(tree.size() + count, max_vertices);
  tree.frontier[static_cast<size_t>(v)] = 0;
  std::vector<int32_t> added;
  added.reserve(count);
  int32_t dep = tree.depth[static_cast<size_t>(v)] + 1;
  for (uint64_t i = 0; i < count; ++i)
    added.push_back(tree.add_vertex(v, sample_fitness(fitness, rng), dep, true));
  return added;
}

/// Breadth-first Galton-Watson tree truncated at max_gen generations. Every
/// vertex above the last generation has its sampled child count realized in
/// full; exceeding the vertex budget raises instead of truncating.
inline WeightedTree generate_tree(const OffspringDist& offspring,
                                  const FitnessDist& fitness, int max_gen,
                                  size_t max_vertices, RandomStream& rng) {
  if (max_gen < 0) throw std::invalid_argument("generate_tree: max_gen must be >= 0");
  if (max_vertices < 1) throw std::invalid_argument("generate_tree: max_vertices >= 1");
  WeightedTree tree;
  tree.add_vertex(-1, sample_fitness(fitness, rng), 0, false);
  size_t next = 0;
  while (next < tree.size()) {
    size_t v = next++;
    if (tree.depth[v] >= max_gen) continue;
    uint64_t count = offspring.sample(rng);
    if (tree.size() + count > max_vertices)
      throw VertexBudgetError(tree.size() + count, max_vertices);
    for (uint64_t i = 0; i < count; ++i)
      tree.add_vertex(static_cast<int32_t>(v), sample_fitness(fitness, rng),
                      tree.depth[v] + 1, false);
  }
  return tree;
}

// Single root vertex with an unexpanded frontier, for lazily grown trees.
inline WeightedTree make_lazy_seed(const FitnessDist& fitness, RandomStream& rng) {
  WeightedTree tree;
  tree.add_vertex(-1, sample_fitness(fitness, rng), 0, true);
  return tree;
}

/// Star with k leaves. leaf_fitness must have length k or length 1 (broadcast).
inline WeightedTree make_star(int k, double root_fitness,
                              std::span<const double> leaf_fitness) {
  if (k < 1) throw std::invalid_argument("make_star: k must be >= 1");
  if (root_fitness < 1.0) throw std::invalid_argument("make_star: fitness below 1");
  if (leaf_fitness.size() != static_cast<size_t>(k) && leaf_fitness.size() != 1)
    throw std::invalid_argument("make_star: leaf fitness length mismatch");
  WeightedTree tree;
  tree.add_vertex(-1, root_fitness, 0, false);
  for (int i = 0; i < k; ++i) {
    double f = leaf_fitness.size() == 1 ? leaf_fitness[0]
                                        : leaf_fitness[static_cast<size_t>(i)];
    if (f < 1.0) throw std::invalid_argument("make_star: fitness below 1");
    tree.add_vertex(0, f, 1, false);
  }
  return tree;
}

inline WeightedTree make_star(int k, double root_fitness, double leaf_fitness) {
  return make_star(k, root_fitness, std::span<const double>(&leaf_fitness, 1));
}

/// Star with k leaves plus a path of length r hung below leaf 1; the first
/// path vertex is the leaf itself, so the graph has k + r vertices in total.
/// path_fitness has length r and covers u_1..u_r.
inline WeightedTree make_star_with_path(int k, int r, double root_fitness,
                                        std::span<const double> path_fitness) {
  if (k < 1 || r < 1) throw std::invalid_argument("make_star_with_path: k, r >= 1");
  if (path_fitness.size() != static_cast<size_t>(r))
    throw std::invalid_argument("make_star_with_path: path fitness length mismatch");
  WeightedTree tree = make_star(k, root_fitness, 1.0);
  tree.fitness[1] = path_fitness[0];
  if (tree.fitness[1] < 1.0)
    throw std::invalid_argument("make_star_with_path: fitness below 1");
  int32_t tip = 1;
  for (int i = 1; i < r; ++i) {
    if (path_fitness[static_cast<size_t>(i)] < 1.0)
      throw std::invalid_argument("make_star_with_path: fitness below 1");
    tip = tree.add_vertex(tip, path_fitness[static_cast<size_t>(i)], i + 1, false);
  }
  return tree;
}

/// Adjoins a permanently healthy-free parent rho+ above the root: fitness 1,
/// stored depth -1. Depths of the original vertices are unchanged; depth
/// measured from rho+ is the stored depth plus one.
inline WeightedTree attach_extra_root(const WeightedTree& tree) {
  if (tree.has_extra_root())
    throw std::invalid_argument("attach_extra_root: tree already has an extra root");
  WeightedTree out = tree;
  int32_t id = out.add_vertex(-1, 1.0, -1, false);
  out.extra_root = id;
  out.parent[static_cast<size_t>(out.root)] = id;
  out.children[static_cast<size_t>(id)].push_back(out.root);
  return out;
}

// --- file format -----------------------------------------------------------
//
// Line-oriented UTF-8:
//   cpfs-tree v1 n=<count> extra_root=<0|1>
//   <id> <parent_id|-1> <fitness, 17 significant digits> <frontier 0|1>
// ids dense 0..n-1, root id 0.

inline std::string serialize_tree(const WeightedTree& tree) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "cpfs-tree v1 n=%zu extra_root=%d\n", tree.size(),
                tree.has_extra_root() ? 1 : 0);
  out += buf;
  for (size_t v = 0; v < tree.size(); ++v) {
    std::snprintf(buf, sizeof buf, "%zu %d %.17g %d\n", v, tree.parent[v],
                  tree.fitness[v], tree.frontier[v] ? 1 : 0);
    out += buf;
  }
  return out;
}

inline WeightedTree parse_tree(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("tree file: empty");
  size_t n = 0;
  int extra = 0;
  if (std::sscanf(line.c_str(), "cpfs-tree v1 n=%zu extra_root=%d", &n, &extra) != 2)
    throw std::invalid_argument("tree file: bad header '" + line + "'");
  if (n == 0) throw std::invalid_argument("tree file: zero vertices");
  WeightedTree tree;
  tree.parent.assign(n, -1);
  tree.children.assign(n, {});
  tree.fitness.assign(n, 1.0);
  tree.depth.assign(n, 0);
  tree.frontier.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line))
      throw std::invalid_argument("tree file: truncated at vertex " + std::to_string(i));
    size_t id;
    long par;
    double fit;
    int fr;
    if (std::sscanf(line.c_str(), "%zu %ld %lf %d", &id, &par, &fit, &fr) != 4)
      throw std::invalid_argument("tree file: bad vertex line '" + line + "'");
    if (id != i) throw std::invalid_argument("tree file: ids must be dense 0..n-1");
    if (par >= static_cast<long>(n) || par < -1)
      throw std::invalid_argument("tree file: parent out of range");
    tree.parent[i] = static_cast<int32_t>(par);
    tree.fitness[i] = fit;
    tree.frontier[i] = fr ? 1 : 0;
  }
  for (size_t i = 0; i < n; ++i)
    if (tree.parent[i] >= 0)
      tree.children[static_cast<size_t>(tree.parent[i])].push_back(
          static_cast<int32_t>(i));
  if (extra) {
    // rho+ is the unique parentless vertex; the tree root stays id 0.
    int32_t er = -1;
    for (size_t i = 0; i < n; ++i)
      if (tree.parent[i] < 0) {
        if (er >= 0) throw std::invalid_argument("tree file: multiple parentless vertices");
        er = static_cast<int32_t>(i);
      }
    if (er == 0) throw std::invalid_argument("tree file: extra root cannot be vertex 0");
    tree.extra_root = er;
    tree.depth[static_cast<size_t>(er)] = -1;
  } else if (tree.parent[0] != -1) {
    throw std::invalid_argument("tree file: vertex 0 must be the root");
  }
  // recompute depths from the root
  std::vector<int32_t> stack{0};
  tree.depth[0] = 0;
  while (!stack.empty()) {
    int32_t v = stack.back();
    stack.pop_back();
    for (int32_t c : tree.children[static_cast<size_t>(v)]) {
      if (c == tree.extra_root) continue;
      tree.depth[static_cast<size_t>(c)] = tree.depth[static_cast<size_t>(v)] + 1;
      stack.push_back(c);
    }
  }
  tree.validate();
  return tree;
}

}  // namespace cpfs
