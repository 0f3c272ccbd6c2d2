#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cy2mixer/error.hpp"
#include "cy2mixer/gf2.hpp"
#include "cy2mixer/graph.hpp"
#include "cy2mixer/matrix.hpp"

namespace cy2mixer {

enum class AdjacencyKind { standard, clique, dtw };

constexpr const char* to_string(AdjacencyKind k) {
  switch (k) {
    case AdjacencyKind::standard: return "standard";
    case AdjacencyKind::clique: return "clique";
    case AdjacencyKind::dtw: return "dtw";
  }
  return "?";
}

/// Symmetric N x N matrix tagged with how it was produced.
struct AdjacencyMatrix {
  Matrix data;
  AdjacencyKind kind = AdjacencyKind::standard;

  std::size_t size() const noexcept { return data.rows; }
  double operator()(std::size_t i, std::size_t j) const { return data(i, j); }
};

/// Closed walks: cycles[i] = (v0, v1, ..., vm) with the edge vm -> v0 implied.
struct CycleBasis {
  std::vector<std::vector<int>> cycles;
  int parent_graph_nodes = 0;

  std::size_t size() const noexcept { return cycles.size(); }
  bool empty() const noexcept { return cycles.empty(); }
};

/// Unordered base-graph edges, each stored as (min, max).
using EdgeSet = std::vector<std::pair<int, int>>;

namespace detail {

inline void check_basis_belongs(const Graph& g, const CycleBasis& basis) {
  if (basis.parent_graph_nodes != g.num_nodes()) {
    fail(errc::basis_graph_mismatch, "basis built for " + std::to_string(basis.parent_graph_nodes) +
                                         " nodes, graph has " + std::to_string(g.num_nodes()));
  }
  for (std::size_t c = 0; c < basis.cycles.size(); ++c) {
    const auto& cyc = basis.cycles[c];
    if (cyc.size() < 3) fail(errc::basis_graph_mismatch, "cycle " + std::to_string(c) + " has fewer than 3 nodes");
    for (std::size_t i = 0; i < cyc.size(); ++i) {
      const int a = cyc[i];
      const int b = cyc[(i + 1) % cyc.size()];
      if (!g.has_edge(a, b)) {
        fail(errc::basis_graph_mismatch,
             "cycle " + std::to_string(c) + " uses missing edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
      }
    }
  }
}

}  // namespace detail

/// GF(2) incidence vector of a closed walk over the edge index of `g`.
inline gf2::BitVector incidence_vector(const Graph& g, std::span<const int> cycle) {
  gf2::BitVector v(g.num_edges());
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const auto e = g.edge_index(cycle[i], cycle[(i + 1) % cycle.size()]);
    if (!e) fail(errc::unknown_edge, "walk step is not an edge");
    v.flip(*e);
  }
  return v;
}

/// Fundamental cycle basis: per component a BFS tree from the lowest-index
/// node (neighbors in ascending order); every non-tree edge (u, v), taken in
/// ascending (u, v) order, closes the tree path u -> lca -> v.
inline CycleBasis cycle_basis_paton(const Graph& g) {
  const auto n = static_cast<std::size_t>(g.num_nodes());
  std::vector<int> parent(n, -1), depth(n, -1);
  std::vector<char> tree_edge(g.num_edges(), 0);
  std::queue<int> frontier;
  for (int root = 0; root < g.num_nodes(); ++root) {
    if (depth[static_cast<std::size_t>(root)] >= 0) continue;
    depth[static_cast<std::size_t>(root)] = 0;
    frontier.push(root);
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int w : g.neighbors(v)) {
        if (depth[static_cast<std::size_t>(w)] >= 0) continue;
        depth[static_cast<std::size_t>(w)] = depth[static_cast<std::size_t>(v)] + 1;
        parent[static_cast<std::size_t>(w)] = v;
        tree_edge[*g.edge_index(v, w)] = 1;
        frontier.push(w);
      }
    }
  }

  CycleBasis basis;
  basis.parent_graph_nodes = g.num_nodes();
  for (std::size_t ei = 0; ei < g.num_edges(); ++ei) {
    if (tree_edge[ei]) continue;
    int a = g.edge(ei).u;
    int b = g.edge(ei).v;
    std::vector<int> up_a, up_b;
    while (depth[static_cast<std::size_t>(a)] > depth[static_cast<std::size_t>(b)]) {
      up_a.push_back(a);
      a = parent[static_cast<std::size_t>(a)];
    }
    while (depth[static_cast<std::size_t>(b)] > depth[static_cast<std::size_t>(a)]) {
      up_b.push_back(b);
      b = parent[static_cast<std::size_t>(b)];
    }
    while (a != b) {
      up_a.push_back(a);
      up_b.push_back(b);
      a = parent[static_cast<std::size_t>(a)];
      b = parent[static_cast<std::size_t>(b)];
    }
    up_a.push_back(a);  // lowest common ancestor
    up_a.insert(up_a.end(), up_b.rbegin(), up_b.rend());
    basis.cycles.push_back(std::move(up_a));
  }
  return basis;
}

/// Clique completion of every basis cycle: (u, v) = 1 iff u != v co-occur on
/// some cycle.
inline AdjacencyMatrix clique_adjacency(const Graph& g, const CycleBasis& basis) {
  detail::check_basis_belongs(g, basis);
  const auto n = static_cast<std::size_t>(g.num_nodes());
  AdjacencyMatrix out{Matrix(n, n), AdjacencyKind::clique};
  for (const auto& cyc : basis.cycles)
    for (std::size_t i = 0; i < cyc.size(); ++i)
      for (std::size_t j = i + 1; j < cyc.size(); ++j) {
        const auto a = static_cast<std::size_t>(cyc[i]);
        const auto b = static_cast<std::size_t>(cyc[j]);
        out.data(a, b) = 1.0;
        out.data(b, a) = 1.0;
      }
  return out;
}

struct CycleStats {
  std::size_t count = 0;
  double avg_magnitude = 0.0;
};

inline CycleStats cycle_stats(const CycleBasis& basis) {
  CycleStats s;
  s.count = basis.cycles.size();
  if (s.count == 0) return s;
  std::size_t total = 0;
  for (const auto& c : basis.cycles) total += c.size();
  s.avg_magnitude = static_cast<double>(total) / static_cast<double>(s.count);
  return s;
}

// ---------------------------------------------------------------------------
// G x I discretized into k layers.

struct TemporalProductGraph {
  Graph base;
  int num_steps = 0;
  Graph graph;  // node (v, t) has index t * N + v

  int base_node(int product_node) const { return product_node % base.num_nodes(); }
  int time_of(int product_node) const { return product_node / base.num_nodes(); }
  int index(int v, int t) const { return t * base.num_nodes() + v; }
};

inline TemporalProductGraph temporal_product(const Graph& g, int num_steps) {
  if (num_steps < 2) fail(errc::invalid_steps, "temporal product needs k >= 2, got " + std::to_string(num_steps));
  const int n = g.num_nodes();
  std::vector<WeightedEdge> es;
  es.reserve(static_cast<std::size_t>(num_steps) * g.num_edges() +
             static_cast<std::size_t>(num_steps - 1) * static_cast<std::size_t>(n));
  for (int t = 0; t < num_steps; ++t)
    for (const auto& e : g.edges()) es.push_back({t * n + e.u, t * n + e.v, e.weight});
  for (int t = 0; t + 1 < num_steps; ++t)
    for (int v = 0; v < n; ++v) es.push_back({t * n + v, (t + 1) * n + v, 1.0});
  return {g, num_steps, build_graph(n * num_steps, es)};
}

struct ProjectedCycle {
  EdgeSet edges;          // ascending (u, v), u < v
  bool vanished = false;  // every edge cancelled over GF(2)
};

/// Maps each product cycle through (v, t) -> v and reduces the image over
/// GF(2): temporal edges disappear, base edges traversed an even number of
/// times cancel.
inline std::vector<ProjectedCycle> project_cycle_basis(const TemporalProductGraph& tpg, const CycleBasis& basis) {
  detail::check_basis_belongs(tpg.graph, basis);
  const Graph& base = tpg.base;
  std::vector<ProjectedCycle> out;
  out.reserve(basis.cycles.size());
  for (const auto& cyc : basis.cycles) {
    gf2::BitVector bits(base.num_edges());
    for (std::size_t i = 0; i < cyc.size(); ++i) {
      const int a = tpg.base_node(cyc[i]);
      const int b = tpg.base_node(cyc[(i + 1) % cyc.size()]);
      if (a == b) continue;
      bits.flip(*base.edge_index(a, b));
    }
    ProjectedCycle pc;
    for (std::size_t e = 0; e < base.num_edges(); ++e)
      if (bits.test(e)) pc.edges.emplace_back(base.edge(e).u, base.edge(e).v);
    pc.vanished = pc.edges.empty();
    out.push_back(std::move(pc));
  }
  return out;
}

inline std::vector<EdgeSet> edge_sets(std::span<const ProjectedCycle> projected) {
  std::vector<EdgeSet> out;
  out.reserve(projected.size());
  for (const auto& p : projected) out.push_back(p.edges);
  return out;
}

/// True iff every candidate is a cycle-space element (even degree everywhere)
/// and together they span the cycle space of `g`. Redundant members are fine.
inline bool is_cycle_basis(const Graph& g, std::span<const EdgeSet> candidate) {
  std::vector<gf2::BitVector> rows;
  rows.reserve(candidate.size());
  bool all_even = true;
  for (const auto& set : candidate) {
    gf2::BitVector v(g.num_edges());
    for (const auto& [a, b] : set) {
      const auto e = g.edge_index(a, b);
      if (!e) fail(errc::unknown_edge, "(" + std::to_string(a) + "," + std::to_string(b) + ") is not an edge");
      v.flip(*e);
    }
    std::vector<char> parity(static_cast<std::size_t>(g.num_nodes()), 0);
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      if (!v.test(e)) continue;
      parity[static_cast<std::size_t>(g.edge(e).u)] ^= 1;
      parity[static_cast<std::size_t>(g.edge(e).v)] ^= 1;
    }
    if (std::any_of(parity.begin(), parity.end(), [](char p) { return p != 0; })) all_even = false;
    rows.push_back(std::move(v));
  }
  return all_even && gf2::rank(rows) == cycle_space_dimension(g);
}

// ---------------------------------------------------------------------------

struct AdjacencyMode {
  enum class Kind { binary, gaussian_kernel } kind = Kind::binary;
  double sigma = 1.0;
  double threshold = 0.0;

  static AdjacencyMode binary() { return {}; }
  static AdjacencyMode gaussian(double sigma, double threshold) { return {Kind::gaussian_kernel, sigma, threshold}; }
};

/// Binary: 1 per edge. Gaussian: exp(-d^2 / sigma^2), zeroed below threshold.
inline AdjacencyMatrix dense_adjacency(const Graph& g, AdjacencyMode mode = AdjacencyMode::binary()) {
  if (mode.kind == AdjacencyMode::Kind::gaussian_kernel && !(mode.sigma > 0.0)) {
    fail(errc::invalid_sigma, "gaussian kernel needs sigma > 0");
  }
  const auto n = static_cast<std::size_t>(g.num_nodes());
  AdjacencyMatrix out{Matrix(n, n), AdjacencyKind::standard};
  for (const auto& e : g.edges()) {
    double w = 1.0;
    if (mode.kind == AdjacencyMode::Kind::gaussian_kernel) {
      w = std::exp(-(e.weight * e.weight) / (mode.sigma * mode.sigma));
      if (w < mode.threshold) w = 0.0;
    }
    out.data(static_cast<std::size_t>(e.u), static_cast<std::size_t>(e.v)) = w;
    out.data(static_cast<std::size_t>(e.v), static_cast<std::size_t>(e.u)) = w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Empirical check that projecting a cycle basis of G x I recovers one of G.

struct Theorem1Trial {
  int nodes = 0;
  std::size_t edges = 0;
  int steps = 0;
  std::size_t product_basis_size = 0;
  std::size_t vanished = 0;
  bool passed = false;
};

struct Theorem1Report {
  std::vector<Theorem1Trial> trials;
  std::size_t passed() const {
    return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const auto& t) { return t.passed; }));
  }
  bool all_passed() const { return passed() == trials.size(); }
};

inline Theorem1Trial check_projection_theorem(const Graph& g, int steps) {
  const auto tpg = temporal_product(g, steps);
  const auto basis = cycle_basis_paton(tpg.graph);
  const auto projected = project_cycle_basis(tpg, basis);
  const auto sets = edge_sets(projected);
  Theorem1Trial t;
  t.nodes = g.num_nodes();
  t.edges = g.num_edges();
  t.steps = steps;
  t.product_basis_size = basis.size();
  t.vanished = static_cast<std::size_t>(
      std::count_if(projected.begin(), projected.end(), [](const auto& p) { return p.vanished; }));
  t.passed = is_cycle_basis(g, sets);
  return t;
}

/// `trials` random connected graphs with 2..max_nodes nodes, each lifted to
/// `steps` layers.
inline Theorem1Report verify_theorem1(int max_nodes, int trials, int steps, std::uint64_t seed) {
  if (max_nodes < 2) fail(errc::invalid_spec, "max_nodes must be >= 2");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size_dist(2, max_nodes);
  std::uniform_real_distribution<double> density(0.05, 0.5);
  Theorem1Report report;
  for (int i = 0; i < trials; ++i) {
    const int n = size_dist(rng);
    const auto g = random_connected_graph(n, density(rng), rng);
    report.trials.push_back(check_projection_theorem(g, steps));
  }
  return report;
}

}  // namespace cy2mixer
