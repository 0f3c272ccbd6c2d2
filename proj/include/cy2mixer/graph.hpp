#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cy2mixer/detail/text.hpp"
#include "cy2mixer/error.hpp"

namespace cy2mixer {

struct WeightedEdge {
  int u = 0;
  int v = 0;
  double weight = 1.0;
};

/// Undirected weighted simple graph. Edges are stored with u < v, sorted by
/// (u, v); the edge index is the coordinate used by GF(2) incidence vectors.
class Graph {
 public:
  Graph() = default;

  int num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  std::span<const WeightedEdge> edges() const noexcept { return edges_; }
  const WeightedEdge& edge(std::size_t i) const { return edges_.at(i); }

  /// Ascending neighbor lists.
  const std::vector<int>& neighbors(int v) const { return adjacency_.at(static_cast<std::size_t>(v)); }

  std::optional<std::size_t> edge_index(int a, int b) const {
    if (a == b || a < 0 || b < 0 || a >= num_nodes_ || b >= num_nodes_) return std::nullopt;
    const auto it = lookup_.find(key(a, b));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

  bool has_edge(int a, int b) const { return edge_index(a, b).has_value(); }

  friend Graph build_graph(int num_nodes, std::span<const WeightedEdge> edge_list);

 private:
  std::uint64_t key(int a, int b) const {
    if (a > b) std::swap(a, b);
    return static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(num_nodes_) + static_cast<std::uint64_t>(b);
  }

  int num_nodes_ = 0;
  std::vector<WeightedEdge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

inline Graph build_graph(int num_nodes, std::span<const WeightedEdge> edge_list) {
  if (num_nodes <= 0) fail(errc::index_out_of_range, "graph needs at least one node");
  Graph g;
  g.num_nodes_ = num_nodes;
  g.edges_.reserve(edge_list.size());
  for (const auto& e : edge_list) {
    if (e.u < 0 || e.v < 0 || e.u >= num_nodes || e.v >= num_nodes) {
      fail(errc::index_out_of_range,
           "edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") outside [0," + std::to_string(num_nodes) + ")");
    }
    if (e.u == e.v) fail(errc::self_loop, "self-loop at node " + std::to_string(e.u));
    if (!std::isfinite(e.weight) || e.weight < 0.0) {
      fail(errc::parse_error, "edge weight must be finite and non-negative");
    }
    g.edges_.push_back({std::min(e.u, e.v), std::max(e.u, e.v), e.weight});
  }
  std::stable_sort(g.edges_.begin(), g.edges_.end(),
                   [](const WeightedEdge& a, const WeightedEdge& b) { return std::pair(a.u, a.v) < std::pair(b.u, b.v); });
  g.adjacency_.assign(static_cast<std::size_t>(num_nodes), {});
  g.lookup_.reserve(g.edges_.size() * 2);
  for (std::size_t i = 0; i < g.edges_.size(); ++i) {
    const auto& e = g.edges_[i];
    if (!g.lookup_.emplace(g.key(e.u, e.v), i).second) {
      fail(errc::duplicate_edge, "duplicate edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
    }
    g.adjacency_[static_cast<std::size_t>(e.u)].push_back(e.v);
    g.adjacency_[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& nb : g.adjacency_) std::sort(nb.begin(), nb.end());
  return g;
}

inline Graph build_graph(int num_nodes, std::initializer_list<WeightedEdge> edge_list) {
  return build_graph(num_nodes, std::span<const WeightedEdge>(edge_list.begin(), edge_list.size()));
}

struct Components {
  std::vector<int> label;  // component id per node, numbered by lowest member
  int count = 0;
};

inline Components connected_components(const Graph& g) {
  Components c;
  c.label.assign(static_cast<std::size_t>(g.num_nodes()), -1);
  std::vector<int> stack;
  for (int s = 0; s < g.num_nodes(); ++s) {
    if (c.label[static_cast<std::size_t>(s)] >= 0) continue;
    c.label[static_cast<std::size_t>(s)] = c.count;
    stack.push_back(s);
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      for (int w : g.neighbors(v)) {
        if (c.label[static_cast<std::size_t>(w)] < 0) {
          c.label[static_cast<std::size_t>(w)] = c.count;
          stack.push_back(w);
        }
      }
    }
    ++c.count;
  }
  return c;
}

/// |E| - |V| + #components.
inline std::size_t cycle_space_dimension(const Graph& g) {
  return g.num_edges() + static_cast<std::size_t>(connected_components(g).count) - static_cast<std::size_t>(g.num_nodes());
}

inline double average_degree(const Graph& g) {
  return 2.0 * static_cast<double>(g.num_edges()) / static_cast<double>(g.num_nodes());
}

// ---------------------------------------------------------------------------
// Random graphs for property sweeps.

template <class Rng>
Graph erdos_renyi(int n, double p, Rng& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<WeightedEdge> es;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (coin(rng)) es.push_back({u, v, 1.0});
  return build_graph(n, es);
}

/// Uniformly random labelled spanning tree (random attachment) plus each
/// remaining pair independently with probability `extra_p`.
template <class Rng>
Graph random_connected_graph(int n, double extra_p, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<WeightedEdge> es;
  std::vector<char> used(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
  auto mark = [&](int a, int b) {
    used[static_cast<std::size_t>(a) * static_cast<std::size_t>(n) + static_cast<std::size_t>(b)] = 1;
    used[static_cast<std::size_t>(b) * static_cast<std::size_t>(n) + static_cast<std::size_t>(a)] = 1;
  };
  for (int i = 1; i < n; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    const int a = order[static_cast<std::size_t>(i)];
    const int b = order[static_cast<std::size_t>(pick(rng))];
    es.push_back({a, b, 1.0});
    mark(a, b);
  }
  std::bernoulli_distribution coin(extra_p);
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (!used[static_cast<std::size_t>(u) * static_cast<std::size_t>(n) + static_cast<std::size_t>(v)] && coin(rng))
        es.push_back({u, v, 1.0});
  return build_graph(n, es);
}

// ---------------------------------------------------------------------------
// Edge-list CSV: header `from,to,cost`, integer ids, real cost.

/// Reads a PEMS-style edge list. Directed duplicates are symmetrized: the
/// unordered pair is kept once with the first cost seen. `num_nodes` = 0
/// means "max id + 1".
inline Graph read_edge_csv(const std::string& path, int num_nodes = 0) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open edge file " + path);
  std::string line;
  if (!std::getline(in, line)) fail(errc::parse_error, path + ": empty edge file");
  const auto header = detail::split(line, ',');
  if (header.size() != 3 || header[0] != "from" || header[1] != "to" || header[2] != "cost") {
    fail(errc::parse_error, path + ": expected header 'from,to,cost'");
  }
  std::vector<WeightedEdge> es;
  std::unordered_map<std::uint64_t, bool> seen;
  int max_id = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split(line, ',');
    const auto where = path + ":" + std::to_string(lineno);
    if (cols.size() != 3) fail(errc::parse_error, where + ": expected 3 columns");
    const auto u = detail::parse_int<int>(cols[0]);
    const auto v = detail::parse_int<int>(cols[1]);
    const auto w = detail::parse_double(cols[2]);
    if (!u || !v || !w) fail(errc::parse_error, where + ": malformed edge row");
    if (*u < 0 || *v < 0) fail(errc::index_out_of_range, where + ": negative node id");
    if (*u == *v) fail(errc::self_loop, where + ": self-loop");
    const auto a = static_cast<std::uint64_t>(std::min(*u, *v));
    const auto b = static_cast<std::uint64_t>(std::max(*u, *v));
    if (!seen.emplace((a << 32) | b, true).second) continue;
    es.push_back({*u, *v, *w});
    max_id = std::max({max_id, *u, *v});
  }
  const int n = num_nodes > 0 ? num_nodes : max_id + 1;
  if (n <= 0) fail(errc::parse_error, path + ": no edges and no node count");
  return build_graph(n, es);
}

inline void write_edge_csv(const std::string& path, const Graph& g) {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out << "from,to,cost\n";
  out.precision(17);
  for (const auto& e : g.edges()) out << e.u << ',' << e.v << ',' << e.weight << '\n';
}

}  // namespace cy2mixer
