#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "cy2mixer/graph.hpp"
#include "cy2mixer/topology.hpp"

using namespace cy2mixer;

namespace {

// Independent oracles: union-find for components, dense Gaussian elimination
// over GF(2) for rank.

int components_by_union_find(const Graph& g) {
  std::vector<int> parent(static_cast<std::size_t>(g.num_nodes()));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  int count = g.num_nodes();
  for (const auto& e : g.edges()) {
    const int a = find(e.u), b = find(e.v);
    if (a != b) {
      parent[static_cast<std::size_t>(a)] = b;
      --count;
    }
  }
  return count;
}

std::size_t dense_gf2_rank(std::vector<std::vector<char>> m) {
  std::size_t rank = 0;
  const std::size_t cols = m.empty() ? 0 : m[0].size();
  for (std::size_t c = 0; c < cols && rank < m.size(); ++c) {
    std::size_t pivot = rank;
    while (pivot < m.size() && !m[pivot][c]) ++pivot;
    if (pivot == m.size()) continue;
    std::swap(m[pivot], m[rank]);
    for (std::size_t r = 0; r < m.size(); ++r)
      if (r != rank && m[r][c])
        for (std::size_t k = 0; k < cols; ++k) m[r][k] ^= m[rank][k];
    ++rank;
  }
  return rank;
}

std::vector<char> incidence(const Graph& g, const std::vector<int>& cycle) {
  std::vector<char> v(g.num_edges(), 0);
  for (std::size_t i = 0; i < cycle.size(); ++i) {
    const auto idx = g.edge_index(cycle[i], cycle[(i + 1) % cycle.size()]);
    EXPECT_TRUE(idx.has_value());
    if (idx) v[*idx] ^= 1;
  }
  return v;
}

std::vector<char> incidence(const Graph& g, const EdgeSet& edges) {
  std::vector<char> v(g.num_edges(), 0);
  for (const auto& [a, b] : edges) v[*g.edge_index(a, b)] ^= 1;
  return v;
}

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return errc::io_error;
}

Graph triangle() { return build_graph(3, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}}); }

Graph complete(int n) {
  std::vector<WeightedEdge> es;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) es.push_back({u, v, 1});
  return build_graph(n, es);
}

TEST(Paton, SmallCases) {
  const auto tri = cycle_basis_paton(triangle());
  ASSERT_EQ(tri.size(), 1u);
  EXPECT_EQ(tri.cycles[0].size(), 3u);
  EXPECT_TRUE(cycle_basis_paton(build_graph(3, {{0, 1, 1}, {1, 2, 1}})).empty());
  const auto k4 = complete(4);
  const auto b = cycle_basis_paton(k4);
  ASSERT_EQ(b.size(), 3u);
  std::vector<std::vector<char>> rows;
  for (const auto& c : b.cycles) rows.push_back(incidence(k4, c));
  EXPECT_EQ(dense_gf2_rank(rows), 3u);
}

TEST(Paton, BreadthFirstTreeFromLowestNode) {
  // BFS from 0 keeps (0,1), (0,2), (0,3) as tree edges in K4, so every
  // fundamental cycle is a triangle through node 0.
  const auto b = cycle_basis_paton(complete(4));
  const auto s = cycle_stats(b);
  EXPECT_EQ(s.count, 3u);
  EXPECT_DOUBLE_EQ(s.avg_magnitude, 3.0);
  for (const auto& c : b.cycles) EXPECT_NE(std::find(c.begin(), c.end(), 0), c.end());
}

TEST(Paton, DeterministicAcrossCalls) {
  std::mt19937_64 rng(8);
  const auto g = erdos_renyi(25, 0.2, rng);
  EXPECT_EQ(cycle_basis_paton(g).cycles, cycle_basis_paton(g).cycles);
}

class PatonProperties : public ::testing::TestWithParam<int> {};

TEST_P(PatonProperties, CardinalityRankAndValidity) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  std::uniform_int_distribution<int> nodes(1, 40);
  std::uniform_real_distribution<double> density(0.0, 0.3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = erdos_renyi(nodes(rng), density(rng), rng);
    const auto basis = cycle_basis_paton(g);
    const std::size_t expected = g.num_edges() + static_cast<std::size_t>(components_by_union_find(g)) -
                                 static_cast<std::size_t>(g.num_nodes());
    ASSERT_EQ(basis.size(), expected);
    EXPECT_EQ(basis.parent_graph_nodes, g.num_nodes());
    std::vector<std::vector<char>> rows;
    for (const auto& c : basis.cycles) {
      ASSERT_GE(c.size(), 3u);
      EXPECT_EQ(std::set<int>(c.begin(), c.end()).size(), c.size()) << "repeated node";
      rows.push_back(incidence(g, c));
    }
    EXPECT_EQ(dense_gf2_rank(rows), basis.size());
  }
}

// 10 seeds x 10 graphs = 100 random Erdos-Renyi graphs.
INSTANTIATE_TEST_SUITE_P(ErdosRenyi, PatonProperties, ::testing::Range(0, 10));

TEST(Clique, FourCycleGainsChords) {
  const auto g = build_graph(4, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 0, 1}});
  const auto a = clique_adjacency(g, cycle_basis_paton(g));
  EXPECT_EQ(a.kind, AdjacencyKind::clique);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(a(i, j), i == j ? 0.0 : 1.0);
}

TEST(Clique, TreeIsAllZero) {
  const auto g = build_graph(5, {{0, 1, 1}, {1, 2, 1}, {1, 3, 1}, {3, 4, 1}});
  const auto a = clique_adjacency(g, cycle_basis_paton(g));
  for (double v : a.data.values) EXPECT_EQ(v, 0.0);
}

TEST(Clique, DisjointTrianglesAreBlockDiagonal) {
  const auto g = build_graph(6, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}, {3, 4, 1}, {4, 5, 1}, {5, 3, 1}});
  const auto a = clique_adjacency(g, cycle_basis_paton(g));
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) {
      const bool same_block = (i < 3) == (j < 3);
      EXPECT_EQ(a(i, j), same_block && i != j ? 1.0 : 0.0) << i << "," << j;
    }
}

TEST(Clique, NodesOffCyclesHaveZeroRows) {
  const auto g = build_graph(5, {{0, 1, 1}, {1, 2, 1}, {2, 0, 1}, {2, 3, 1}, {3, 4, 1}});
  const auto a = clique_adjacency(g, cycle_basis_paton(g));
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_EQ(a(3, j), 0.0);
    EXPECT_EQ(a(4, j), 0.0);
  }
}

TEST(Clique, MismatchedBasis) {
  const auto basis = cycle_basis_paton(triangle());
  const auto other = complete(5);
  EXPECT_EQ(code_of([&] { clique_adjacency(other, basis); }), errc::basis_graph_mismatch);
  auto bad = basis;
  const auto path = build_graph(3, {{0, 1, 1}, {1, 2, 1}});
  EXPECT_EQ(code_of([&] { clique_adjacency(path, bad); }), errc::basis_graph_mismatch);
}

TEST(Clique, ChordCompletionIsMonotoneSymmetricZeroDiagonal) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_connected_graph(12, 0.15, rng);
    const auto a = clique_adjacency(g, cycle_basis_paton(g));
    // Add every clique pair as an edge, then complete again.
    std::vector<WeightedEdge> es(g.edges().begin(), g.edges().end());
    for (int u = 0; u < 12; ++u)
      for (int v = u + 1; v < 12; ++v)
        if (a(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) == 1.0 && !g.has_edge(u, v))
          es.push_back({u, v, 1});
    const auto g2 = build_graph(12, es);
    const auto a2 = clique_adjacency(g2, cycle_basis_paton(g2));
    for (std::size_t i = 0; i < 12; ++i) {
      EXPECT_EQ(a2(i, i), 0.0);
      for (std::size_t j = 0; j < 12; ++j) {
        EXPECT_EQ(a2(i, j), a2(j, i));
        EXPECT_TRUE(a2(i, j) == 0.0 || a2(i, j) == 1.0);
        if (a(i, j) == 1.0) EXPECT_EQ(a2(i, j), 1.0);
      }
    }
  }
}

TEST(CycleStats, EmptyBasis) {
  const auto s = cycle_stats(CycleBasis{});
  EXPECT_EQ(s.count, 0u);
  EXPECT_EQ(s.avg_magnitude, 0.0);
}

TEST(TemporalProduct, SizesAndLayout) {
  const auto tpg = temporal_product(triangle(), 2);
  EXPECT_EQ(tpg.graph.num_nodes(), 6);
  EXPECT_EQ(tpg.graph.num_edges(), 9u);
  EXPECT_EQ(cycle_basis_paton(tpg.graph).size(), 4u);
  EXPECT_TRUE(tpg.graph.has_edge(tpg.index(1, 0), tpg.index(1, 1)));
  EXPECT_TRUE(tpg.graph.has_edge(tpg.index(0, 1), tpg.index(2, 1)));
  EXPECT_FALSE(tpg.graph.has_edge(tpg.index(0, 0), tpg.index(1, 1)));

  const auto single = temporal_product(build_graph(1, {}), 5);
  EXPECT_EQ(single.graph.num_nodes(), 5);
  EXPECT_EQ(single.graph.num_edges(), 4u);
  EXPECT_TRUE(cycle_basis_paton(single.graph).empty());
}

TEST(TemporalProduct, EdgeCountFormula) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = erdos_renyi(1 + trial % 15, 0.3, rng);
    const int k = 2 + trial % 5;
    const auto tpg = temporal_product(g, k);
    EXPECT_EQ(tpg.graph.num_edges(), static_cast<std::size_t>(k) * g.num_edges() +
                                         static_cast<std::size_t>(k - 1) * static_cast<std::size_t>(g.num_nodes()));
  }
}

TEST(TemporalProduct, InvalidSteps) {
  EXPECT_EQ(code_of([] { temporal_product(triangle(), 1); }), errc::invalid_steps);
  EXPECT_EQ(code_of([] { temporal_product(triangle(), 0); }), errc::invalid_steps);
}

TEST(Projection, FixedTimeAndLadderCycles) {
  const auto tpg = temporal_product(triangle(), 2);
  CycleBasis basis;
  basis.parent_graph_nodes = tpg.graph.num_nodes();
  basis.cycles.push_back({tpg.index(0, 0), tpg.index(1, 0), tpg.index(2, 0)});
  basis.cycles.push_back({tpg.index(0, 0), tpg.index(1, 0), tpg.index(1, 1), tpg.index(0, 1)});
  const auto p = project_cycle_basis(tpg, basis);
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].edges, (EdgeSet{{0, 1}, {0, 2}, {1, 2}}));
  EXPECT_FALSE(p[0].vanished);
  EXPECT_TRUE(p[1].edges.empty());
  EXPECT_TRUE(p[1].vanished);
}

TEST(Projection, FullBasisOfLiftedTriangleSpansTriangle) {
  const auto g = triangle();
  const auto tpg = temporal_product(g, 2);
  const auto projected = project_cycle_basis(tpg, cycle_basis_paton(tpg.graph));
  std::vector<std::vector<char>> rows;
  for (const auto& p : projected) rows.push_back(incidence(g, p.edges));
  EXPECT_EQ(dense_gf2_rank(rows), 1u);
  EXPECT_TRUE(is_cycle_basis(g, edge_sets(projected)));
}

TEST(Projection, BasisFromWrongGraph) {
  const auto tpg = temporal_product(triangle(), 2);
  EXPECT_EQ(code_of([&] { project_cycle_basis(tpg, cycle_basis_paton(triangle())); }), errc::basis_graph_mismatch);
}

TEST(IsCycleBasis, Cases) {
  const auto tri = triangle();
  EXPECT_TRUE(is_cycle_basis(tri, std::vector<EdgeSet>{{{0, 1}, {1, 2}, {0, 2}}}));
  EXPECT_FALSE(is_cycle_basis(tri, std::vector<EdgeSet>{}));
  // A lone edge is not a cycle-space element.
  EXPECT_FALSE(is_cycle_basis(tri, std::vector<EdgeSet>{{{0, 1}, {1, 2}, {0, 2}}, {{0, 1}}}));

  const auto k4 = complete(4);
  auto sets = edge_sets(project_cycle_basis(temporal_product(k4, 2), cycle_basis_paton(temporal_product(k4, 2).graph)));
  std::vector<EdgeSet> paton;
  for (const auto& c : cycle_basis_paton(k4).cycles) {
    EdgeSet s;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const int a = c[i], b = c[(i + 1) % c.size()];
      s.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(s.begin(), s.end());
    paton.push_back(s);
  }
  EXPECT_TRUE(is_cycle_basis(k4, paton));
  // Outer 4-cycle 0-1-2-3 is the sum of two triangles: redundant but allowed.
  paton.push_back({{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  EXPECT_TRUE(is_cycle_basis(k4, paton));
  paton.erase(paton.begin(), paton.begin() + 2);
  EXPECT_FALSE(is_cycle_basis(k4, paton));
  EXPECT_TRUE(is_cycle_basis(k4, sets));
}

TEST(IsCycleBasis, UnknownEdge) {
  EXPECT_EQ(code_of([] { is_cycle_basis(build_graph(3, {{0, 1, 1}, {1, 2, 1}}), std::vector<EdgeSet>{{{0, 2}}}); }),
            errc::unknown_edge);
}

TEST(IsCycleBasis, AcyclicGraphAcceptsEmptyCandidate) {
  EXPECT_TRUE(is_cycle_basis(build_graph(3, {{0, 1, 1}, {1, 2, 1}}), std::vector<EdgeSet>{}));
}

class ProjectionTheorem : public ::testing::TestWithParam<int> {};

TEST_P(ProjectionTheorem, ProjectedBasisSpansBaseCycleSpace) {
  const int k = GetParam();
  std::mt19937_64 rng(100 + static_cast<std::uint64_t>(k));
  std::uniform_int_distribution<int> nodes(2, 20);
  std::uniform_real_distribution<double> density(0.05, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_connected_graph(nodes(rng), density(rng), rng);
    const auto tpg = temporal_product(g, k);
    const auto projected = project_cycle_basis(tpg, cycle_basis_paton(tpg.graph));
    EXPECT_TRUE(is_cycle_basis(g, edge_sets(projected))) << "trial " << trial;
    // Cross-check the span with the dense oracle.
    std::vector<std::vector<char>> rows;
    for (const auto& p : projected) rows.push_back(incidence(g, p.edges));
    EXPECT_EQ(dense_gf2_rank(rows), cycle_space_dimension(g));
  }
}

INSTANTIATE_TEST_SUITE_P(Steps, ProjectionTheorem, ::testing::Values(2, 3, 5));

TEST(ProjectionTheorem, SweepReport) {
  const auto report = verify_theorem1(20, 50, 3, 9);
  EXPECT_EQ(report.trials.size(), 50u);
  EXPECT_TRUE(report.all_passed());
}

TEST(DenseAdjacency, BinaryAndGaussian) {
  const auto a = dense_adjacency(triangle());
  EXPECT_EQ(a.kind, AdjacencyKind::standard);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), i == j ? 0.0 : 1.0);

  const auto g = build_graph(3, {{0, 1, 0.0}, {1, 2, 2.0}, {0, 2, 5.0}});
  const auto k = dense_adjacency(g, AdjacencyMode::gaussian(2.0, 0.1));
  EXPECT_EQ(k(0, 1), 1.0);
  EXPECT_NEAR(k(1, 2), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(k(2, 1), 0.36787944117144233, 1e-15);
  EXPECT_EQ(k(0, 2), 0.0);  // exp(-6.25) < 0.1
  EXPECT_EQ(code_of([&] { dense_adjacency(g, AdjacencyMode::gaussian(0.0, 0.1)); }), errc::invalid_sigma);
  EXPECT_EQ(code_of([&] { dense_adjacency(g, AdjacencyMode::gaussian(-1.0, 0.1)); }), errc::invalid_sigma);
}

}  // namespace
