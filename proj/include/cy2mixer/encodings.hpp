#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "cy2mixer/data.hpp"
#include "cy2mixer/error.hpp"
#include "cy2mixer/graph.hpp"
#include "cy2mixer/matrix.hpp"
#include "cy2mixer/topology.hpp"

namespace cy2mixer {

/// Cumulative DTW cost, |a_i - b_j| local cost, steps (1,0), (0,1), (1,1).
inline double dtw_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) fail(errc::empty_sequence, "dtw needs non-empty sequences");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(b.size() + 1, inf), cur(b.size() + 1, inf);
  prev[0] = 0.0;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = inf;
    const double ai = a[i - 1];
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const double best = std::min({prev[j], cur[j - 1], prev[j - 1]});
      cur[j] = std::abs(ai - b[j - 1]) + best;
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

struct DtwOptions {
  std::size_t feature = 0;
  std::size_t top_k = 1;
  std::size_t row_end = 0;  // use rows [0, row_end); 0 = all rows
  std::size_t stride = 1;
  unsigned threads = 0;     // 0 = hardware concurrency
};

/// Full pairwise DTW distance table over the chosen feature (symmetric, zero
/// diagonal). Pair rows are distributed over threads; each entry is written by
/// exactly one worker so the result does not depend on scheduling.
inline Matrix dtw_distance_table(const SignalTensor& signals, const DtwOptions& opt) {
  if (opt.feature >= signals.features) fail(errc::feature_out_of_range, "dtw feature index out of range");
  const std::size_t n = signals.nodes;
  const std::size_t end = opt.row_end == 0 ? signals.steps : std::min(opt.row_end, signals.steps);
  const std::size_t stride = std::max<std::size_t>(opt.stride, 1);
  std::vector<std::vector<double>> series(n);
  for (std::size_t v = 0; v < n; ++v) series[v] = signals.series(v, opt.feature, 0, end, stride);

  Matrix dist(n, n);
  unsigned workers = opt.threads ? opt.threads : std::max(1U, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n, 1)));
  auto work = [&](unsigned id) {
    for (std::size_t i = id; i < n; i += workers)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = dtw_distance(series[i], series[j]);
        dist(i, j) = d;
        dist(j, i) = d;
      }
  };
  if (workers <= 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return dist;
}

/// Each node marks its top_k DTW-nearest other nodes (ties -> lower index);
/// the selection is symmetrized by union.
inline AdjacencyMatrix dtw_neighbors(const Matrix& dist, std::size_t top_k) {
  const std::size_t n = dist.rows;
  if (top_k == 0 || top_k >= n) fail(errc::top_k_too_large, "top_k must be in [1, N)");
  AdjacencyMatrix out{Matrix(n, n), AdjacencyKind::dtw};
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    order.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist(i, a) < dist(i, b); });
    for (std::size_t r = 0; r < top_k; ++r) {
      out.data(i, order[r]) = 1.0;
      out.data(order[r], i) = 1.0;
    }
  }
  return out;
}

inline AdjacencyMatrix dtw_matrix(const SignalTensor& signals, const DtwOptions& opt) {
  if (opt.feature >= signals.features) fail(errc::feature_out_of_range, "dtw feature index out of range");
  if (opt.top_k == 0 || opt.top_k >= signals.nodes) fail(errc::top_k_too_large, "top_k must be in [1, N)");
  return dtw_neighbors(dtw_distance_table(signals, opt), opt.top_k);
}

/// Default DTW neighbor count: the graph's average degree, rounded up.
inline std::size_t default_dtw_top_k(const Graph& g) {
  const auto k = static_cast<std::size_t>(std::ceil(average_degree(g)));
  return std::clamp<std::size_t>(k, 1, static_cast<std::size_t>(std::max(1, g.num_nodes() - 1)));
}

/// Column k-1 holds diag(P^k), P = D^-1 A over the binary adjacency. Isolated
/// nodes have a zero row in P and hence a zero encoding.
inline Matrix rwse(const Graph& g, std::size_t steps) {
  if (steps == 0) fail(errc::k_too_large, "rwse needs K >= 1");
  const auto n = static_cast<std::size_t>(g.num_nodes());
  Matrix p(n, n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto& nb = g.neighbors(static_cast<int>(v));
    for (int w : nb) p(v, static_cast<std::size_t>(w)) = 1.0 / static_cast<double>(nb.size());
  }
  Matrix out(n, steps);
  Matrix power = p;
  for (std::size_t k = 0; k < steps; ++k) {
    if (k > 0) power = matmul(power, p);
    for (std::size_t v = 0; v < n; ++v) out(v, k) = power(v, v);
  }
  return out;
}

/// I - D^-1/2 A D^-1/2 over the binary adjacency; isolated nodes get a zero
/// row so that every component contributes one zero eigenvalue.
inline Matrix normalized_laplacian(const Graph& g) {
  const auto n = static_cast<std::size_t>(g.num_nodes());
  Matrix lap(n, n);
  std::vector<double> inv_sqrt(n, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    const auto deg = g.neighbors(static_cast<int>(v)).size();
    if (deg > 0) {
      inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(deg));
      lap(v, v) = 1.0;
    }
  }
  for (const auto& e : g.edges()) {
    const auto a = static_cast<std::size_t>(e.u);
    const auto b = static_cast<std::size_t>(e.v);
    lap(a, b) = lap(b, a) = -inv_sqrt[a] * inv_sqrt[b];
  }
  return lap;
}

struct Spectrum {
  std::vector<double> eigenvalues;  // ascending
  Matrix eigenvectors;              // column j pairs with eigenvalues[j]
};

inline Spectrum symmetric_eigen(const Matrix& m) {
  const auto n = static_cast<Eigen::Index>(m.rows);
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  Spectrum s;
  s.eigenvalues.resize(m.rows);
  s.eigenvectors = Matrix(m.rows, m.cols);
  for (Eigen::Index j = 0; j < n; ++j) {
    s.eigenvalues[static_cast<std::size_t>(j)] = solver.eigenvalues()(j);
    for (Eigen::Index i = 0; i < n; ++i)
      s.eigenvectors(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = solver.eigenvectors()(i, j);
  }
  return s;
}

inline constexpr double zero_eigenvalue_tolerance = 1e-8;

/// Eigenvectors of the normalized Laplacian for the k smallest nonzero
/// eigenvalues; unit length, sign chosen so the largest-magnitude entry is
/// positive.
inline Matrix lap_pe(const Graph& g, std::size_t k) {
  const auto n = static_cast<std::size_t>(g.num_nodes());
  if (k == 0 || k >= n) fail(errc::k_too_large, "lap_pe needs 1 <= k < N");
  const auto spec = symmetric_eigen(normalized_laplacian(g));
  std::vector<std::size_t> chosen;
  for (std::size_t j = 0; j < n && chosen.size() < k; ++j)
    if (spec.eigenvalues[j] > zero_eigenvalue_tolerance) chosen.push_back(j);
  if (chosen.size() < k) {
    fail(errc::insufficient_spectrum,
         "only " + std::to_string(chosen.size()) + " nonzero eigenvalues, asked for " + std::to_string(k));
  }
  Matrix out(n, k);
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t j = chosen[c];
    double norm = 0.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = spec.eigenvectors(i, j);
      norm += x * x;
      if (std::abs(x) > std::abs(spec.eigenvectors(arg, j))) arg = i;
    }
    norm = std::sqrt(norm);
    const double sign = spec.eigenvectors(arg, j) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out(i, c) = sign * spec.eigenvectors(i, j) / norm;
  }
  return out;
}

// ---------------------------------------------------------------------------

enum class EncodingMethod { clique, dtw, rwse, lappe };

constexpr const char* to_string(EncodingMethod m) {
  switch (m) {
    case EncodingMethod::clique: return "clique";
    case EncodingMethod::dtw: return "dtw";
    case EncodingMethod::rwse: return "rwse";
    case EncodingMethod::lappe: return "lappe";
  }
  return "?";
}

struct EncodingResult {
  EncodingMethod method = EncodingMethod::clique;
  Matrix payload;        // N x N for clique/dtw, N x K otherwise
  double elapsed = 0.0;  // wall-clock seconds
};

struct BenchmarkConfig {
  bool run_dtw = true;
  DtwOptions dtw{};      // top_k = 0 selects default_dtw_top_k
  std::size_t rwse_steps = 16;
  std::size_t lappe_dim = 8;
};

namespace detail {
template <class F>
EncodingResult timed(EncodingMethod m, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  Matrix payload = f();
  const auto t1 = std::chrono::steady_clock::now();
  return {m, std::move(payload), std::chrono::duration<double>(t1 - t0).count()};
}
}  // namespace detail

/// Times clique adjacency (basis extraction included), DTW, RWSE and LapPE on
/// the same inputs. LapPE is skipped when the graph has too small a spectrum.
inline std::vector<EncodingResult> benchmark_preprocessing(const Graph& g, const SignalTensor& signals,
                                                           const BenchmarkConfig& config) {
  std::vector<EncodingResult> out;
  out.push_back(detail::timed(EncodingMethod::clique, [&] { return clique_adjacency(g, cycle_basis_paton(g)).data; }));
  if (config.run_dtw) {
    DtwOptions opt = config.dtw;
    if (opt.top_k == 0) opt.top_k = default_dtw_top_k(g);
    out.push_back(detail::timed(EncodingMethod::dtw, [&] { return dtw_matrix(signals, opt).data; }));
  }
  if (config.rwse_steps > 0)
    out.push_back(detail::timed(EncodingMethod::rwse, [&] { return rwse(g, config.rwse_steps); }));
  if (config.lappe_dim > 0) {
    const auto comps = static_cast<std::size_t>(connected_components(g).count);
    const auto n = static_cast<std::size_t>(g.num_nodes());
    const std::size_t k = std::min(config.lappe_dim, n > comps ? n - comps : 0);
    if (k > 0) out.push_back(detail::timed(EncodingMethod::lappe, [&] { return lap_pe(g, k); }));
  }
  return out;
}

}  // namespace cy2mixer
