#pragma once

// Helpers shared by the unit tests and the acceptance runner: central
// finite-difference gradient checks and random tensor construction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "cy2mixer/cy2mixer.hpp"

namespace cy2test {

using cy2mixer::ad::Shape;
using cy2mixer::ad::Tensor;

template <class T = double>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto t = Tensor<T>::zeros(std::move(shape), grad);
  for (auto& v : t.mutable_data()) v = static_cast<T>(u(rng));
  return t;
}

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// sum(out * w) with fixed random weights so every output entry matters.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto w = random_tensor<T>(out.shape(), rng, -1.0, 1.0, false);
  return cy2mixer::ad::sum(cy2mixer::ad::hadamard(out, w));
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

/// Compares reverse-mode gradients of `loss` with central differences at
/// h = cbrt(eps) * max(1, |x|). The error per leaf is ||a - n|| / max(||a||, ||n||)
/// over the checked entries; entries == 0 checks every element.
inline GradCheckResult grad_check(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> leaves,
                                  std::size_t sample = 0, std::uint64_t seed = 7) {
  using namespace cy2mixer::ad;
  for (auto& l : leaves) l.zero_grad();
  Tape<double> tape;
  {
    TapeScope<double> scope(tape);
    auto value = loss();
    backward(value);
  }
  std::vector<std::vector<double>> analytic;
  for (const auto& l : leaves) {
    if (l.has_grad()) analytic.emplace_back(l.grad().begin(), l.grad().end());
    else analytic.emplace_back(l.size(), 0.0);
  }

  const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  auto eval = [&] {
    NoGradScope<double> off;
    return loss().item();
  };
  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto& leaf = leaves[k];
    std::vector<std::size_t> idx(leaf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (sample != 0 && sample < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(sample);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (auto i : idx) {
      auto data = leaf.mutable_data();
      const double v = data[i];
      const double h = h0 * std::max(1.0, std::abs(v));
      data[i] = v + h;
      const double fp = eval();
      data[i] = v - h;
      const double fm = eval();
      data[i] = v;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[k][i];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
      ++result.entries;
    }
    const double denom = std::sqrt(std::max(na, nn));
    const double err = denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
    result.max_rel_error = std::max(result.max_rel_error, err);
  }
  return result;
}

/// One differentiable op exercised on a random instance; returns the grad-check result.
struct OpCheck {
  std::string name;
  std::function<GradCheckResult(std::mt19937_64&)> run;
};

inline std::vector<OpCheck> op_checks() {
  using namespace cy2mixer;
  using namespace cy2mixer::ad;
  std::vector<OpCheck> checks;
  auto add_check = [&](std::string name, std::function<GradCheckResult(std::mt19937_64&)> f) {
    checks.push_back({std::move(name), std::move(f)});
  };
  auto dims = [](std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  add_check("add", [=](std::mt19937_64& rng) {
    auto a = random_tensor({dims(rng, 1, 4), dims(rng, 1, 5)}, rng);
    auto b = random_tensor(a.shape(), rng);
    return grad_check([=] { return weighted_sum(add(a, b), 1); }, {a, b});
  });
  add_check("sub", [=](std::mt19937_64& rng) {
    auto a = random_tensor({dims(rng, 1, 4), dims(rng, 1, 5)}, rng);
    auto b = random_tensor(a.shape(), rng);
    return grad_check([=] { return weighted_sum(sub(a, b), 2); }, {a, b});
  });
  add_check("hadamard", [=](std::mt19937_64& rng) {
    auto a = random_tensor({dims(rng, 1, 4), dims(rng, 1, 5)}, rng);
    auto b = random_tensor(a.shape(), rng);
    return grad_check([=] { return weighted_sum(hadamard(a, b), 3); }, {a, b});
  });
  add_check("scale", [=](std::mt19937_64& rng) {
    auto a = random_tensor({dims(rng, 1, 6)}, rng);
    const double s = std::uniform_real_distribution<double>(-2, 2)(rng);
    return grad_check([=] { return weighted_sum(scale(a, s), 4); }, {a});
  });
  add_check("add_bias", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 4)}, rng);
    auto b = random_tensor({x.last_dim()}, rng);
    return grad_check([=] { return weighted_sum(add_bias(x, b), 5); }, {x, b});
  });
  add_check("gelu", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 2, 12)}, rng, -3.0, 3.0);
    return grad_check([=] { return weighted_sum(gelu(x), 6); }, {x});
  });
  add_check("dropout", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 4, 16)}, rng);
    const std::uint64_t mask_seed = rng();
    return grad_check(
        [=] {
          std::mt19937_64 mask_rng(mask_seed);
          return weighted_sum(dropout(x, 0.3, mask_rng), 7);
        },
        {x});
  });
  add_check("channel_affine", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 4), 3}, rng);
    const auto s = random_values(3, rng, 0.5, 2.0);
    const auto m = random_values(3, rng);
    return grad_check([=] { return weighted_sum(channel_affine(x, s, m), 8); }, {x});
  });
  add_check("matmul", [=](std::mt19937_64& rng) {
    const auto m = dims(rng, 1, 4), k = dims(rng, 1, 4), n = dims(rng, 1, 4);
    auto a = random_tensor({m, k}, rng);
    auto b = random_tensor({k, n}, rng);
    return grad_check([=] { return weighted_sum(matmul(a, b), 9); }, {a, b});
  });
  add_check("linear", [=](std::mt19937_64& rng) {
    const auto din = dims(rng, 1, 5), dout = dims(rng, 1, 5);
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), din}, rng);
    auto w = random_tensor({din, dout}, rng);
    auto b = random_tensor({dout}, rng);
    return grad_check([=] { return weighted_sum(linear(x, w, b), 10); }, {x, w, b});
  });
  add_check("linear_no_bias", [=](std::mt19937_64& rng) {
    const auto din = dims(rng, 1, 5), dout = dims(rng, 1, 5);
    auto x = random_tensor({dims(rng, 1, 4), din}, rng);
    auto w = random_tensor({din, dout}, rng);
    return grad_check([=] { return weighted_sum(linear(x, w), 11); }, {x, w});
  });
  add_check("bmm", [=](std::mt19937_64& rng) {
    const auto B = dims(rng, 1, 3), m = dims(rng, 1, 3), k = dims(rng, 1, 3), n = dims(rng, 1, 3);
    auto a = random_tensor({B, m, k}, rng);
    auto b = random_tensor({B, k, n}, rng);
    return grad_check([=] { return weighted_sum(bmm(a, b), 12); }, {a, b});
  });
  add_check("bmm_transposed", [=](std::mt19937_64& rng) {
    const auto B = dims(rng, 1, 3), m = dims(rng, 1, 3), k = dims(rng, 1, 3), n = dims(rng, 1, 3);
    auto a = random_tensor({B, m, k}, rng);
    auto b = random_tensor({B, n, k}, rng);
    return grad_check([=] { return weighted_sum(bmm(a, b, true), 13); }, {a, b});
  });
  add_check("softmax_last", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 5)}, rng, -2.0, 2.0);
    return grad_check([=] { return weighted_sum(softmax_last(x), 14); }, {x});
  });
  add_check("layer_norm", [=](std::mt19937_64& rng) {
    const auto d = dims(rng, 2, 6);
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), d}, rng, -2.0, 2.0);
    auto g = random_tensor({d}, rng, 0.5, 1.5);
    auto b = random_tensor({d}, rng);
    return grad_check([=] { return weighted_sum(layer_norm(x, g, b), 15); }, {x, g, b});
  });
  add_check("slice_last", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), 6}, rng);
    const auto begin = dims(rng, 0, 3);
    return grad_check([=] { return weighted_sum(slice_last(x, begin, 3), 16); }, {x});
  });
  add_check("split_channels", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), 2 * dims(rng, 1, 3)}, rng);
    return grad_check(
        [=] {
          auto [a, b] = split_channels(x);
          return add(weighted_sum(a, 17), weighted_sum(hadamard(b, b), 18));
        },
        {x});
  });
  add_check("concat_last", [=](std::mt19937_64& rng) {
    const auto rows = dims(rng, 1, 3);
    auto a = random_tensor({rows, dims(rng, 1, 3)}, rng);
    auto b = random_tensor({rows, dims(rng, 1, 3)}, rng);
    auto c = random_tensor({rows, dims(rng, 1, 3)}, rng);
    return grad_check([=] { return weighted_sum(concat_last<double>({a, b, c}), 19); }, {a, b, c});
  });
  add_check("reshape", [=](std::mt19937_64& rng) {
    const auto a = dims(rng, 1, 3), b = dims(rng, 1, 4);
    auto x = random_tensor({a, b}, rng);
    return grad_check([=] { return weighted_sum(reshape(x, {b, a}), 20); }, {x});
  });
  add_check("transpose01", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 1, 3)}, rng);
    return grad_check([=] { return weighted_sum(transpose01(x), 21); }, {x});
  });
  add_check("gather_rows", [=](std::mt19937_64& rng) {
    const auto V = dims(rng, 2, 6);
    auto table = random_tensor({V, dims(rng, 1, 4)}, rng);
    std::vector<int> idx(dims(rng, 1, 8));
    for (auto& i : idx) i = static_cast<int>(dims(rng, 0, V - 1));
    return grad_check([=] { return weighted_sum(gather_rows(table, idx), 22); }, {table});
  });
  add_check("broadcast_nodes", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 3), dims(rng, 1, 3)}, rng);
    const auto n = dims(rng, 1, 4);
    return grad_check([=] { return weighted_sum(broadcast_nodes(x, n), 23); }, {x});
  });
  add_check("conv2d_3x3", [=](std::mt19937_64& rng) {
    const auto ci = dims(rng, 1, 3), co = dims(rng, 1, 3);
    auto x = random_tensor({dims(rng, 1, 4), dims(rng, 1, 4), ci}, rng);
    auto k = random_tensor({3, 3, ci, co}, rng);
    return grad_check([=] { return weighted_sum(conv2d_3x3(x, k), 24); }, {x, k});
  });
  add_check("propagate", [=](std::mt19937_64& rng) {
    const auto n = dims(rng, 2, 5);
    Matrix m(n, n);
    std::bernoulli_distribution coin(0.5);
    for (auto& v : m.values) v = coin(rng) ? std::uniform_real_distribution<double>(0.1, 1.0)(rng) : 0.0;
    auto op = std::make_shared<const Propagator>(Propagator::from_dense(m));
    auto x = random_tensor({dims(rng, 1, 3), n, dims(rng, 1, 3)}, rng);
    return grad_check([=] { return weighted_sum(propagate(x, op), 25); }, {x});
  });
  add_check("sum", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 5), dims(rng, 1, 5)}, rng);
    return grad_check([=] { return sum(hadamard(x, x)); }, {x});
  });
  add_check("mean", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 5), dims(rng, 1, 5)}, rng);
    return grad_check([=] { return mean(hadamard(x, x)); }, {x});
  });
  add_check("mae_loss", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 4), dims(rng, 1, 4)}, rng);
    std::vector<double> y(x.size());
    std::uniform_real_distribution<double> gap(0.1, 1.0);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + (coin(rng) ? gap(rng) : -gap(rng));
    return grad_check([=] { return mae_loss(x, std::span<const double>(y)); }, {x});
  });
  add_check("huber_loss", [=](std::mt19937_64& rng) {
    auto x = random_tensor({dims(rng, 1, 4), dims(rng, 1, 4)}, rng);
    std::vector<double> y(x.size());
    std::uniform_real_distribution<double> small(0.05, 0.4), large(0.6, 2.0);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double g = coin(rng) ? small(rng) : large(rng);
      y[i] = x[i] + (coin(rng) ? g : -g);
    }
    return grad_check([=] { return huber_loss(x, std::span<const double>(y), 0.5); }, {x});
  });
  return checks;
}

/// Desk-scale model configuration shared by the model tests and acceptance.
inline cy2mixer::ModelConfig toy_model_config(std::size_t nodes = 6) {
  cy2mixer::ModelConfig c;
  c.num_layers = 2;
  c.d_f = 4;
  c.d_t = 2;
  c.d_a = 8;  // d_h = 4 + 2 * 2 + 8 = 16
  c.d_tiny = 4;
  c.tiny_attention = true;
  c.dropout = 0.0;
  c.T = 4;
  c.T_prime = 4;
  c.C = 1;
  c.d_o = 1;
  c.steps_per_day = 288;
  c.num_nodes = nodes;
  return c;
}

/// Ring graph artifacts as a model context.
inline cy2mixer::GraphContext ring_context(int n) {
  using namespace cy2mixer;
  std::vector<WeightedEdge> edges;
  for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n, 1.0});
  const auto g = build_graph(n, edges);
  const auto art = prepare_artifacts(g);
  return make_graph_context(art.adjacency, art.clique);
}

/// Full toy model, MAE loss: reverse-mode gradient against central differences
/// on `samples` randomly chosen parameter entries (vector relative error).
inline GradCheckResult model_grad_check(std::uint64_t seed, std::size_t samples = 20) {
  using namespace cy2mixer;
  const auto cfg = toy_model_config();
  Cy2Mixer<double> model(cfg, seed);
  std::vector<ad::Tensor<double>> leaves;
  for (const auto& p : model.parameters()) leaves.push_back(p.second);
  // Perturb every parameter so the W = 0 gate init does not hide gate-path terms.
  std::mt19937_64 rng(seed + 1000);
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (auto& l : leaves)
    for (auto& x : l.mutable_data()) x += jitter(rng);

  const auto ctx = ring_context(6);
  const auto window = random_values(cfg.T * cfg.num_nodes * cfg.C, rng);
  const std::vector<int> tod{10, 11, 12, 13}, dow{2, 2, 2, 2};
  auto target = random_values(cfg.T_prime * cfg.num_nodes * cfg.d_o, rng, -3.0, 3.0);
  auto loss = [&] {
    const auto pred = model.forward(std::span<const double>(window), tod, dow, ctx);
    return ad::mae_loss(pred, std::span<const double>(target));
  };
  {
    ad::NoGradScope<double> off;
    const auto pred = model.forward(std::span<const double>(window), tod, dow, ctx);
    // Keep every residual well away from the |.| kink.
    for (std::size_t i = 0; i < target.size(); ++i)
      if (std::abs(pred[i] - target[i]) < 0.05) target[i] = pred[i] + 0.5;
  }

  ad::Tape<double> tape;
  {
    ad::TapeScope<double> scope(tape);
    ad::backward(loss());
  }
  std::size_t total = 0;
  for (const auto& l : leaves) total += l.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
  double diff = 0.0, na = 0.0, nn = 0.0;
  ad::NoGradScope<double> off;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t flat = pick(rng), k = 0;
    while (flat >= leaves[k].size()) flat -= leaves[k++].size();
    const double a = leaves[k].has_grad() ? leaves[k].grad()[flat] : 0.0;
    auto data = leaves[k].mutable_data();
    const double v = data[flat];
    const double h = h0 * std::max(1.0, std::abs(v));
    data[flat] = v + h;
    const double fp = loss().item();
    data[flat] = v - h;
    const double fm = loss().item();
    data[flat] = v;
    const double n = (fp - fm) / (2.0 * h);
    diff += (a - n) * (a - n);
    na += a * a;
    nn += n * n;
  }
  const double denom = std::sqrt(std::max(na, nn));
  return {denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom, samples};
}

}  // namespace cy2test
