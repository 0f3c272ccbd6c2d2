#pragma once

#include <cmath>
#include <initializer_list>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cy2mixer/error.hpp"
#include "cy2mixer/matrix.hpp"
#include "cy2mixer/tensor.hpp"

/// Differentiable kernels. Every op computes its value eagerly and, when a
/// tape is active and some input requires a gradient, records a backward rule.
/// Broadcasting is limited to a trailing-axis bias; any other shape mismatch
/// raises ShapeMismatch.
namespace cy2mixer::ad {

namespace detail {

template <class T>
bool tracking(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const auto* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T>
void record(std::initializer_list<const Tensor<T>*> inputs, const Tensor<T>& out, std::function<void()> rule) {
  std::vector<std::shared_ptr<Node<T>>> nodes;
  for (const auto* t : inputs)
    if (t->defined()) nodes.push_back(t->handle());
  active_tape<T>()->record(std::move(nodes), out.handle(), std::move(rule));
}

inline void require(bool ok, const std::string& what) {
  if (!ok) fail(errc::shape_mismatch, what);
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <class T>
std::vector<T>* grad_of(Node<T>* n) {
  return n->requires_grad ? &n->ensure_grad() : nullptr;
}

}  // namespace detail

template <class T>
Tensor<T> constant(Shape shape, std::vector<T> values) {
  return Tensor<T>::from(std::move(shape), std::move(values), false);
}

// ---------------------------------------------------------------------------
// Elementwise.

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "add");
  auto out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  if (detail::tracking<T>({&a, &b})) {
    auto *pa = a.node(), *pb = b.node(), *po = out.node();
    detail::record<T>({&a, &b}, out, [pa, pb, po] {
      for (auto* p : {pa, pb})
        if (auto* g = detail::grad_of(p))
          for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += po->grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "sub");
  auto out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  if (detail::tracking<T>({&a, &b})) {
    auto *pa = a.node(), *pb = b.node(), *po = out.node();
    detail::record<T>({&a, &b}, out, [pa, pb, po] {
      if (auto* g = detail::grad_of(pa))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += po->grad[i];
      if (auto* g = detail::grad_of(pb))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= po->grad[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a, b, "hadamard");
  auto out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  if (detail::tracking<T>({&a, &b})) {
    auto *pa = a.node(), *pb = b.node(), *po = out.node();
    detail::record<T>({&a, &b}, out, [pa, pb, po] {
      if (auto* g = detail::grad_of(pa))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += po->grad[i] * pb->value[i];
      if (auto* g = detail::grad_of(pb))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += po->grad[i] * pa->value[i];
    });
  }
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  auto out = Tensor<T>::zeros(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * s;
  if (detail::tracking<T>({&a})) {
    auto *pa = a.node(), *po = out.node();
    detail::record<T>({&a}, out, [pa, po, s] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i] * s;
    });
  }
  return out;
}

/// x[..., d] + bias[d].
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require(bias.rank() == 1 && x.rank() >= 1 && bias.dim(0) == x.last_dim(),
                  "add_bias: bias " + to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  const std::size_t d = x.last_dim();
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + bias[i % d];
  if (detail::tracking<T>({&x, &bias})) {
    auto *px = x.node(), *pb = bias.node(), *po = out.node();
    detail::record<T>({&x, &bias}, out, [px, pb, po, d] {
      if (auto* g = detail::grad_of(px))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += po->grad[i];
      if (auto* g = detail::grad_of(pb))
        for (std::size_t i = 0; i < po->grad.size(); ++i) (*g)[i % d] += po->grad[i];
    });
  }
  return out;
}

/// Exact GeLU: x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, inv_sqrt2] {
      auto& g = px->ensure_grad();
      const T inv_sqrt2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = px->value[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        g[i] += po->grad[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

/// Inverted dropout; identity when rate == 0.
template <class T, class Rng>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) fail(errc::invalid_config, "dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - rate);
  const T s = T(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = keep(rng) ? s : T(0);
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * mask[i];
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, mask = std::move(mask)] {
      auto& g = px->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i] * mask[i];
    });
  }
  return out;
}

/// y = x * scale[c] + shift[c] over the last axis with constant coefficients.
template <class T>
Tensor<T> channel_affine(const Tensor<T>& x, std::vector<T> scale_by, std::vector<T> shift_by) {
  const std::size_t d = x.last_dim();
  detail::require(scale_by.size() == d && shift_by.size() == d, "channel_affine: coefficient length mismatch");
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * scale_by[i % d] + shift_by[i % d];
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, d, scale_by = std::move(scale_by)] {
      auto& g = px->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i] * scale_by[i % d];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra.

/// a[m, k] @ b[k, n].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                  "matmul: " + to_string(a.shape()) + " @ " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = Tensor<T>::zeros({m, n});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) o[i * n + j] += av * b[p * n + j];
    }
  if (detail::tracking<T>({&a, &b})) {
    auto *pa = a.node(), *pb = b.node(), *po = out.node();
    detail::record<T>({&a, &b}, out, [pa, pb, po, m, k, n] {
      const auto& g = po->grad;
      if (auto* ga = detail::grad_of(pa))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            T acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb->value[p * n + j];
            (*ga)[i * k + p] += acc;
          }
      if (auto* gb = detail::grad_of(pb))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const T av = pa->value[i * k + p];
            for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += av * g[i * n + j];
          }
    });
  }
  return out;
}

/// Affine map over the last axis: x[..., d_in] @ weight[d_in, d_out] + bias[d_out].
/// `bias` may be an undefined tensor.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require(x.rank() >= 1 && weight.rank() == 2 && weight.dim(0) == x.last_dim(),
                  "linear: input " + to_string(x.shape()) + " vs weight " + to_string(weight.shape()));
  const std::size_t din = weight.dim(0), dout = weight.dim(1);
  if (bias.defined()) {
    detail::require(bias.rank() == 1 && bias.dim(0) == dout, "linear: bias " + to_string(bias.shape()));
  }
  const std::size_t rows = x.size() / din;
  Shape shape = x.shape();
  shape.back() = dout;
  auto out = Tensor<T>::zeros(shape);
  auto o = out.mutable_data();
  const auto w = weight.data();
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T* orow = &o[r * dout];
    if (bias.defined())
      for (std::size_t j = 0; j < dout; ++j) orow[j] = bias[j];
    for (std::size_t i = 0; i < din; ++i) {
      const T xi = xv[r * din + i];
      if (xi == T(0)) continue;
      const T* wrow = &w[i * dout];
      for (std::size_t j = 0; j < dout; ++j) orow[j] += xi * wrow[j];
    }
  }
  if (detail::tracking<T>({&x, &weight, &bias})) {
    auto *px = x.node(), *pw = weight.node(), *po = out.node();
    auto* pb = bias.defined() ? bias.node() : nullptr;
    detail::record<T>({&x, &weight, &bias}, out, [px, pw, pb, po, rows, din, dout] {
      const auto& g = po->grad;
      if (auto* gx = detail::grad_of(px))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < din; ++i) {
            T acc = 0;
            const T* wrow = &pw->value[i * dout];
            const T* grow = &g[r * dout];
            for (std::size_t j = 0; j < dout; ++j) acc += grow[j] * wrow[j];
            (*gx)[r * din + i] += acc;
          }
      if (auto* gw = detail::grad_of(pw))
        for (std::size_t r = 0; r < rows; ++r) {
          const T* grow = &g[r * dout];
          for (std::size_t i = 0; i < din; ++i) {
            const T xi = px->value[r * din + i];
            if (xi == T(0)) continue;
            T* gwrow = &(*gw)[i * dout];
            for (std::size_t j = 0; j < dout; ++j) gwrow[j] += xi * grow[j];
          }
        }
      if (pb != nullptr)
        if (auto* gb = detail::grad_of(pb))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < dout; ++j) (*gb)[j] += g[r * dout + j];
    });
  }
  return out;
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight) {
  return linear(x, weight, Tensor<T>{});
}

/// Batched a[B, m, k] @ b[B, k, n], or a @ b^T with b[B, n, k].
template <class T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false) {
  detail::require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0), "bmm: batch mismatch");
  const std::size_t B = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  detail::require((transpose_b ? b.dim(2) : b.dim(1)) == k,
                  "bmm: inner dims " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  // Element (p, j) of the right operand as a k x n matrix.
  auto bidx = [=](std::size_t batch, std::size_t p, std::size_t j) {
    return transpose_b ? (batch * n + j) * k + p : (batch * k + p) * n + j;
  };
  auto out = Tensor<T>::zeros({B, m, n});
  auto o = out.mutable_data();
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        T acc = 0;
        for (std::size_t p = 0; p < k; ++p) acc += a[(s * m + i) * k + p] * b[bidx(s, p, j)];
        o[(s * m + i) * n + j] = acc;
      }
  if (detail::tracking<T>({&a, &b})) {
    auto *pa = a.node(), *pb = b.node(), *po = out.node();
    detail::record<T>({&a, &b}, out, [pa, pb, po, B, m, k, n, bidx] {
      const auto& g = po->grad;
      auto* ga = detail::grad_of(pa);
      auto* gb = detail::grad_of(pb);
      for (std::size_t s = 0; s < B; ++s)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const T gij = g[(s * m + i) * n + j];
            if (gij == T(0)) continue;
            for (std::size_t p = 0; p < k; ++p) {
              if (ga) (*ga)[(s * m + i) * k + p] += gij * pb->value[bidx(s, p, j)];
              if (gb) (*gb)[bidx(s, p, j)] += gij * pa->value[(s * m + i) * k + p];
            }
          }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization.

template <class T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  const std::size_t d = x.last_dim();
  const std::size_t rows = x.size() / d;
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = x[r * d];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, x[r * d + j]);
    T sum = 0;
    for (std::size_t j = 0; j < d; ++j) sum += (o[r * d + j] = std::exp(x[r * d + j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] /= sum;
  }
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, rows, d] {
      auto& g = px->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += po->grad[r * d + j] * po->value[r * d + j];
        for (std::size_t j = 0; j < d; ++j) g[r * d + j] += po->value[r * d + j] * (po->grad[r * d + j] - dot);
      }
    });
  }
  return out;
}

/// Per-row standardization over the last axis followed by gamma * x + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.last_dim();
  detail::require(gamma.rank() == 1 && gamma.dim(0) == d && beta.rank() == 1 && beta.dim(0) == d,
                  "layer_norm: affine parameters must have shape [" + std::to_string(d) + "]");
  const std::size_t rows = x.size() / d;
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  std::vector<T> xhat(x.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += x[r * d + j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean);
    var /= T(d);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (x[r * d + j] - mean) * inv_std[r];
      o[r * d + j] = gamma[j] * xhat[r * d + j] + beta[j];
    }
  }
  if (detail::tracking<T>({&x, &gamma, &beta})) {
    auto *px = x.node(), *pg = gamma.node(), *pb = beta.node(), *po = out.node();
    detail::record<T>({&x, &gamma, &beta}, out,
                      [px, pg, pb, po, rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
                        const auto& g = po->grad;
                        if (auto* gg = detail::grad_of(pg))
                          for (std::size_t i = 0; i < g.size(); ++i) (*gg)[i % d] += g[i] * xhat[i];
                        if (auto* gb = detail::grad_of(pb))
                          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % d] += g[i];
                        if (auto* gx = detail::grad_of(px))
                          for (std::size_t r = 0; r < rows; ++r) {
                            T m1 = 0, m2 = 0;
                            for (std::size_t j = 0; j < d; ++j) {
                              const T dxh = g[r * d + j] * pg->value[j];
                              m1 += dxh;
                              m2 += dxh * xhat[r * d + j];
                            }
                            m1 /= T(d);
                            m2 /= T(d);
                            for (std::size_t j = 0; j < d; ++j) {
                              const T dxh = g[r * d + j] * pg->value[j];
                              (*gx)[r * d + j] += inv_std[r] * (dxh - m1 - xhat[r * d + j] * m2);
                            }
                          }
                      });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation.

/// Channels [begin, begin + len) of the last axis.
template <class T>
Tensor<T> slice_last(const Tensor<T>& x, std::size_t begin, std::size_t len) {
  const std::size_t d = x.last_dim();
  detail::require(begin + len <= d && len > 0, "slice_last: range out of bounds");
  const std::size_t rows = x.size() / d;
  Shape shape = x.shape();
  shape.back() = len;
  auto out = Tensor<T>::zeros(shape);
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) o[r * len + j] = x[r * d + begin + j];
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, rows, d, begin, len] {
      auto& g = px->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < len; ++j) g[r * d + begin + j] += po->grad[r * len + j];
    });
  }
  return out;
}

/// Splits the last axis into equal halves (Z1, Z2).
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x) {
  const std::size_t d = x.last_dim();
  if (d % 2 != 0) fail(errc::odd_channels, "cannot halve " + std::to_string(d) + " channels");
  return {slice_last(x, 0, d / 2), slice_last(x, d / 2, d / 2)};
}

template <class T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  detail::require(!parts.empty(), "concat_last: no inputs");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape l = p.shape();
    l.pop_back();
    detail::require(l == lead, "concat_last: leading shapes differ");
    total += p.last_dim();
  }
  const std::size_t rows = numel(lead);
  Shape shape = lead;
  shape.push_back(total);
  auto out = Tensor<T>::zeros(shape);
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t d = p.last_dim();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < d; ++j) o[r * total + offset + j] = p[r * d + j];
    offset += d;
  }
  bool any = false;
  if (active_tape<T>() != nullptr)
    for (const auto& p : parts) any = any || p.requires_grad();
  if (any) {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.handle());
    auto* po = out.node();
    std::vector<Node<T>*> raw;
    for (const auto& n : nodes) raw.push_back(n.get());
    active_tape<T>()->record(std::move(nodes), out.handle(), [raw, po, rows, total] {
      std::size_t off = 0;
      for (auto* p : raw) {
        const std::size_t d = p->shape.back();
        if (auto* g = detail::grad_of(p))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) (*g)[r * d + j] += po->grad[r * total + off + j];
        off += d;
      }
    });
  }
  return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::require(numel(shape) == x.size(), "reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  auto out = Tensor<T>::from(std::move(shape), std::vector<T>(x.data().begin(), x.data().end()));
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po] {
      auto& g = px->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += po->grad[i];
    });
  }
  return out;
}

/// [A, B, C] -> [B, A, C].
template <class T>
Tensor<T> transpose01(const Tensor<T>& x) {
  detail::require(x.rank() == 3, "transpose01 needs rank 3");
  const std::size_t A = x.dim(0), B = x.dim(1), C = x.dim(2);
  auto out = Tensor<T>::zeros({B, A, C});
  auto o = out.mutable_data();
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) o[(b * A + a) * C + c] = x[(a * B + b) * C + c];
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, A, B, C] {
      auto& g = px->ensure_grad();
      for (std::size_t a = 0; a < A; ++a)
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) g[(a * B + b) * C + c] += po->grad[(b * A + a) * C + c];
    });
  }
  return out;
}

/// rows[i] = table[index[i]]; table is [V, d].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> index) {
  detail::require(table.rank() == 2, "gather_rows: table must be rank 2");
  const std::size_t V = table.dim(0), d = table.dim(1);
  for (int i : index)
    if (i < 0 || static_cast<std::size_t>(i) >= V) fail(errc::index_out_of_range, "gather_rows: index out of range");
  auto out = Tensor<T>::zeros({index.size(), d});
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < index.size(); ++r)
    for (std::size_t j = 0; j < d; ++j) o[r * d + j] = table[static_cast<std::size_t>(index[r]) * d + j];
  if (detail::tracking<T>({&table})) {
    auto *pt = table.node(), *po = out.node();
    std::vector<int> idx(index.begin(), index.end());
    detail::record<T>({&table}, out, [pt, po, d, idx = std::move(idx)] {
      auto& g = pt->ensure_grad();
      for (std::size_t r = 0; r < idx.size(); ++r)
        for (std::size_t j = 0; j < d; ++j) g[static_cast<std::size_t>(idx[r]) * d + j] += po->grad[r * d + j];
    });
  }
  return out;
}

/// [T, d] -> [T, N, d], repeated over the node axis.
template <class T>
Tensor<T> broadcast_nodes(const Tensor<T>& x, std::size_t nodes) {
  detail::require(x.rank() == 2, "broadcast_nodes needs rank 2");
  const std::size_t steps = x.dim(0), d = x.dim(1);
  auto out = Tensor<T>::zeros({steps, nodes, d});
  auto o = out.mutable_data();
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t n = 0; n < nodes; ++n)
      for (std::size_t j = 0; j < d; ++j) o[(t * nodes + n) * d + j] = x[t * d + j];
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, steps, nodes, d] {
      auto& g = px->ensure_grad();
      for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t n = 0; n < nodes; ++n)
          for (std::size_t j = 0; j < d; ++j) g[t * d + j] += po->grad[(t * nodes + n) * d + j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structured kernels.

/// Zero-padded 3x3 convolution over the (time, node) grid of x[T, N, c_in]
/// with kernel[3, 3, c_in, c_out]; output keeps the T x N extent.
template <class T>
Tensor<T> conv2d_3x3(const Tensor<T>& x, const Tensor<T>& kernel) {
  detail::require(x.rank() == 3 && kernel.rank() == 4 && kernel.dim(0) == 3 && kernel.dim(1) == 3 &&
                      kernel.dim(2) == x.dim(2),
                  "conv2d_3x3: input " + to_string(x.shape()) + " vs kernel " + to_string(kernel.shape()));
  const std::size_t S = x.dim(0), N = x.dim(1), ci = x.dim(2), co = kernel.dim(3);
  auto out = Tensor<T>::zeros({S, N, co});
  auto o = out.mutable_data();
  const auto xv = x.data();
  const auto kv = kernel.data();
  auto kidx = [=](std::size_t dt, std::size_t dn, std::size_t i) { return ((dt * 3 + dn) * ci + i) * co; };
  for (std::size_t t = 0; t < S; ++t)
    for (std::size_t n = 0; n < N; ++n) {
      T* orow = &o[(t * N + n) * co];
      for (std::size_t dt = 0; dt < 3; ++dt) {
        if (t + dt < 1 || t + dt - 1 >= S) continue;
        for (std::size_t dn = 0; dn < 3; ++dn) {
          if (n + dn < 1 || n + dn - 1 >= N) continue;
          const T* xrow = &xv[((t + dt - 1) * N + (n + dn - 1)) * ci];
          for (std::size_t i = 0; i < ci; ++i) {
            const T xi = xrow[i];
            if (xi == T(0)) continue;
            const T* krow = &kv[kidx(dt, dn, i)];
            for (std::size_t j = 0; j < co; ++j) orow[j] += xi * krow[j];
          }
        }
      }
    }
  if (detail::tracking<T>({&x, &kernel})) {
    auto *px = x.node(), *pk = kernel.node(), *po = out.node();
    detail::record<T>({&x, &kernel}, out, [px, pk, po, S, N, ci, co, kidx] {
      auto* gx = detail::grad_of(px);
      auto* gk = detail::grad_of(pk);
      for (std::size_t t = 0; t < S; ++t)
        for (std::size_t n = 0; n < N; ++n) {
          const T* grow = &po->grad[(t * N + n) * co];
          for (std::size_t dt = 0; dt < 3; ++dt) {
            if (t + dt < 1 || t + dt - 1 >= S) continue;
            for (std::size_t dn = 0; dn < 3; ++dn) {
              if (n + dn < 1 || n + dn - 1 >= N) continue;
              const std::size_t xbase = ((t + dt - 1) * N + (n + dn - 1)) * ci;
              for (std::size_t i = 0; i < ci; ++i) {
                const std::size_t kb = kidx(dt, dn, i);
                if (gx) {
                  T acc = 0;
                  for (std::size_t j = 0; j < co; ++j) acc += grow[j] * pk->value[kb + j];
                  (*gx)[xbase + i] += acc;
                }
                if (gk) {
                  const T xi = px->value[xbase + i];
                  if (xi != T(0))
                    for (std::size_t j = 0; j < co; ++j) (*gk)[kb + j] += xi * grow[j];
                }
              }
            }
          }
        }
    });
  }
  return out;
}

/// Constant sparse N x N operator in CSR form (row i lists (j, w_ij)).
struct Propagator {
  std::size_t n = 0;
  std::vector<std::size_t> row_start;
  std::vector<std::size_t> col;
  std::vector<double> weight;

  static Propagator from_dense(const Matrix& m) {
    Propagator p;
    p.n = m.rows;
    p.row_start.push_back(0);
    for (std::size_t i = 0; i < m.rows; ++i) {
      for (std::size_t j = 0; j < m.cols; ++j)
        if (m(i, j) != 0.0) {
          p.col.push_back(j);
          p.weight.push_back(m(i, j));
        }
      p.row_start.push_back(p.col.size());
    }
    return p;
  }
};

/// out[t, i, :] = sum_j P(i, j) x[t, j, :] for x[T, N, d]. P is not differentiated.
template <class T>
Tensor<T> propagate(const Tensor<T>& x, std::shared_ptr<const Propagator> prop) {
  detail::require(x.rank() == 3 && x.dim(1) == prop->n,
                  "propagate: input " + to_string(x.shape()) + " vs operator of size " + std::to_string(prop->n));
  const std::size_t S = x.dim(0), N = x.dim(1), d = x.dim(2);
  auto out = Tensor<T>::zeros(x.shape());
  auto o = out.mutable_data();
  for (std::size_t t = 0; t < S; ++t)
    for (std::size_t i = 0; i < N; ++i) {
      T* orow = &o[(t * N + i) * d];
      for (std::size_t e = prop->row_start[i]; e < prop->row_start[i + 1]; ++e) {
        const T w = static_cast<T>(prop->weight[e]);
        const T* xrow = &x.data()[(t * N + prop->col[e]) * d];
        for (std::size_t c = 0; c < d; ++c) orow[c] += w * xrow[c];
      }
    }
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po, prop, S, N, d] {
      auto& g = px->ensure_grad();
      for (std::size_t t = 0; t < S; ++t)
        for (std::size_t i = 0; i < N; ++i) {
          const T* grow = &po->grad[(t * N + i) * d];
          for (std::size_t e = prop->row_start[i]; e < prop->row_start[i + 1]; ++e) {
            const T w = static_cast<T>(prop->weight[e]);
            T* gx = &g[(t * N + prop->col[e]) * d];
            for (std::size_t c = 0; c < d; ++c) gx[c] += w * grow[c];
          }
        }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions and losses.

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  auto out = Tensor<T>::from({}, {s});
  if (detail::tracking<T>({&x})) {
    auto *px = x.node(), *po = out.node();
    detail::record<T>({&x}, out, [px, po] {
      auto& g = px->ensure_grad();
      for (auto& gi : g) gi += po->grad[0];
    });
  }
  return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// mean |pred - target|; target is a constant.
template <class T>
Tensor<T> mae_loss(const Tensor<T>& pred, std::span<const T> target) {
  detail::require(pred.size() == target.size(), "mae_loss: prediction/target size mismatch");
  const T inv = T(1) / static_cast<T>(pred.size());
  T s = 0;
  for (std::size_t i = 0; i < target.size(); ++i) s += std::abs(pred[i] - target[i]);
  auto out = Tensor<T>::from({}, {s * inv});
  if (detail::tracking<T>({&pred})) {
    auto *pp = pred.node(), *po = out.node();
    std::vector<T> y(target.begin(), target.end());
    detail::record<T>({&pred}, out, [pp, po, inv, y = std::move(y)] {
      auto& g = pp->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T diff = pp->value[i] - y[i];
        g[i] += po->grad[0] * inv * static_cast<T>((diff > 0) - (diff < 0));
      }
    });
  }
  return out;
}

/// mean Huber(pred - target; delta).
template <class T>
Tensor<T> huber_loss(const Tensor<T>& pred, std::span<const T> target, T delta) {
  detail::require(pred.size() == target.size(), "huber_loss: prediction/target size mismatch");
  const T inv = T(1) / static_cast<T>(pred.size());
  T s = 0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const T a = std::abs(pred[i] - target[i]);
    s += a <= delta ? T(0.5) * a * a : delta * (a - T(0.5) * delta);
  }
  auto out = Tensor<T>::from({}, {s * inv});
  if (detail::tracking<T>({&pred})) {
    auto *pp = pred.node(), *po = out.node();
    std::vector<T> y(target.begin(), target.end());
    detail::record<T>({&pred}, out, [pp, po, inv, delta, y = std::move(y)] {
      auto& g = pp->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T diff = pp->value[i] - y[i];
        const T d = std::abs(diff) <= delta ? diff : delta * static_cast<T>((diff > 0) - (diff < 0));
        g[i] += po->grad[0] * inv * d;
      }
    });
  }
  return out;
}

}  // namespace cy2mixer::ad
