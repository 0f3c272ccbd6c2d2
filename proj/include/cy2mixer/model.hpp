#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cy2mixer/error.hpp"
#include "cy2mixer/matrix.hpp"
#include "cy2mixer/ops.hpp"
#include "cy2mixer/tensor.hpp"
#include "cy2mixer/topology.hpp"

namespace cy2mixer {

struct ModelConfig {
  std::size_t num_layers = 3;
  std::size_t d_f = 24;
  std::size_t d_t = 24;  // width of each calendar table; both are concatenated
  std::size_t d_a = 80;
  std::size_t d_h = 0;   // 0: the embedding width; otherwise the embedding is projected to d_h
  std::size_t d_tiny = 64;
  bool tiny_attention = true;
  double dropout = 0.4;
  std::size_t T = 12;
  std::size_t T_prime = 12;
  std::size_t C = 1;
  std::size_t d_o = 1;
  std::size_t steps_per_day = 288;
  std::size_t num_nodes = 0;

  // Structural variants.
  bool temporal_block = true;
  bool spatial_block = true;
  bool cycle_block = true;
  AdjacencyKind cycle_source = AdjacencyKind::clique;
  std::size_t pe_dim = 0;  // width of a constant per-node encoding appended to the embedding

  std::size_t embedding_width() const { return d_f + 2 * d_t + d_a + pe_dim; }
  std::size_t hidden() const { return d_h == 0 ? embedding_width() : d_h; }
  std::size_t num_blocks() const {
    return std::size_t{temporal_block} + std::size_t{spatial_block} + std::size_t{cycle_block};
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
  auto bad = [](const std::string& what) { fail(errc::invalid_config, what); };
  if (c.num_layers == 0) bad("num_layers must be >= 1");
  if (c.T == 0 || c.T_prime == 0) bad("T and T_prime must be positive");
  if (c.C == 0 || c.d_o == 0 || c.d_o > c.C) bad("need 1 <= d_o <= C");
  if (c.steps_per_day == 0) bad("steps_per_day must be positive");
  if (c.num_nodes == 0) bad("num_nodes must be positive");
  if (c.embedding_width() == 0 || c.hidden() == 0) bad("hidden width must be positive");
  if (c.num_blocks() == 0) bad("at least one block must be enabled");
  if (c.tiny_attention && c.d_tiny == 0) bad("d_tiny must be positive when tiny attention is on");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) bad("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// Parameters.

enum class BlockKind { temporal, spatial, cycle };

constexpr const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::temporal: return "temporal";
    case BlockKind::spatial: return "spatial";
    case BlockKind::cycle: return "cycle";
  }
  return "?";
}

template <class T>
struct EmbeddingParams {
  ad::Tensor<T> feat_w, feat_b;  // [C, d_f], [d_f]
  ad::Tensor<T> tod_table;       // [steps_per_day, d_t]
  ad::Tensor<T> dow_table;       // [7, d_t]
  ad::Tensor<T> adaptive;        // [T, N, d_a]
  ad::Tensor<T> proj_w, proj_b;  // optional embedding_width -> d_h
};

template <class T>
struct TinyAttentionParams {
  ad::Tensor<T> wq, wk, wv;  // [d_h, d_tiny]
  ad::Tensor<T> wo;          // [d_tiny, d_h]
  bool enabled() const { return wq.defined(); }
};

template <class T>
struct BlockParams {
  BlockKind kind = BlockKind::temporal;
  ad::Tensor<T> ln_gamma, ln_beta;  // [d_h]
  ad::Tensor<T> u_w, u_b;           // [d_h, 2 d_h], [2 d_h]
  ad::Tensor<T> gate_w, gate_b;     // conv [3, 3, d_h, d_h] or [d_h, d_h]; [d_h]
  TinyAttentionParams<T> tiny;
  ad::Tensor<T> v_w, v_b;           // [d_h, d_h], [d_h]
};

template <class T>
struct LayerParams {
  std::vector<BlockParams<T>> blocks;  // fusion order: temporal, cycle, spatial
  ad::Tensor<T> fusion_w, fusion_b;    // [blocks * d_h, d_h], [d_h]
};

template <class T>
struct HeadParams {
  ad::Tensor<T> w, b;  // [T * d_h, T' * d_o], [T' * d_o]
};

namespace detail {

template <class T>
ad::Tensor<T> glorot(ad::Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto t = ad::Tensor<T>::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T>
ad::Tensor<T> param_zeros(ad::Shape shape) {
  return ad::Tensor<T>::zeros(std::move(shape), true);
}

template <class T>
ad::Tensor<T> param_ones(ad::Shape shape) {
  return ad::Tensor<T>::full(std::move(shape), T(1), true);
}

}  // namespace detail

template <class T>
TinyAttentionParams<T> make_tiny_attention(std::size_t d_h, std::size_t d_tiny, std::mt19937_64& rng) {
  return {detail::glorot<T>({d_h, d_tiny}, d_h, d_tiny, rng), detail::glorot<T>({d_h, d_tiny}, d_h, d_tiny, rng),
          detail::glorot<T>({d_h, d_tiny}, d_h, d_tiny, rng), detail::glorot<T>({d_tiny, d_h}, d_tiny, d_h, rng)};
}

/// Gate transform starts at W = 0, b = 1 so every block begins as a plain MLP.
template <class T>
BlockParams<T> make_block(BlockKind kind, std::size_t d_h, std::size_t d_tiny, bool tiny, std::mt19937_64& rng) {
  BlockParams<T> p;
  p.kind = kind;
  p.ln_gamma = detail::param_ones<T>({d_h});
  p.ln_beta = detail::param_zeros<T>({d_h});
  p.u_w = detail::glorot<T>({d_h, 2 * d_h}, d_h, 2 * d_h, rng);
  p.u_b = detail::param_zeros<T>({2 * d_h});
  p.gate_w = kind == BlockKind::temporal ? detail::param_zeros<T>({3, 3, d_h, d_h}) : detail::param_zeros<T>({d_h, d_h});
  p.gate_b = detail::param_ones<T>({d_h});
  if (tiny) p.tiny = make_tiny_attention<T>(d_h, d_tiny, rng);
  p.v_w = detail::glorot<T>({d_h, d_h}, d_h, d_h, rng);
  p.v_b = detail::param_zeros<T>({d_h});
  return p;
}

template <class T>
LayerParams<T> make_layer(std::span<const BlockKind> kinds, std::size_t d_h, std::size_t d_tiny, bool tiny,
                          std::mt19937_64& rng) {
  LayerParams<T> layer;
  for (auto k : kinds) layer.blocks.push_back(make_block<T>(k, d_h, d_tiny, tiny, rng));
  const std::size_t in = kinds.size() * d_h;
  layer.fusion_w = detail::glorot<T>({in, d_h}, in, d_h, rng);
  layer.fusion_b = detail::param_zeros<T>({d_h});
  return layer;
}

inline std::vector<BlockKind> block_kinds(const ModelConfig& c) {
  std::vector<BlockKind> kinds;
  if (c.temporal_block) kinds.push_back(BlockKind::temporal);
  if (c.cycle_block) kinds.push_back(BlockKind::cycle);
  if (c.spatial_block) kinds.push_back(BlockKind::spatial);
  return kinds;
}

// ---------------------------------------------------------------------------
// Graph operators.

/// D~^-1 (A + I): row-normalized adjacency with self loops.
inline ad::Propagator message_passing_operator(const Matrix& adj) {
  Matrix m = adj;
  for (std::size_t i = 0; i < m.rows; ++i) {
    m(i, i) += 1.0;
    double row = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) row += m(i, j);
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) /= row;
  }
  return ad::Propagator::from_dense(m);
}

/// Adjacency-derived constants shared by every forward pass.
struct GraphContext {
  std::shared_ptr<const ad::Propagator> spatial;
  AdjacencyKind spatial_kind = AdjacencyKind::standard;
  std::shared_ptr<const ad::Propagator> cycle;
  AdjacencyKind cycle_kind = AdjacencyKind::clique;
  Matrix encoding;  // N x pe_dim, empty when unused
};

inline GraphContext make_graph_context(const AdjacencyMatrix& adjacency, const AdjacencyMatrix& cycle_adjacency,
                                       Matrix encoding = {}) {
  if (adjacency.size() != cycle_adjacency.size()) fail(errc::shape_mismatch, "A and A_C sizes differ");
  GraphContext ctx;
  ctx.spatial = std::make_shared<const ad::Propagator>(message_passing_operator(adjacency.data));
  ctx.spatial_kind = adjacency.kind;
  ctx.cycle = std::make_shared<const ad::Propagator>(message_passing_operator(cycle_adjacency.data));
  ctx.cycle_kind = cycle_adjacency.kind;
  ctx.encoding = std::move(encoding);
  return ctx;
}

// ---------------------------------------------------------------------------
// Layers.

/// X_feat || X_temp || X_ast (|| constant encoding), optionally projected to d_h.
template <class T>
ad::Tensor<T> embed(const ad::Tensor<T>& window, std::span<const int> tod, std::span<const int> dow,
                    const EmbeddingParams<T>& p, const Matrix* encoding = nullptr) {
  if (window.rank() != 3) fail(errc::shape_mismatch, "window must be T x N x C, got " + ad::to_string(window.shape()));
  const std::size_t steps = window.dim(0), nodes = window.dim(1);
  if (tod.size() != steps || dow.size() != steps) fail(errc::shape_mismatch, "calendar length differs from T");
  if (p.adaptive.dim(0) != steps || p.adaptive.dim(1) != nodes) {
    fail(errc::shape_mismatch, "adaptive embedding " + ad::to_string(p.adaptive.shape()) + " vs window " +
                                   ad::to_string(window.shape()));
  }
  const auto spd = static_cast<int>(p.tod_table.dim(0));
  for (std::size_t t = 0; t < steps; ++t) {
    if (tod[t] < 0 || tod[t] >= spd || dow[t] < 0 || dow[t] >= 7) {
      fail(errc::calendar_index_out_of_range,
           "calendar index (" + std::to_string(tod[t]) + ", " + std::to_string(dow[t]) + ") at t=" + std::to_string(t));
    }
  }
  std::vector<ad::Tensor<T>> parts;
  parts.push_back(ad::linear(window, p.feat_w, p.feat_b));
  parts.push_back(ad::broadcast_nodes(ad::gather_rows(p.tod_table, tod), nodes));
  parts.push_back(ad::broadcast_nodes(ad::gather_rows(p.dow_table, dow), nodes));
  parts.push_back(p.adaptive);
  if (encoding != nullptr && encoding->cols > 0) {
    if (encoding->rows != nodes) fail(errc::shape_mismatch, "encoding rows differ from N");
    std::vector<T> values;
    values.reserve(steps * nodes * encoding->cols);
    for (std::size_t t = 0; t < steps; ++t)
      for (double v : encoding->values) values.push_back(static_cast<T>(v));
    parts.push_back(ad::constant<T>({steps, nodes, encoding->cols}, std::move(values)));
  }
  auto h = ad::concat_last(parts);
  if (p.proj_w.defined()) h = ad::linear(h, p.proj_w, p.proj_b);
  return h;
}

/// One message-passing round per time slice: (P x) W + b.
template <class T>
ad::Tensor<T> mpnn(const ad::Tensor<T>& x, const std::shared_ptr<const ad::Propagator>& op, const ad::Tensor<T>& weight,
                   const ad::Tensor<T>& bias) {
  return ad::linear(ad::propagate(x, op), weight, bias);
}

/// Single-head scaled dot-product attention over nodes within each time slice.
template <class T>
ad::Tensor<T> tiny_attention(const ad::Tensor<T>& x, const TinyAttentionParams<T>& p) {
  const auto q = ad::linear(x, p.wq);
  const auto k = ad::linear(x, p.wk);
  const auto v = ad::linear(x, p.wv);
  const T inv = T(1) / std::sqrt(static_cast<T>(p.wq.dim(1)));
  const auto weights = ad::softmax_last(ad::scale(ad::bmm(q, k, true), inv));
  return ad::linear(ad::bmm(weights, v), p.wo);
}

/// Gated block: Z = gelu(LN(H) U); Z1 * gate(Z2) projected by V. The gate is a
/// 3x3 convolution (temporal) or a message-passing round (spatial, cycle),
/// plus tiny attention on LN(H) when present.
template <class T>
ad::Tensor<T> gated_block(const ad::Tensor<T>& h, const BlockParams<T>& p,
                          const std::shared_ptr<const ad::Propagator>& op = nullptr) {
  if (h.rank() != 3 || h.last_dim() != p.ln_gamma.dim(0)) {
    fail(errc::shape_mismatch, "block input " + ad::to_string(h.shape()));
  }
  const auto hn = ad::layer_norm(h, p.ln_gamma, p.ln_beta);
  const auto z = ad::gelu(ad::linear(hn, p.u_w, p.u_b));
  auto [z1, z2] = ad::split_channels(z);
  ad::Tensor<T> gate;
  if (p.kind == BlockKind::temporal) {
    gate = ad::add_bias(ad::conv2d_3x3(z2, p.gate_w), p.gate_b);
  } else {
    if (!op) fail(errc::shape_mismatch, std::string(to_string(p.kind)) + " block needs an adjacency operator");
    gate = mpnn(z2, op, p.gate_w, p.gate_b);
  }
  if (p.tiny.enabled()) gate = ad::add(gate, tiny_attention(hn, p.tiny));
  return ad::linear(ad::hadamard(z1, gate), p.v_w, p.v_b);
}

/// Kind-checked form: spatial blocks take a standard adjacency and cycle blocks
/// take `cycle_expected` (clique unless an ablation rewires the cycle block).
template <class T>
ad::Tensor<T> gated_block(const ad::Tensor<T>& h, const BlockParams<T>& p, const GraphContext& ctx,
                          AdjacencyKind cycle_expected = AdjacencyKind::clique) {
  switch (p.kind) {
    case BlockKind::temporal: return gated_block(h, p);
    case BlockKind::spatial:
      if (ctx.spatial_kind != AdjacencyKind::standard) {
        fail(errc::adjacency_kind_mismatch,
             std::string("spatial block needs a standard adjacency, got ") + to_string(ctx.spatial_kind));
      }
      return gated_block(h, p, ctx.spatial);
    case BlockKind::cycle:
      if (ctx.cycle_kind != cycle_expected) {
        fail(errc::adjacency_kind_mismatch, std::string("cycle block expects ") + to_string(cycle_expected) +
                                                " adjacency, got " + to_string(ctx.cycle_kind));
      }
      return gated_block(h, p, ctx.cycle);
  }
  return h;
}

/// Blocks on the same input, block-output dropout, fusion, residual from H.
template <class T>
ad::Tensor<T> encoder_layer(const ad::Tensor<T>& h, const LayerParams<T>& p, const GraphContext& ctx,
                            AdjacencyKind cycle_expected = AdjacencyKind::clique, double dropout = 0.0,
                            std::mt19937_64* rng = nullptr) {
  std::vector<ad::Tensor<T>> outs;
  for (const auto& block : p.blocks) {
    auto y = gated_block(h, block, ctx, cycle_expected);
    if (rng != nullptr) y = ad::dropout(y, dropout, *rng);
    outs.push_back(std::move(y));
  }
  const auto fused = ad::linear(outs.size() == 1 ? outs[0] : ad::concat_last(outs), p.fusion_w, p.fusion_b);
  return ad::add(h, fused);
}

/// Per node, flattens (T, d_h) and maps it to (T', d_o).
template <class T>
ad::Tensor<T> output_head(const ad::Tensor<T>& y, const HeadParams<T>& p, std::size_t horizon, std::size_t d_o) {
  if (y.rank() != 3 || p.w.dim(0) != y.dim(0) * y.dim(2) || p.w.dim(1) != horizon * d_o) {
    fail(errc::shape_mismatch, "head weight " + ad::to_string(p.w.shape()) + " vs input " + ad::to_string(y.shape()));
  }
  const std::size_t nodes = y.dim(1);
  const auto flat = ad::reshape(ad::transpose01(y), {nodes, y.dim(0) * y.dim(2)});
  const auto out = ad::reshape(ad::linear(flat, p.w, p.b), {nodes, horizon, d_o});
  return ad::transpose01(out);
}

// ---------------------------------------------------------------------------
// Full network.

template <class T>
class Cy2Mixer {
 public:
  using Param = std::pair<std::string, ad::Tensor<T>>;

  Cy2Mixer(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    validate(config_);
    std::mt19937_64 rng(seed);
    const auto& c = config_;
    const std::size_t dh = c.hidden();
    embedding_.feat_w = detail::glorot<T>({c.C, c.d_f}, c.C, c.d_f, rng);
    embedding_.feat_b = detail::param_zeros<T>({c.d_f});
    embedding_.tod_table = detail::glorot<T>({c.steps_per_day, c.d_t}, c.steps_per_day, c.d_t, rng);
    embedding_.dow_table = detail::glorot<T>({7, c.d_t}, 7, c.d_t, rng);
    embedding_.adaptive = detail::glorot<T>({c.T, c.num_nodes, c.d_a}, c.num_nodes, c.d_a, rng);
    if (c.d_h != 0 && c.d_h != c.embedding_width()) {
      embedding_.proj_w = detail::glorot<T>({c.embedding_width(), dh}, c.embedding_width(), dh, rng);
      embedding_.proj_b = detail::param_zeros<T>({dh});
    }
    const auto kinds = block_kinds(c);
    for (std::size_t l = 0; l < c.num_layers; ++l)
      layers_.push_back(make_layer<T>(kinds, dh, c.d_tiny, c.tiny_attention, rng));
    head_.w = detail::glorot<T>({c.T * dh, c.T_prime * c.d_o}, c.T * dh, c.T_prime * c.d_o, rng);
    head_.b = detail::param_zeros<T>({c.T_prime * c.d_o});
    register_all();
  }

  const ModelConfig& config() const noexcept { return config_; }
  const EmbeddingParams<T>& embedding() const noexcept { return embedding_; }
  const std::vector<LayerParams<T>>& layers() const noexcept { return layers_; }
  const HeadParams<T>& head() const noexcept { return head_; }

  /// Named parameter handles in a fixed order (aliases of the live tensors).
  const std::vector<Param>& parameters() const noexcept { return params_; }

  ad::Tensor<T> parameter(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    fail(errc::config_mismatch, "no parameter named " + name);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.size();
    return n;
  }

  /// Copies every value from `other` (same config) into this model's tensors.
  void copy_values_from(const Cy2Mixer& other) {
    if (!(other.config_ == config_)) fail(errc::config_mismatch, "model configs differ");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto dst = params_[i].second.mutable_data();
      auto src = other.params_[i].second.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.second.zero_grad();
  }

  /// window: normalized T x N x C values. Dropout is active only when `rng` is given.
  ad::Tensor<T> forward(std::span<const T> window, std::span<const int> tod, std::span<const int> dow,
                        const GraphContext& ctx, std::mt19937_64* rng = nullptr) const {
    const auto& c = config_;
    auto x = ad::constant<T>({c.T, c.num_nodes, c.C}, std::vector<T>(window.begin(), window.end()));
    return forward(x, tod, dow, ctx, rng);
  }

  ad::Tensor<T> forward(const ad::Tensor<T>& window, std::span<const int> tod, std::span<const int> dow,
                        const GraphContext& ctx, std::mt19937_64* rng = nullptr) const {
    const auto& c = config_;
    if (window.shape() != ad::Shape{c.T, c.num_nodes, c.C}) {
      fail(errc::shape_mismatch, "window " + ad::to_string(window.shape()) + " does not match the model config");
    }
    if (c.pe_dim > 0 && (ctx.encoding.rows != c.num_nodes || ctx.encoding.cols != c.pe_dim)) {
      fail(errc::config_mismatch, "structural encoding must be N x pe_dim");
    }
    auto h = embed(window, tod, dow, embedding_, c.pe_dim > 0 ? &ctx.encoding : nullptr);
    for (const auto& layer : layers_) h = encoder_layer(h, layer, ctx, c.cycle_source, c.dropout, rng);
    return output_head(h, head_, c.T_prime, c.d_o);
  }

  /// Manifest plus one CY2T blob per parameter.
  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.txt");
    if (!manifest) fail(errc::io_error, "cannot write " + (dir / "manifest.txt").string());
    for (const auto& [name, t] : params_) {
      manifest << name;
      for (auto d : t.shape()) manifest << ' ' << d;
      manifest << '\n';
      ad::save_tensor((dir / (name + ".cy2t")).string(), t);
    }
  }

  /// Loads values saved by save(); every manifest entry and blob must match
  /// this model's parameter list and shapes.
  void load(const std::filesystem::path& dir) {
    std::ifstream manifest(dir / "manifest.txt");
    if (!manifest) fail(errc::io_error, "cannot read " + (dir / "manifest.txt").string());
    std::string line;
    std::size_t i = 0;
    while (std::getline(manifest, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string name;
      fields >> name;
      ad::Shape shape;
      for (std::size_t d; fields >> d;) shape.push_back(d);
      if (i >= params_.size() || params_[i].first != name || params_[i].second.shape() != shape) {
        fail(errc::config_mismatch, "checkpoint entry '" + line + "' does not match the configured model");
      }
      auto loaded = ad::load_tensor<T>((dir / (name + ".cy2t")).string());
      if (loaded.shape() != shape) fail(errc::config_mismatch, "blob shape differs from manifest for " + name);
      auto dst = params_[i].second.mutable_data();
      std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
      ++i;
    }
    if (i != params_.size()) fail(errc::config_mismatch, "checkpoint is missing parameters");
  }

 private:
  void add(std::string name, const ad::Tensor<T>& t) {
    if (t.defined()) params_.emplace_back(std::move(name), t);
  }

  void register_all() {
    add("embed.feat_w", embedding_.feat_w);
    add("embed.feat_b", embedding_.feat_b);
    add("embed.tod", embedding_.tod_table);
    add("embed.dow", embedding_.dow_table);
    add("embed.adaptive", embedding_.adaptive);
    add("embed.proj_w", embedding_.proj_w);
    add("embed.proj_b", embedding_.proj_b);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      const std::string lp = "layer" + std::to_string(l) + ".";
      for (const auto& b : layer.blocks) {
        const std::string bp = lp + to_string(b.kind) + ".";
        add(bp + "ln_gamma", b.ln_gamma);
        add(bp + "ln_beta", b.ln_beta);
        add(bp + "u_w", b.u_w);
        add(bp + "u_b", b.u_b);
        add(bp + "gate_w", b.gate_w);
        add(bp + "gate_b", b.gate_b);
        add(bp + "tiny_q", b.tiny.wq);
        add(bp + "tiny_k", b.tiny.wk);
        add(bp + "tiny_v", b.tiny.wv);
        add(bp + "tiny_o", b.tiny.wo);
        add(bp + "v_w", b.v_w);
        add(bp + "v_b", b.v_b);
      }
      add(lp + "fusion_w", layer.fusion_w);
      add(lp + "fusion_b", layer.fusion_b);
    }
    add("head.w", head_.w);
    add("head.b", head_.b);
  }

  ModelConfig config_;
  EmbeddingParams<T> embedding_;
  std::vector<LayerParams<T>> layers_;
  HeadParams<T> head_;
  std::vector<Param> params_;
};

}  // namespace cy2mixer
