#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "cy2mixer/config.hpp"
#include "cy2mixer/data.hpp"
#include "cy2mixer/encodings.hpp"
#include "cy2mixer/error.hpp"
#include "cy2mixer/graph.hpp"
#include "cy2mixer/metrics.hpp"
#include "cy2mixer/model.hpp"
#include "cy2mixer/ops.hpp"
#include "cy2mixer/tensor.hpp"
#include "cy2mixer/topology.hpp"

namespace cy2mixer {

// ---------------------------------------------------------------------------
// Graph artifacts and model context.

struct GraphArtifacts {
  Graph graph;
  AdjacencyMatrix adjacency;  // standard
  CycleBasis basis;
  AdjacencyMatrix clique;
};

inline GraphArtifacts prepare_artifacts(const Graph& g, AdjacencyMode mode = AdjacencyMode::binary()) {
  GraphArtifacts a;
  a.graph = g;
  a.adjacency = dense_adjacency(g, mode);
  a.basis = cycle_basis_paton(g);
  a.clique = clique_adjacency(g, a.basis);
  return a;
}

inline AdjacencyMode adjacency_mode(const TrainConfig& c) {
  return c.adjacency == AdjacencyWeights::gaussian ? AdjacencyMode::gaussian(c.gaussian_sigma, c.gaussian_threshold)
                                                   : AdjacencyMode::binary();
}

/// Fills data-derived fields and checks the rest against the signals.
inline ModelConfig resolve_model_config(const ModelConfig& in, const SignalTensor& signals) {
  ModelConfig c = in;
  if (c.num_nodes == 0) c.num_nodes = signals.nodes;
  if (c.num_nodes != signals.nodes) {
    fail(errc::config_mismatch, "config has " + std::to_string(c.num_nodes) + " nodes, data has " +
                                    std::to_string(signals.nodes));
  }
  if (c.C != signals.features) {
    fail(errc::config_mismatch, "config has C = " + std::to_string(c.C) + ", data has " +
                                    std::to_string(signals.features) + " features");
  }
  if (c.steps_per_day != signals.steps_per_day()) {
    fail(errc::config_mismatch, "config has steps_per_day = " + std::to_string(c.steps_per_day) + ", data implies " +
                                    std::to_string(signals.steps_per_day()));
  }
  validate(c);
  return c;
}

/// Adjacency operators (and the optional structural encoding) for a config.
/// A DTW cycle source only sees the training rows.
inline GraphContext build_context(const TrainConfig& cfg, const GraphArtifacts& art, const SignalTensor& signals,
                                  const WindowedDataset& train_split) {
  AdjacencyMatrix cycle = art.clique;
  if (cfg.model.cycle_block) {
    switch (cfg.model.cycle_source) {
      case AdjacencyKind::clique: break;
      case AdjacencyKind::standard: cycle = art.adjacency; break;
      case AdjacencyKind::dtw: {
        DtwOptions opt;
        opt.top_k = cfg.dtw_top_k ? cfg.dtw_top_k : default_dtw_top_k(art.graph);
        opt.row_end = train_split.row_end();
        opt.stride = cfg.dtw_stride;
        cycle = dtw_matrix(signals, opt);
        break;
      }
    }
  }
  Matrix encoding;
  if (cfg.model.pe_dim > 0) {
    switch (cfg.encoding) {
      case EncodingKind::rwse: encoding = rwse(art.graph, cfg.model.pe_dim); break;
      case EncodingKind::lappe: encoding = lap_pe(art.graph, cfg.model.pe_dim); break;
      case EncodingKind::none: fail(errc::invalid_config, "pe_dim > 0 needs encoding = rwse or lappe");
    }
  }
  return make_graph_context(art.adjacency, cycle, std::move(encoding));
}

// ---------------------------------------------------------------------------
// Optimizer.

/// Adam moments with decoupled weight decay: p <- p - lr * (wd * p + m_hat / (sqrt(v_hat) + eps)).
template <class T>
class AdamW {
 public:
  explicit AdamW(std::vector<ad::Tensor<T>> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  std::size_t steps() const noexcept { return t_; }

  /// Parameters without a gradient are treated as having a zero gradient.
  void step(double lr, double weight_decay) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      auto value = p.mutable_data();
      const auto grad = p.grad();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
        const double update = (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        const double decayed = static_cast<double>(value[i]) * weight_decay;
        value[i] = static_cast<T>(static_cast<double>(value[i]) - lr * (decayed + update));
      }
    }
  }

 private:
  std::vector<ad::Tensor<T>> params_;
  double beta1_, beta2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(std::span<ad::Tensor<T>> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& p : params)
      if (p.has_grad())
        for (auto& g : p.mutable_grad()) g *= s;
  }
  return norm;
}

/// lr after every milestone epoch <= `epoch` has applied its decay factor.
inline double scheduled_lr(const TrainConfig& c, std::size_t epoch) {
  double lr = c.learning_rate;
  for (auto m : c.lr_decay_milestones)
    if (epoch >= m) lr *= c.lr_decay_factor;
  return lr;
}

// ---------------------------------------------------------------------------
// Prediction and evaluation.

/// Raw-unit prediction for window i; recorded on the active tape, if any.
template <class T>
ad::Tensor<T> predict(const Cy2Mixer<T>& model, const WindowedDataset& ds, std::size_t i, const GraphContext& ctx,
                      std::mt19937_64* dropout_rng = nullptr) {
  const auto input = ds.input(i);
  std::vector<T> x(input.begin(), input.end());
  const auto out = model.forward(std::span<const T>(x), ds.tod(i), ds.dow(i), ctx, dropout_rng);
  const auto& norm = ds.normalization();
  const std::size_t d_o = model.config().d_o;
  std::vector<T> scale_by(d_o), shift_by(d_o);
  for (std::size_t c = 0; c < d_o; ++c) {
    scale_by[c] = static_cast<T>(norm.stddev[c]);
    shift_by[c] = static_cast<T>(norm.mean[c]);
  }
  return ad::channel_affine(out, std::move(scale_by), std::move(shift_by));
}

template <class T>
MetricsReport evaluate(const Cy2Mixer<T>& model, const WindowedDataset& ds, const GraphContext& ctx,
                       double mape_epsilon = 1.0) {
  if (!ds.empty() && (ds.nodes() != model.config().num_nodes || ds.input_length() != model.config().T ||
                      ds.horizon() != model.config().T_prime || ds.target_features() != model.config().d_o)) {
    fail(errc::shape_mismatch, "dataset windows do not match the model config");
  }
  ad::NoGradScope<T> no_grad;
  MetricsAccumulator acc(mape_epsilon);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto pred = predict(model, ds, i, ctx);
    const auto target = ds.target(i);
    acc.add(pred.data(), std::span<const double>(target));
  }
  return acc.report();
}

// ---------------------------------------------------------------------------
// Training loop.

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean batch loss in original units
  MetricsReport val;
  std::size_t steps = 0;    // cumulative optimizer steps
  bool improved = false;
};

template <class T>
struct TrainResult {
  Cy2Mixer<T> model;  // best-on-validation parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline void check_train_config(const TrainConfig& c) {
  if (c.batch_size == 0) fail(errc::invalid_config, "batch_size must be positive");
  if (c.max_epochs == 0) fail(errc::invalid_config, "max_epochs must be positive");
  if (!(c.learning_rate >= 0.0) || !(c.weight_decay >= 0.0)) fail(errc::invalid_config, "lr and wd must be >= 0");
  if (c.loss == LossKind::huber && !(c.huber_delta > 0.0)) fail(errc::invalid_config, "huber_delta must be > 0");
}

}  // namespace detail

/// Moment-based optimization with step decay and early stopping on
/// validation MAE (training loss when there is no validation split).
/// Serial and fully determined by the config seed.
template <class T>
TrainResult<T> train(const TrainConfig& config, const DatasetSplits& data, const GraphContext& ctx,
                     const EpochCallback& on_epoch = {}) {
  detail::check_train_config(config);
  const auto& train_ds = data.train;
  if (train_ds.empty()) fail(errc::split_too_small, "training split has no windows");
  const auto& mc = config.model;
  if (train_ds.nodes() != mc.num_nodes || train_ds.input_length() != mc.T || train_ds.horizon() != mc.T_prime ||
      train_ds.target_features() != mc.d_o || train_ds.features() != mc.C ||
      train_ds.steps_per_day() != mc.steps_per_day) {
    fail(errc::config_mismatch, "dataset windows do not match the model config");
  }

  Cy2Mixer<T> model(mc, detail::mix_seed(config.seed, 1));
  TrainResult<T> result{Cy2Mixer<T>(mc, detail::mix_seed(config.seed, 1)), {}, 0,
                        std::numeric_limits<double>::infinity(), 0};
  std::vector<ad::Tensor<T>> params;
  for (const auto& p : model.parameters()) params.push_back(p.second);
  AdamW<T> opt(params);
  std::mt19937_64 shuffle_rng(detail::mix_seed(config.seed, 2));
  std::mt19937_64 dropout_rng(detail::mix_seed(config.seed, 3));

  std::vector<std::size_t> order(train_ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  ad::Tape<T> tape;
  std::size_t since_best = 0;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    const double lr = scheduled_lr(config, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      tape.reset();
      ad::Tensor<T> loss;
      {
        ad::TapeScope<T> scope(tape);
        ad::Tensor<T> total;
        for (std::size_t b = start; b < end; ++b) {
          const auto pred = predict(model, train_ds, order[b], ctx, &dropout_rng);
          const auto target = train_ds.target(order[b]);
          std::vector<T> y(target.begin(), target.end());
          auto l = config.loss == LossKind::mae
                       ? ad::mae_loss(pred, std::span<const T>(y))
                       : ad::huber_loss(pred, std::span<const T>(y), static_cast<T>(config.huber_delta));
          total = total.defined() ? ad::add(total, l) : l;
        }
        loss = ad::scale(total, T(1) / static_cast<T>(end - start));
        if (!std::isfinite(static_cast<double>(loss.item()))) {
          fail(errc::non_finite_loss, "loss is " + std::to_string(static_cast<double>(loss.item())) + " at epoch " +
                                          std::to_string(epoch) + ", step " + std::to_string(opt.steps() + 1));
        }
        model.zero_grad();
        ad::backward(loss);
      }
      clip_grad_norm(std::span<ad::Tensor<T>>(params), config.grad_clip);
      opt.step(lr, config.weight_decay);
      tape.reset();
      loss_sum += static_cast<double>(loss.item());
      ++batches;
      if (config.max_steps != 0 && opt.steps() >= config.max_steps) {
        stop = true;
        break;
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1));
    entry.steps = opt.steps();
    double score = entry.train_loss;
    if (!data.val.empty()) {
      entry.val = evaluate(model, data.val, ctx, config.mape_epsilon);
      score = entry.val.mae;
    } else {
      entry.val.mae = entry.val.rmse = entry.val.mape = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(score)) fail(errc::non_finite_loss, "validation score is not finite at epoch " + std::to_string(epoch));
    if (score < result.best_val_mae) {
      result.best_val_mae = score;
      result.best_epoch = epoch;
      result.model.copy_values_from(model);
      entry.improved = true;
      since_best = 0;
    } else if (config.early_stop_patience != 0 && ++since_best >= config.early_stop_patience) {
      stop = true;
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.steps = opt.steps();
  return result;
}

// ---------------------------------------------------------------------------
// Ablation.

enum class Variant { full, no_cycle, cycle_with_adjacency, cycle_with_dtw, rwse, lappe };

inline constexpr std::array<Variant, 6> all_variants{Variant::full,           Variant::no_cycle,
                                                     Variant::cycle_with_adjacency, Variant::cycle_with_dtw,
                                                     Variant::rwse,           Variant::lappe};

constexpr const char* to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_cycle: return "no_cycle_block";
    case Variant::cycle_with_adjacency: return "cycle_block_with_A";
    case Variant::cycle_with_dtw: return "cycle_block_with_dtw";
    case Variant::rwse: return "rwse_instead_of_cycle";
    case Variant::lappe: return "lappe_instead_of_cycle";
  }
  return "?";
}

inline constexpr std::size_t default_encoding_dim = 8;

/// The base config rewired for one variant; only the cycle path changes.
inline TrainConfig variant_config(const TrainConfig& base, Variant v) {
  TrainConfig c = base;
  c.model.cycle_block = true;
  c.model.cycle_source = AdjacencyKind::clique;
  c.model.pe_dim = 0;
  c.encoding = EncodingKind::none;
  const std::size_t pe = base.model.pe_dim ? base.model.pe_dim : default_encoding_dim;
  switch (v) {
    case Variant::full: break;
    case Variant::no_cycle: c.model.cycle_block = false; break;
    case Variant::cycle_with_adjacency: c.model.cycle_source = AdjacencyKind::standard; break;
    case Variant::cycle_with_dtw: c.model.cycle_source = AdjacencyKind::dtw; break;
    case Variant::rwse:
      c.model.cycle_block = false;
      c.encoding = EncodingKind::rwse;
      c.model.pe_dim = pe;
      break;
    case Variant::lappe:
      c.model.cycle_block = false;
      c.encoding = EncodingKind::lappe;
      c.model.pe_dim = pe;
      break;
  }
  return c;
}

struct AblationRow {
  Variant variant = Variant::full;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> test;  // one per seed
  MetricsReport mean;
};

struct AblationOptions {
  std::vector<Variant> variants{all_variants.begin(), all_variants.end()};
  std::vector<std::uint64_t> seeds{0};
  unsigned threads = 1;  // independent (variant, seed) jobs run concurrently
};

/// Trains every variant on every seed over the same splits and reports mean test metrics.
template <class T = double>
std::vector<AblationRow> ablate(const TrainConfig& base, const GraphArtifacts& art, const SignalTensor& signals,
                                const AblationOptions& options = {}) {
  TrainConfig resolved = base;
  resolved.model = resolve_model_config(base.model, signals);
  const auto splits = make_windows(signals, resolved.model.T, resolved.model.T_prime, resolved.split, resolved.model.d_o);
  if (splits.test.empty()) fail(errc::split_too_small, "ablation needs a non-empty test split");

  std::vector<TrainConfig> configs;
  std::vector<GraphContext> contexts;
  for (auto v : options.variants) {
    configs.push_back(variant_config(resolved, v));
    contexts.push_back(build_context(configs.back(), art, signals, splits.train));
  }
  const std::size_t n_seeds = options.seeds.size();
  std::vector<MetricsReport> reports(configs.size() * n_seeds);
  auto job = [&](std::size_t j) {
    TrainConfig c = configs[j / n_seeds];
    c.seed = options.seeds[j % n_seeds];
    const auto result = train<T>(c, splits, contexts[j / n_seeds]);
    reports[j] = evaluate(result.model, splits.test, contexts[j / n_seeds], c.mape_epsilon);
  };
  const unsigned workers = std::max(1U, std::min<unsigned>(options.threads, static_cast<unsigned>(reports.size())));
  if (workers == 1) {
    for (std::size_t j = 0; j < reports.size(); ++j) job(j);
  } else {
    // Each worker keeps its first failure; the lowest-index one is rethrown.
    std::vector<std::exception_ptr> failures(workers);
    {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          try {
            for (std::size_t j = w; j < reports.size(); j += workers) job(j);
          } catch (...) {
            failures[w] = std::current_exception();
          }
        });
    }
    for (const auto& f : failures)
      if (f) std::rethrow_exception(f);
  }

  std::vector<AblationRow> rows;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    AblationRow row;
    row.variant = options.variants[k];
    row.seeds = options.seeds;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const auto& r = reports[k * n_seeds + s];
      row.test.push_back(r);
      row.mean.mae += r.mae / static_cast<double>(n_seeds);
      row.mean.rmse += r.rmse / static_cast<double>(n_seeds);
      row.mean.mape += r.mape / static_cast<double>(n_seeds);
      row.mean.count += r.count;
      row.mean.mape_count += r.mape_count;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace cy2mixer
