#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "cy2mixer/train.hpp"
#include "support.hpp"

using namespace cy2mixer;

namespace {

errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return errc::io_error;
}

// Independent two-pass reference for the three metrics.
struct Reference {
  double mae, rmse, mape;
};

Reference reference_metrics(const std::vector<double>& p, const std::vector<double>& y, double eps) {
  std::vector<double> abs_err(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) abs_err[i] = std::fabs(y[i] - p[i]);
  long double mae = 0, mse = 0, ape = 0;
  std::size_t kept = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    mae += abs_err[i];
    mse += static_cast<long double>(abs_err[i]) * abs_err[i];
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(std::fabs(y[i]) > eps)) continue;
    ape += abs_err[i] / std::fabs(y[i]);
    ++kept;
  }
  const auto n = static_cast<long double>(p.size());
  return {static_cast<double>(mae / n), static_cast<double>(std::sqrt(mse / n)),
          kept ? static_cast<double>(100 * ape / kept) : std::nan("")};
}

struct ToySetup {
  TrainConfig cfg;
  SignalTensor signals;
  GraphArtifacts art;
  DatasetSplits splits;
  GraphContext ctx;
};

ToySetup toy_setup(std::size_t steps = 300, std::uint64_t data_seed = 0, int ring = 6) {
  ToySetup s;
  SynthSpec spec;
  spec.ring_size = ring;
  spec.steps = steps;
  spec.noise = 0.3;
  spec.seed = data_seed;
  auto ds = synthesize_dataset(spec);
  s.signals = ds.signals;
  s.art = prepare_artifacts(ds.graph);
  s.cfg.model = cy2test::toy_model_config(static_cast<std::size_t>(ring));
  s.cfg.model.tiny_attention = false;
  s.cfg.model = resolve_model_config(s.cfg.model, s.signals);
  s.cfg.learning_rate = 3e-3;
  s.cfg.weight_decay = 0;
  s.cfg.batch_size = 8;
  s.cfg.max_epochs = 3;
  s.cfg.early_stop_patience = 0;
  s.splits = make_windows(s.signals, 4, 4, s.cfg.split, 1);
  s.ctx = build_context(s.cfg, s.art, s.signals, s.splits.train);
  return s;
}

std::vector<std::vector<double>> snapshot(const Cy2Mixer<double>& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.second.data().begin(), p.second.data().end());
  return out;
}

TEST(Metrics, TrivialCases) {
  const std::vector<double> y{10, -20, 30, 0.5};
  const auto exact = compute_metrics(std::span<const double>(y), std::span<const double>(y));
  EXPECT_EQ(exact.mae, 0.0);
  EXPECT_EQ(exact.rmse, 0.0);
  EXPECT_EQ(exact.mape, 0.0);
  EXPECT_EQ(exact.count, 4u);
  EXPECT_EQ(exact.mape_count, 3u);  // |0.5| <= epsilon 1 is excluded
  std::vector<double> p = y;
  for (auto& v : p) v += 1;
  const auto off = compute_metrics(std::span<const double>(p), std::span<const double>(y));
  EXPECT_DOUBLE_EQ(off.mae, 1.0);
  EXPECT_DOUBLE_EQ(off.rmse, 1.0);
  EXPECT_NEAR(off.mape, 100.0 * (0.1 + 0.05 + 1.0 / 30) / 3, 1e-12);
  const std::vector<double> small{0.1, -0.2};
  EXPECT_TRUE(std::isnan(compute_metrics(std::span<const double>(small), std::span<const double>(small)).mape));
  EXPECT_EQ(code_of([&] { compute_metrics(std::span<const double>(y), std::span<const double>(small)); }),
            errc::shape_mismatch);
}

TEST(Metrics, MatchIndependentReferenceOnRandomPairs) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<std::size_t> len(1, 500);
  std::normal_distribution<double> g(0, 50);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> p(len(rng)), y(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
      y[i] = g(rng);
      p[i] = y[i] + g(rng) * 0.2;
    }
    const auto r = compute_metrics(std::span<const double>(p), std::span<const double>(y), 1.0);
    const auto ref = reference_metrics(p, y, 1.0);
    EXPECT_NEAR(r.mae, ref.mae, 1e-8);
    EXPECT_NEAR(r.rmse, ref.rmse, 1e-8);
    if (std::isnan(ref.mape)) {
      EXPECT_TRUE(std::isnan(r.mape));
    } else {
      EXPECT_NEAR(r.mape, ref.mape, 1e-8);
    }
    EXPECT_LE(r.mae, r.rmse);
  }
}

TEST(Metrics, AccumulatorMatchesOneShot) {
  std::mt19937_64 rng(11);
  const auto p = cy2test::random_values(100, rng, -5, 5), y = cy2test::random_values(100, rng, -5, 5);
  MetricsAccumulator acc(1.0);
  for (std::size_t i = 0; i < 100; i += 10)
    acc.add(std::span<const double>(p).subspan(i, 10), std::span<const double>(y).subspan(i, 10));
  const auto a = acc.report();
  const auto b = compute_metrics(std::span<const double>(p), std::span<const double>(y));
  EXPECT_NEAR(a.mae, b.mae, 1e-14);
  EXPECT_NEAR(a.rmse, b.rmse, 1e-14);
  EXPECT_NEAR(a.mape, b.mape, 1e-12);
}

TEST(Optimizer, ZeroGradientAndZeroDecayLeaveParametersUnchanged) {
  std::mt19937_64 rng(1);
  std::vector<ad::Tensor<double>> params{cy2test::random_tensor({3, 4}, rng), cy2test::random_tensor({5}, rng)};
  params[1].mutable_grad();  // explicit zero gradient
  const auto before0 = std::vector<double>(params[0].data().begin(), params[0].data().end());
  const auto before1 = std::vector<double>(params[1].data().begin(), params[1].data().end());
  AdamW<double> opt(params);
  for (int i = 0; i < 5; ++i) opt.step(1e-2, 0.0);
  EXPECT_EQ(std::vector<double>(params[0].data().begin(), params[0].data().end()), before0);
  EXPECT_EQ(std::vector<double>(params[1].data().begin(), params[1].data().end()), before1);
  EXPECT_EQ(opt.steps(), 5u);
}

TEST(Optimizer, FirstStepMovesByLearningRateAndDecayIsDecoupled) {
  auto p = ad::Tensor<double>::from({3}, {1.0, -2.0, 0.5}, true);
  auto g = p.mutable_grad();
  g[0] = 4.0;
  g[1] = -0.01;
  g[2] = 0.0;
  AdamW<double> opt({p});
  opt.step(0.1, 0.5);
  // Bias-corrected first step is sign(g) (up to eps); decay adds lr * wd * p.
  EXPECT_NEAR(p[0], 1.0 - 0.1 * (0.5 * 1.0 + 1.0), 1e-6);
  EXPECT_NEAR(p[1], -2.0 - 0.1 * (0.5 * -2.0 - 1.0), 1e-5);
  EXPECT_NEAR(p[2], 0.5 - 0.1 * 0.5 * 0.5, 1e-12);
}

TEST(Optimizer, GlobalNormClipping) {
  auto a = ad::Tensor<double>::zeros({2}, true), b = ad::Tensor<double>::zeros({1}, true);
  a.mutable_grad()[0] = 6;
  a.mutable_grad()[1] = 0;
  b.mutable_grad()[0] = 8;
  std::vector<ad::Tensor<double>> ps{a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(std::span<ad::Tensor<double>>(ps), 5.0), 10.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(b.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(std::span<ad::Tensor<double>>(ps), 0.0), 5.0);  // disabled
  EXPECT_DOUBLE_EQ(b.grad()[0], 4.0);
}

TEST(Schedule, StepDecayAtMilestones) {
  TrainConfig c;
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 0), 1e-3);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 24), 1e-3);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 25), 1e-4);
  EXPECT_DOUBLE_EQ(scheduled_lr(c, 44), 1e-4);
  EXPECT_NEAR(scheduled_lr(c, 45), 1e-5, 1e-20);
  EXPECT_EQ(c.batch_size, 16u);
  EXPECT_EQ(c.lr_decay_factor, 0.1);
  EXPECT_EQ(c.grad_clip, 5.0);
}

TEST(Seeds, StreamsAreDistinct) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (std::uint64_t stream = 1; stream <= 3; ++stream) seen.insert(detail::mix_seed(seed, stream));
  EXPECT_EQ(seen.size(), 60u);
  EXPECT_EQ(detail::mix_seed(7, 2), detail::mix_seed(7, 2));
}

TEST(Train, ZeroLearningRateKeepsParametersBitIdentical) {
  auto s = toy_setup();
  s.cfg.learning_rate = 0;
  s.cfg.weight_decay = 1e-2;
  s.cfg.max_epochs = 1;
  const auto result = train<double>(s.cfg, s.splits, s.ctx);
  const Cy2Mixer<double> fresh(s.cfg.model, detail::mix_seed(s.cfg.seed, 1));
  EXPECT_EQ(snapshot(result.model), snapshot(fresh));
  EXPECT_GT(result.steps, 0u);
}

TEST(Train, SameSeedGivesIdenticalLogs) {
  auto s = toy_setup();
  s.cfg.model.dropout = 0.2;
  s.cfg.seed = 5;
  const auto a = train<double>(s.cfg, s.splits, s.ctx);
  const auto b = train<double>(s.cfg, s.splits, s.ctx);
  ASSERT_EQ(a.log.size(), b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    EXPECT_EQ(a.log[i].train_loss, b.log[i].train_loss);
    EXPECT_EQ(a.log[i].val.mae, b.log[i].val.mae);
    EXPECT_EQ(a.log[i].steps, b.log[i].steps);
  }
  EXPECT_EQ(snapshot(a.model), snapshot(b.model));
  s.cfg.seed = 6;
  const auto c = train<double>(s.cfg, s.splits, s.ctx);
  EXPECT_NE(a.log[0].train_loss, c.log[0].train_loss);
}

TEST(Train, ReturnedCheckpointIsTheBestValidationEpoch) {
  auto s = toy_setup(400);
  s.cfg.max_epochs = 6;
  s.cfg.learning_rate = 2e-2;  // large enough that validation MAE moves around
  s.cfg.early_stop_patience = 2;
  const auto r = train<double>(s.cfg, s.splits, s.ctx);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : r.log) best = std::min(best, e.val.mae);
  EXPECT_EQ(r.best_val_mae, best);
  EXPECT_TRUE(r.log[r.best_epoch].improved);
  const auto again = evaluate(r.model, s.splits.val, s.ctx, s.cfg.mape_epsilon);
  EXPECT_NEAR(again.mae, r.best_val_mae, 1e-12);
  // Patience: training stops within `patience` epochs of the last improvement.
  EXPECT_LE(r.log.size(), r.best_epoch + 1 + s.cfg.early_stop_patience);
}

TEST(Train, StepCapAndDecreasingLoss) {
  auto s = toy_setup(400);
  s.cfg.max_epochs = 50;
  s.cfg.max_steps = 60;
  const auto r = train<double>(s.cfg, s.splits, s.ctx);
  EXPECT_EQ(r.steps, 60u);
  EXPECT_LT(r.log.back().train_loss, r.log.front().train_loss);
}

TEST(Evaluate, DenormalizationMatchesManualComputation) {
  auto s = toy_setup();
  const Cy2Mixer<double> model(s.cfg.model, 9);
  const auto report = evaluate(model, s.splits.test, s.ctx, 1.0);
  std::vector<double> preds, targets;
  const auto& norm = s.splits.test.normalization();
  for (std::size_t i = 0; i < s.splits.test.size(); ++i) {
    const auto x = s.splits.test.input(i);
    const auto out = model.forward(std::span<const double>(x), s.splits.test.tod(i), s.splits.test.dow(i), s.ctx);
    for (double v : out.data()) preds.push_back(norm.denormalize(v, 0));
    const auto y = s.splits.test.target(i);
    targets.insert(targets.end(), y.begin(), y.end());
  }
  const auto ref = reference_metrics(preds, targets, 1.0);
  EXPECT_NEAR(report.mae, ref.mae, 1e-8);
  EXPECT_NEAR(report.rmse, ref.rmse, 1e-8);
  EXPECT_NEAR(report.mape, ref.mape, 1e-8);
  EXPECT_LE(report.mae, report.rmse);
}

TEST(Evaluate, ShapeMismatch) {
  auto s = toy_setup();
  auto mc = s.cfg.model;
  mc.T = 3;
  const Cy2Mixer<double> model(mc, 0);
  EXPECT_EQ(code_of([&] { evaluate(model, s.splits.test, s.ctx); }), errc::shape_mismatch);
}

TEST(Train, ConfigMismatch) {
  auto s = toy_setup();
  auto mc = s.cfg.model;
  mc.num_nodes = 7;
  EXPECT_EQ(code_of([&] { resolve_model_config(mc, s.signals); }), errc::config_mismatch);
  mc = s.cfg.model;
  mc.steps_per_day = 24;
  EXPECT_EQ(code_of([&] { resolve_model_config(mc, s.signals); }), errc::config_mismatch);
  mc = s.cfg.model;
  mc.C = 2;
  mc.d_o = 1;
  EXPECT_EQ(code_of([&] { resolve_model_config(mc, s.signals); }), errc::config_mismatch);
  auto cfg = s.cfg;
  cfg.model.T_prime = 3;
  EXPECT_EQ(code_of([&] { train<double>(cfg, s.splits, s.ctx); }), errc::config_mismatch);
}

TEST(Train, NonFiniteLossAborts) {
  auto s = toy_setup();
  for (std::size_t i = 0; i < s.signals.data.size(); ++i) s.signals.data[i] = (i % 2 ? 1e300 : -1e300);
  s.splits = make_windows(s.signals, 4, 4, s.cfg.split, 1);
  EXPECT_EQ(code_of([&] { train<double>(s.cfg, s.splits, s.ctx); }), errc::non_finite_loss);
}

TEST(Train, InvalidTrainingConfig) {
  auto s = toy_setup();
  s.cfg.batch_size = 0;
  EXPECT_EQ(code_of([&] { train<double>(s.cfg, s.splits, s.ctx); }), errc::invalid_config);
}

TEST(Ablation, SixNamedVariants) {
  ASSERT_EQ(all_variants.size(), 6u);
  const std::vector<std::string> names{"full",
                                       "no_cycle_block",
                                       "cycle_block_with_A",
                                       "cycle_block_with_dtw",
                                       "rwse_instead_of_cycle",
                                       "lappe_instead_of_cycle"};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(to_string(all_variants[i]), names[i]);
}

TEST(Ablation, AdjacencyVariantOnlyRewiresTheCycleBlock) {
  TrainConfig base;
  base.model = cy2test::toy_model_config();
  const auto full = variant_config(base, Variant::full);
  auto with_a = variant_config(base, Variant::cycle_with_adjacency);
  EXPECT_EQ(with_a.model.cycle_source, AdjacencyKind::standard);
  with_a.model.cycle_source = AdjacencyKind::clique;
  EXPECT_EQ(with_a, full);

  const auto none = variant_config(base, Variant::no_cycle);
  EXPECT_FALSE(none.model.cycle_block);
  const auto dtw = variant_config(base, Variant::cycle_with_dtw);
  EXPECT_EQ(dtw.model.cycle_source, AdjacencyKind::dtw);
  const auto rw = variant_config(base, Variant::rwse);
  EXPECT_FALSE(rw.model.cycle_block);
  EXPECT_EQ(rw.encoding, EncodingKind::rwse);
  EXPECT_EQ(rw.model.pe_dim, default_encoding_dim);
  EXPECT_EQ(variant_config(base, Variant::lappe).encoding, EncodingKind::lappe);
}

TEST(Ablation, VariantsRunAndThreadingIsDeterministic) {
  auto s = toy_setup(300, 0, 12);  // LapPE needs more nodes than the encoding dim
  s.cfg.max_epochs = 1;
  s.cfg.max_steps = 5;
  AblationOptions opt;
  opt.seeds = {0, 1};
  opt.threads = 1;
  const auto serial = ablate(s.cfg, s.art, s.signals, opt);
  opt.threads = 3;
  const auto parallel = ablate(s.cfg, s.art, s.signals, opt);
  ASSERT_EQ(serial.size(), 6u);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    EXPECT_EQ(serial[i].variant, all_variants[i]);
    ASSERT_EQ(serial[i].test.size(), 2u);
    EXPECT_EQ(serial[i].mean.mae, parallel[i].mean.mae);
    EXPECT_NEAR(serial[i].mean.mae, (serial[i].test[0].mae + serial[i].test[1].mae) / 2, 1e-12);
    EXPECT_TRUE(std::isfinite(serial[i].mean.mae));
  }
}

TEST(Ablation, WorkerFailuresPropagate) {
  auto s = toy_setup(300);
  s.cfg.batch_size = 0;
  AblationOptions opt;
  opt.variants = {Variant::full, Variant::no_cycle};
  opt.threads = 2;
  EXPECT_EQ(code_of([&] { ablate(s.cfg, s.art, s.signals, opt); }), errc::invalid_config);
}

}  // namespace
