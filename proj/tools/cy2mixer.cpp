// Command-line front end: preprocessing, inspection, benchmarks, training,
// evaluation, ablation and synthetic data generation.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "cy2mixer/cy2mixer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cy2mixer;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_data = 2;
constexpr int exit_numeric = 3;
constexpr int exit_property = 4;

int exit_code(errc e) {
  switch (e) {
    case errc::invalid_config: return exit_usage;
    case errc::non_finite_loss: return exit_numeric;
    default: return exit_data;
  }
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path.string());
  out << text;
}

json to_json(const MetricsReport& m) {
  return {{"mae", m.mae}, {"rmse", m.rmse}, {"mape", m.mape}, {"count", m.count}, {"mape_count", m.mape_count}};
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"lr", e.lr},           {"train_loss", e.train_loss},
          {"val", to_json(e.val)}, {"steps", e.steps}, {"improved", e.improved}};
}

json to_json(const CycleBasis& b) {
  json cycles = json::array();
  for (const auto& c : b.cycles) cycles.push_back(c);
  return cycles;
}

struct DataDir {
  Graph graph;
  SignalTensor signals;
};

/// A data directory holds edges.csv and signals.cy2s (or signals.csv).
DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  if (fs::exists(dir / "signals.cy2s")) {
    d.signals = read_cy2s((dir / "signals.cy2s").string());
  } else if (fs::exists(dir / "signals.csv")) {
    d.signals = read_signals_csv((dir / "signals.csv").string());
  } else {
    fail(errc::io_error, "no signals.cy2s or signals.csv in " + dir.string());
  }
  d.graph = read_edge_csv((dir / "edges.csv").string(), static_cast<int>(d.signals.nodes));
  return d;
}

void print_metrics_table(const std::vector<AblationRow>& rows) {
  std::printf("%-26s %10s %10s %10s\n", "variant", "MAE", "RMSE", "MAPE(%)");
  for (const auto& r : rows)
    std::printf("%-26s %10.4f %10.4f %10.4f\n", to_string(r.variant), r.mean.mae, r.mean.rmse, r.mean.mape);
}

// ---------------------------------------------------------------------------

int run_preprocess(const std::string& edges, const std::string& out_dir, const std::vector<double>& gaussian,
                   int nodes, bool as_json) {
  const auto g = read_edge_csv(edges, nodes);
  const auto mode = gaussian.empty() ? AdjacencyMode::binary() : AdjacencyMode::gaussian(gaussian[0], gaussian[1]);
  const auto art = prepare_artifacts(g, mode);
  fs::create_directories(out_dir);
  io::write_cy2m((fs::path(out_dir) / "A.cy2m").string(), art.adjacency.data);
  io::write_cy2m((fs::path(out_dir) / "A_C.cy2m").string(), art.clique.data);
  const auto stats = cycle_stats(art.basis);
  json basis = {{"num_nodes", g.num_nodes()}, {"cycles", to_json(art.basis)}};
  write_text(fs::path(out_dir) / "cycles.json", basis.dump(2) + "\n");
  if (as_json) {
    std::cout << json{{"nodes", g.num_nodes()},
                      {"edges", g.num_edges()},
                      {"cycles", stats.count},
                      {"average_magnitude", stats.avg_magnitude},
                      {"out_dir", out_dir}}
                     .dump(2)
              << "\n";
  } else {
    std::printf("nodes %d, edges %zu, cycles %zu, average magnitude %.4f\nwrote A.cy2m, A_C.cy2m, cycles.json to %s\n",
                g.num_nodes(), g.num_edges(), stats.count, stats.avg_magnitude, out_dir.c_str());
  }
  return exit_ok;
}

int run_inspect(const std::string& edges, int nodes, bool as_json) {
  const auto g = read_edge_csv(edges, nodes);
  const auto basis = cycle_basis_paton(g);
  const auto stats = cycle_stats(basis);
  const auto comps = connected_components(g).count;
  if (as_json) {
    std::cout << json{{"nodes", g.num_nodes()},
                      {"edges", g.num_edges()},
                      {"components", comps},
                      {"cycle_space_dimension", cycle_space_dimension(g)},
                      {"cycles", stats.count},
                      {"average_magnitude", stats.avg_magnitude},
                      {"basis", to_json(basis)}}
                     .dump(2)
              << "\n";
  } else {
    std::printf("nodes %d\nedges %zu\ncomponents %d\ncycle space dimension %zu\ncycles %zu\naverage magnitude %.4f\n",
                g.num_nodes(), g.num_edges(), comps, cycle_space_dimension(g), stats.count, stats.avg_magnitude);
  }
  return exit_ok;
}

int run_bench(const std::string& edges, const std::string& signals_path, std::size_t stride, std::size_t rows,
              std::size_t top_k, unsigned threads, bool skip_dtw, bool as_json) {
  const auto signals = load_signals(signals_path);
  const auto g = read_edge_csv(edges, static_cast<int>(signals.nodes));
  BenchmarkConfig cfg;
  cfg.run_dtw = !skip_dtw;
  cfg.dtw.stride = stride;
  cfg.dtw.row_end = rows;
  cfg.dtw.top_k = top_k;
  cfg.dtw.threads = threads;
  const auto results = benchmark_preprocessing(g, signals, cfg);
  if (as_json) {
    json out = json::array();
    for (const auto& r : results) out.push_back({{"method", to_string(r.method)}, {"seconds", r.elapsed}});
    std::cout << out.dump(2) << "\n";
  } else {
    std::printf("%-8s %14s\n", "method", "seconds");
    for (const auto& r : results) std::printf("%-8s %14.6f\n", to_string(r.method), r.elapsed);
  }
  return exit_ok;
}

int run_theorem1(int nodes, int trials, std::vector<int> steps, std::uint64_t seed, bool as_json) {
  json out = json::array();
  bool ok = true;
  for (int k : steps) {
    const auto report = verify_theorem1(nodes, trials, k, seed);
    ok = ok && report.all_passed();
    if (as_json) {
      out.push_back({{"steps", k}, {"trials", report.trials.size()}, {"passed", report.passed()}});
    } else {
      std::printf("k=%d: %zu/%zu trials passed\n", k, report.passed(), report.trials.size());
    }
  }
  if (as_json) std::cout << json{{"all_passed", ok}, {"results", out}}.dump(2) << "\n";
  else std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? exit_ok : exit_property;
}

int run_train(const std::string& config_path, const std::string& data_dir, const std::string& out_dir, bool quiet) {
  auto cfg = load_config(config_path);
  const auto data = load_data_dir(data_dir);
  cfg.model = resolve_model_config(cfg.model, data.signals);
  const auto art = prepare_artifacts(data.graph, adjacency_mode(cfg));
  const auto splits = make_windows(data.signals, cfg.model.T, cfg.model.T_prime, cfg.split, cfg.model.d_o);
  for (const auto& w : splits.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto ctx = build_context(cfg, art, data.signals, splits.train);

  const fs::path out(out_dir);
  fs::create_directories(out);
  std::ofstream log(out / "log.jsonl");
  if (!log) fail(errc::io_error, "cannot write " + (out / "log.jsonl").string());
  const auto result = train<double>(cfg, splits, ctx, [&](const EpochLog& e) {
    log << to_json(e).dump() << "\n";
    log.flush();
    if (!quiet) {
      std::printf("epoch %3zu  lr %.2e  train %.4f  val MAE %.4f%s\n", e.epoch, e.lr, e.train_loss, e.val.mae,
                  e.improved ? "  *" : "");
      std::fflush(stdout);
    }
  });

  result.model.save(out / "params");
  write_text(out / "config.txt", format_config(cfg));
  write_text(out / "data_dir.txt", fs::absolute(data_dir).string() + "\n");
  json summary = {{"best_epoch", result.best_epoch}, {"steps", result.steps}, {"parameters", result.model.parameter_count()}};
  if (!splits.val.empty()) summary["val"] = to_json(evaluate(result.model, splits.val, ctx, cfg.mape_epsilon));
  if (!splits.test.empty()) summary["test"] = to_json(evaluate(result.model, splits.test, ctx, cfg.mape_epsilon));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  if (!quiet) std::cout << summary.dump(2) << "\n";
  return exit_ok;
}

int run_eval(const std::string& checkpoint, const std::string& split, std::string data_dir, bool as_json) {
  const fs::path run(checkpoint);
  const auto cfg = parse_config(read_text((run / "config.txt").string()));
  if (data_dir.empty()) data_dir = std::string(detail::trim(read_text((run / "data_dir.txt").string())));
  const auto data = load_data_dir(data_dir);
  const auto model_cfg = resolve_model_config(cfg.model, data.signals);
  if (!(model_cfg == cfg.model)) fail(errc::config_mismatch, "checkpoint config does not match the data");
  const auto art = prepare_artifacts(data.graph, adjacency_mode(cfg));
  const auto splits = make_windows(data.signals, cfg.model.T, cfg.model.T_prime, cfg.split, cfg.model.d_o);
  const auto ctx = build_context(cfg, art, data.signals, splits.train);
  Cy2Mixer<double> model(cfg.model, 0);
  model.load(run / "params");
  const WindowedDataset* ds = split == "train" ? &splits.train : split == "val" ? &splits.val : &splits.test;
  if (ds->empty()) fail(errc::split_too_small, split + " split has no windows");
  const auto m = evaluate(model, *ds, ctx, cfg.mape_epsilon);
  if (as_json) {
    auto j = to_json(m);
    j["split"] = split;
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%s: MAE %.4f  RMSE %.4f  MAPE %.4f%%  (%zu values)\n", split.c_str(), m.mae, m.rmse, m.mape, m.count);
  }
  return exit_ok;
}

int run_ablate(const std::string& config_path, const std::string& data_dir, std::vector<std::uint64_t> seeds,
               unsigned threads, bool as_json) {
  const auto cfg = load_config(config_path);
  const auto data = load_data_dir(data_dir);
  const auto art = prepare_artifacts(data.graph, adjacency_mode(cfg));
  AblationOptions opt;
  if (!seeds.empty()) opt.seeds = std::move(seeds);
  else opt.seeds = {cfg.seed};
  opt.threads = threads;
  const auto rows = ablate<double>(cfg, art, data.signals, opt);
  if (as_json) {
    json out = json::array();
    for (const auto& r : rows) {
      json per_seed = json::array();
      for (const auto& m : r.test) per_seed.push_back(to_json(m));
      out.push_back({{"variant", to_string(r.variant)}, {"seeds", r.seeds}, {"mean", to_json(r.mean)}, {"per_seed", per_seed}});
    }
    std::cout << out.dump(2) << "\n";
  } else {
    print_metrics_table(rows);
  }
  return exit_ok;
}

int run_synth(const std::string& spec_path, const std::string& out_dir, bool csv) {
  const auto spec = parse_synth_spec(read_text(spec_path));
  const auto ds = synthesize_dataset(spec);
  fs::create_directories(out_dir);
  write_edge_csv((fs::path(out_dir) / "edges.csv").string(), ds.graph);
  if (csv) write_signals_csv((fs::path(out_dir) / "signals.csv").string(), ds.signals);
  else write_cy2s((fs::path(out_dir) / "signals.cy2s").string(), ds.signals);
  std::printf("wrote %d nodes, %zu edges, %zu steps to %s\n", ds.graph.num_nodes(), ds.graph.num_edges(),
              ds.signals.steps, out_dir.c_str());
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cy2Mixer: cycle-aware spatio-temporal forecasting"};
  app.require_subcommand(1);
  bool as_json = false;

  std::string edges, out_dir, signals_path, config_path, data_dir, checkpoint, spec_path, split = "test";
  std::vector<double> gaussian;
  int nodes = 0;

  auto* pre = app.add_subcommand("preprocess", "Build A, the cycle basis and A_C from an edge list");
  pre->add_option("--edges", edges, "Edge CSV (from,to,cost)")->required();
  pre->add_option("--out-dir", out_dir, "Output directory")->required();
  pre->add_option("--gaussian", gaussian, "Gaussian kernel sigma and threshold")->expected(2);
  pre->add_option("--nodes", nodes, "Node count (default: max id + 1)");
  pre->add_flag("--json", as_json, "Print a JSON summary");

  auto* insp = app.add_subcommand("inspect-cycles", "Report the fundamental cycle basis of a graph");
  insp->add_option("--edges", edges, "Edge CSV")->required();
  insp->add_option("--nodes", nodes, "Node count (default: max id + 1)");
  insp->add_flag("--json", as_json, "JSON output including the basis");

  std::size_t stride = 1, rows = 0, top_k = 0;
  unsigned threads = 0;
  bool skip_dtw = false;
  auto* bench = app.add_subcommand("bench-preproc", "Time clique adjacency, DTW, RWSE and LapPE");
  bench->add_option("--edges", edges, "Edge CSV")->required();
  bench->add_option("--signals", signals_path, "Signals (.cy2s or .csv)")->required();
  bench->add_option("--dtw-stride", stride, "Subsample stride for DTW series");
  bench->add_option("--dtw-rows", rows, "Use only the first rows for DTW (0 = all)");
  bench->add_option("--top-k", top_k, "DTW neighbours per node (0 = ceil of average degree)");
  bench->add_option("--threads", threads, "DTW worker threads (0 = hardware)");
  bench->add_flag("--skip-dtw", skip_dtw, "Do not run DTW");
  bench->add_flag("--json", as_json, "JSON output");

  int t1_nodes = 20, t1_trials = 50;
  std::vector<int> t1_steps{2, 3, 5};
  std::uint64_t seed = 0;
  auto* thm = app.add_subcommand("verify-theorem1", "Check projected product-graph bases on random graphs");
  thm->add_option("--nodes", t1_nodes, "Maximum node count")->check(CLI::Range(2, 10000));
  thm->add_option("--trials", t1_trials, "Random graphs per step count")->check(CLI::PositiveNumber);
  thm->add_option("--steps", t1_steps, "Time steps k (one or more, each >= 2)");
  thm->add_option("--seed", seed, "RNG seed");
  thm->add_flag("--json", as_json, "JSON output");

  bool quiet = false;
  auto* tr = app.add_subcommand("train", "Train a model and write a run directory");
  tr->add_option("--config", config_path, "Config file (key = value)")->required();
  tr->add_option("--data-dir", data_dir, "Directory with edges.csv and signals.cy2s")->required();
  tr->add_option("--out", out_dir, "Run directory")->required();
  tr->add_flag("--quiet", quiet, "Only write files");

  auto* ev = app.add_subcommand("eval", "Evaluate a run directory on one split");
  ev->add_option("--checkpoint", checkpoint, "Run directory written by train")->required();
  ev->add_option("--split", split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--data-dir", data_dir, "Override the recorded data directory");
  ev->add_flag("--json", as_json, "JSON output");

  std::vector<std::uint64_t> seeds;
  unsigned ablate_threads = 1;
  auto* ab = app.add_subcommand("ablate", "Train and compare the six structural variants");
  ab->add_option("--config", config_path, "Config file")->required();
  ab->add_option("--data-dir", data_dir, "Data directory")->required();
  ab->add_option("--seeds", seeds, "Seeds (default: the config seed)")->delimiter(',');
  ab->add_option("--threads", ablate_threads, "Concurrent training jobs");
  ab->add_flag("--json", as_json, "JSON output");

  bool csv = false;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic cycle-coupled dataset");
  syn->add_option("--spec", spec_path, "Spec file (key = value)")->required();
  syn->add_option("--out-dir", out_dir, "Output directory")->required();
  syn->add_flag("--csv", csv, "Write signals.csv instead of signals.cy2s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_usage;
  }

  try {
    if (*pre) return run_preprocess(edges, out_dir, gaussian, nodes, as_json);
    if (*insp) return run_inspect(edges, nodes, as_json);
    if (*bench) return run_bench(edges, signals_path, stride, rows, top_k, threads, skip_dtw, as_json);
    if (*thm) return run_theorem1(t1_nodes, t1_trials, t1_steps, seed, as_json);
    if (*tr) return run_train(config_path, data_dir, out_dir, quiet);
    if (*ev) return run_eval(checkpoint, split, data_dir, as_json);
    if (*ab) return run_ablate(config_path, data_dir, seeds, ablate_threads, as_json);
    if (*syn) return run_synth(spec_path, out_dir, csv);
  } catch (const error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_data;
  }
  return exit_usage;
}
