#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cy2mixer/detail/text.hpp"
#include "cy2mixer/error.hpp"
#include "cy2mixer/graph.hpp"
#include "cy2mixer/io.hpp"

namespace cy2mixer {

inline constexpr std::int64_t seconds_per_day = 86400;

/// T_total x N x C measurements, row-major (time, node, feature).
struct SignalTensor {
  std::size_t steps = 0;
  std::size_t nodes = 0;
  std::size_t features = 0;
  std::vector<double> data;
  std::int64_t start_timestamp = 0;  // epoch seconds, UTC
  std::uint32_t interval_seconds = 300;

  std::size_t index(std::size_t t, std::size_t n, std::size_t c) const { return (t * nodes + n) * features + c; }
  double& at(std::size_t t, std::size_t n, std::size_t c) { return data[index(t, n, c)]; }
  double at(std::size_t t, std::size_t n, std::size_t c) const { return data[index(t, n, c)]; }

  std::size_t steps_per_day() const { return static_cast<std::size_t>(seconds_per_day / interval_seconds); }

  /// Series of one node/feature over [begin, end) with the given stride.
  std::vector<double> series(std::size_t node, std::size_t feature, std::size_t begin = 0,
                             std::size_t end = std::numeric_limits<std::size_t>::max(), std::size_t stride = 1) const {
    end = std::min(end, steps);
    std::vector<double> s;
    for (std::size_t t = begin; t < end; t += stride) s.push_back(at(t, node, feature));
    return s;
  }
};

inline void validate_interval(std::int64_t interval) {
  if (interval <= 0 || seconds_per_day % interval != 0) {
    fail(errc::bad_interval, "interval " + std::to_string(interval) + " s does not divide a day");
  }
}

inline void validate(const SignalTensor& s) {
  validate_interval(s.interval_seconds);
  if (s.data.size() != s.steps * s.nodes * s.features) fail(errc::shape_inconsistent, "payload size != T*N*C");
  for (double v : s.data)
    if (!std::isfinite(v)) fail(errc::parse_error, "non-finite value after ingestion");
}

/// Last observation carried forward per (node, feature); leading gaps -> 0.
inline void impute_locf(SignalTensor& s) {
  for (std::size_t n = 0; n < s.nodes; ++n)
    for (std::size_t c = 0; c < s.features; ++c) {
      double last = 0.0;
      for (std::size_t t = 0; t < s.steps; ++t) {
        double& v = s.at(t, n, c);
        if (std::isfinite(v))
          last = v;
        else
          v = last;
      }
    }
}

// ---------------------------------------------------------------------------
// CSV: header `timestamp,node,feature_0[,feature_1...]`, one dense block of N
// rows per timestep. Empty (or non-finite) cells are missing values.

inline SignalTensor read_signals_csv(const std::string& path, std::uint32_t fallback_interval = 300) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) fail(errc::parse_error, path + ": empty file");
  const auto header = detail::split(line, ',');
  if (header.size() < 3 || header[0] != "timestamp" || header[1] != "node") {
    fail(errc::parse_error, path + ": expected header 'timestamp,node,feature_0,...'");
  }
  const std::size_t features = header.size() - 2;
  for (std::size_t c = 0; c < features; ++c)
    if (header[c + 2] != "feature_" + std::to_string(c)) fail(errc::parse_error, path + ": bad feature column name");

  std::vector<std::int64_t> stamps;
  std::vector<std::vector<double>> block;  // node -> features of the current timestep
  std::vector<char> filled;
  std::vector<double> data;
  std::size_t nodes = 0;
  std::size_t rows_in_block = 0;
  const double missing = std::numeric_limits<double>::quiet_NaN();

  auto flush = [&]() {
    if (stamps.size() == 1) {
      nodes = rows_in_block;
    } else if (rows_in_block != nodes) {
      fail(errc::shape_inconsistent, path + ": timestep " + std::to_string(stamps.back()) + " has " +
                                         std::to_string(rows_in_block) + " rows, expected " + std::to_string(nodes));
    }
    for (std::size_t n = 0; n < nodes; ++n) {
      if (n >= filled.size() || !filled[n]) fail(errc::shape_inconsistent, path + ": node ids must be 0..N-1");
      data.insert(data.end(), block[n].begin(), block[n].end());
    }
    block.clear();
    filled.clear();
    rows_in_block = 0;
  };

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto cols = detail::split(line, ',');
    const auto where = path + ":" + std::to_string(lineno);
    if (cols.size() != features + 2) fail(errc::shape_inconsistent, where + ": wrong column count");
    const auto ts = detail::parse_int<std::int64_t>(cols[0]);
    const auto node = detail::parse_int<long>(cols[1]);
    if (!ts || !node || *node < 0) fail(errc::parse_error, where + ": malformed timestamp/node");
    if (stamps.empty() || *ts != stamps.back()) {
      if (!stamps.empty()) {
        flush();
        if (*ts <= stamps.back()) fail(errc::bad_interval, where + ": timestamps must increase");
      }
      stamps.push_back(*ts);
    }
    const auto n = static_cast<std::size_t>(*node);
    if (n >= block.size()) {
      block.resize(n + 1);
      filled.resize(n + 1, 0);
    }
    if (filled[n]) fail(errc::shape_inconsistent, where + ": node repeated within a timestep");
    filled[n] = 1;
    block[n].assign(features, missing);
    for (std::size_t c = 0; c < features; ++c) {
      if (cols[c + 2].empty()) continue;
      const auto v = detail::parse_double(cols[c + 2]);
      if (!v) fail(errc::parse_error, where + ": bad value '" + std::string(cols[c + 2]) + "'");
      block[n][c] = *v;
    }
    ++rows_in_block;
  }
  if (stamps.empty()) fail(errc::parse_error, path + ": no data rows");
  flush();

  SignalTensor s;
  s.steps = stamps.size();
  s.nodes = nodes;
  s.features = features;
  s.data = std::move(data);
  s.start_timestamp = stamps.front();
  std::int64_t interval = fallback_interval;
  if (stamps.size() > 1) {
    interval = stamps[1] - stamps[0];
    for (std::size_t i = 2; i < stamps.size(); ++i)
      if (stamps[i] - stamps[i - 1] != interval) fail(errc::bad_interval, path + ": irregular sampling interval");
  }
  validate_interval(interval);
  s.interval_seconds = static_cast<std::uint32_t>(interval);
  impute_locf(s);
  validate(s);
  return s;
}

inline void write_signals_csv(const std::string& path, const SignalTensor& s) {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot write " + path);
  out.precision(17);
  out << "timestamp,node";
  for (std::size_t c = 0; c < s.features; ++c) out << ",feature_" << c;
  out << '\n';
  for (std::size_t t = 0; t < s.steps; ++t)
    for (std::size_t n = 0; n < s.nodes; ++n) {
      out << s.start_timestamp + static_cast<std::int64_t>(t) * s.interval_seconds << ',' << n;
      for (std::size_t c = 0; c < s.features; ++c) out << ',' << s.at(t, n, c);
      out << '\n';
    }
}

inline void write_cy2s(const std::string& path, const SignalTensor& s) {
  auto out = io::detail::open_out(path);
  out.write("CY2S", 4);
  io::detail::put_le(out, static_cast<std::uint32_t>(s.steps));
  io::detail::put_le(out, static_cast<std::uint32_t>(s.nodes));
  io::detail::put_le(out, static_cast<std::uint32_t>(s.features));
  io::detail::put_le(out, static_cast<std::uint64_t>(s.start_timestamp));
  io::detail::put_le(out, s.interval_seconds);
  for (double v : s.data) io::detail::put_f32(out, v);
}

inline SignalTensor read_cy2s(const std::string& path) {
  auto in = io::detail::open_in(path);
  io::detail::expect_magic(in, "CY2S", path);
  SignalTensor s;
  s.steps = io::detail::get_le<std::uint32_t>(in, path);
  s.nodes = io::detail::get_le<std::uint32_t>(in, path);
  s.features = io::detail::get_le<std::uint32_t>(in, path);
  s.start_timestamp = static_cast<std::int64_t>(io::detail::get_le<std::uint64_t>(in, path));
  s.interval_seconds = io::detail::get_le<std::uint32_t>(in, path);
  if (s.steps == 0 || s.nodes == 0 || s.features == 0) fail(errc::shape_inconsistent, path + ": zero dimension");
  s.data.resize(s.steps * s.nodes * s.features);
  for (auto& v : s.data) v = io::detail::get_f32(in, path);
  if (in.peek() != std::char_traits<char>::eof()) fail(errc::shape_inconsistent, path + ": trailing bytes");
  impute_locf(s);
  validate(s);
  return s;
}

enum class SignalFormat { csv, cy2s_binary };

inline SignalTensor load_signals(const std::string& path, SignalFormat format) {
  return format == SignalFormat::csv ? read_signals_csv(path) : read_cy2s(path);
}

/// Picks the format from the extension (.csv vs anything else).
inline SignalTensor load_signals(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  return load_signals(path, csv ? SignalFormat::csv : SignalFormat::cy2s_binary);
}

// ---------------------------------------------------------------------------

struct Calendar {
  std::vector<int> tod;  // [0, steps_per_day)
  std::vector<int> dow;  // [0, 7), Monday = 0
};

inline Calendar calendar_features(const SignalTensor& s) {
  validate_interval(s.interval_seconds);
  Calendar cal;
  cal.tod.resize(s.steps);
  cal.dow.resize(s.steps);
  const auto floor_div = [](std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); };
  for (std::size_t t = 0; t < s.steps; ++t) {
    const std::int64_t ts = s.start_timestamp + static_cast<std::int64_t>(t) * s.interval_seconds;
    const std::int64_t day = floor_div(ts, seconds_per_day);
    const std::int64_t second_of_day = ts - day * seconds_per_day;
    cal.tod[t] = static_cast<int>(second_of_day / s.interval_seconds);
    // 1970-01-01 was a Thursday (index 3 with Monday = 0).
    cal.dow[t] = static_cast<int>(((day + 3) % 7 + 7) % 7);
  }
  return cal;
}

// ---------------------------------------------------------------------------
// Windowing and splits.

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  bool operator==(const SplitRatios&) const = default;
};

inline constexpr double std_floor = 1e-6;

/// Per-feature z-score statistics over the training rows.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  double normalize(double v, std::size_t c) const { return (v - mean[c]) / stddev[c]; }
  double denormalize(double z, std::size_t c) const { return z * stddev[c] + mean[c]; }
};

inline Normalization fit_normalization(const SignalTensor& s, std::size_t row_begin, std::size_t row_end) {
  Normalization norm;
  norm.mean.assign(s.features, 0.0);
  norm.stddev.assign(s.features, 1.0);
  const double count = static_cast<double>((row_end - row_begin) * s.nodes);
  for (std::size_t c = 0; c < s.features; ++c) {
    double sum = 0.0;
    for (std::size_t t = row_begin; t < row_end; ++t)
      for (std::size_t n = 0; n < s.nodes; ++n) sum += s.at(t, n, c);
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t t = row_begin; t < row_end; ++t)
      for (std::size_t n = 0; n < s.nodes; ++n) {
        const double d = s.at(t, n, c) - mean;
        sq += d * d;
      }
    norm.mean[c] = mean;
    norm.stddev[c] = std::max(std::sqrt(sq / count), std_floor);
  }
  return norm;
}

/// Read-only view over the windows of one split. Window i covers input rows
/// [anchor - T + 1, anchor] and target rows [anchor + 1, anchor + T'].
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::shared_ptr<const SignalTensor> raw, std::shared_ptr<const std::vector<double>> normalized,
                  std::shared_ptr<const Calendar> calendar, Normalization norm, std::size_t input_len,
                  std::size_t horizon, std::size_t target_features, std::size_t row_begin, std::size_t row_end)
      : raw_(std::move(raw)),
        normalized_(std::move(normalized)),
        calendar_(std::move(calendar)),
        norm_(std::move(norm)),
        input_len_(input_len),
        horizon_(horizon),
        target_features_(target_features),
        row_begin_(row_begin),
        row_end_(row_end) {
    const std::size_t rows = row_end - row_begin;
    count_ = rows >= input_len + horizon ? rows - input_len - horizon + 1 : 0;
  }

  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t input_length() const noexcept { return input_len_; }
  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t nodes() const noexcept { return raw_ ? raw_->nodes : 0; }
  std::size_t features() const noexcept { return raw_ ? raw_->features : 0; }
  std::size_t target_features() const noexcept { return target_features_; }
  std::size_t row_begin() const noexcept { return row_begin_; }
  std::size_t row_end() const noexcept { return row_end_; }
  const Normalization& normalization() const noexcept { return norm_; }
  std::size_t steps_per_day() const { return raw_->steps_per_day(); }

  std::size_t anchor(std::size_t i) const { return row_begin_ + input_len_ - 1 + i; }
  std::size_t input_begin(std::size_t i) const { return row_begin_ + i; }
  std::size_t target_begin(std::size_t i) const { return anchor(i) + 1; }

  /// Normalized T x N x C input.
  std::vector<double> input(std::size_t i) const {
    const std::size_t stride = raw_->nodes * raw_->features;
    const auto first = normalized_->begin() + static_cast<std::ptrdiff_t>(input_begin(i) * stride);
    return {first, first + static_cast<std::ptrdiff_t>(input_len_ * stride)};
  }

  /// Raw-unit T' x N x d_o target.
  std::vector<double> target(std::size_t i) const {
    std::vector<double> out;
    out.reserve(horizon_ * raw_->nodes * target_features_);
    for (std::size_t t = target_begin(i); t < target_begin(i) + horizon_; ++t)
      for (std::size_t n = 0; n < raw_->nodes; ++n)
        for (std::size_t c = 0; c < target_features_; ++c) out.push_back(raw_->at(t, n, c));
    return out;
  }

  std::span<const int> tod(std::size_t i) const {
    return std::span<const int>(calendar_->tod).subspan(input_begin(i), input_len_);
  }
  std::span<const int> dow(std::size_t i) const {
    return std::span<const int>(calendar_->dow).subspan(input_begin(i), input_len_);
  }

 private:
  std::shared_ptr<const SignalTensor> raw_;
  std::shared_ptr<const std::vector<double>> normalized_;
  std::shared_ptr<const Calendar> calendar_;
  Normalization norm_;
  std::size_t input_len_ = 0;
  std::size_t horizon_ = 0;
  std::size_t target_features_ = 0;
  std::size_t row_begin_ = 0;
  std::size_t row_end_ = 0;
  std::size_t count_ = 0;
};

struct DatasetSplits {
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
  std::vector<std::string> warnings;
};

/// Chronological split of the time axis, then windows inside each split.
/// Inputs are z-scored with training statistics; targets stay in raw units.
inline DatasetSplits make_windows(const SignalTensor& signals, std::size_t input_len, std::size_t horizon,
                                  SplitRatios ratios = {}, std::size_t target_features = 0) {
  if (input_len == 0 || horizon == 0) fail(errc::invalid_config, "T and T' must be positive");
  if (ratios.train <= 0.0 || ratios.val < 0.0 || ratios.test < 0.0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    fail(errc::invalid_config, "split ratios must be non-negative, train > 0, and sum to 1");
  }
  if (target_features == 0) target_features = signals.features;
  if (target_features > signals.features) fail(errc::feature_out_of_range, "d_o exceeds feature count");

  const auto total = static_cast<double>(signals.steps);
  const auto train_end = static_cast<std::size_t>(std::llround(ratios.train * total));
  const auto val_end = std::max(train_end, static_cast<std::size_t>(std::llround((ratios.train + ratios.val) * total)));
  const std::size_t bounds[4] = {0, train_end, std::min(val_end, signals.steps), signals.steps};
  const char* names[3] = {"train", "val", "test"};

  DatasetSplits out;
  for (int p = 0; p < 3; ++p) {
    const std::size_t rows = bounds[p + 1] - bounds[p];
    if (rows < input_len + horizon) {
      if (p == 0) {
        fail(errc::split_too_small, "train split has " + std::to_string(rows) + " rows, needs T + T' = " +
                                        std::to_string(input_len + horizon));
      }
      out.warnings.push_back(std::string(names[p]) + " split has " + std::to_string(rows) +
                             " rows, fewer than T + T'; it yields no windows");
    }
  }

  auto raw = std::make_shared<const SignalTensor>(signals);
  auto norm = fit_normalization(signals, bounds[0], bounds[1]);
  auto normalized = std::make_shared<std::vector<double>>(signals.data.size());
  for (std::size_t i = 0; i < signals.data.size(); ++i) (*normalized)[i] = norm.normalize(signals.data[i], i % signals.features);
  auto calendar = std::make_shared<const Calendar>(calendar_features(signals));

  auto make = [&](int p) {
    return WindowedDataset(raw, normalized, calendar, norm, input_len, horizon, target_features, bounds[p],
                           bounds[p + 1]);
  };
  out.train = make(0);
  out.val = make(1);
  out.test = make(2);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic cycle-coupled data.

struct SynthSpec {
  enum class Topology { ring, ring_of_rings };
  Topology topology = Topology::ring;
  int ring_size = 6;
  int num_rings = 1;     // ring_of_rings only
  int tail_length = 0;   // pendant path hanging off each ring (off-cycle nodes)
  std::size_t steps = 2000;
  double noise = 0.0;
  double latent_scale = 1.0;
  double latent_phi = 0.95;  // AR(1) persistence of the per-cycle factor
  double daily_amplitude = 2.0;
  double base_level = 5.0;
  bool identical_phase = false;
  std::uint32_t interval_seconds = 300;
  std::int64_t start_timestamp = 1514764800;  // 2018-01-01 00:00 UTC, a Monday
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  Graph graph;
  SignalTensor signals;
  std::vector<int> latent_group;  // factor id per node; ring members share one
};

/// Rings are chained by single bridge edges (last node of ring r to first node
/// of ring r+1), so the fundamental basis is exactly one cycle per ring.
inline SyntheticDataset synthesize_dataset(const SynthSpec& spec) {
  if (spec.ring_size < 3) fail(errc::invalid_spec, "ring_size must be >= 3");
  const int rings = spec.topology == SynthSpec::Topology::ring ? 1 : spec.num_rings;
  if (rings < 1) fail(errc::invalid_spec, "num_rings must be >= 1");
  if (spec.tail_length < 0) fail(errc::invalid_spec, "tail_length must be >= 0");
  if (spec.steps < 2) fail(errc::invalid_spec, "steps must be >= 2");
  if (!(spec.noise >= 0.0) || !(spec.latent_scale >= 0.0)) fail(errc::invalid_spec, "noise/latent_scale must be >= 0");
  if (!(std::abs(spec.latent_phi) < 1.0)) fail(errc::invalid_spec, "latent_phi must be in (-1, 1)");
  validate_interval(spec.interval_seconds);

  const int block = spec.ring_size + spec.tail_length;
  const int n = rings * block;
  std::vector<WeightedEdge> es;
  std::vector<int> group(static_cast<std::size_t>(n));
  int next_private = rings;
  for (int r = 0; r < rings; ++r) {
    const int first = r * block;
    for (int i = 0; i < spec.ring_size; ++i) {
      es.push_back({first + i, first + (i + 1) % spec.ring_size, 1.0});
      group[static_cast<std::size_t>(first + i)] = r;
    }
    for (int j = 0; j < spec.tail_length; ++j) {
      const int node = first + spec.ring_size + j;
      const int attach = j == 0 ? first : node - 1;
      es.push_back({attach, node, 1.0});
      group[static_cast<std::size_t>(node)] = next_private++;
    }
    if (r + 1 < rings) es.push_back({first + spec.ring_size - 1, (r + 1) * block, 1.0});
  }

  SyntheticDataset ds;
  ds.graph = build_graph(n, es);
  ds.latent_group = group;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> phase(static_cast<std::size_t>(n), 0.0);
  if (!spec.identical_phase)
    for (auto& p : phase) p = 0.5 * std::numbers::pi * unit(rng);

  const auto factors = static_cast<std::size_t>(next_private);
  const double innovation = std::sqrt(1.0 - spec.latent_phi * spec.latent_phi);
  std::vector<double> latent(factors);
  for (auto& l : latent) l = gauss(rng);

  auto& s = ds.signals;
  s.steps = spec.steps;
  s.nodes = static_cast<std::size_t>(n);
  s.features = 1;
  s.start_timestamp = spec.start_timestamp;
  s.interval_seconds = spec.interval_seconds;
  s.data.resize(s.steps * s.nodes);
  const double spd = static_cast<double>(s.steps_per_day());
  const auto cal = calendar_features(s);
  for (std::size_t t = 0; t < s.steps; ++t) {
    if (t > 0)
      for (auto& l : latent) l = spec.latent_phi * l + innovation * gauss(rng);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(cal.tod[t]) / spd;
    for (std::size_t v = 0; v < s.nodes; ++v) {
      const double daily = spec.daily_amplitude * std::sin(angle + phase[v]);
      const double shared = spec.latent_scale * latent[static_cast<std::size_t>(group[v])];
      const double eps = spec.noise > 0.0 ? spec.noise * gauss(rng) : 0.0;
      s.at(t, v, 0) = spec.base_level + daily + shared + eps;
    }
  }
  return ds;
}

}  // namespace cy2mixer
