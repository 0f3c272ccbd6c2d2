#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cy2mixer/data.hpp"
#include "cy2mixer/detail/text.hpp"
#include "cy2mixer/error.hpp"
#include "cy2mixer/model.hpp"

namespace cy2mixer {

enum class LossKind { mae, huber };
enum class EncodingKind { none, rwse, lappe };
enum class AdjacencyWeights { binary, gaussian };

struct TrainConfig {
  ModelConfig model;
  EncodingKind encoding = EncodingKind::none;  // source of model.pe_dim columns

  double learning_rate = 1e-3;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.1;
  std::vector<std::size_t> lr_decay_milestones{25, 45};
  std::size_t batch_size = 16;
  std::size_t max_epochs = 60;
  std::size_t early_stop_patience = 10;
  std::size_t max_steps = 0;  // 0: no cap on optimizer steps
  std::uint64_t seed = 0;
  LossKind loss = LossKind::mae;
  double huber_delta = 1.0;
  double mape_epsilon = 1.0;
  double grad_clip = 5.0;  // global-norm threshold; 0 disables

  SplitRatios split{0.6, 0.2, 0.2};
  AdjacencyWeights adjacency = AdjacencyWeights::binary;
  double gaussian_sigma = 1.0;
  double gaussian_threshold = 0.0;
  std::size_t dtw_top_k = 0;  // 0: ceil(average degree)
  std::size_t dtw_stride = 1;

  bool operator==(const TrainConfig&) const = default;
};

namespace detail {

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(errc::parse_error, "expected a boolean, got '" + std::string(v) + "'");
}

inline std::size_t parse_size(std::string_view v) {
  const auto r = parse_int<std::size_t>(v);
  if (!r) fail(errc::parse_error, "expected a non-negative integer, got '" + std::string(v) + "'");
  return *r;
}

inline double parse_real(std::string_view v) {
  const auto r = parse_double(v);
  if (!r) fail(errc::parse_error, "expected a number, got '" + std::string(v) + "'");
  return *r;
}

inline std::vector<std::size_t> parse_size_list(std::string_view v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(parse_size(trim(part)));
  return out;
}

template <class E>
E parse_enum(std::string_view v, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, e] : table)
    if (v == name) return e;
  fail(errc::parse_error, "unrecognized value '" + std::string(v) + "'");
}

inline const std::initializer_list<std::pair<const char*, AdjacencyKind>> adjacency_kind_names{
    {"clique", AdjacencyKind::clique}, {"standard", AdjacencyKind::standard}, {"dtw", AdjacencyKind::dtw}};
inline const std::initializer_list<std::pair<const char*, LossKind>> loss_names{{"mae", LossKind::mae},
                                                                                {"huber", LossKind::huber}};
inline const std::initializer_list<std::pair<const char*, EncodingKind>> encoding_names{
    {"none", EncodingKind::none}, {"rwse", EncodingKind::rwse}, {"lappe", EncodingKind::lappe}};
inline const std::initializer_list<std::pair<const char*, AdjacencyWeights>> weight_names{
    {"binary", AdjacencyWeights::binary}, {"gaussian", AdjacencyWeights::gaussian}};

template <class E>
std::string enum_name(E e, std::initializer_list<std::pair<const char*, E>> table) {
  for (const auto& [name, v] : table)
    if (v == e) return name;
  return "?";
}

using Setter = std::function<void(TrainConfig&, std::string_view)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    auto size_key = [&](const char* k, std::size_t ModelConfig::*m) {
      s[k] = [m](TrainConfig& c, std::string_view v) { c.model.*m = parse_size(v); };
    };
    size_key("num_layers", &ModelConfig::num_layers);
    size_key("d_f", &ModelConfig::d_f);
    size_key("d_t", &ModelConfig::d_t);
    size_key("d_a", &ModelConfig::d_a);
    size_key("d_h", &ModelConfig::d_h);
    size_key("d_tiny", &ModelConfig::d_tiny);
    size_key("T", &ModelConfig::T);
    size_key("T_prime", &ModelConfig::T_prime);
    size_key("C", &ModelConfig::C);
    size_key("d_o", &ModelConfig::d_o);
    size_key("steps_per_day", &ModelConfig::steps_per_day);
    size_key("num_nodes", &ModelConfig::num_nodes);
    size_key("pe_dim", &ModelConfig::pe_dim);
    auto bool_key = [&](const char* k, bool ModelConfig::*m) {
      s[k] = [m](TrainConfig& c, std::string_view v) { c.model.*m = parse_bool(v); };
    };
    bool_key("tiny_attention", &ModelConfig::tiny_attention);
    bool_key("temporal_block", &ModelConfig::temporal_block);
    bool_key("spatial_block", &ModelConfig::spatial_block);
    bool_key("cycle_block", &ModelConfig::cycle_block);
    s["dropout"] = [](TrainConfig& c, std::string_view v) { c.model.dropout = parse_real(v); };
    s["cycle_source"] = [](TrainConfig& c, std::string_view v) {
      c.model.cycle_source = parse_enum(v, adjacency_kind_names);
    };
    s["encoding"] = [](TrainConfig& c, std::string_view v) { c.encoding = parse_enum(v, encoding_names); };

    auto real_key = [&](const char* k, double TrainConfig::*m) {
      s[k] = [m](TrainConfig& c, std::string_view v) { c.*m = parse_real(v); };
    };
    real_key("learning_rate", &TrainConfig::learning_rate);
    real_key("weight_decay", &TrainConfig::weight_decay);
    real_key("lr_decay_factor", &TrainConfig::lr_decay_factor);
    real_key("huber_delta", &TrainConfig::huber_delta);
    real_key("mape_epsilon", &TrainConfig::mape_epsilon);
    real_key("grad_clip", &TrainConfig::grad_clip);
    real_key("gaussian_sigma", &TrainConfig::gaussian_sigma);
    real_key("gaussian_threshold", &TrainConfig::gaussian_threshold);
    auto count_key = [&](const char* k, std::size_t TrainConfig::*m) {
      s[k] = [m](TrainConfig& c, std::string_view v) { c.*m = parse_size(v); };
    };
    count_key("batch_size", &TrainConfig::batch_size);
    count_key("max_epochs", &TrainConfig::max_epochs);
    count_key("early_stop_patience", &TrainConfig::early_stop_patience);
    count_key("max_steps", &TrainConfig::max_steps);
    count_key("dtw_top_k", &TrainConfig::dtw_top_k);
    count_key("dtw_stride", &TrainConfig::dtw_stride);
    s["lr_decay_milestones"] = [](TrainConfig& c, std::string_view v) { c.lr_decay_milestones = parse_size_list(v); };
    s["seed"] = [](TrainConfig& c, std::string_view v) { c.seed = parse_size(v); };
    s["loss"] = [](TrainConfig& c, std::string_view v) { c.loss = parse_enum(v, loss_names); };
    s["adjacency"] = [](TrainConfig& c, std::string_view v) { c.adjacency = parse_enum(v, weight_names); };
    s["split_ratios"] = [](TrainConfig& c, std::string_view v) {
      const auto parts = split(v, ',');
      if (parts.size() != 3) fail(errc::parse_error, "split_ratios needs three comma-separated values");
      c.split = {parse_real(trim(parts[0])), parse_real(trim(parts[1])),
                 parse_real(trim(parts[2]))};
    };
    return s;
  }();
  return setters;
}

}  // namespace detail

/// Flat `key = value` lines; `#` starts a comment. Unknown or repeated keys are errors.
inline TrainConfig parse_config(std::string_view text_in, TrainConfig base = {}) {
  const auto& setters = detail::config_setters();
  std::map<std::string, int> seen;
  std::size_t line_no = 0;
  for (auto raw : detail::split(text_in, '\n')) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      fail(errc::parse_error, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) fail(errc::invalid_config, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (seen[key]++) fail(errc::invalid_config, "line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    try {
      it->second(base, value);
    } catch (const error& e) {
      fail(errc::parse_error, "line " + std::to_string(line_no) + " (" + key + "): " + e.what());
    }
  }
  return base;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

/// Every key, in a stable order; parse_config(format_config(c)) == c.
inline std::string format_config(const TrainConfig& c) {
  std::ostringstream o;
  // Shortest representation that reads back to the same double.
  auto r = [](double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  };
  const auto& m = c.model;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "num_layers = " << m.num_layers << "\nd_f = " << m.d_f << "\nd_t = " << m.d_t << "\nd_a = " << m.d_a
    << "\nd_h = " << m.d_h << "\nd_tiny = " << m.d_tiny << "\ntiny_attention = " << b(m.tiny_attention)
    << "\ndropout = " << r(m.dropout) << "\nT = " << m.T << "\nT_prime = " << m.T_prime << "\nC = " << m.C
    << "\nd_o = " << m.d_o << "\nsteps_per_day = " << m.steps_per_day << "\nnum_nodes = " << m.num_nodes
    << "\ntemporal_block = " << b(m.temporal_block) << "\nspatial_block = " << b(m.spatial_block)
    << "\ncycle_block = " << b(m.cycle_block)
    << "\ncycle_source = " << detail::enum_name(m.cycle_source, detail::adjacency_kind_names)
    << "\npe_dim = " << m.pe_dim << "\nencoding = " << detail::enum_name(c.encoding, detail::encoding_names)
    << "\nlearning_rate = " << r(c.learning_rate) << "\nweight_decay = " << r(c.weight_decay)
    << "\nlr_decay_factor = " << r(c.lr_decay_factor) << "\nlr_decay_milestones = ";
  for (std::size_t i = 0; i < c.lr_decay_milestones.size(); ++i) o << (i ? "," : "") << c.lr_decay_milestones[i];
  o << "\nbatch_size = " << c.batch_size << "\nmax_epochs = " << c.max_epochs
    << "\nearly_stop_patience = " << c.early_stop_patience << "\nmax_steps = " << c.max_steps << "\nseed = " << c.seed
    << "\nloss = " << detail::enum_name(c.loss, detail::loss_names) << "\nhuber_delta = " << r(c.huber_delta)
    << "\nmape_epsilon = " << r(c.mape_epsilon) << "\ngrad_clip = " << r(c.grad_clip) << "\nsplit_ratios = " << r(c.split.train)
    << "," << r(c.split.val) << "," << r(c.split.test)
    << "\nadjacency = " << detail::enum_name(c.adjacency, detail::weight_names)
    << "\ngaussian_sigma = " << r(c.gaussian_sigma) << "\ngaussian_threshold = " << r(c.gaussian_threshold)
    << "\ndtw_top_k = " << c.dtw_top_k << "\ndtw_stride = " << c.dtw_stride << "\n";
  return o.str();
}


/// Synthetic-dataset spec in the same `key = value` format.
inline SynthSpec parse_synth_spec(std::string_view text_in) {
  SynthSpec spec;
  std::map<std::string, int> seen;
  std::size_t line_no = 0;
  for (auto raw : detail::split(text_in, '\n')) {
    ++line_no;
    const auto line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(errc::parse_error, "line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto v = detail::trim(line.substr(eq + 1));
    if (seen[key]++) fail(errc::invalid_spec, "line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    auto as_int = [&] { return static_cast<int>(detail::parse_size(v)); };
    if (key == "topology") {
      spec.topology = detail::parse_enum(
          v, {std::pair{"ring", SynthSpec::Topology::ring}, std::pair{"ring_of_rings", SynthSpec::Topology::ring_of_rings}});
    } else if (key == "ring_size") {
      spec.ring_size = as_int();
    } else if (key == "num_rings") {
      spec.num_rings = as_int();
    } else if (key == "tail_length") {
      spec.tail_length = as_int();
    } else if (key == "steps") {
      spec.steps = detail::parse_size(v);
    } else if (key == "noise") {
      spec.noise = detail::parse_real(v);
    } else if (key == "latent_scale") {
      spec.latent_scale = detail::parse_real(v);
    } else if (key == "latent_phi") {
      spec.latent_phi = detail::parse_real(v);
    } else if (key == "daily_amplitude") {
      spec.daily_amplitude = detail::parse_real(v);
    } else if (key == "base_level") {
      spec.base_level = detail::parse_real(v);
    } else if (key == "identical_phase") {
      spec.identical_phase = detail::parse_bool(v);
    } else if (key == "interval_seconds") {
      spec.interval_seconds = static_cast<std::uint32_t>(detail::parse_size(v));
    } else if (key == "start_timestamp") {
      const auto t = detail::parse_int<std::int64_t>(v);
      if (!t) fail(errc::parse_error, "start_timestamp must be an integer");
      spec.start_timestamp = *t;
    } else if (key == "seed") {
      spec.seed = detail::parse_size(v);
    } else {
      fail(errc::invalid_spec, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  return spec;
}

}  // namespace cy2mixer
