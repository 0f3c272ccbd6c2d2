#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cy2mixer {

/// Every failure raised by the library carries one of these kinds so callers
/// (and the CLI exit-code mapping) can branch without parsing messages.
enum class errc {
  // graph_topology
  index_out_of_range,
  self_loop,
  duplicate_edge,
  basis_graph_mismatch,
  invalid_steps,
  unknown_edge,
  invalid_sigma,
  // structural_encodings
  empty_sequence,
  feature_out_of_range,
  top_k_too_large,
  k_too_large,
  insufficient_spectrum,
  // tensor_autodiff
  shape_mismatch,
  odd_channels,
  non_scalar_loss,
  tape_consumed,
  detached_loss,
  // cy2mixer_model
  calendar_index_out_of_range,
  adjacency_kind_mismatch,
  // data_pipeline
  parse_error,
  shape_inconsistent,
  bad_interval,
  split_too_small,
  invalid_spec,
  io_error,
  // training_harness
  config_mismatch,
  non_finite_loss,
  invalid_config,
};

constexpr std::string_view to_string(errc e) {
  switch (e) {
    case errc::index_out_of_range: return "IndexOutOfRange";
    case errc::self_loop: return "SelfLoop";
    case errc::duplicate_edge: return "DuplicateEdge";
    case errc::basis_graph_mismatch: return "BasisGraphMismatch";
    case errc::invalid_steps: return "InvalidSteps";
    case errc::unknown_edge: return "UnknownEdge";
    case errc::invalid_sigma: return "InvalidSigma";
    case errc::empty_sequence: return "EmptySequence";
    case errc::feature_out_of_range: return "FeatureOutOfRange";
    case errc::top_k_too_large: return "TopKTooLarge";
    case errc::k_too_large: return "KTooLarge";
    case errc::insufficient_spectrum: return "InsufficientSpectrum";
    case errc::shape_mismatch: return "ShapeMismatch";
    case errc::odd_channels: return "OddChannels";
    case errc::non_scalar_loss: return "NonScalarLoss";
    case errc::tape_consumed: return "TapeConsumed";
    case errc::detached_loss: return "DetachedLoss";
    case errc::calendar_index_out_of_range: return "CalendarIndexOutOfRange";
    case errc::adjacency_kind_mismatch: return "AdjacencyKindMismatch";
    case errc::parse_error: return "ParseError";
    case errc::shape_inconsistent: return "ShapeInconsistent";
    case errc::bad_interval: return "BadInterval";
    case errc::split_too_small: return "SplitTooSmall";
    case errc::invalid_spec: return "InvalidSpec";
    case errc::io_error: return "IoError";
    case errc::config_mismatch: return "ConfigMismatch";
    case errc::non_finite_loss: return "NonFiniteLoss";
    case errc::invalid_config: return "InvalidConfig";
  }
  return "Unknown";
}

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

}  // namespace cy2mixer
