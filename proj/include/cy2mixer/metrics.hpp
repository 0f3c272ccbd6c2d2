#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "cy2mixer/error.hpp"

namespace cy2mixer {

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent; NaN when no target exceeds the epsilon
  std::size_t count = 0;
  std::size_t mape_count = 0;
};

/// Streaming accumulator over prediction/target pairs in original units.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(double mape_epsilon = 1.0) : eps_(mape_epsilon) {}

  template <class P, class Q>
  void add(std::span<P> pred, std::span<Q> target) {
    if (pred.size() != target.size()) fail(errc::shape_mismatch, "prediction/target length mismatch");
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double y = static_cast<double>(target[i]);
      const double e = static_cast<double>(pred[i]) - y;
      abs_ += std::abs(e);
      sq_ += e * e;
      ++n_;
      if (std::abs(y) > eps_) {
        ape_ += std::abs(e) / std::abs(y);
        ++mape_n_;
      }
    }
  }

  MetricsReport report() const {
    MetricsReport r;
    r.count = n_;
    r.mape_count = mape_n_;
    if (n_ == 0) {
      r.mae = r.rmse = r.mape = std::numeric_limits<double>::quiet_NaN();
      return r;
    }
    r.mae = abs_ / static_cast<double>(n_);
    r.rmse = std::sqrt(sq_ / static_cast<double>(n_));
    r.mape = mape_n_ ? 100.0 * ape_ / static_cast<double>(mape_n_) : std::numeric_limits<double>::quiet_NaN();
    return r;
  }

 private:
  double eps_;
  double abs_ = 0.0, sq_ = 0.0, ape_ = 0.0;
  std::size_t n_ = 0, mape_n_ = 0;
};

template <class P, class Q>
MetricsReport compute_metrics(std::span<P> pred, std::span<Q> target, double mape_epsilon = 1.0) {
  MetricsAccumulator acc(mape_epsilon);
  acc.add(pred, target);
  return acc.report();
}

}  // namespace cy2mixer
