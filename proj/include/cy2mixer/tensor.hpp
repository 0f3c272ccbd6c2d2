#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cy2mixer/error.hpp"
#include "cy2mixer/io.hpp"

namespace cy2mixer::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

template <class T>
class Tape;

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const Tape<T>* tape = nullptr;  // producer tape; null for leaves and untracked values
  std::ptrdiff_t op_index = -1;   // position on the producer tape

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Dense row-major array with shared ownership of its node; copying a Tensor
/// aliases the same storage (handle semantics, like a framework tensor).
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), v);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape)) {
      fail(errc::shape_mismatch, "data length " + std::to_string(values.size()) + " != numel" + to_string(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  template <class U>
  static Tensor cast(Shape shape, std::span<const U> values, bool requires_grad = false) {
    std::vector<T> v(values.begin(), values.end());
    return from(std::move(shape), std::move(v), requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t last_dim() const { return node_->shape.back(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Direct write access; intended for initialization and optimizer updates
  /// of leaves, never for values already consumed by a recorded op.
  std::span<T> mutable_data() { return node_->value; }
  T operator[](std::size_t i) const { return node_->value[i]; }

  T item() const {
    if (size() != 1) fail(errc::shape_mismatch, "item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.clear(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& handle() const { return node_; }

  /// Deep copy detached from any tape.
  Tensor clone(bool requires_grad = false) const { return from(shape(), node_->value, requires_grad); }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Ordered record of executed ops. Each entry keeps its inputs alive and owns
/// the rule that pushes the output gradient back into them.
template <class T>
class Tape {
 public:
  struct Op {
    std::vector<std::shared_ptr<Node<T>>> inputs;
    std::shared_ptr<Node<T>> output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<std::shared_ptr<Node<T>>> inputs, const std::shared_ptr<Node<T>>& output,
              std::function<void()> backward) {
    if (consumed_) fail(errc::tape_consumed, "tape already ran backward; reset() before recording");
    output->requires_grad = true;
    output->tape = this;
    output->op_index = static_cast<std::ptrdiff_t>(ops_.size());
    ops_.push_back({std::move(inputs), output, std::move(backward)});
  }

  std::size_t size() const noexcept { return ops_.size(); }
  bool consumed() const noexcept { return consumed_; }
  const std::vector<Op>& ops() const noexcept { return ops_; }

  void reset() {
    ops_.clear();
    consumed_ = false;
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every reachable rule once, newest first.
  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) fail(errc::non_scalar_loss, "loss has shape " + to_string(loss.shape()));
    if (consumed_) fail(errc::tape_consumed, "backward already ran on this tape");
    const auto idx = loss.node()->op_index;
    if (loss.node()->tape != this || idx < 0 || static_cast<std::size_t>(idx) >= ops_.size() ||
        ops_[static_cast<std::size_t>(idx)].output.get() != loss.node()) {
      fail(errc::detached_loss, "loss was not recorded on this tape");
    }
    consumed_ = true;
    loss.node()->ensure_grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      if (it->output->grad.empty()) continue;
      it->backward();
    }
  }

  /// Every input of op i was produced before op i (or is a leaf).
  bool audit_topological_order() const {
    for (std::size_t i = 0; i < ops_.size(); ++i) {
      for (const auto& in : ops_[i].inputs) {
        if (in->tape == this && in->op_index >= static_cast<std::ptrdiff_t>(i)) return false;
      }
      if (ops_[i].output->op_index != static_cast<std::ptrdiff_t>(i)) return false;
    }
    return true;
  }

 private:
  std::vector<Op> ops_;
  bool consumed_ = false;
};

template <class T>
Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

/// Makes `tape` the recording target for ops on this thread until destroyed.
template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(active_tape<T>()) { active_tape<T>() = &tape; }
  ~TapeScope() { active_tape<T>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

/// Disables recording for the current scope (evaluation).
template <class T>
class NoGradScope {
 public:
  NoGradScope() : previous_(active_tape<T>()) { active_tape<T>() = nullptr; }
  ~NoGradScope() { active_tape<T>() = previous_; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.size() != 1) fail(errc::non_scalar_loss, "loss has shape " + to_string(loss.shape()));
  auto* tape = const_cast<Tape<T>*>(loss.node()->tape);
  if (tape == nullptr || tape != active_tape<T>()) fail(errc::detached_loss, "loss was not produced on the active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------
// CY2T dumps.

template <class T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  std::vector<double> values(t.data().begin(), t.data().end());
  io::write_cy2t(out, t.shape(), values);
}

template <class T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  auto out = io::detail::open_out(path);
  write_tensor(out, t);
}

template <class T>
Tensor<T> load_tensor(const std::string& path, bool requires_grad = false) {
  auto in = io::detail::open_in(path);
  auto raw = io::read_cy2t(in, path);
  return Tensor<T>::cast(Shape(raw.shape.begin(), raw.shape.end()), std::span<const double>(raw.data), requires_grad);
}

}  // namespace cy2mixer::ad
