#pragma once

// Tape-based reverse-mode differentiation over dense row-major double tensors.
//
// Operations record themselves on the thread's active Tape (see TapeScope)
// whenever at least one input requires a gradient. Tape::backward replays the
// recorded nodes once each, in reverse order, accumulating into grad buffers.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spkseq {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;      // producer tape for non-leaf tensors
};
}  // namespace detail

/// Shared handle to a dense tensor. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  /// Leaf tensor with requires_grad set.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Grad storage, zero-initialised on first access.
  std::span<double> grad_buffer();
  void accumulate_grad(std::span<const double> delta);
  void zero_grad();

  /// Reverse pass from this scalar through the tape that produced it.
  void backward() const;

  /// Deep copy of the values without tape linkage or grad.
  Tensor detach() const;
  /// In-place shape change; element count must match.
  void reshape_inplace(Shape shape);

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Backward rule: reads out.grad() and accumulates into each input that
/// requires a gradient.
using BackwardFn = std::function<void(const Tensor& out, std::span<Tensor> inputs)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Runs `forward` and, if any input requires a gradient, links the result
  /// into this tape with `backward` as its reverse rule.
  Tensor record(std::string_view op, std::vector<Tensor> inputs,
                const std::function<Tensor()>& forward, BackwardFn backward);

  /// Seeds d(loss)/d(loss) = 1 and visits every node once in reverse order.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  std::vector<std::string> op_names() const;
  void clear();

 private:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// The tape ops record on for the current thread, or nullptr.
Tape* active_tape();

/// Installs a tape as the thread's active tape for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Disables recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

/// Records on the active tape when there is one; otherwise just evaluates.
Tensor record(std::string_view op, std::vector<Tensor> inputs,
              const std::function<Tensor()>& forward, BackwardFn backward);

}  // namespace spkseq
