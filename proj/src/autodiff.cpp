#include "spkseq/autodiff.hpp"

#include <algorithm>
#include <sstream>

#include "spkseq/error.hpp"

namespace spkseq {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(values.size()) + " values for shape " +
                     shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() { return impl_->data; }
std::span<const double> Tensor::data() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::accumulate_grad(std::span<const double> delta) {
  if (delta.size() != numel()) throw ShapeError("gradient size mismatch");
  auto g = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

void Tensor::backward() const {
  if (!impl_->tape) throw Error("backward(): tensor was not produced on a tape");
  impl_->tape->backward(*this);
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data); }

void Tensor::reshape_inplace(Shape shape) {
  if (shape_numel(shape) != numel()) {
    throw ShapeError("reshape " + shape_str(impl_->shape) + " -> " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
}

Tensor Tape::record(std::string_view op, std::vector<Tensor> inputs,
                    const std::function<Tensor()>& forward, BackwardFn backward) {
  Tensor out = forward();
  const bool needs = std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  // Ops that return an input unchanged must not re-link it.
  if (std::any_of(inputs.begin(), inputs.end(),
                  [&](const Tensor& t) { return t.same_storage(out); })) {
    return out;
  }
  out.impl_->requires_grad = true;
  out.impl_->tape = this;
  nodes_.push_back(Node{std::string(op), std::move(inputs), out, std::move(backward)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward(): loss must be scalar, got " + shape_str(loss.shape()));
  }
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output, it->inputs);
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(nodes_.size());
  for (const auto& n : nodes_) names.push_back(n.op);
  return names;
}

void Tape::clear() { nodes_.clear(); }

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

Tensor record(std::string_view op, std::vector<Tensor> inputs,
              const std::function<Tensor()>& forward, BackwardFn backward) {
  if (Tape* tape = active_tape()) {
    return tape->record(op, std::move(inputs), forward, std::move(backward));
  }
  return forward();
}

}  // namespace spkseq
