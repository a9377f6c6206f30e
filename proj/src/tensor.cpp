#include "frea/tensor.hpp"

#include <sstream>

namespace frea {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, ArrayX data, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (frea::numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " holds " + std::to_string(frea::numel(shape)) +
                     " elements but data has " + std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  set_requires_grad(requires_grad);
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return Tensor(shape, ArrayX::Zero(frea::numel(shape)), requires_grad);
}

Tensor Tensor::full(const Shape& shape, Scalar value, bool requires_grad) {
  return Tensor(shape, ArrayX::Constant(frea::numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::initializer_list<Scalar> values,
                    bool requires_grad) {
  ArrayX data(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) data[i++] = v;
  return Tensor(shape, std::move(data), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

ArrayX& Tensor::grad() {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

const ArrayX& Tensor::grad() const {
  if (!has_grad()) throw std::logic_error("tensor has no gradient buffer");
  return node_->grad;
}

Tensor& Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) {
    node_->ensure_grad();
  } else {
    node_->grad.resize(0);
  }
  return *this;
}

void Tensor::zero_grad() {
  if (has_grad()) node_->grad.setZero();
}

Scalar Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->data[0];
}

Index Tensor::offset(std::initializer_list<Index> index) const {
  if (index.size() != node_->shape.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for tensor of shape " +
                     to_string(node_->shape));
  }
  Index off = 0;
  std::size_t axis = 0;
  for (Index i : index) {
    const Index extent = node_->shape[axis++];
    if (i < 0 || i >= extent) throw std::out_of_range("tensor index out of range");
    off = off * extent + i;
  }
  return off;
}

Scalar Tensor::at(std::initializer_list<Index> index) const { return node_->data[offset(index)]; }
Scalar& Tensor::at(std::initializer_list<Index> index) { return node_->data[offset(index)]; }

Tensor Tensor::clone() const {
  Tensor copy(node_->shape, node_->data);
  copy.set_requires_grad(node_->requires_grad && node_->leaf);
  return copy;
}

Tensor Tensor::detach() const {
  Tensor view;
  view.node_ = std::make_shared<detail::TensorNode>();
  view.node_->shape = node_->shape;
  view.node_->data = node_->data;
  return view;
}

// ---------------------------------------------------------------------------

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

GradTape::Scope::Scope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
GradTape::Scope::~Scope() { g_active_tape = previous_; }

void GradTape::record(const Tensor& output, Adjoint adjoint) {
  entries_.push_back({output.node(), std::move(adjoint)});
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) {
    throw std::logic_error("backward(): loss does not depend on any tracked tensor");
  }
  for (auto& e : entries_) {
    e.output->ensure_grad();
    e.output->grad.setZero();
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->adjoint();
}

void backward(const Tensor& loss) {
  GradTape* tape = GradTape::active();
  if (tape == nullptr) throw std::logic_error("backward(): no active GradTape on this thread");
  tape->backward(loss);
}

namespace detail {

bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  if (GradTape::active() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record(Tensor& out, GradTape::Adjoint adjoint) {
  out.node()->requires_grad = true;
  out.node()->leaf = false;
  out.node()->ensure_grad();
  GradTape::active()->record(out, std::move(adjoint));
}

}  // namespace detail

}  // namespace frea
