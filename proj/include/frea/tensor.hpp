#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace frea {

using Scalar = double;
using Index = Eigen::Index;
using Shape = std::vector<Index>;
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

/// Thrown on incompatible tensor shapes. The message names the offending dims.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string to_string(const Shape& shape);
Index numel(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  ArrayX data;
  ArrayX grad;  // empty unless requires_grad
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != data.size()) grad = ArrayX::Zero(data.size());
  }
};

}  // namespace detail

/// Dense N-dimensional array of doubles with an optional gradient buffer.
///
/// Copies share storage (handle semantics, like the tensors of most deep
/// learning frameworks); use clone() for a deep copy. Image data uses NCHW
/// layout with W fastest.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, ArrayX data, bool requires_grad = false);

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Scalar value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::initializer_list<Scalar> values,
                     bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Index dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t ndim() const { return node_->shape.size(); }
  Index numel() const { return node_->data.size(); }

  ArrayX& data() { return node_->data; }
  const ArrayX& data() const { return node_->data; }
  ArrayX& grad();
  const ArrayX& grad() const;
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool is_leaf() const { return node_->leaf; }
  void zero_grad();

  Scalar item() const;
  Scalar at(std::initializer_list<Index> index) const;
  Scalar& at(std::initializer_list<Index> index);

  /// Deep copy without autodiff history.
  Tensor clone() const;
  /// Copy of the values without gradient tracking.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  Index offset(std::initializer_list<Index> index) const;

  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of differentiable operations executed while the tape is
/// active on the current thread. backward() replays the adjoints in exact
/// reverse order.
class GradTape {
 public:
  using Adjoint = std::function<void()>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(const Tensor& output, Adjoint adjoint);
  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked tensor.
  /// Leaf gradients accumulate across calls; intermediates are reset first.
  void backward(const Tensor& loss);
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

  /// The tape active on this thread, or nullptr.
  static GradTape* active();

  /// RAII activation of a tape on the current thread.
  class Scope {
   public:
    explicit Scope(GradTape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* previous_;
  };

 private:
  struct Entry {
    std::shared_ptr<detail::TensorNode> output;
    Adjoint adjoint;
  };
  std::vector<Entry> entries_;
};

/// Runs backward on the active tape. Throws if the loss is not a scalar or
/// no tape is active.
void backward(const Tensor& loss);

namespace detail {

/// True if an op over these inputs must be recorded.
bool needs_grad(std::initializer_list<const Tensor*> inputs);
/// Marks `out` as tracked and records its adjoint on the active tape.
void record(Tensor& out, GradTape::Adjoint adjoint);

}  // namespace detail

}  // namespace frea
