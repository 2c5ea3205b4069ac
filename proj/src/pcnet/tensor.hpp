#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace pcnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor. Copies share the underlying buffer (handle
// semantics), so a parameter held by a model and captured by a tape node is
// the same object and gradients accumulate in one place.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<T> data() { return impl_->data; }
  std::span<const T> data() const { return impl_->data; }
  T& operator[](std::size_t i) { return impl_->data[i]; }
  const T& operator[](std::size_t i) const { return impl_->data[i]; }
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty() || impl_->data.empty(); }
  // Gradient storage is shared bookkeeping, writable through const handles.
  // Allocates a zero buffer on first use.
  std::span<T> grad() const;
  void zero_grad() const;
  void clear_grad() const { impl_->grad.clear(); }

  // Deep copy, detached from any tape; requires_grad is not carried over.
  Tensor clone() const;

  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Ordered record of differentiable operations. Nodes are appended in
// execution order, so the list is already topologically sorted and the
// backward pass is a single reverse sweep.
template <typename T>
class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and replays every node once in reverse order.
  // Afterwards every requires_grad input seen by the tape owns a gradient
  // buffer (zero if the loss does not depend on it).
  void backward(Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

 private:
  std::vector<Node> nodes_;
};

template <typename T>
Tape<T>* active_tape();

// While alive, differentiable ops record onto `tape`. Without an active
// scope nothing is recorded (inference / no-grad mode).
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>* tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

// Suspends recording for its lifetime.
template <typename T>
class NoGradScope {
 public:
  NoGradScope() : scope_(nullptr) {}

 private:
  TapeScope<T> scope_;
};


}  // namespace pcnet
