#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace neo {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

// Dense row-major tensor with reverse-mode differentiation.
//
// A Tensor is a shared handle: copies alias the same storage and graph node.
// Leaves created with requires_grad accumulate gradients across backward()
// calls until zero_grad(). Results of ops record their parents and a backward
// closure only when grad mode is on and some parent requires grad.
template <std::floating_point T>
class Tensor {
 public:
  // Receives the output gradient and the op's parents; adds into the
  // parents' gradient buffers.
  using BackwardFn = std::function<void(std::span<const T>, std::span<Tensor>)>;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Result of an op. Drops the graph if no parent needs a gradient.
  static Tensor from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                        BackwardFn backward);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  // Rank-2 helpers.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  // Empty until a gradient has flowed in.
  std::span<const T> grad() const;
  // Allocates a zero buffer on first use.
  std::span<T> grad_buffer();
  void zero_grad();

  // Reverse pass from a single-element tensor, seeding d(self) = 1.
  void backward() const;

  // Copy of the values with no graph and no gradient.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<Tensor> parents;
    BackwardFn backward;
  };

  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace neo
