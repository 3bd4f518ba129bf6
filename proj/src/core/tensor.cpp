#include "neo/core/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "neo/core/errors.hpp"

namespace neo {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

template <std::floating_point T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

template <std::floating_point T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T{0}), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <std::floating_point T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> values, std::vector<Tensor> parents,
                             BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!NoGradGuard::grad_enabled()) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (!needs) return out;
  out.impl_->requires_grad = true;
  out.impl_->parents = std::move(parents);
  out.impl_->backward = std::move(backward);
  return out;
}

template <std::floating_point T>
typename Tensor<T>::Impl& Tensor<T>::impl() const {
  if (!impl_) throw ConfigError("tensor: use of an undefined tensor");
  return *impl_;
}

template <std::floating_point T>
const Shape& Tensor<T>::shape() const {
  return impl().shape;
}

template <std::floating_point T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[axis];
}

template <std::floating_point T>
std::size_t Tensor<T>::numel() const {
  return impl().values.size();
}

template <std::floating_point T>
std::span<const T> Tensor<T>::values() const {
  return impl().values;
}

template <std::floating_point T>
std::span<T> Tensor<T>::mutable_values() {
  return impl().values;
}

template <std::floating_point T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ShapeError("tensor: item() needs one element, shape is " + shape_string(shape()));
  }
  return impl().values[0];
}

template <std::floating_point T>
T Tensor<T>::at(std::size_t r, std::size_t c) const {
  return impl().values[r * cols() + c];
}

template <std::floating_point T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <std::floating_point T>
void Tensor<T>::set_requires_grad(bool on) {
  impl().requires_grad = on;
}

template <std::floating_point T>
std::span<const T> Tensor<T>::grad() const {
  return impl().grad;
}

template <std::floating_point T>
std::span<T> Tensor<T>::grad_buffer() {
  auto& im = impl();
  if (im.grad.size() != im.values.size()) im.grad.assign(im.values.size(), T{0});
  return im.grad;
}

template <std::floating_point T>
void Tensor<T>::zero_grad() {
  auto& im = impl();
  std::fill(im.grad.begin(), im.grad.end(), T{0});
}

template <std::floating_point T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward: needs a single-element tensor, shape is " +
                     shape_string(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Impl*> order;
  std::unordered_set<Impl*> seen;
  std::vector<std::pair<Impl*, std::size_t>> stack{{impl_.get(), 0}};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Impl* parent = node->parents[next++].impl_.get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  Tensor root = *this;
  root.grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Impl* node = *it;
    if (!node->backward) continue;  // leaf
    if (node->grad.empty()) continue;
    for (auto& p : node->parents) {
      if (p.requires_grad()) p.grad_buffer();
    }
    node->backward(node->grad, node->parents);
    // Interior gradients are not needed after propagation.
    if (node != impl_.get()) std::vector<T>().swap(node->grad);
  }
}

template <std::floating_point T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), impl().values);
}

template class Tensor<float>;
template class Tensor<double>;
template class Tensor<long double>;

}  // namespace neo
