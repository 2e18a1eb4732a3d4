#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace flowline::nn {

/// NCHW tensor shape.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::string str() const {
    return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

namespace detail {
inline thread_local bool grad_mode = true;
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode; }

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void()> backward;  // reads this->grad, accumulates into inputs

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Shared handle to a node in a dynamically built computation graph.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return from(shape, std::vector<T>(shape.size(), T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    return from(shape, std::vector<T>(shape.size(), value), requires_grad);
  }
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != shape.size())
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                                  shape.str());
    auto node = std::make_shared<Node<T>>();
    node->shape = shape;
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }
  static Tensor scalar(T v, bool requires_grad = false) { return from({1, 1, 1, 1}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  T item() const {
    if (size() != 1) throw std::logic_error("item() on a non-scalar tensor " + shape().str());
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  /// Gradient buffer; zeros when nothing has been propagated yet.
  std::span<const T> grad() const { return node_->ensure_grad(); }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  /// Same values, cut from the graph.
  Tensor detach() const { return from(shape(), node_->value, false); }

  /// Reverse-mode sweep from a scalar.
  void backward() const {
    if (size() != 1) throw std::logic_error("backward() needs a scalar output");
    if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->inputs.size()) {
        Node<T>* child = n->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    node_->ensure_grad()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward && !(*it)->grad.empty()) (*it)->backward();
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

/// Creates an op output. The backward closure receives the output node, whose
/// inputs are kept alive by the node itself. Nothing is recorded when no
/// input needs a gradient or recording is disabled.
template <typename T, typename Backward>
Tensor<T> make_op(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs, Backward&& backward) {
  Tensor<T> out = Tensor<T>::from(shape, std::move(values), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  Node<T>* self = out.node();
  self->requires_grad = true;
  for (const auto& in : inputs) self->inputs.push_back(in.node_ptr());
  self->backward = [self, fn = std::forward<Backward>(backward)]() { fn(*self); };
  return out;
}

template <typename T, typename Backward>
Tensor<T> make_op(Shape shape, std::vector<T> values, std::initializer_list<Tensor<T>> inputs, Backward&& backward) {
  return make_op(shape, std::move(values), std::vector<Tensor<T>>(inputs), std::forward<Backward>(backward));
}

/// Gradient sink for input i of `self`, or nullptr if that input needs none.
template <typename T>
T* grad_of(Node<T>& self, std::size_t i) {
  Node<T>* in = self.inputs[i].get();
  return in->requires_grad ? in->ensure_grad().data() : nullptr;
}

}  // namespace detail

}  // namespace flowline::nn
