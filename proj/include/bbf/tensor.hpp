#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "bbf/common.hpp"

// Reverse-mode autodiff tape. Every op builds a fresh Node whose backward
// closure scatters the node's gradient into its parents; backward() walks the
// graph once in reverse topological order. Gradients of leaf tensors
// accumulate across backward calls until explicitly zeroed (the optimizer
// owns that), interior nodes are freed with the graph.

namespace bbf {

/// Disables tape construction for the current thread while alive (used for
/// target-network forwards and action selection). Nests.
class NoGradGuard {
 public:
  NoGradGuard() { ++depth(); }
  ~NoGradGuard() { --depth(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
  static bool active() { return depth() > 0; }

 private:
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

/// Makes every op validate its output for NaN/inf while alive, throwing
/// NumericFault at the first offender. Costs a scan per op; meant for tests
/// and fault diagnosis, not the hot path.
class FiniteCheckGuard {
 public:
  FiniteCheckGuard() { ++depth(); }
  ~FiniteCheckGuard() { --depth(); }
  FiniteCheckGuard(const FiniteCheckGuard&) = delete;
  FiniteCheckGuard& operator=(const FiniteCheckGuard&) = delete;
  static bool active() { return depth() > 0; }

 private:
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  int64_t size() const { return static_cast<int64_t>(value.size()); }

  T* grad_data() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad.data();
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T v, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(static_cast<size_t>(numel(shape)), v);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return filled({1}, v, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t size() const { return node_->size(); }
  int64_t dim(size_t i) const { return node_->shape.at(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T* grad() { return node_->grad_data(); }
  const std::vector<T>& grad_values() const { return node_->grad; }
  void zero_grad() { node_->zero_grad(); }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
  }

  /// Value copy detached from the tape.
  Tensor detach() const {
    auto n = std::make_shared<Node<T>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

  /// Reverse pass from a scalar root. Accumulates into leaf grads.
  void backward() const {
    if (!node_) throw std::logic_error("backward() on undefined tensor");
    if (size() != 1)
      throw ShapeError("backward() requires a scalar root, got " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reversed it yields each node before its
    // parents, which is the order backward closures must fire in.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }

    node_->grad_data()[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace bbf
