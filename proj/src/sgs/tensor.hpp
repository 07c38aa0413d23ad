#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "sgs/common.hpp"

namespace sgs {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::int64_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

// Reverse-mode autodiff over dense N-d tensors. A Tensor is a shared handle
// to a graph node; ops append nodes whose backward closures accumulate into
// parent gradients. float is the training precision, double the precision
// for finite-difference validation.
template <class T>
class Tensor {
 public:
  struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // allocated lazily, same length as data
    bool requires_grad = false;
    std::vector<Tensor<T>> parents;
    std::function<void(Node&)> backward;

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad() {
      if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
  };

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor filled(Shape shape, T value, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data.assign(static_cast<std::size_t>(numel(t.node_->shape)), value);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (numel(shape) != static_cast<std::int64_t>(data.size())) {
      throw Error("tensor data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
    }
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return node_->size(); }
  std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  T* data() { return node_->data.data(); }
  const T* data() const { return node_->data.data(); }
  std::vector<T>& vec() { return node_->data; }
  const std::vector<T>& vec() const { return node_->data; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  T* grad() {
    node_->ensure_grad();
    return node_->grad.data();
  }
  const std::vector<T>& grad_vec() const { return node_->grad; }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    if (size() != 1) throw Error("item() on non-scalar tensor " + shape_str(shape()));
    return node_->data[0];
  }

  Node* node() const { return node_.get(); }

  // Leaf view of the same values: drops graph history so downstream use
  // does not back-propagate into this tensor's producers.
  Tensor detach() const {
    Tensor t;
    t.node_ = std::make_shared<Node>();
    t.node_->shape = node_->shape;
    t.node_->data = node_->data;
    t.node_->requires_grad = false;
    return t;
  }

  // Runs reverse-mode accumulation from this scalar. Gradients add into
  // whatever is already stored, so callers zero parameter grads per step.
  void backward() {
    if (size() != 1) throw Error("backward() requires a scalar loss");
    std::vector<Node*> order;
    topo_sort(order);
    node_->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward && n->requires_grad) n->backward(*n);
    }
  }

 private:
  void topo_sort(std::vector<Node*>& order) const {
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node* p = n->parents[next].node_.get();
        ++next;
        if (p != nullptr && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<Node> node_;
};

// Scoped switch that stops ops from recording backward closures; used for
// test-mode inference and data plumbing.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(enabled_ref()) { enabled_ref() = false; }
  ~NoGradGuard() { enabled_ref() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled() { return enabled_ref(); }

 private:
  static bool& enabled_ref() {
    thread_local bool enabled = true;
    return enabled;
  }
  bool prev_;
};

template <class T>
inline bool tape_active(std::initializer_list<const Tensor<T>*> inputs) {
  if (!NoGradGuard::grad_enabled()) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

}  // namespace sgs
