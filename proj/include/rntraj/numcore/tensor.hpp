#pragma once

// Dense row-major matrix with reverse-mode automatic differentiation.
//
// Every value is a rank-2 array of doubles; vectors are 1xN rows and scalars
// are 1x1. Higher-rank data (a batch of sequences, a 3-D embedding table) is
// flattened into rows by the caller. Operations build a DAG of shared nodes
// and `backward()` walks it in reverse topological order.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rntraj/errors.hpp"

namespace rntraj::nc {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

inline std::string to_string(Shape s) {
  return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]";
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

}  // namespace detail

// Suspends graph recording on this thread (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return !detail::grad_disabled(); }

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape.size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + to_string(shape));
    }
    node_->shape = shape;
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0), requires_grad);
  }
  static Tensor full(std::size_t rows, std::size_t cols, double v, bool requires_grad = false) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, v), requires_grad);
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1, 1}, {v}, requires_grad);
  }
  static Tensor row(std::vector<double> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return Tensor({1, n}, std::move(v), requires_grad);
  }
  static Tensor identity(std::size_t n) {
    Tensor t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = 1.0;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  Shape shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  const std::vector<double>& data() const { return node_->value; }
  // Mutable access is for leaves only: parameter updates and perturbation.
  std::vector<double>& data() { return node_->value; }

  double operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape.cols + c];
  }
  double item() const {
    if (size() != 1) throw ContractError("item() on non-scalar tensor " + to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& grad() { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  // Copy of the values with no history.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }

  // Seeds d(self)/d(self) = 1; requires a scalar.
  void backward() const {
    if (size() != 1) {
      throw ContractError("backward() needs a scalar output, got " + to_string(shape()));
    }
    backward_with({1.0});
  }

  void backward_with(const std::vector<double>& seed) const {
    if (seed.size() != size()) throw DimensionError("backward seed size mismatch");
    if (!node_->requires_grad) return;
    std::vector<detail::Node*> order;
    topo_sort(order);
    auto& g = node_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward && n->grad.size() == n->value.size()) n->backward(*n);
    }
  }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  // Builds an op result; records history only when a parent needs it.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::initializer_list<const Tensor*> parents,
                            std::function<void(detail::Node&)> backward) {
    Tensor out(shape, std::move(values), false);
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor* p : parents) any = any || p->requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const Tensor* p : parents) out.node_->parents.push_back(p->node_);
    out.node_->backward = std::move(backward);
    return out;
  }

  static Tensor make_result(Shape shape, std::vector<double> values,
                            const std::vector<Tensor>& parents,
                            std::function<void(detail::Node&)> backward) {
    Tensor out(shape, std::move(values), false);
    if (!grad_enabled()) return out;
    bool any = false;
    for (const Tensor& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
    return out;
  }

 private:
  void topo_sort(std::vector<detail::Node*>& order) const {
    std::unordered_set<detail::Node*> seen;
    // Iterative post-order DFS; graphs from long decoders are deep.
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        detail::Node* p = n->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node> node_;
};

}  // namespace rntraj::nc
