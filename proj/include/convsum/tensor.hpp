#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "convsum/error.hpp"

namespace convsum {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad, accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// RAII scope that stops graph recording on this thread (inference).
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Copies share storage (handle semantics); use `clone()` for a deep copy.
/// Every op result records its parents and a backward closure when at least
/// one input requires a gradient and recording is enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape), 0.0);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double value, bool requires_grad = false) {
    std::vector<double> v(shape_size(shape), value);
    return from(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size())
      throw ContractViolation("tensor: shape " + shape_str(shape) + " does not match " +
                              std::to_string(values.size()) + " values");
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor scalar(double v, bool requires_grad = false) { return from({}, {v}, requires_grad); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node().shape; }
  std::size_t dim() const { return shape().size(); }
  std::size_t size() const { return node().value.size(); }
  std::size_t rows() const {
    require(dim() == 2, "rows(): tensor is not 2-D");
    return shape()[0];
  }
  std::size_t cols() const {
    require(dim() == 2, "cols(): tensor is not 2-D");
    return shape()[1];
  }

  std::span<const double> values() const { return node().value; }
  /// Direct write access, for parameter updates and test perturbations only.
  std::span<double> mutable_values() { return node().value; }
  double item() const {
    require(size() == 1, "item(): tensor has " + std::to_string(size()) + " elements");
    return node().value[0];
  }
  double at(std::size_t r, std::size_t c) const { return node().value[r * cols() + c]; }

  bool requires_grad() const { return node().requires_grad; }
  void set_requires_grad(bool on) { node().requires_grad = on; }
  bool has_grad() const { return !node().grad.empty(); }
  std::span<const double> grad() const { return node().grad; }
  std::span<double> mutable_grad() { return node().grad_buffer(); }
  void zero_grad() { node().grad.clear(); }
  const std::string& op() const { return node().op; }

  Tensor clone(bool requires_grad = false) const {
    return from(shape(), node().value, requires_grad);
  }

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate (+=).
  void backward() const;

  detail::Node& node() const {
    if (!node_) throw ContractViolation("use of undefined tensor");
    return *node_;
  }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void check_finite(std::span<const double> v, const std::string& op) {
  for (double x : v)
    if (!std::isfinite(x)) throw NonFiniteError(op);
}

/// Builds an op result; wires up the graph only when some parent needs a gradient.
inline Tensor make_result(std::string op, Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = std::move(op);
  if (grad_enabled()) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.handle());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

}  // namespace detail

inline void Tensor::backward() const {
  detail::Node& root = node();
  if (root.value.size() != 1 || !root.shape.empty())
    throw ContractViolation("backward(): loss must be a scalar, got shape " + shape_str(root.shape));
  if (!root.requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  root.grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    detail::check_finite(n->grad, n->op + " (backward)");
    n->backward(*n);
  }
  for (detail::Node* n : order)
    if (!n->backward && !n->grad.empty()) detail::check_finite(n->grad, n->op + " (gradient)");
}

}  // namespace convsum
