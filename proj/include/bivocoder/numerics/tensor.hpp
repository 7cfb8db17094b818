#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace bivocoder::numerics {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

/// Row-major dense array. Plain value type, no gradient bookkeeping.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require_dims(shape_size(shape) == data.size(),
                 "tensor data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_string(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
};

template <typename T>
bool all_finite(std::span<const T> xs) {
  for (T x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

template <typename T>
struct Node;

template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

template <typename T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }

  /// Gradient buffer of parent i, or nullptr when that parent does not need one.
  T* parent_grad(std::size_t i) {
    Node& p = *parents[i];
    if (!p.requires_grad) return nullptr;
    p.ensure_grad();
    return p.grad.data();
  }
};

/// Handle to a node of the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }
  static Var constant(Tensor<T> value) { return Var(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t dim(std::size_t i) const { return node_->value.shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value.data; }
  T item() const {
    require_dims(size() == 1, "item() on non-scalar tensor " + shape_string(shape()));
    return node_->value.data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// New leaf holding a copy of the value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates an op result. The backward closure is kept only if some input needs gradients.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (grad_mode())
    for (const auto& in : inputs)
      if (in.requires_grad()) node->requires_grad = true;
  if (node->requires_grad) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_ptr());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

/// Reverse-mode sweep from a scalar loss; accumulates into every reachable leaf's grad.
template <typename T>
void backward(const Var<T>& loss) {
  require_dims(loss.size() == 1, "backward() needs a scalar loss, got " + shape_string(loss.shape()));
  if (!std::isfinite(loss.item())) throw NonFiniteError("backward() on non-finite loss");
  if (!loss.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  std::unordered_set<const Node<T>*> visited;
  stack.emplace_back(&loss.node(), 0);
  visited.insert(&loss.node());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node<T>* p = n->parents[idx++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node().ensure_grad();
  loss.node().grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace bivocoder::numerics
