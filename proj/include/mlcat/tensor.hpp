#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared graph node. Every operation in
// ops.hpp creates a new node that remembers its inputs and a closure that
// pushes the output gradient back into them. GradTape collects the nodes
// reachable from a scalar loss in topological order and replays the
// closures in reverse.
//
// The scalar type is a template parameter: models train in float and the
// gradient checks re-run the same code in double.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mlcat/error.hpp"

namespace mlcat {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily, on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    if (numel(shape) != data.size())
      throw Error(ErrorKind::dimension,
                  "tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_str(shape));
    for (auto d : shape)
      if (d == 0)
        throw Error(ErrorKind::dimension,
                    "tensor dimensions must be positive, got " +
                        shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }

  static Tensor filled(Shape shape, T v) {
    auto n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  // Gradient buffer; zero-filled if nothing has flowed into it yet.
  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T item() const {
    if (size() != 1)
      throw Error(ErrorKind::rank,
                  "item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  // Value copy detached from the graph.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Builds a result node for an operation. `backward` may be empty when no
  // input needs a gradient.
  static Tensor make_result(Shape shape, std::vector<T> value,
                            std::vector<Tensor> inputs,
                            std::function<void(Node<T>&)> backward) {
    Tensor out;
    out.node_ = std::make_shared<Node<T>>();
    out.node_->shape = std::move(shape);
    out.node_->value = std::move(value);
    bool any = false;
    for (auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      for (auto& in : inputs) out.node_->parents.push_back(in.node_);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Topologically ordered record of the operations a scalar loss depends on.
template <class T>
class GradTape {
 public:
  explicit GradTape(const Tensor<T>& loss) : loss_(loss) {
    if (loss.size() != 1)
      throw Error(ErrorKind::rank, "backward needs a scalar loss, got " +
                                       shape_str(loss.shape()));
    if (!loss.requires_grad()) return;
    // Iterative post-order DFS; parent order is fixed so the order is
    // deterministic.
    std::unordered_set<const Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Node<T>* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order_.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::size_t size() const { return order_.size(); }

  void backward() {
    if (order_.empty()) return;
    Node<T>* root = order_.back();
    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
      Node<T>* n = *it;
      if (!n->backward) continue;
      n->ensure_grad();
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backward(*n);
    }
  }

 private:
  Tensor<T> loss_;
  std::vector<Node<T>*> order_;
};

template <class T>
void backward(const Tensor<T>& loss) {
  GradTape<T>(loss).backward();
}

template <class To, class From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> v(t.data().begin(), t.data().end());
  return Tensor<To>(t.shape(), std::move(v), requires_grad);
}

}  // namespace mlcat
