// Copyright 2026 The eend-dat Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices. Every value is a 2-D matrix; scalars are 1x1.
//
// A Tensor is a cheap handle to a shared graph node. Parameters are leaf
// nodes that live as long as the model; intermediate nodes live as long as
// some handle (or a downstream node) references them.

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace eend {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace detail {

inline bool& grad_disabled() {
  thread_local bool disabled = false;
  return disabled;
}

}  // namespace detail

/// Disables graph recording on the current thread for its lifetime.
/// Forward passes inside the guard produce plain values with no history.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_disabled()) { detail::grad_disabled() = true; }
  ~NoGradGuard() { detail::grad_disabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return !detail::grad_disabled(); }

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  // Set once the node has received any gradient since the last reset.
  bool touched = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Matrix& g) {
    if (!touched) {
      grad = g;
      touched = true;
    } else {
      grad += g;
    }
  }

  void reset_grad() {
    grad.resize(0, 0);
    touched = false;
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  /// A value that never receives gradient.
  static Tensor constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Tensor(std::move(n));
  }

  /// A trainable leaf.
  static Tensor parameter(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient accumulated by backward(); zeros if none arrived.
  Matrix grad() const {
    if (!node_->touched) return Matrix::Zero(rows(), cols());
    return node_->grad;
  }
  bool has_grad() const { return node_->touched; }
  void zero_grad() { node_->reset_grad(); }

  double item() const {
    if (rows() != 1 || cols() != 1) throw std::logic_error("item() on non-scalar tensor");
    return node_->value(0, 0);
  }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. When recording is off or no input needs gradient
/// the node carries no history.
inline Tensor make_result(Matrix value, std::vector<Tensor> inputs,
                          std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->inputs.reserve(inputs.size());
      for (auto& in : inputs) n->inputs.push_back(in.node());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

/// Reverse pass from a scalar root. Leaf gradients accumulate across calls
/// until zero_grad().
inline void backward(const Tensor& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw std::logic_error("backward() requires a scalar root");
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->touched && n->backward) n->backward(*n);
  }
}

}  // namespace eend
