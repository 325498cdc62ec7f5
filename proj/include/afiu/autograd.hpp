// Copyright 2026 The AFIU Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal tape-free reverse-mode differentiation: every op result keeps its
// inputs and a closure that pushes its gradient back into them.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "afiu/tensor.hpp"

namespace afiu {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows back
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  /// Zero-initialised gradient buffer shaped like value.
  Tensor<T>& grad_buffer();
  void accumulate_grad(const Tensor<T>& g);
};

/// Shared handle to a graph node. Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor<T>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
template <typename T>
void backward(const Var<T>& root);

bool grad_enabled();

/// Disables graph construction for its lifetime (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds an op result. The closure is attached only when gradients are
/// enabled and some input needs them.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, std::function<void(Node<T>&)> backward_fn);

}  // namespace afiu
