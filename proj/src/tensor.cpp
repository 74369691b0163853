// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#include "pointforge/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace pf::nn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool on) { grad_enabled = on; }

template <class T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) : node_(std::make_shared<Node>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw Error("tensor extents must be positive, got " + shape_str(shape));
  }
  node_->value.assign(numel(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad) : node_(std::make_shared<Node>()) {
  if (values.size() != numel(shape)) {
    throw Error("tensor data length " + std::to_string(values.size()) + " does not match shape " +
                shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::from_op(Shape shape, std::vector<T> value, std::vector<Tensor> inputs, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(value));
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->inputs.reserve(inputs.size());
  for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
  out.node_->backward = std::move(backward);
  return out;
}

template <class T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) throw Error("item() on tensor of shape " + shape_str(node_->shape));
  return node_->value[0];
}

template <class T>
void Tensor<T>::backward() {
  if (!node_->requires_grad) throw Error("backward() on a tensor that does not require grad");
  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
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
  node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    for (auto& in : n->inputs) {
      if (in->requires_grad) in->ensure_grad();
    }
    n->backward(*n);
    // Interior gradients are not needed once propagated.
    if (n != node_.get()) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(node_->shape, node_->value, node_->requires_grad);
  out.node_->grad = node_->grad;
  return out;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pf::nn
