#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "deepnose/tensor.hpp"

namespace deepnose {

// Reverse-mode tape node.  Ops create nodes whose backward_fn scatters the
// node's grad into its parents' grads.  Graph edges point output -> inputs,
// so a reverse post-order DFS from the loss visits every consumer before the
// tensor it consumes.
template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily, freed right after backward_fn unless is_param
  bool requires_grad = false;
  bool is_param = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward_fn;

  Tensor<T>& ensure_grad() {
    if (grad.v.empty()) {
      grad.shape = value.shape;
      grad.v.assign(value.numel(), T(0));
    }
    return grad;
  }

  void zero_grad() {
    if (!grad.v.empty()) grad.fill(T(0));
  }
};

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
NodePtr<T> make_leaf(Tensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

template <typename T>
NodePtr<T> make_param(Tensor<T> value) {
  auto n = make_leaf(std::move(value), true);
  n->is_param = true;
  return n;
}

// Graph construction can be disabled wholesale (inference paths); ops then
// emit detached leaves and inputs become collectable as soon as the caller
// drops them.
inline bool& grad_mode() {
  static bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool saved;
  NoGradGuard() : saved(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = saved; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
bool tracks_grad(const NodePtr<T>& n) {
  return grad_mode() && n->requires_grad;
}

template <typename T>
NodePtr<T> make_op(const char* op, Tensor<T> value, std::initializer_list<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (grad_mode())
    for (const auto& p : parents)
      if (p->requires_grad) needs = true;
  if (needs) {
    n->requires_grad = true;
    n->parents.assign(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

// Backpropagate from a scalar root.  Non-parameter grads are released as soon
// as they have been consumed; with release_values the same applies to
// intermediate values, which caps peak memory during training steps.
template <typename T>
void backward(const NodePtr<T>& root, bool release_values = false) {
  if (root->value.numel() != 1) raise(ErrorKind::ShapeMismatch, "backward root must be a scalar");
  if (!root->requires_grad) raise(ErrorKind::InvalidConfig, "backward root does not require grad");

  // Iterative post-order DFS; reversed finish order is topological
  // (every consumer precedes its inputs).
  std::vector<Node<T>*> order;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  std::unordered_set<Node<T>*> seen;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.v.empty()) n->backward_fn(*n);
    if (!n->is_param) {
      n->grad.release();
      if (release_values && n->backward_fn) n->value.release();
    }
  }
}

}  // namespace deepnose
