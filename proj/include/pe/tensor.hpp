#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "pe/common.hpp"

namespace pe {

struct TensorImpl {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void()> backprop;  // accumulates into parents' grads

  size_t size() const {
    size_t n = 1;
    for (int s : shape) n *= static_cast<size_t>(s);
    return n;
  }
};

// Value-semantics handle onto a tape node. Ops are free functions that
// build the graph; backward() runs the tape in reverse topological order.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(impl_->size(), 0.0);
    impl_->requires_grad = requires_grad;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    if (data.size() != t.size()) throw ShapeMismatch("data size does not match shape");
    t.impl_->data = std::move(data);
    return t;
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int>& shape() const { return impl_->shape; }
  int dim() const { return static_cast<int>(impl_->shape.size()); }
  size_t size() const { return impl_->size(); }
  bool requires_grad() const { return impl_->requires_grad; }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  std::vector<double>& grad() { return impl_->grad; }
  const std::vector<double>& grad() const { return impl_->grad; }

  double item() const { return impl_->data.at(0); }

  std::shared_ptr<TensorImpl> impl() const { return impl_; }

  // Same storage, new shape metadata. Element count must match.
  Tensor reshape(std::vector<int> shape) const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

namespace autodiff_detail {

inline Tensor make_result(std::vector<int> shape,
                          std::vector<Tensor> parents) {
  Tensor out(std::move(shape));
  bool rg = false;
  for (const auto& p : parents) {
    rg = rg || p.requires_grad();
    out.impl()->parents.push_back(p.impl());
  }
  out.impl()->requires_grad = rg;
  return out;
}

inline void ensure_grad(TensorImpl& t) {
  if (t.grad.size() != t.size()) t.grad.assign(t.size(), 0.0);
}

}  // namespace autodiff_detail

inline Tensor Tensor::reshape(std::vector<int> shape) const {
  Tensor out = autodiff_detail::make_result(std::move(shape), {*this});
  if (out.size() != size()) throw ShapeMismatch("reshape changes element count");
  out.data() = data();
  auto self = out.impl().get();
  auto parent = impl_;
  out.impl()->backprop = [self, parent]() {
    for (size_t i = 0; i < parent->grad.size(); ++i) parent->grad[i] += self->grad[i];
  };
  return out;
}

// Reverse-mode sweep from a scalar loss. Zeroes grads of every node
// reachable from `loss` before accumulating, so repeated steps on
// persistent parameters do not need a separate zero_grad pass.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1) throw ShapeMismatch("backward expects a scalar loss");
  std::vector<std::shared_ptr<TensorImpl>> order;
  std::unordered_set<TensorImpl*> seen;
  // iterative post-order DFS
  std::vector<std::pair<std::shared_ptr<TensorImpl>, size_t>> stack;
  stack.push_back({loss.impl(), 0});
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto child = node->parents[next++];
      if (seen.insert(child.get()).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (auto& n : order) {
    autodiff_detail::ensure_grad(*n);
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  loss.impl()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backprop) (*it)->backprop();
}

}  // namespace pe
