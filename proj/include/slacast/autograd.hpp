/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

// Reverse-mode differentiation over whole tensors.
//
// Each operation returns a Var whose Node remembers its parents and a closure
// that maps the node's gradient onto theirs. Calling backward() on a scalar
// walks the graph once in reverse topological order. Parameters are leaf
// nodes that outlive individual graphs, so gradients from several graphs
// accumulate into them until zero_grad().

#ifndef SLACAST_AUTOGRAD_HPP
#define SLACAST_AUTOGRAD_HPP

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "slacast/primitives.hpp"
#include "slacast/tensor.hpp"

namespace slacast::ag {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(Tensor g) {
    if (grad.empty()) {
      grad = std::move(g);
    } else {
      grad += g;
    }
  }
};

namespace detail {
inline thread_local int no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::no_grad_depth == 0; }

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
  }

  static Var parameter(Tensor value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  explicit operator bool() const noexcept { return static_cast<bool>(node_); }

  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and loaders; never call during backward.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds a result node. The closure runs only if some parent needs a
/// gradient and recording is enabled.
template <class Backward>
Var make_result(Tensor value, std::initializer_list<Var> parents,
                Backward&& backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled()) {
    for (const Var& p : parents) {
      if (p.requires_grad()) n->requires_grad = true;
    }
    if (n->requires_grad) {
      n->parents.reserve(parents.size());
      for (const Var& p : parents) n->parents.push_back(p.node_ptr());
      n->backward = std::forward<Backward>(backward);
    }
  }
  return Var(std::move(n));
}

/// Propagates d(root)/d(node) to every node reachable from a scalar root.
inline void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw std::invalid_argument("backward: root must be a scalar, got shape " +
                                to_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  // interior gradients are no longer needed; leaves keep theirs
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

// ---------------------------------------------------------------------------
// elementwise

inline Var add(const Var& a, const Var& b) {
  a.value().require_same_shape(b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  a.value().require_same_shape(b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(self.grad);
    if (self.parents[1]->requires_grad) {
      Tensor g = self.grad;
      g *= -1.0;
      self.parents[1]->accumulate(std::move(g));
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  a.value().require_same_shape(b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pb.value[i];
      pa.accumulate(std::move(g));
    }
    if (pb.requires_grad) {
      Tensor g = self.grad;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= pa.value[i];
      pb.accumulate(std::move(g));
    }
  });
}

inline Var scale(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return make_result(std::move(out), {a}, [s](Node& self) {
    Tensor g = self.grad;
    g *= s;
    self.parents[0]->accumulate(std::move(g));
  });
}

inline Var activation(const Var& x, Activation kind) {
  return make_result(activate(x.value(), kind), {x}, [kind](Node& self) {
    Node& px = *self.parents[0];
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] *= activation_slope(px.value[i], self.value[i], kind);
    }
    px.accumulate(std::move(g));
  });
}

// ---------------------------------------------------------------------------
// structural

inline Var reshape(const Var& a, Shape shape) {
  return make_result(a.value().reshaped(std::move(shape)), {a}, [](Node& self) {
    Node& p = *self.parents[0];
    p.accumulate(self.grad.reshaped(p.value.shape()));
  });
}

/// Rows [begin, begin+count) along the leading dimension.
inline Var slice(const Var& a, std::size_t begin, std::size_t count) {
  const Shape& in = a.shape();
  if (count == 0 || begin + count > in[0]) {
    throw std::invalid_argument("slice [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) +
                                ") out of range for shape " + to_string(in));
  }
  Shape out_shape = in;
  out_shape[0] = count;
  const std::size_t stride = a.value().size() / in[0];
  Tensor out(out_shape);
  std::copy_n(a.value().data() + begin * stride, count * stride, out.data());
  return make_result(std::move(out), {a}, [begin, stride](Node& self) {
    Node& p = *self.parents[0];
    Tensor g(p.value.shape());
    std::copy_n(self.grad.data(), self.grad.size(), g.data() + begin * stride);
    p.accumulate(std::move(g));
  });
}

// ---------------------------------------------------------------------------
// linear algebra and convolution

inline Var matmul(const Var& a, const Var& b) {
  return make_result(slacast::matmul(a.value(), b.value()), {a, b},
                     [](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       auto g = matmul_backward(pa.value, pb.value, self.grad);
                       if (pa.requires_grad) pa.accumulate(std::move(g.a));
                       if (pb.requires_grad) pb.accumulate(std::move(g.b));
                     });
}

/// Bias may be a null Var, meaning no bias term.
inline Var conv2d(const Var& x, const Var& kernels, const Var& bias,
                  std::size_t stride, Padding padding) {
  const Tensor zero_bias = bias ? Tensor() : Tensor(Shape{kernels.shape()[0]});
  const Tensor& b = bias ? bias.value() : zero_bias;
  Tensor out = slacast::conv2d(x.value(), kernels.value(), b, stride, padding);
  const Var bias_or_x = bias ? bias : x;
  const bool has_bias = static_cast<bool>(bias);
  return make_result(std::move(out), {x, kernels, bias_or_x},
                     [stride, padding, has_bias](Node& self) {
                       Node& px = *self.parents[0];
                       Node& pk = *self.parents[1];
                       auto g = conv2d_backward(px.value, pk.value, self.grad,
                                                stride, padding);
                       if (px.requires_grad) px.accumulate(std::move(g.input));
                       if (pk.requires_grad) pk.accumulate(std::move(g.kernels));
                       Node& pb = *self.parents[2];
                       if (has_bias && pb.requires_grad) {
                         pb.accumulate(std::move(g.bias));
                       }
                     });
}

inline Var deconv2d(const Var& x, const Var& kernels, const Var& bias,
                    std::size_t stride) {
  Tensor out = slacast::deconv2d(x.value(), kernels.value(), bias.value(), stride);
  return make_result(std::move(out), {x, kernels, bias}, [stride](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pb = *self.parents[2];
    auto g = deconv2d_backward(px.value, pk.value, self.grad, stride);
    if (px.requires_grad) px.accumulate(std::move(g.input));
    if (pk.requires_grad) pk.accumulate(std::move(g.kernels));
    if (pb.requires_grad) pb.accumulate(std::move(g.bias));
  });
}

inline Var maxpool2d(const Var& x, std::size_t k, std::size_t stride) {
  PoolResult r = slacast::maxpool2d(x.value(), k, stride);
  return make_result(std::move(r.output), {x},
                     [argmax = std::move(r.argmax)](Node& self) {
                       Node& px = *self.parents[0];
                       px.accumulate(
                           maxpool2d_backward(self.grad, argmax, px.value.shape()));
                     });
}

}  // namespace slacast::ag

#endif  // SLACAST_AUTOGRAD_HPP
