#pragma once

// Eager reverse-mode differentiation over Tensor<T>. Each op computes its
// value immediately and, when any input requires a gradient, records a
// closure that propagates the output gradient back to its parents.

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "latentwave/conv_kernels.hpp"
#include "latentwave/errors.hpp"
#include "latentwave/tensor.hpp"

namespace latentwave {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  bool is_leaf() const { return !backward_fn; }

  Tensor<T>& ensure_grad() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a node of the computation graph.
template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient buffer; allocated (zero) on first access.
  Tensor<T>& grad() { return node_->ensure_grad(); }
  const Tensor<T>& grad() const { return node_->ensure_grad(); }

  void zero_grad() {
    if (node_->grad.numel()) node_->grad.fill(T{0});
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> parameter(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<T>(std::move(n));
}

template <class T>
Var<T> constant(Tensor<T> value) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  return Var<T>(std::move(n));
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

/// While alive, ops on the current thread record no backward closures.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  bool needs = false;
  if (grad_mode_flag())
    for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
  if (needs) {
    n->requires_grad = true;
    for (auto& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

}  // namespace detail

/// Propagates d(root)/d(node) into every reachable node. Leaf gradients
/// accumulate across calls; interior gradients are recomputed each call.
template <class T>
void backward(const Var<T>& root) {
  if (root.value().numel() != 1) {
    throw ShapeError("backward needs a scalar output, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (!n->is_leaf()) n->ensure_grad().fill(T{0});
  }
  if (root.node()->is_leaf()) {
    root.node()->ensure_grad()[0] += T{1};
    return;
  }
  root.node()->grad[0] = T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward_fn(**it);
  }
}

enum class Padding { Same, Valid };

/// Cross-correlation of x (B,Ci,D,H,W) with w (Co,Ci,k,k,k), optional bias (Co).
template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride = 1,
              Padding padding = Padding::Same) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 5 || ws.size() != 5) throw ShapeError("conv3d expects 5-d input and kernel");
  if (ws[1] != xs[1]) {
    throw ShapeError("conv3d: input has " + std::to_string(xs[1]) + " channels, kernel expects " +
                     std::to_string(ws[1]));
  }
  if (ws[2] != ws[3] || ws[3] != ws[4] || ws[2] % 2 == 0) throw ShapeError("conv3d: kernel must be cubic and odd");
  if (stride != 1 && stride != 2) throw ShapeError("conv3d: stride must be 1 or 2");
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != ws[0])) {
    throw ShapeError("conv3d: bias shape " + shape_str(bias.shape()));
  }
  detail::ConvGeometry g;
  g.batch = xs[0];
  g.cin = xs[1];
  g.cout = ws[0];
  g.din = xs[2];
  g.hin = xs[3];
  g.win = xs[4];
  g.k = ws[2];
  g.stride = stride;
  g.pad = padding == Padding::Same ? g.k / 2 : 0;
  if (padding == Padding::Valid && (g.din < g.k || g.hin < g.k || g.win < g.k)) {
    throw ShapeError("conv3d: input smaller than kernel");
  }
  g.dout = detail::conv_out_dim(g.din, g.k, stride, g.pad);
  g.hout = detail::conv_out_dim(g.hin, g.k, stride, g.pad);
  g.wout = detail::conv_out_dim(g.win, g.k, stride, g.pad);

  Tensor<T> out(Shape{g.batch, g.cout, g.dout, g.hout, g.wout});
  detail::conv_forward<T>(x.value().data().data(), w.value().data().data(),
                          bias.defined() ? bias.value().data().data() : nullptr, out.data().data(), g);
  std::vector<Var<T>> parents{x, w};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return detail::make_result<T>(std::move(out), std::move(parents), [g, has_bias](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    const T* gy = self.grad.data().data();
    if (xn.requires_grad) {
      detail::conv_backward_input<T>(gy, wn.value.data().data(), xn.ensure_grad().data().data(), g);
    }
    T* gb = nullptr;
    if (has_bias && self.parents[2]->requires_grad) gb = self.parents[2]->ensure_grad().data().data();
    if (wn.requires_grad) {
      detail::conv_backward_weight<T>(xn.value.data().data(), gy, wn.ensure_grad().data().data(), gb, g);
    } else if (gb) {
      for (std::size_t b = 0; b < g.batch; ++b)
        for (std::size_t co = 0; co < g.cout; ++co) {
          const T* p = gy + (b * g.cout + co) * g.out_plane();
          T sum{0};
          for (std::size_t i = 0; i < g.out_plane(); ++i) sum += p[i];
          gb[co] += sum;
        }
    }
  });
}

template <class T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, std::size_t stride = 1, Padding padding = Padding::Same) {
  return conv3d(x, w, Var<T>{}, stride, padding);
}

/// Doubles every spatial dimension by voxel replication.
template <class T>
Var<T> upsample_nearest(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw ShapeError("upsample_nearest expects a 5-d tensor");
  const std::size_t nc = s[0] * s[1], d = s[2], h = s[3], w = s[4];
  Tensor<T> out(Shape{s[0], s[1], 2 * d, 2 * h, 2 * w});
  const T* in = x.value().data().data();
  T* o = out.data().data();
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t z = 0; z < 2 * d; ++z)
      for (std::size_t y = 0; y < 2 * h; ++y) {
        const T* src = in + ((c * d + z / 2) * h + y / 2) * w;
        T* dst = o + ((c * 2 * d + z) * 2 * h + y) * 2 * w;
        for (std::size_t i = 0; i < 2 * w; ++i) dst[i] = src[i / 2];
      }
  return detail::make_result<T>(std::move(out), {x}, [nc, d, h, w](Node<T>& self) {
    T* gx = self.parents[0]->ensure_grad().data().data();
    const T* gy = self.grad.data().data();
    for (std::size_t c = 0; c < nc; ++c)
      for (std::size_t z = 0; z < 2 * d; ++z)
        for (std::size_t y = 0; y < 2 * h; ++y) {
          T* dst = gx + ((c * d + z / 2) * h + y / 2) * w;
          const T* src = gy + ((c * 2 * d + z) * 2 * h + y) * 2 * w;
          for (std::size_t i = 0; i < 2 * w; ++i) dst[i / 2] += src[i];
        }
  });
}

/// y = x W^T + b for x (B, in), W (out, in), b (out).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  if (xs.size() != 2 || ws.size() != 2 || xs[1] != ws[1]) {
    throw ShapeError("linear: input " + shape_str(xs) + " vs weights " + shape_str(ws));
  }
  if (bias.defined() && (bias.shape().size() != 1 || bias.shape()[0] != ws[0])) {
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()));
  }
  const std::size_t B = xs[0], in = xs[1], outn = ws[0];
  Tensor<T> out(Shape{B, outn});
  const T* X = x.value().data().data();
  const T* W = weight.value().data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < outn; ++o) {
      T acc = bias.defined() ? bias.value()[o] : T{0};
      const T* xr = X + b * in;
      const T* wr = W + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      out[b * outn + o] = acc;
    }
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return detail::make_result<T>(std::move(out), std::move(parents), [B, in, outn, has_bias](Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    const T* gy = self.grad.data().data();
    if (xn.requires_grad) {
      T* gx = xn.ensure_grad().data().data();
      const T* W = wn.value.data().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < outn; ++o) {
          const T g = gy[b * outn + o];
          const T* wr = W + o * in;
          T* gr = gx + b * in;
          for (std::size_t i = 0; i < in; ++i) gr[i] += g * wr[i];
        }
    }
    if (wn.requires_grad) {
      T* gw = wn.ensure_grad().data().data();
      const T* X = xn.value.data().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < outn; ++o) {
          const T g = gy[b * outn + o];
          const T* xr = X + b * in;
          T* gr = gw + o * in;
          for (std::size_t i = 0; i < in; ++i) gr[i] += g * xr[i];
        }
    }
    if (has_bias && self.parents[2]->requires_grad) {
      T* gb = self.parents[2]->ensure_grad().data().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < outn; ++o) gb[o] += gy[b * outn + o];
    }
  });
}

/// x for x >= 0, slope * x otherwise. The derivative at exactly 0 is 1.
template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2)) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v >= T{0} ? v : slope * v;
  return detail::make_result<T>(std::move(out), {x}, [slope](Node<T>& self) {
    auto& xn = *self.parents[0];
    T* gx = xn.ensure_grad().data().data();
    const T* X = xn.value.data().data();
    const T* gy = self.grad.data().data();
    for (std::size_t i = 0; i < xn.value.numel(); ++i) gx[i] += X[i] >= T{0} ? gy[i] : slope * gy[i];
  });
}

template <class T>
Var<T> sin_activation(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = std::sin(v);
  return detail::make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& xn = *self.parents[0];
    T* gx = xn.ensure_grad().data().data();
    const T* X = xn.value.data().data();
    const T* gy = self.grad.data().data();
    for (std::size_t i = 0; i < xn.value.numel(); ++i) gx[i] += std::cos(X[i]) * gy[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  const auto bv = b.value().data();
  auto ov = out.data();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += bv[i];
  return detail::make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto gy = self.grad.data();
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto gp = p->ensure_grad().data();
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return detail::make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto gp = self.parents[0]->ensure_grad().data();
    const auto gy = self.grad.data();
    for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  T acc{0};
  for (T v : x.value().data()) acc += v;
  return detail::make_result<T>(Tensor<T>::scalar(acc), {x}, [](Node<T>& self) {
    auto gp = self.parents[0]->ensure_grad().data();
    const T g = self.grad[0];
    for (auto& v : gp) v += g;
  });
}

/// Mean absolute difference. The subgradient at a == b is 0.
template <class T>
Var<T> l1_loss(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "l1_loss");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const std::size_t n = av.size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(av[i] - bv[i]);
  return detail::make_result<T>(Tensor<T>::scalar(acc / static_cast<T>(n)), {a, b}, [n](Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(n);
    const auto av = self.parents[0]->value.data();
    const auto bv = self.parents[1]->value.data();
    for (int side = 0; side < 2; ++side) {
      auto& p = *self.parents[side];
      if (!p.requires_grad) continue;
      auto gp = p.ensure_grad().data();
      const T sign = side == 0 ? T{1} : T{-1};
      for (std::size_t i = 0; i < n; ++i) {
        const T d = av[i] - bv[i];
        if (d > T{0}) {
          gp[i] += sign * g;
        } else if (d < T{0}) {
          gp[i] -= sign * g;
        }
      }
    }
  });
}

/// Mean squared difference.
template <class T>
Var<T> l2_loss(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "l2_loss");
  const auto av = a.value().data();
  const auto bv = b.value().data();
  const std::size_t n = av.size();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T d = av[i] - bv[i];
    acc += d * d;
  }
  return detail::make_result<T>(Tensor<T>::scalar(acc / static_cast<T>(n)), {a, b}, [n](Node<T>& self) {
    const T g = T{2} * self.grad[0] / static_cast<T>(n);
    const auto av = self.parents[0]->value.data();
    const auto bv = self.parents[1]->value.data();
    for (int side = 0; side < 2; ++side) {
      auto& p = *self.parents[side];
      if (!p.requires_grad) continue;
      auto gp = p.ensure_grad().data();
      const T sign = side == 0 ? T{1} : T{-1};
      for (std::size_t i = 0; i < n; ++i) gp[i] += sign * g * (av[i] - bv[i]);
    }
  });
}

}  // namespace latentwave
