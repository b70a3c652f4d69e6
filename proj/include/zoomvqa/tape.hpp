#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zoomvqa/ops.hpp"
#include "zoomvqa/tensor.hpp"

namespace zoomvqa {

/// Handle to a tensor recorded on a tape.
struct Var {
  std::size_t id = 0;
};

/// Records forward ops in topological order and replays their
/// vector-Jacobian products in exact reverse order. One tape per worker.
template <std::floating_point T>
class BasicTape {
 public:
  using TensorT = BasicTensor<T>;

  /// When enabled, every relu pre-activation is appended to kink_values()
  /// so the gradient checker can detect coordinates that cross a kink.
  void set_kink_tracking(bool on) { track_kinks_ = on; }
  std::span<const T> kink_values() const { return kinks_; }
  void record_kink(T distance) {
    if (track_kinks_) kinks_.push_back(distance);
  }

  Var leaf(TensorT value, bool requires_grad = true) {
    check_finite(value, "leaf");
    nodes_.push_back(Node{std::move(value), TensorT(), requires_grad, BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const TensorT& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  /// Gradient buffer of v after backward(); zeros when nothing flowed into it.
  const TensorT& grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.empty() && n.value.numel() != 0) {
      auto& self = const_cast<BasicTape&>(*this);
      self.nodes_[v.id].grad = TensorT(n.value.shape());
    }
    return node(v).grad;
  }

  Var conv2d(Var x, Var k, std::optional<Var> b, std::size_t stride, std::size_t padding) {
    const TensorT* bias = b ? &value(*b) : nullptr;
    TensorT out = ops::conv2d(value(x), value(k), bias, stride, padding);
    return push_op(std::move(out), "conv2d", {x, k}, b, [=](BasicTape& t, std::size_t self) {
      const TensorT& g = t.nodes_[self].grad;
      ops::conv2d_backward(t.nodes_[x.id].value, t.nodes_[k.id].value, g, stride, padding, t.grad_slot(x),
                           t.grad_slot(k), b ? t.grad_slot(*b) : nullptr);
    });
  }

  Var conv3d(Var x, Var k, std::optional<Var> b, ops::Stride3 stride, ops::Pad3 pad = {}) {
    const TensorT* bias = b ? &value(*b) : nullptr;
    TensorT out = ops::conv3d(value(x), value(k), bias, stride, pad);
    return push_op(std::move(out), "conv3d", {x, k}, b, [=](BasicTape& t, std::size_t self) {
      const TensorT& g = t.nodes_[self].grad;
      ops::conv3d_backward(t.nodes_[x.id].value, t.nodes_[k.id].value, g, stride, pad, t.grad_slot(x),
                           t.grad_slot(k), b ? t.grad_slot(*b) : nullptr);
    });
  }

  Var fully_connected(Var x, Var w, Var b) {
    TensorT out = ops::fully_connected(value(x), value(w), value(b));
    return push_op(std::move(out), "fully_connected", {x, w, b}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      ops::fully_connected_backward(t.nodes_[x.id].value, t.nodes_[w.id].value, t.nodes_[self].grad,
                                    t.grad_slot(x), t.grad_slot(w), t.grad_slot(b));
    });
  }

  Var relu(Var x) {
    if (track_kinks_) {
      for (T v : value(x).data()) kinks_.push_back(v);
    }
    TensorT out = ops::relu(value(x));
    return push_op(std::move(out), "relu", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      TensorT* gi = t.grad_slot(x);
      if (!gi) return;
      const TensorT& in = t.nodes_[x.id].value;
      const TensorT& g = t.nodes_[self].grad;
      // subgradient 0 at the kink
      for (std::size_t i = 0; i < in.numel(); ++i)
        if (in[i] > T{0}) (*gi)[i] += g[i];
    });
  }

  Var sigmoid(Var x) {
    TensorT out = ops::sigmoid(value(x));
    return push_op(std::move(out), "sigmoid", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      TensorT* gi = t.grad_slot(x);
      if (!gi) return;
      const TensorT& y = t.nodes_[self].value;
      const TensorT& g = t.nodes_[self].grad;
      for (std::size_t i = 0; i < y.numel(); ++i) (*gi)[i] += g[i] * y[i] * (T{1} - y[i]);
    });
  }

  Var hadamard(Var a, Var b) {
    TensorT out = ops::hadamard(value(a), value(b));
    return push_op(std::move(out), "hadamard", {a, b}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      const TensorT& g = t.nodes_[self].grad;
      const TensorT& av = t.nodes_[a.id].value;
      const TensorT& bv = t.nodes_[b.id].value;
      if (TensorT* ga = t.grad_slot(a))
        for (std::size_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] * bv[i];
      if (TensorT* gb = t.grad_slot(b))
        for (std::size_t i = 0; i < g.numel(); ++i) (*gb)[i] += g[i] * av[i];
    });
  }

  Var concat_channels(std::span<const Var> parts) {
    std::vector<const TensorT*> ptrs;
    for (Var p : parts) ptrs.push_back(&value(p));
    TensorT out = ops::concat_channels<T>(ptrs);
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push_op(std::move(out), "concat_channels", inputs, std::nullopt,
                   [inputs](BasicTape& t, std::size_t self) {
                     const TensorT& g = t.nodes_[self].grad;
                     std::size_t offset = 0;
                     for (Var p : inputs) {
                       const std::size_t n = t.nodes_[p.id].value.numel();
                       if (TensorT* gp = t.grad_slot(p))
                         for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g[offset + i];
                       offset += n;
                     }
                   });
  }

  Var concat_channels(std::initializer_list<Var> parts) {
    return concat_channels(std::span<const Var>(parts.begin(), parts.size()));
  }

  Var adaptive_avg_pool2d(Var x, std::size_t out_h, std::size_t out_w) {
    TensorT out = ops::adaptive_avg_pool2d(value(x), out_h, out_w);
    return push_op(std::move(out), "adaptive_avg_pool2d", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      if (TensorT* gi = t.grad_slot(x))
        ops::adaptive_avg_pool2d_backward(t.nodes_[x.id].value.shape(), t.nodes_[self].grad, *gi);
    });
  }

  Var sum_all(Var x) {
    TensorT out = TensorT::scalar(ops::sum_all(value(x)));
    return push_op(std::move(out), "sum_all", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      const T g = t.nodes_[self].grad[0];
      if (TensorT* gi = t.grad_slot(x))
        for (T& v : gi->data()) v += g;
    });
  }

  Var mean_all(Var x) {
    TensorT out = TensorT::scalar(ops::mean_all(value(x)));
    return push_op(std::move(out), "mean_all", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      TensorT* gi = t.grad_slot(x);
      if (!gi) return;
      const T g = t.nodes_[self].grad[0] / static_cast<T>(gi->numel());
      for (T& v : gi->data()) v += g;
    });
  }

  /// Metadata-only reshape; gradients pass through unchanged.
  Var reshape(Var x, Shape shape) {
    TensorT out = value(x).reshaped(std::move(shape));
    return push_op(std::move(out), "reshape", {x}, std::nullopt, [=](BasicTape& t, std::size_t self) {
      const TensorT& g = t.nodes_[self].grad;
      if (TensorT* gi = t.grad_slot(x))
        for (std::size_t i = 0; i < g.numel(); ++i) (*gi)[i] += g[i];
    });
  }

  /// Reverse sweep from a scalar. `seed` is d(outer objective)/d(loss),
  /// which lets a batch loss computed off-tape drive several tapes.
  void backward(Var loss, T seed = T{1}) {
    if (node(loss).value.numel() != 1) {
      throw ContractError("backward requires a scalar loss, got " + shape_str(node(loss).value.shape()));
    }
    for (Node& n : nodes_) n.grad = TensorT();
    nodes_[loss.id].grad = TensorT::scalar(seed);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.backward) continue;
      n.backward(*this, i);
    }
  }

 private:
  using BackwardFn = std::function<void(BasicTape&, std::size_t)>;

  struct Node {
    TensorT value;
    TensorT grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    return nodes_[v.id];
  }

  static void check_finite(const TensorT& t, const char* op) {
    if (!t.all_finite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
  }

  // Lazily allocated gradient buffer, or null when v needs no gradient.
  TensorT* grad_slot(Var v) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = TensorT(n.value.shape());
    return &n.grad;
  }

  Var push_op(TensorT out, const char* name, std::vector<Var> inputs, std::optional<Var> extra, BackwardFn fn) {
    check_finite(out, name);
    bool rg = extra ? node(*extra).requires_grad : false;
    for (Var v : inputs) rg = rg || node(v).requires_grad;
    nodes_.push_back(Node{std::move(out), TensorT(), rg, rg ? std::move(fn) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  std::vector<T> kinks_;
  bool track_kinks_ = false;
};

using Tape = BasicTape<float>;
using Tape64 = BasicTape<double>;

}  // namespace zoomvqa
