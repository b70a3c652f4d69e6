#pragma once

// Pure forward kernels and their vector-Jacobian products. Every function
// here is stateless and deterministic; the tape in tape.hpp wires them up.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "zoomvqa/tensor.hpp"

namespace zoomvqa::ops {

struct Stride3 {
  std::size_t t = 1, h = 1, w = 1;
};

struct Pad3 {
  std::size_t t = 0, h = 0, w = 0;
};

namespace detail {

inline void require_rank(const Shape& shape, std::size_t rank, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(shape));
  }
}

inline std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                            const char* axis) {
  if (stride == 0) throw DimensionError(std::string("stride along ") + axis + " must be >= 1");
  if (k > in + 2 * pad) {
    throw DimensionError(std::string("kernel extent ") + std::to_string(k) + " exceeds padded input " +
                         std::to_string(in + 2 * pad) + " along " + axis);
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Range of output positions o with 0 <= o*stride + tap - pad < in.
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t in, std::size_t tap,
                                                       std::size_t stride, std::size_t pad) {
  std::size_t lo = 0;
  if (tap < pad) lo = (pad - tap + stride - 1) / stride;
  // o*stride + tap - pad <= in - 1
  std::size_t hi = 0;
  if (in + pad > tap) hi = std::min(out, (in + pad - tap - 1) / stride + 1);
  return {std::min(lo, hi), hi};
}

template <typename T>
void check_bias(const BasicTensor<T>* bias, std::size_t channels) {
  if (bias && (bias->rank() != 1 || bias->dim(0) != channels)) {
    throw DimensionError("bias shape " + shape_str(bias->shape()) + " does not match " +
                         std::to_string(channels) + " output channels");
  }
}

}  // namespace detail

/// Cross-correlation of a [C,H,W] map with a [Co,C,kh,kw] kernel.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const std::type_identity_t<BasicTensor<T>>* bias,
                      std::size_t stride, std::size_t padding) {
  detail::require_rank(input.shape(), 3, "conv2d input");
  detail::require_rank(kernel.shape(), 4, "conv2d kernel");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t Co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != C) {
    throw DimensionError("conv2d: input channels " + std::to_string(C) + " != kernel axis 1 " +
                         std::to_string(kernel.dim(1)));
  }
  detail::check_bias(bias, Co);
  const std::size_t Ho = detail::conv_out(H, kh, stride, padding, "H");
  const std::size_t Wo = detail::conv_out(W, kw, stride, padding, "W");
  BasicTensor<T> out(Shape{Co, Ho, Wo});
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  T* o = out.data().data();
  for (std::size_t co = 0; co < Co; ++co) {
    T* oc = o + co * Ho * Wo;
    if (bias) std::fill(oc, oc + Ho * Wo, (*bias)[co]);
    for (std::size_t ci = 0; ci < C; ++ci) {
      const T* ic = in + ci * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [y0, y1] = detail::valid_range(Ho, H, ky, stride, padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const T wv = k[((co * C + ci) * kh + ky) * kw + kx];
          if (wv == T{0}) continue;
          const auto [x0, x1] = detail::valid_range(Wo, W, kx, stride, padding);
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const T* row = ic + (oy * stride + ky - padding) * W;
            T* orow = oc + oy * Wo;
            for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * stride + kx - padding];
          }
        }
      }
    }
  }
  return out;
}

/// Gradients of conv2d. Null outputs are skipped.
template <typename T>
void conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& grad_out,
                     std::size_t stride, std::size_t padding, BasicTensor<T>* grad_in, BasicTensor<T>* grad_kernel,
                     BasicTensor<T>* grad_bias) {
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t Co = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::size_t Ho = grad_out.dim(1), Wo = grad_out.dim(2);
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  const T* g = grad_out.data().data();
  for (std::size_t co = 0; co < Co; ++co) {
    const T* gc = g + co * Ho * Wo;
    if (grad_bias) {
      T s = 0;
      for (std::size_t i = 0; i < Ho * Wo; ++i) s += gc[i];
      (*grad_bias)[co] += s;
    }
    for (std::size_t ci = 0; ci < C; ++ci) {
      const T* ic = in + ci * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const auto [y0, y1] = detail::valid_range(Ho, H, ky, stride, padding);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const auto [x0, x1] = detail::valid_range(Wo, W, kx, stride, padding);
          const std::size_t kidx = ((co * C + ci) * kh + ky) * kw + kx;
          const T wv = k[kidx];
          T acc = 0;
          for (std::size_t oy = y0; oy < y1; ++oy) {
            const std::size_t iy = oy * stride + ky - padding;
            const T* grow = gc + oy * Wo;
            if (grad_kernel) {
              const T* row = ic + iy * W;
              for (std::size_t ox = x0; ox < x1; ++ox) acc += grow[ox] * row[ox * stride + kx - padding];
            }
            if (grad_in && wv != T{0}) {
              T* girow = grad_in->data().data() + ci * H * W + iy * W;
              for (std::size_t ox = x0; ox < x1; ++ox) girow[ox * stride + kx - padding] += wv * grow[ox];
            }
          }
          if (grad_kernel) (*grad_kernel)[kidx] += acc;
        }
      }
    }
  }
}

/// Cross-correlation of a [C,T,H,W] volume with a [Co,C,kt,kh,kw] kernel.
template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const std::type_identity_t<BasicTensor<T>>* bias,
                      Stride3 stride, Pad3 pad = {}) {
  detail::require_rank(input.shape(), 4, "conv3d input");
  detail::require_rank(kernel.shape(), 5, "conv3d kernel");
  const std::size_t C = input.dim(0), Ti = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Co = kernel.dim(0), kt = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  if (kernel.dim(1) != C) {
    throw DimensionError("conv3d: input channels " + std::to_string(C) + " != kernel axis 1 " +
                         std::to_string(kernel.dim(1)));
  }
  detail::check_bias(bias, Co);
  const std::size_t To = detail::conv_out(Ti, kt, stride.t, pad.t, "T");
  const std::size_t Ho = detail::conv_out(H, kh, stride.h, pad.h, "H");
  const std::size_t Wo = detail::conv_out(W, kw, stride.w, pad.w, "W");
  BasicTensor<T> out(Shape{Co, To, Ho, Wo});
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  T* o = out.data().data();
  const std::size_t plane = Ho * Wo;
  for (std::size_t co = 0; co < Co; ++co) {
    T* oc = o + co * To * plane;
    if (bias) std::fill(oc, oc + To * plane, (*bias)[co]);
    for (std::size_t ci = 0; ci < C; ++ci) {
      const T* ic = in + ci * Ti * H * W;
      for (std::size_t kz = 0; kz < kt; ++kz) {
        const auto [t0, t1] = detail::valid_range(To, Ti, kz, stride.t, pad.t);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const auto [y0, y1] = detail::valid_range(Ho, H, ky, stride.h, pad.h);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const T wv = k[(((co * C + ci) * kt + kz) * kh + ky) * kw + kx];
            if (wv == T{0}) continue;
            const auto [x0, x1] = detail::valid_range(Wo, W, kx, stride.w, pad.w);
            for (std::size_t ot = t0; ot < t1; ++ot) {
              const T* islice = ic + (ot * stride.t + kz - pad.t) * H * W;
              T* oslice = oc + ot * plane;
              for (std::size_t oy = y0; oy < y1; ++oy) {
                const T* row = islice + (oy * stride.h + ky - pad.h) * W;
                T* orow = oslice + oy * Wo;
                for (std::size_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * stride.w + kx - pad.w];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv3d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernel, const BasicTensor<T>& grad_out,
                     Stride3 stride, Pad3 pad, BasicTensor<T>* grad_in, BasicTensor<T>* grad_kernel,
                     BasicTensor<T>* grad_bias) {
  const std::size_t C = input.dim(0), Ti = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Co = kernel.dim(0), kt = kernel.dim(2), kh = kernel.dim(3), kw = kernel.dim(4);
  const std::size_t To = grad_out.dim(1), Ho = grad_out.dim(2), Wo = grad_out.dim(3);
  const std::size_t plane = Ho * Wo;
  const T* in = input.data().data();
  const T* k = kernel.data().data();
  const T* g = grad_out.data().data();
  for (std::size_t co = 0; co < Co; ++co) {
    const T* gc = g + co * To * plane;
    if (grad_bias) {
      T s = 0;
      for (std::size_t i = 0; i < To * plane; ++i) s += gc[i];
      (*grad_bias)[co] += s;
    }
    for (std::size_t ci = 0; ci < C; ++ci) {
      const std::size_t ibase = ci * Ti * H * W;
      for (std::size_t kz = 0; kz < kt; ++kz) {
        const auto [t0, t1] = detail::valid_range(To, Ti, kz, stride.t, pad.t);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const auto [y0, y1] = detail::valid_range(Ho, H, ky, stride.h, pad.h);
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const auto [x0, x1] = detail::valid_range(Wo, W, kx, stride.w, pad.w);
            const std::size_t kidx = (((co * C + ci) * kt + kz) * kh + ky) * kw + kx;
            const T wv = k[kidx];
            T acc = 0;
            for (std::size_t ot = t0; ot < t1; ++ot) {
              const std::size_t islice = ibase + (ot * stride.t + kz - pad.t) * H * W;
              for (std::size_t oy = y0; oy < y1; ++oy) {
                const std::size_t irow = islice + (oy * stride.h + ky - pad.h) * W;
                const T* grow = gc + ot * plane + oy * Wo;
                if (grad_kernel) {
                  const T* row = in + irow;
                  for (std::size_t ox = x0; ox < x1; ++ox) acc += grow[ox] * row[ox * stride.w + kx - pad.w];
                }
                if (grad_in && wv != T{0}) {
                  T* girow = grad_in->data().data() + irow;
                  for (std::size_t ox = x0; ox < x1; ++ox) girow[ox * stride.w + kx - pad.w] += wv * grow[ox];
                }
              }
            }
            if (grad_kernel) (*grad_kernel)[kidx] += acc;
          }
        }
      }
    }
  }
}

/// Affine map along the last axis; leading axes are treated as a batch.
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  detail::require_rank(weight.shape(), 2, "fully_connected weight");
  if (input.rank() == 0) throw DimensionError("fully_connected: rank-0 input");
  const std::size_t Cout = weight.dim(0), Cin = weight.dim(1);
  if (input.shape().back() != Cin) {
    throw DimensionError("fully_connected: last axis " + std::to_string(input.shape().back()) +
                         " != weight in-features " + std::to_string(Cin));
  }
  detail::check_bias(&bias, Cout);
  const std::size_t rows = input.numel() / Cin;
  Shape out_shape = input.shape();
  out_shape.back() = Cout;
  BasicTensor<T> out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data().data() + r * Cin;
    for (std::size_t o = 0; o < Cout; ++o) {
      const T* w = weight.data().data() + o * Cin;
      T acc = bias[o];
      for (std::size_t i = 0; i < Cin; ++i) acc += w[i] * x[i];
      out[r * Cout + o] = acc;
    }
  }
  return out;
}

template <typename T>
void fully_connected_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                              const BasicTensor<T>& grad_out, BasicTensor<T>* grad_in, BasicTensor<T>* grad_weight,
                              BasicTensor<T>* grad_bias) {
  const std::size_t Cout = weight.dim(0), Cin = weight.dim(1);
  const std::size_t rows = input.numel() / Cin;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = input.data().data() + r * Cin;
    for (std::size_t o = 0; o < Cout; ++o) {
      const T g = grad_out[r * Cout + o];
      if (grad_bias) (*grad_bias)[o] += g;
      const T* w = weight.data().data() + o * Cin;
      for (std::size_t i = 0; i < Cin; ++i) {
        if (grad_weight) (*grad_weight)[o * Cin + i] += g * x[i];
        if (grad_in) (*grad_in)[r * Cin + i] += g * w[i];
      }
    }
  }
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  for (T& v : out.data()) v = v > T{0} ? v : T{0};
  return out;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  for (T& v : out.data()) v = sigmoid(v);
  return out;
}

template <typename T>
BasicTensor<T> hadamard(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("hadamard: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  BasicTensor<T> out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
  return out;
}

/// Concatenates along axis 0; all trailing axes must agree.
template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>* const> parts) {
  if (parts.empty()) throw DimensionError("concat_channels: no inputs");
  Shape trailing(parts[0]->shape().begin() + 1, parts[0]->shape().end());
  std::size_t channels = 0;
  for (const auto* p : parts) {
    if (p->rank() == 0 || Shape(p->shape().begin() + 1, p->shape().end()) != trailing) {
      throw DimensionError("concat_channels: " + shape_str(p->shape()) + " incompatible with trailing " +
                           shape_str(trailing));
    }
    channels += p->dim(0);
  }
  Shape shape{channels};
  shape.insert(shape.end(), trailing.begin(), trailing.end());
  std::vector<T> data;
  data.reserve(shape_numel(shape));
  for (const auto* p : parts) data.insert(data.end(), p->data().begin(), p->data().end());
  return BasicTensor<T>(std::move(shape), std::move(data));
}

namespace detail {
inline std::size_t pool_start(std::size_t i, std::size_t in, std::size_t out) { return (i * in) / out; }
inline std::size_t pool_end(std::size_t i, std::size_t in, std::size_t out) { return ((i + 1) * in + out - 1) / out; }
}  // namespace detail

/// Adaptive average pooling with floor/ceil region bounds.
template <typename T>
BasicTensor<T> adaptive_avg_pool2d(const BasicTensor<T>& input, std::size_t out_h, std::size_t out_w) {
  detail::require_rank(input.shape(), 3, "adaptive_avg_pool2d input");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  if (out_h == 0 || out_w == 0 || out_h > H || out_w > W) {
    throw DimensionError("adaptive_avg_pool2d: output " + std::to_string(out_h) + "x" + std::to_string(out_w) +
                         " not within input " + std::to_string(H) + "x" + std::to_string(W));
  }
  BasicTensor<T> out(Shape{C, out_h, out_w});
  for (std::size_t c = 0; c < C; ++c) {
    const T* ic = input.data().data() + c * H * W;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = detail::pool_start(oy, H, out_h), y1 = detail::pool_end(oy, H, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = detail::pool_start(ox, W, out_w), x1 = detail::pool_end(ox, W, out_w);
        T acc = 0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) acc += ic[y * W + x];
        out[(c * out_h + oy) * out_w + ox] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  return out;
}

template <typename T>
void adaptive_avg_pool2d_backward(const Shape& in_shape, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_in) {
  const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
  const std::size_t out_h = grad_out.dim(1), out_w = grad_out.dim(2);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const std::size_t y0 = detail::pool_start(oy, H, out_h), y1 = detail::pool_end(oy, H, out_h);
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const std::size_t x0 = detail::pool_start(ox, W, out_w), x1 = detail::pool_end(ox, W, out_w);
        const T g = grad_out[(c * out_h + oy) * out_w + ox] / static_cast<T>((y1 - y0) * (x1 - x0));
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) grad_in[(c * H + y) * W + x] += g;
      }
    }
  }
}

template <typename T>
T sum_all(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return acc;
}

template <typename T>
T mean_all(const BasicTensor<T>& x) {
  if (x.numel() == 0) throw DimensionError("mean_all of empty tensor");
  return sum_all(x) / static_cast<T>(x.numel());
}

}  // namespace zoomvqa::ops
