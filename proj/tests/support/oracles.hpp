#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Written as plainly as possible, in double, with no shared code
// from the library beyond the tensor container.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "zoomvqa/tensor.hpp"

namespace oracle {

using zoomvqa::Shape;
using zoomvqa::Tensor;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.data()) v = u(rng);
  return t;
}

inline zoomvqa::Tensor64 random_tensor64(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  zoomvqa::Tensor64 t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Response of a stride-kp tokenizer that only sees the central k x k taps
/// of each kp x kp window, computed directly from the unexpanded kernel.
template <class Ten>
std::vector<double> centre_window_response(const Ten& in, const Ten& k, std::size_t kp) {
  const std::size_t C = in.dim(0), T = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t Co = k.dim(0), kt = k.dim(2), ks = k.dim(3), pad = (kp - ks) / 2;
  const std::size_t To = T / kt, Ho = H / kp, Wo = W / kp;
  std::vector<double> out(Co * To * Ho * Wo, 0.0);
  for (std::size_t o = 0; o < Co; ++o)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < kt; ++a)
              for (std::size_t i = 0; i < ks; ++i)
                for (std::size_t j = 0; j < ks; ++j)
                  acc += static_cast<double>(in[((c * T + t * kt + a) * H + y * kp + pad + i) * W + x * kp + pad + j]) *
                         k[(((o * C + c) * kt + a) * ks + i) * ks + j];
          out[((o * To + t) * Ho + y) * Wo + x] = acc;
        }
  return out;
}

/// Direct nested loops, zero padding outside the input.
inline std::vector<double> conv2d(const Tensor& in, const Tensor& k, std::size_t stride, std::size_t pad,
                                  std::size_t& ho, std::size_t& wo) {
  const long C = in.dim(0), H = in.dim(1), W = in.dim(2);
  const long Co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  ho = (H + 2 * pad - kh) / stride + 1;
  wo = (W + 2 * pad - kw) / stride + 1;
  std::vector<double> out(Co * ho * wo, 0.0);
  for (long o = 0; o < Co; ++o)
    for (long y = 0; y < static_cast<long>(ho); ++y)
      for (long x = 0; x < static_cast<long>(wo); ++x) {
        double acc = 0.0;
        for (long c = 0; c < C; ++c)
          for (long i = 0; i < kh; ++i)
            for (long j = 0; j < kw; ++j) {
              const long sy = y * static_cast<long>(stride) + i - static_cast<long>(pad);
              const long sx = x * static_cast<long>(stride) + j - static_cast<long>(pad);
              if (sy < 0 || sx < 0 || sy >= H || sx >= W) continue;
              acc += static_cast<double>(in[(c * H + sy) * W + sx]) * k[((o * C + c) * kh + i) * kw + j];
            }
        out[(o * ho + y) * wo + x] = acc;
      }
  return out;
}

template <class Ten>
std::vector<double> conv3d(const Ten& in, const Ten& k, std::size_t st, std::size_t sh, std::size_t sw,
                                  std::size_t pt, std::size_t ph, std::size_t pw) {
  const long C = in.dim(0), T = in.dim(1), H = in.dim(2), W = in.dim(3);
  const long Co = k.dim(0), kt = k.dim(2), kh = k.dim(3), kw = k.dim(4);
  const long To = (T + 2 * pt - kt) / st + 1, Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  std::vector<double> out(Co * To * Ho * Wo, 0.0);
  for (long o = 0; o < Co; ++o)
    for (long t = 0; t < To; ++t)
      for (long y = 0; y < Ho; ++y)
        for (long x = 0; x < Wo; ++x) {
          double acc = 0.0;
          for (long c = 0; c < C; ++c)
            for (long a = 0; a < kt; ++a)
              for (long i = 0; i < kh; ++i)
                for (long j = 0; j < kw; ++j) {
                  const long s0 = t * st + a - pt, s1 = y * sh + i - ph, s2 = x * sw + j - pw;
                  if (s0 < 0 || s1 < 0 || s2 < 0 || s0 >= T || s1 >= H || s2 >= W) continue;
                  acc += static_cast<double>(in[((c * T + s0) * H + s1) * W + s2]) *
                         k[(((o * C + c) * kt + a) * kh + i) * kw + j];
                }
          out[((o * To + t) * Ho + y) * Wo + x] = acc;
        }
  return out;
}

/// rows x cin times (cout x cin)^T plus bias.
inline std::vector<double> matmul(const Tensor& in, const Tensor& w, const Tensor& b) {
  const std::size_t cin = w.dim(1), cout = w.dim(0), rows = in.numel() / cin;
  std::vector<double> out(rows * cout);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < cout; ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < cin; ++i) acc += static_cast<double>(in[r * cin + i]) * w[o * cin + i];
      out[r * cout + o] = acc;
    }
  return out;
}

/// Exact block means for divisible sizes.
inline std::vector<double> block_mean(const Tensor& in, std::size_t oh, std::size_t ow) {
  const std::size_t C = in.dim(0), H = in.dim(1), W = in.dim(2), bh = H / oh, bw = W / ow;
  std::vector<double> out(C * oh * ow);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t i = 0; i < bh; ++i)
          for (std::size_t j = 0; j < bw; ++j) s += in[(c * H + y * bh + i) * W + x * bw + j];
        out[(c * oh + y) * ow + x] = s / static_cast<double>(bh * bw);
      }
  return out;
}

/// Pearson r from the textbook single-pass sums formula, in long double.
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double n = static_cast<long double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const long double mx = sx / n, my = sy / n;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

/// Rank by counting: 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double w : v) {
      if (w < v[i]) ++less;
      if (w == v[i]) ++equal;
    }
    r[i] = 1.0 + static_cast<double>(less) + (static_cast<double>(equal) - 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

/// Without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
inline double spearman_no_ties(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

/// Pairwise hinge sum over all ordered pairs, written from the definition.
inline double rank_loss(const std::vector<double>& pred, const std::vector<double>& y) {
  const std::size_t m = y.size();
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double e = y[i] >= y[j] ? 1.0 : -1.0;
      s += std::max(0.0, std::abs(y[i] - y[j]) - e * (pred[i] - pred[j]));
    }
  return s / static_cast<double>(m * m);
}

}  // namespace oracle
