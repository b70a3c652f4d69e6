#pragma once

// Training objectives with analytic gradients w.r.t. the predictions.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "zoomvqa/error.hpp"

namespace zoomvqa {

template <std::floating_point T>
struct ScalarLoss {
  T value{};
  T grad{};  // d loss / d pred
};

template <std::floating_point T>
struct BatchLoss {
  T value{};
  std::vector<T> grad;  // d loss / d pred_i
};

/// Predictions and labels of one training batch, with cached means.
template <std::floating_point T>
class BatchScores {
 public:
  BatchScores(std::vector<T> predictions, std::vector<T> labels)
      : pred_(std::move(predictions)), label_(std::move(labels)) {
    if (pred_.size() != label_.size()) {
      throw DimensionError("batch has " + std::to_string(pred_.size()) + " predictions but " +
                           std::to_string(label_.size()) + " labels");
    }
    if (pred_.empty()) throw ContractError("empty batch");
    for (std::size_t i = 0; i < pred_.size(); ++i) {
      if (!std::isfinite(pred_[i]) || !std::isfinite(label_[i])) throw NonFiniteError("non-finite batch score");
      pred_mean_ += pred_[i];
      label_mean_ += label_[i];
    }
    pred_mean_ /= static_cast<T>(pred_.size());
    label_mean_ /= static_cast<T>(label_.size());
  }

  std::size_t size() const noexcept { return pred_.size(); }
  std::span<const T> predictions() const noexcept { return pred_; }
  std::span<const T> labels() const noexcept { return label_; }
  T prediction_mean() const noexcept { return pred_mean_; }
  T label_mean() const noexcept { return label_mean_; }

 private:
  std::vector<T> pred_;
  std::vector<T> label_;
  T pred_mean_{};
  T label_mean_{};
};

/// 0.5 d^2 when |d| < 1, else |d| - 0.5, with d = label - pred.
template <std::floating_point T>
ScalarLoss<T> smooth_l1(T pred, T label) {
  const T d = label - pred;
  if (std::abs(d) < T{1}) return {T{0.5} * d * d, -d};
  return {std::abs(d) - T{0.5}, d > T{0} ? T{-1} : T{1}};
}

/// Signed distance of |d| to the smooth-L1 branch switch.
template <std::floating_point T>
T smooth_l1_kink(T pred, T label) {
  return std::abs(label - pred) - T{1};
}

/// (1 - r) / 2 with r the Pearson correlation of predictions and labels.
template <std::floating_point T>
BatchLoss<T> plcc_loss(const BatchScores<T>& b) {
  const std::size_t m = b.size();
  if (m < 2) throw ContractError("plcc_loss needs at least 2 samples");
  T sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const T x = b.predictions()[i] - b.prediction_mean();
    const T y = b.labels()[i] - b.label_mean();
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  if (!(sxx > T{0}) || !(syy > T{0})) {
    throw DegenerateBatchError(sxx > T{0} ? "labels have zero variance" : "predictions have zero variance");
  }
  const T norm = std::sqrt(sxx * syy);
  const T r = sxy / norm;
  BatchLoss<T> out{(T{1} - r) / T{2}, std::vector<T>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    const T x = b.predictions()[i] - b.prediction_mean();
    const T y = b.labels()[i] - b.label_mean();
    const T dr = y / norm - r * x / sxx;
    out.grad[i] = -dr / T{2};
  }
  return out;
}

namespace detail {
template <std::floating_point T>
T rank_sign(T yi, T yj) {
  return yi >= yj ? T{1} : T{-1};
}
}  // namespace detail

/// Pairwise hinge over all ordered pairs, averaged by m^2.
template <std::floating_point T>
BatchLoss<T> rank_loss(const BatchScores<T>& b) {
  const std::size_t m = b.size();
  if (m < 2) throw ContractError("rank_loss needs at least 2 samples");
  const auto y = b.labels();
  const auto p = b.predictions();
  const T scale = T{1} / static_cast<T>(m * m);
  BatchLoss<T> out{T{0}, std::vector<T>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const T e = detail::rank_sign(y[i], y[j]);
      const T arg = std::abs(y[i] - y[j]) - e * (p[i] - p[j]);
      if (arg > T{0}) {
        out.value += arg;
        out.grad[i] -= e * scale;
        out.grad[j] += e * scale;
      }
    }
  }
  out.value *= scale;
  return out;
}

/// Hinge arguments of every ordered pair with i != j, for kink detection.
template <std::floating_point T>
std::vector<T> rank_loss_kinks(const BatchScores<T>& b) {
  std::vector<T> out;
  const auto y = b.labels();
  const auto p = b.predictions();
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      if (i != j) out.push_back(std::abs(y[i] - y[j]) - detail::rank_sign(y[i], y[j]) * (p[i] - p[j]));
  return out;
}

template <std::floating_point T>
BatchLoss<T> combined_vqa_loss(const BatchScores<T>& b, T beta = T{0.3}) {
  BatchLoss<T> out = plcc_loss(b);
  if (beta == T{0}) return out;
  const BatchLoss<T> rank = rank_loss(b);
  out.value += beta * rank.value;
  for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += beta * rank.grad[i];
  return out;
}

}  // namespace zoomvqa
