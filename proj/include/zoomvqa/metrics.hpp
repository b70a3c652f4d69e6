#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "zoomvqa/error.hpp"

namespace zoomvqa {

struct EvalMetrics {
  double srcc = 0.0;
  double plcc = 0.0;
  double main_score = 0.0;
};

/// 1-based fractional ranks; tied values share the mean of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson linear correlation.
inline double plcc_metric(std::span<const double> pred, std::span<const double> label) {
  if (pred.size() != label.size()) throw DimensionError("plcc: length mismatch");
  const std::size_t m = pred.size();
  if (m < 2) throw UndefinedMetricError("plcc needs at least 2 samples, got " + std::to_string(m));
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / static_cast<double>(m);
  const double ml = std::accumulate(label.begin(), label.end(), 0.0) / static_cast<double>(m);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double x = pred[i] - mp, y = label[i] - ml;
    sxy += x * y;
    sxx += x * x;
    syy += y * y;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw UndefinedMetricError("correlation of a zero-variance vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank correlation with tie-averaged ranks.
inline double srcc(std::span<const double> pred, std::span<const double> label) {
  if (pred.size() != label.size()) throw DimensionError("srcc: length mismatch");
  if (pred.size() < 2) throw UndefinedMetricError("srcc needs at least 2 samples");
  const auto rp = fractional_ranks(pred);
  const auto rl = fractional_ranks(label);
  return plcc_metric(rp, rl);
}

inline EvalMetrics main_score(std::span<const double> pred, std::span<const double> label) {
  EvalMetrics m;
  m.srcc = srcc(pred, label);
  m.plcc = plcc_metric(pred, label);
  m.main_score = (m.srcc + m.plcc) / 2.0;
  return m;
}

}  // namespace zoomvqa
