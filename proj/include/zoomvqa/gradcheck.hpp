#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace zoomvqa {

/// One evaluation of the function under test. `kinks` lists the signed
/// distance of every declared non-smooth quantity to its kink (relu
/// pre-activations, |d|-1 for smooth-L1, hinge arguments), in a fixed order.
struct Probe {
  double value = 0.0;
  std::vector<double> kinks;
};

struct GradcheckOptions {
  double eps = 1e-6;
  double rel_tol = 1e-3;
  /// Kink exclusion radius, in multiples of eps.
  double kink_margin = 10.0;
  /// Denominator floor so near-zero gradients are compared absolutely.
  double abs_floor = 1e-6;
  /// Number of coordinates to sample; 0 checks all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct CoordinateCheck {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  bool skipped = false;
};

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  bool pass = false;
  std::string failure;
  std::vector<CoordinateCheck> coords;
};

namespace detail {

// A coordinate is excluded when some kink quantity moved under the
// perturbation and either changed sign or came within the margin.
inline bool near_kink(const Probe& plus, const Probe& minus, double radius) {
  if (plus.kinks.size() != minus.kinks.size()) return true;
  for (std::size_t i = 0; i < plus.kinks.size(); ++i) {
    const double a = plus.kinks[i], b = minus.kinks[i];
    if (a == b) continue;
    if ((a > 0) != (b > 0)) return true;
    if (std::min(std::abs(a), std::abs(b)) < radius) return true;
  }
  return false;
}

}  // namespace detail

/// Compares `analytic` against central differences of f in 64-bit.
/// `f` maps a parameter vector to a Probe. Exceptions and non-finite values
/// from f end the check with a failure report.
template <class F>
GradcheckReport gradcheck(F&& f, std::span<const double> theta, std::span<const double> analytic,
                          const GradcheckOptions& opt = {}) {
  GradcheckReport report;
  if (theta.size() != analytic.size()) {
    report.failure = "analytic gradient has " + std::to_string(analytic.size()) + " entries, expected " +
                     std::to_string(theta.size());
    return report;
  }
  if (!(opt.eps > 0.0)) {
    report.failure = "eps must be positive";
    return report;
  }

  std::vector<std::size_t> order(theta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (opt.max_coords != 0 && opt.max_coords < order.size()) {
    std::mt19937_64 rng(opt.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(opt.max_coords);
    std::sort(order.begin(), order.end());
  }

  std::vector<double> point(theta.begin(), theta.end());
  try {
    for (std::size_t idx : order) {
      const double saved = point[idx];
      point[idx] = saved + opt.eps;
      const Probe plus = f(std::span<const double>(point));
      point[idx] = saved - opt.eps;
      const Probe minus = f(std::span<const double>(point));
      point[idx] = saved;
      if (!std::isfinite(plus.value) || !std::isfinite(minus.value)) {
        report.failure = "non-finite function value at coordinate " + std::to_string(idx);
        report.pass = false;
        return report;
      }
      CoordinateCheck c;
      c.index = idx;
      c.analytic = analytic[idx];
      c.numeric = (plus.value - minus.value) / (2.0 * opt.eps);
      if (detail::near_kink(plus, minus, opt.kink_margin * opt.eps)) {
        c.skipped = true;
        ++report.skipped;
      } else {
        const double denom = std::max({std::abs(c.analytic), std::abs(c.numeric), opt.abs_floor});
        c.rel_err = std::abs(c.analytic - c.numeric) / denom;
        report.max_rel_err = std::max(report.max_rel_err, c.rel_err);
        ++report.checked;
      }
      report.coords.push_back(c);
    }
  } catch (const std::exception& e) {
    report.failure = std::string("function evaluation failed: ") + e.what();
    report.pass = false;
    return report;
  }
  report.pass = report.max_rel_err < opt.rel_tol;
  return report;
}

}  // namespace zoomvqa
