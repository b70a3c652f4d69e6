#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "zoomvqa/harness/config.hpp"
#include "zoomvqa/params.hpp"

namespace zoomvqa {

/// Learning rate at `step` of `total`. Cosine anneals to zero, no warmup.
inline double scheduled_lr(double base_lr, Schedule schedule, std::size_t step, std::size_t total) {
  if (schedule == Schedule::constant || total == 0) return base_lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ParamSet<float>& params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8)
      : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params[i].numel(), 0.0);
      v_.emplace_back(params[i].numel(), 0.0);
    }
  }

  void step(ParamSet<float>& params, const std::vector<Tensor>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].data();
      const auto g = grads[i].data();
      for (std::size_t k = 0; k < p.size(); ++k) {
        m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
        v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
        const double mhat = m_[i][k] / c1, vhat = v_[i][k] / c2;
        double w = p[k];
        w -= lr * wd_ * w;
        w -= lr * mhat / (std::sqrt(vhat) + eps_);
        p[k] = static_cast<float>(w);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  double wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace zoomvqa
