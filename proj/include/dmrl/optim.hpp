#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace dmrl {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer. `ascend` maximizes, `descend` minimizes.
class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void descend(std::span<double> params, std::span<const double> grad) { update(params, grad, -1.0); }
  void ascend(std::span<double> params, std::span<const double> grad) { update(params, grad, 1.0); }
  long steps() const { return t_; }

 private:
  void update(std::span<double> params, std::span<const double> grad, double sign) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double step = cfg_.lr * std::sqrt(c2) / c1;
    const double eps = cfg_.eps * std::sqrt(c2);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      if (g == 0.0 && m_[i] == 0.0) continue;  // untouched rows stay bit-identical
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      params[i] += sign * step * m_[i] / (std::sqrt(v_[i]) + eps);
    }
  }

  AdamConfig cfg_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

}  // namespace dmrl
