#ifndef TARPRO_OPTIM_HPP
#define TARPRO_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "tarpro/autodiff.hpp"

namespace tarpro {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Leaves without a gradient are skipped, but
/// still advance the shared step counter.
template <class T>
class Adam {
 public:
  Adam(std::vector<ad::Var<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value().size(), 0.0);
      v_.emplace_back(p.value().size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      auto& w = p.mutable_value();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
        v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mh = m_[i][j] / c1, vh = v_[i][j] / c2;
        w[j] = static_cast<T>(static_cast<double>(w[j]) - cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.epsilon));
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<ad::Var<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace tarpro

#endif  // TARPRO_OPTIM_HPP
