#pragma once

#include <cmath>
#include <vector>

#include "expertadapt/nn/layers.hpp"

namespace expertadapt::nn {

enum class OptimizerKind { radam, adam };

/// Adam-family optimizer over a fixed parameter selection. `radam` applies
/// the variance-rectification term when the approximated moment length
/// exceeds 4 and otherwise falls back to an un-adapted momentum update;
/// `adam` is the plain bias-corrected form.
template <class T>
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::vector<ParamRef<T>> params, double beta1 = 0.9,
            double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].value->size(), 0.0);
      v_[i].assign(params_[i].value->size(), 0.0);
    }
  }

  int step_count() const { return t_; }

  /// One update from the currently accumulated gradients.
  void step(double lr) {
    ++t_;
    const double b1t = std::pow(beta1_, t_);
    const double b2t = std::pow(beta2_, t_);
    const double rho_inf = 2.0 / (1.0 - beta2_) - 1.0;
    const double rho_t = rho_inf - 2.0 * t_ * b2t / (1.0 - b2t);
    const bool rectified = kind_ == OptimizerKind::adam || rho_t > 4.0;
    double r_t = 1.0;
    if (kind_ == OptimizerKind::radam && rectified)
      r_t = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                      ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));

    for (size_t i = 0; i < params_.size(); ++i) {
      auto& value = *params_[i].value;
      const auto& grad = *params_[i].grad;
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < value.size(); ++j) {
        const double g = static_cast<double>(grad[j]);
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
        const double mhat = m[j] / (1.0 - b1t);
        double update;
        if (rectified) {
          const double vhat = std::sqrt(v[j] / (1.0 - b2t));
          update = lr * r_t * mhat / (vhat + eps_);
        } else {
          update = lr * mhat;  // warmup phase: variance not yet tractable
        }
        value[j] = static_cast<T>(static_cast<double>(value[j]) - update);
      }
    }
  }

 private:
  OptimizerKind kind_;
  std::vector<ParamRef<T>> params_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace expertadapt::nn
