#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "capsloc/core/error.hpp"
#include "capsloc/core/tensor.hpp"

namespace capsloc {

/// Adaptive moment estimation over a fixed parameter list. step() applies
/// one update from the accumulated gradients and then zeroes them; the
/// moment buffers and step counter round-trip through checkpoints.
template <class T>
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor<T>>> params, T lr,
       T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2),
        eps_(eps) {
    for (auto& [name, p] : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void step() {
    ++t_;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i].second;
      auto g = p.grad();
      T* m = m_[i].raw();
      T* v = v_[i].raw();
      T* w = p.raw();
      for (std::size_t k = 0; k < g.size(); ++k) {
        m[k] = beta1_ * m[k] + (T(1) - beta1_) * g[k];
        v[k] = beta2_ * v[k] + (T(1) - beta2_) * g[k] * g[k];
        w[k] -= lr_ * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps_);
      }
      p.zero_grad();
    }
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
  }

  long long step_count() const { return t_; }
  T learning_rate() const { return lr_; }
  void set_learning_rate(T lr) { lr_ = lr; }

  /// Moment buffers named for checkpointing, aligned with the parameters.
  std::vector<std::pair<std::string, Tensor<T>>> state_tensors() {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("opt.m." + params_[i].first, m_[i]);
      out.emplace_back("opt.v." + params_[i].first, v_[i]);
    }
    return out;
  }

  void set_step_count(long long t) {
    if (t < 0) throw NumericError("optimizer step count must be nonnegative");
    t_ = t;
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> params_;
  std::vector<Tensor<T>> m_, v_;
  T lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
};

}  // namespace capsloc
