#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "deepnose/autodiff.hpp"

namespace deepnose {

template <typename T>
struct AdamConfig {
  T lr = static_cast<T>(3e-4);
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
};

// First/second moment state for one parameter tensor.
template <typename T>
struct AdamState {
  Tensor<T> m, v;
  std::uint64_t t = 0;
};

// One Adam update with bias correction:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   p <- p - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, const AdamConfig<T>& cfg) {
  require_same_shape(param, grad, "adam_step");
  if (state.m.v.empty()) {
    state.m = Tensor<T>(param.shape);
    state.v = Tensor<T>(param.shape);
  } else {
    require_same_shape(param, state.m, "adam_step: state");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t));
  const std::size_t n = param.numel();
  T* p = param.data();
  T* m = state.m.data();
  T* v = state.v.data();
  const T* g = grad.data();
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = cfg.beta1 * m[i] + (T(1) - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (T(1) - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

// Optimizer over a fixed parameter list; steps consume node gradients.
template <typename T>
class Adam {
 public:
  Adam(std::vector<NodePtr<T>> params, AdamConfig<T> cfg = {})
      : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p->grad.v.empty())
        raise(ErrorKind::InvalidConfig, "adam: parameter " + std::to_string(i) + " has no gradient");
      adam_step(p->value, p->grad, states_[i], cfg_);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  const AdamConfig<T>& config() const { return cfg_; }
  const std::vector<AdamState<T>>& states() const { return states_; }

 private:
  std::vector<NodePtr<T>> params_;
  std::vector<AdamState<T>> states_;
  AdamConfig<T> cfg_;
};

}  // namespace deepnose
