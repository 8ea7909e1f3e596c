#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "orthoseis/autodiff.hpp"

namespace orthoseis {

struct AdamConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Complex parameters update
// through their interleaved (re, im) scalar view, i.e. the two components
// carry independent first and second moments.
template <class T>
class AdamState {
 public:
  AdamState(std::vector<Parameter<T>*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<std::size_t>(params_[i]->scalar_count()), T(0));
      v_[i].assign(static_cast<std::size_t>(params_[i]->scalar_count()), T(0));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  int step_count() const { return t_; }

  void step() {
    ++t_;
    const double correction1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double correction2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter<T>& p = *params_[i];
      T* value = p.is_complex ? reinterpret_cast<T*>(p.cvalue.raw()) : p.value.raw();
      const T* grad = p.is_complex ? reinterpret_cast<const T*>(p.cgrad.raw()) : p.grad.raw();
      const std::size_t n = m_[i].size();
      for (std::size_t k = 0; k < n; ++k) {
        const double g = static_cast<double>(grad[k]);
        if (!std::isfinite(g)) {
          throw std::runtime_error("adam_step: non-finite gradient in parameter " + p.name);
        }
        const double m = cfg_.beta1 * static_cast<double>(m_[i][k]) + (1.0 - cfg_.beta1) * g;
        const double v = cfg_.beta2 * static_cast<double>(v_[i][k]) + (1.0 - cfg_.beta2) * g * g;
        m_[i][k] = static_cast<T>(m);
        v_[i][k] = static_cast<T>(v);
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        value[k] -= static_cast<T>(cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps));
      }
    }
  }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  int t_ = 0;
};

template <class T>
void adam_step(AdamState<T>& state) {
  state.step();
}

}  // namespace orthoseis
