#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "handfield/nn/param_store.hpp"

namespace handfield {

struct AdamConfig {
  Real lr = Real(5e-4);
  Real lr_final = Real(5e-5);   // exponential decay target over total_steps
  long total_steps = 1;
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real eps = Real(1e-8);
};

// Adaptive-moment optimizer over one ParameterStore. Steps consume the
// store's accumulated gradients; a non-finite gradient rejects the whole
// step and reports where it occurred.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(AdamConfig cfg, size_t param_count)
      : cfg_(cfg), m_(param_count, Real(0)), v_(param_count, Real(0)) {}

  long step_count() const { return t_; }
  Real current_lr() const {
    const Real frac = cfg_.total_steps > 0
                          ? std::min(Real(1), Real(t_) / Real(cfg_.total_steps))
                          : Real(1);
    return cfg_.lr * std::pow(cfg_.lr_final / cfg_.lr, frac);
  }

  // Returns an error description instead of applying anything when the
  // gradient has non-finite entries.
  std::optional<std::string> step(ParameterStore& store) {
    if (store.size() != m_.size()) return "optimizer/store size mismatch";
    const Real* g = store.grad();
    for (size_t i = 0; i < store.size(); ++i) {
      if (!std::isfinite(g[i]))
        return "non-finite gradient at " + locate(store, i) + " value=" + std::to_string(g[i]);
    }
    const Real lr = current_lr();
    ++t_;
    const Real bc1 = 1 - std::pow(cfg_.beta1, Real(t_));
    const Real bc2 = 1 - std::pow(cfg_.beta2, Real(t_));
    Real* p = store.data();
    for (size_t i = 0; i < store.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1 - cfg_.beta1) * g[i];
      v_[i] = cfg_.beta2 * v_[i] + (1 - cfg_.beta2) * g[i] * g[i];
      const Real mhat = m_[i] / bc1;
      const Real vhat = v_[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    return std::nullopt;
  }

  std::vector<Real>& moment1() { return m_; }
  std::vector<Real>& moment2() { return v_; }
  void set_step_count(long t) { t_ = t; }

 private:
  static std::string locate(const ParameterStore& store, size_t idx) {
    for (const auto& e : store.entries())
      if (idx >= e.offset && idx < e.offset + e.size)
        return e.name + "[" + std::to_string(idx - e.offset) + "]";
    return "index " + std::to_string(idx);
  }

  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Real> m_;
  std::vector<Real> v_;
};

}  // namespace handfield
