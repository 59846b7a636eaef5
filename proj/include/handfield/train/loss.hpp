#pragma once

#include <span>
#include <vector>

#include "handfield/math/geometry.hpp"

namespace handfield {

struct LossWeights {
  Real depth = Real(0.1);
  Real distill = Real(0.1);
  Real deform = Real(0.01);
  Real hard_surface = Real(0.001);
  Real color_var = Real(0.01);
  Real smooth_l1_beta = Real(0.01);  // scene units
};

// Per-ray record a training step accumulates: targets alongside renders.
// All loss reductions are means (over rays, or over samples for the
// per-sample terms), decoupling loss scale from batch size.
struct RayRecord {
  Vec3 target_color;
  Real target_depth = std::numeric_limits<Real>::infinity();  // +inf = no depth
  bool foreground = false;
  std::vector<Real> target_feature;  // empty = no distillation target

  Vec3 color;
  Real depth = 0;
  std::vector<Real> feature;
  Real weight_sum = 0;
  std::vector<Real> weights;         // w_v for every merged sample
  std::vector<Real> residual_norms;  // one per correction-evaluated sample
};

inline Real smooth_l1(Real e, Real beta) {
  const Real a = std::abs(e);
  return a <= beta ? Real(0.5) * e * e / beta : a - Real(0.5) * beta;
}
inline Real smooth_l1_derivative(Real e, Real beta) {
  return std::abs(e) <= beta ? e / beta : (e > 0 ? Real(1) : Real(-1));
}

// mean over rays of the squared color error (summed over channels)
Real loss_rgb(std::span<const RayRecord> batch);

// smooth-L1 of the depth error, mean over foreground rays with finite
// targets; 0 when none contribute
Real loss_depth(std::span<const RayRecord> batch, Real beta, size_t* contributing = nullptr);

// mean over contributing foreground rays and feature channels of the squared
// feature error; throws when a foreground ray lacks its teacher target
Real loss_distill(std::span<const RayRecord> batch, size_t* contributing = nullptr);

// mean Euclidean norm of the correction residuals over all recorded samples
Real loss_deform(std::span<const RayRecord> batch);

// mean over all samples of -log(exp(-|w|) + exp(-|1-w|)); minimal at w in
// {0,1}, the per-sample floor is -log(1 + e^-1)
Real loss_hard_surface(std::span<const RayRecord> batch);
Real hard_surface_term(Real w);
Real hard_surface_term_derivative(Real w);

// smooth-L1 between the per-channel biased variances of target and rendered
// colors over foreground rays, summed over channels; 0 below 2 rays
Real loss_color_variance(std::span<const RayRecord> batch, Real beta,
                         size_t* fg_count = nullptr);

struct LossBreakdown {
  Real rgb = 0, depth = 0, distill = 0, deform = 0, hard_surface = 0, color_var = 0;
  Real total = 0;
};

// Weighted sum; terms with zero weight are skipped entirely. Throws with
// diagnostics on a non-finite component.
LossBreakdown total_loss(std::span<const RayRecord> batch, const LossWeights& weights);

}  // namespace handfield
