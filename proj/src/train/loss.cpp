#include "handfield/train/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace handfield {

Real loss_rgb(std::span<const RayRecord> batch) {
  if (batch.empty()) throw std::invalid_argument("loss_rgb: empty batch");
  Real acc = 0;
  for (const RayRecord& r : batch) acc += norm2(r.color - r.target_color);
  return acc / Real(batch.size());
}

Real loss_depth(std::span<const RayRecord> batch, Real beta, size_t* contributing) {
  Real acc = 0;
  size_t n = 0;
  for (const RayRecord& r : batch) {
    if (!r.foreground || !std::isfinite(r.target_depth)) continue;
    acc += smooth_l1(r.target_depth - r.depth, beta);
    ++n;
  }
  if (contributing) *contributing = n;
  return n > 0 ? acc / Real(n) : Real(0);
}

Real loss_distill(std::span<const RayRecord> batch, size_t* contributing) {
  Real acc = 0;
  size_t n = 0;
  for (const RayRecord& r : batch) {
    if (!r.foreground) continue;
    if (r.target_feature.empty())
      throw std::runtime_error("loss_distill: foreground ray without a teacher feature");
    if (r.target_feature.size() != r.feature.size())
      throw std::runtime_error("loss_distill: feature dimension mismatch");
    Real e2 = 0;
    for (size_t k = 0; k < r.feature.size(); ++k) {
      const Real e = r.target_feature[k] - r.feature[k];
      e2 += e * e;
    }
    acc += e2 / Real(r.feature.size());
    ++n;
  }
  if (contributing) *contributing = n;
  return n > 0 ? acc / Real(n) : Real(0);
}

Real loss_deform(std::span<const RayRecord> batch) {
  Real acc = 0;
  size_t n = 0;
  for (const RayRecord& r : batch) {
    for (Real v : r.residual_norms) acc += v;
    n += r.residual_norms.size();
  }
  return n > 0 ? acc / Real(n) : Real(0);
}

Real hard_surface_term(Real w) {
  return -std::log(std::exp(-std::abs(w)) + std::exp(-std::abs(1 - w)));
}

Real hard_surface_term_derivative(Real w) {
  const Real ew = std::exp(-std::abs(w));
  const Real e1 = std::exp(-std::abs(1 - w));
  const Real sw = w > 0 ? Real(1) : (w < 0 ? Real(-1) : Real(0));
  const Real s1 = (1 - w) > 0 ? Real(1) : ((1 - w) < 0 ? Real(-1) : Real(0));
  return (sw * ew - s1 * e1) / (ew + e1);
}

Real loss_hard_surface(std::span<const RayRecord> batch) {
  Real acc = 0;
  size_t n = 0;
  for (const RayRecord& r : batch) {
    for (Real w : r.weights) acc += hard_surface_term(w);
    n += r.weights.size();
  }
  return n > 0 ? acc / Real(n) : Real(0);
}

Real loss_color_variance(std::span<const RayRecord> batch, Real beta, size_t* fg_count) {
  size_t n = 0;
  Vec3 mean_t{}, mean_p{};
  for (const RayRecord& r : batch) {
    if (!r.foreground) continue;
    mean_t += r.target_color;
    mean_p += r.color;
    ++n;
  }
  if (fg_count) *fg_count = n;
  if (n < 2) return 0;
  mean_t *= 1 / Real(n);
  mean_p *= 1 / Real(n);
  Vec3 var_t{}, var_p{};
  for (const RayRecord& r : batch) {
    if (!r.foreground) continue;
    for (int c = 0; c < 3; ++c) {
      var_t[c] += (r.target_color[c] - mean_t[c]) * (r.target_color[c] - mean_t[c]);
      var_p[c] += (r.color[c] - mean_p[c]) * (r.color[c] - mean_p[c]);
    }
  }
  Real acc = 0;
  for (int c = 0; c < 3; ++c) acc += smooth_l1(var_t[c] / Real(n) - var_p[c] / Real(n), beta);
  return acc;
}

LossBreakdown total_loss(std::span<const RayRecord> batch, const LossWeights& w) {
  LossBreakdown b;
  b.rgb = loss_rgb(batch);
  if (w.depth > 0) b.depth = loss_depth(batch, w.smooth_l1_beta);
  if (w.distill > 0) b.distill = loss_distill(batch);
  if (w.deform > 0) b.deform = loss_deform(batch);
  if (w.hard_surface > 0) b.hard_surface = loss_hard_surface(batch);
  if (w.color_var > 0) b.color_var = loss_color_variance(batch, w.smooth_l1_beta);
  b.total = b.rgb + w.depth * b.depth + w.distill * b.distill + w.deform * b.deform +
            w.hard_surface * b.hard_surface + w.color_var * b.color_var;
  if (!std::isfinite(b.total)) {
    throw std::runtime_error(
        "total_loss: non-finite component (rgb=" + std::to_string(b.rgb) +
        " depth=" + std::to_string(b.depth) + " dst=" + std::to_string(b.distill) +
        " dfm=" + std::to_string(b.deform) + " hs=" + std::to_string(b.hard_surface) +
        " cvar=" + std::to_string(b.color_var) + ")");
  }
  return b;
}

}  // namespace handfield
