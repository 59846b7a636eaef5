#include "handfield/math/frustum.hpp"

#include <cassert>
#include <stdexcept>

namespace handfield {

FrustumGaussian frustum_to_gaussian(const Ray& ray, Real t0, Real t1) {
  if (!(t0 < t1)) throw std::invalid_argument("frustum_to_gaussian: requires t0 < t1");

  // Stable moment form for a cone of radius base_radius * t, unit-norm axis.
  const Real tm = Real(0.5) * (t0 + t1);
  const Real td = Real(0.5) * (t1 - t0);
  const Real tm2 = tm * tm, td2 = td * td;
  const Real denom = 3 * tm2 + td2;

  const Real mu_t = tm + 2 * tm * td2 / denom;
  const Real var_t = td2 / 3 - (4 * td2 * td2 * (12 * tm2 - td2)) / (15 * denom * denom);
  const Real r2 = ray.base_radius * ray.base_radius;
  const Real var_r = r2 * (tm2 / 4 + 5 * td2 / 12 - (4 * td2 * td2) / (15 * denom));

  const Vec3& d = ray.direction;
  FrustumGaussian g;
  g.t0 = t0;
  g.t1 = t1;
  g.mean = ray.origin + d * mu_t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const Real ddT = d[i] * d[j];
      g.cov(i, j) = var_t * ddT + var_r * ((i == j ? Real(1) : Real(0)) - ddT);
    }
  return g;
}

Affine34 blend_transforms(std::span<const Real> weights,
                          std::span<const RigidTransform> transforms) {
  assert(weights.size() == transforms.size());
  Real sum = 0;
  for (Real w : weights) sum += w;
  if (std::abs(sum - 1) > Real(1e-4))
    throw std::invalid_argument("blend_transforms: weights must sum to 1");

  Affine34 out{};
  for (size_t j = 0; j < weights.size(); ++j) {
    const Real w = weights[j];
    if (w == 0) continue;
    const RigidTransform& t = transforms[j];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out(r, c) += w * t.rotation(r, c);
      out(r, 3) += w * t.translation[r];
    }
  }
  return out;
}

std::optional<std::pair<Real, Real>> intersect_aabb(const Ray& ray, const Aabb& box,
                                                    Real t_min) {
  Real t_enter = t_min;
  Real t_exit = std::numeric_limits<Real>::infinity();
  for (int i = 0; i < 3; ++i) {
    const Real o = ray.origin[i], d = ray.direction[i];
    if (std::abs(d) < Real(1e-15)) {
      if (o < box.lo[i] || o > box.hi[i]) return std::nullopt;
      continue;
    }
    Real ta = (box.lo[i] - o) / d;
    Real tb = (box.hi[i] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t_enter = std::max(t_enter, ta);
    t_exit = std::min(t_exit, tb);
  }
  if (t_enter >= t_exit) return std::nullopt;
  return std::make_pair(t_enter, t_exit);
}

}  // namespace handfield
