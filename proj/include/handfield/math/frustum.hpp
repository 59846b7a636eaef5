#pragma once

#include <optional>
#include <span>

#include "handfield/math/geometry.hpp"

namespace handfield {

struct Ray {
  Vec3 origin;
  Vec3 direction;     // unit length
  int row = 0, col = 0;
  Real base_radius = 0;  // pixel footprint radius at unit distance

  Vec3 at(Real t) const { return origin + direction * t; }
};

// Gaussian approximation of a conical-frustum ray segment.
struct FrustumGaussian {
  Vec3 mean;
  Mat3 cov;       // symmetric PSD
  Real t0 = 0, t1 = 0;
};

// First and second moments of the conical frustum between t0 and t1 along
// `ray`, cone radius growing as base_radius * t. Throws on t0 >= t1.
FrustumGaussian frustum_to_gaussian(const Ray& ray, Real t0, Real t1);

// Entrywise weighted sum of 16 rigid transforms as a 3x4 affine matrix.
// Weights must be nonnegative and sum to 1 within 1e-4.
Affine34 blend_transforms(std::span<const Real> weights,
                          std::span<const RigidTransform> transforms);

// Slab test; returns [t_enter, t_exit] clamped to t >= t_min, or nullopt.
std::optional<std::pair<Real, Real>> intersect_aabb(const Ray& ray, const Aabb& box,
                                                    Real t_min = Real(1e-4));

}  // namespace handfield
