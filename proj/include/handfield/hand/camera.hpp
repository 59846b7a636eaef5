#pragma once

#include <optional>
#include <string>

#include "handfield/math/frustum.hpp"

namespace handfield {

// Pinhole camera. Pixel (row, col) covers the unit square centered at
// (col + 0.5, row + 0.5) in continuous image coordinates.
struct CameraModel {
  Real fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  RigidTransform world_to_camera;
  std::string id;
  std::string split = "train";

  bool valid() const {
    return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < Real(width) &&
           cy >= 0 && cy < Real(height);
  }

  Vec3 center() const { return world_to_camera.inverse().translation; }

  Ray pixel_ray(int row, int col) const {
    const Vec3 dir_cam{(Real(col) + Real(0.5) - cx) / fx, (Real(row) + Real(0.5) - cy) / fy, 1};
    Ray r;
    r.origin = center();
    r.direction = normalized(world_to_camera.rotation.transposed() * dir_cam);
    r.row = row;
    r.col = col;
    // Pixel footprint radius at unit depth, matched to the frustum cone.
    r.base_radius = Real(0.5) * (1 / fx + 1 / fy) * (2 / std::sqrt(Real(12)));
    return r;
  }

  // Projects a world point; returns (u=col coord, v=row coord, z) or nullopt
  // behind the camera.
  std::optional<std::array<Real, 3>> project(const Vec3& world) const {
    const Vec3 c = world_to_camera.apply(world);
    if (c.z <= Real(1e-9)) return std::nullopt;
    return std::array<Real, 3>{fx * c.x / c.z + cx, fy * c.y / c.z + cy, c.z};
  }

  static CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint, Real fx,
                             Real fy, int width, int height);
};

}  // namespace handfield
