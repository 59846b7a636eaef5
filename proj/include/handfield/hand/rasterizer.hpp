#pragma once

#include <span>

#include "handfield/core/image.hpp"
#include "handfield/hand/camera.hpp"
#include "handfield/hand/hand_mesh.hpp"

namespace handfield {

struct RasterOptions {
  Vec3 background{0, 0, 0};
  Vec3 light_dir = normalized({Real(0.4), Real(-0.5), Real(-0.75)});  // toward the light
  Real ambient = Real(0.35);
  Real diffuse = Real(0.65);
};

struct RasterResult {
  ImageF depth;   // ray parameter t; +inf where nothing was hit
  ImageF color;   // 3 channels
  ImageU8 mask;   // 255 where covered
};

// Z-buffered triangle rasterization over all meshes jointly. Coverage by
// pixel center; perspective-correct attribute interpolation; depth is the
// camera-ray parameter, i.e. distance from the camera center.
RasterResult rasterize(const CameraModel& camera, std::span<const PosedHand* const> hands,
                       const RasterOptions& options = {});

// Chebyshev dilation by `radius` pixels.
void dilate_mask(ImageU8& mask, int radius);

struct ProjectedBounds {
  int min_row = 0, min_col = 0, max_row = -1, max_col = -1;  // inclusive; empty if max < min
  ImageU8 mask;  // dilated silhouette
};

// 2D bbox + dilated silhouette of one hand. Throws if the mesh is entirely
// behind the camera.
ProjectedBounds project_bounds(const CameraModel& camera, const PosedHand& hand);

}  // namespace handfield
