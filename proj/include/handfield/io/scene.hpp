#pragma once

#include <string>
#include <vector>

#include "handfield/core/image.hpp"
#include "handfield/hand/camera.hpp"
#include "handfield/hand/procedural.hpp"

namespace handfield {

// In-memory scene: hand assets, per-frame poses, cameras, and the on-disk
// layout of the rendered targets.
struct Scene {
  std::vector<ProceduralHand> hands;  // 1 or 2
  struct Frame {
    int id = 0;
    std::vector<Pose> poses;  // aligned with `hands`
  };
  std::vector<Frame> frames;
  std::vector<CameraModel> cameras;
  Vec3 background{0, 0, 0};
  Real scene_unit = 1;  // metadata only
  std::string root;     // directory the scene was loaded from / written to

  std::vector<int> camera_indices(const std::string& split) const {
    std::vector<int> out;
    for (int i = 0; i < int(cameras.size()); ++i)
      if (cameras[size_t(i)].split == split) out.push_back(i);
    return out;
  }

  // On-disk layout, relative to root.
  static std::string color_rel(int frame_id, const std::string& cam_id) {
    return "images/f" + std::to_string(frame_id) + "_" + cam_id + "_color.png";
  }
  static std::string depth_rel(int frame_id, const std::string& cam_id) {
    return "images/f" + std::to_string(frame_id) + "_" + cam_id + "_depth.pfm";
  }
  static std::string mask_rel(int frame_id, const std::string& cam_id) {
    return "images/f" + std::to_string(frame_id) + "_" + cam_id + "_mask.png";
  }
  static std::string occlusion_rel(int frame_id, const std::string& cam_id) {
    return "images/f" + std::to_string(frame_id) + "_" + cam_id + "_occlusion.png";
  }
  static std::string feature_rel(int frame_id, const std::string& cam_id) {
    return "features/f" + std::to_string(frame_id) + "_" + cam_id + ".hfm";
  }
};

}  // namespace handfield
