#pragma once

#include "handfield/io/scene.hpp"

namespace handfield {

// scene.json (human-readable) plus binary mesh blobs under blobs/.
void save_scene(const Scene& scene, const std::string& dir);
Scene load_scene(const std::string& dir);

struct GenerateOptions {
  int hands = 1;  // 1 = right only, 2 = interacting left + right
  int frames = 3;
  int train_views = 4;
  int test_views = 2;
  int image_size = 64;
  uint64_t seed = 1;
  Real camera_radius = Real(3.0);
  Real pose_amplitude = Real(0.4);
  Vec3 background{0, 0, 0};
  Real focal_scale = Real(1.8);  // fx = focal_scale * image_size
  Real arc_degrees = Real(110);  // frontal camera-arc width
  Real ambient = Real(0.55);     // flat studio-style lighting keeps shading
  Real diffuse = Real(0.45);     // mostly pose-independent
};

// Synthetic multi-view dataset: scene.json + blobs + per-(frame, camera)
// ground-truth color/depth/mask images. Two-hand scenes are verified to
// contain at least one frame with >= 50 inter-hand occlusion pixels on some
// camera; per-(frame, camera) occlusion masks are written alongside.
Scene generate_dataset(const GenerateOptions& options, const std::string& out_dir);

GenerateOptions generate_options_from_json(const std::string& json_text);

}  // namespace handfield
