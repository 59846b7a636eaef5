#pragma once

// Shared fixtures: a miniature two-hand world with small networks, sized for
// fast oracle and gradient checks.

#include <memory>

#include "handfield/deform/deform.hpp"
#include "handfield/hand/procedural.hpp"
#include "handfield/hand/rasterizer.hpp"
#include "handfield/render/renderer.hpp"

namespace handfield::testutil {

struct TinyWorld {
  ProceduralHand right_asset, left_asset;
  HandInstance right, left;
  FieldConfig fcfg;
  DeformConfig dcfg;
  std::unique_ptr<CanonicalField> field;
  std::unique_ptr<CorrectionField> corr;
  FrameState frame;         // both hands
  FrameState frame_single;  // right only
  CameraModel camera;
  RenderParams params;
};

inline FieldConfig tiny_field_config() {
  FieldConfig f;
  f.pos_degree = 4;
  f.dir_degree = 2;
  f.density_width = 32;
  f.density_layers = 3;
  f.density_skip = 1;
  f.color_width = 16;
  f.color_layers = 2;
  f.feature_dim = 4;
  f.latent_dim = 4;
  return f;
}

inline DeformConfig tiny_deform_config() {
  DeformConfig d;
  d.samples_per_ray = 10;
  d.corr_width = 16;
  d.corr_layers = 2;
  d.corr_skip = 1;
  d.corr_pos_degree = 3;
  return d;
}

inline void randomize_store(ParameterStore& store, uint64_t seed, Real scale) {
  HashRng rng(seed);
  for (size_t i = 0; i < store.size(); ++i) store.data()[i] += scale * rng.next_normal();
}

// Two interlocking-ish hands, 3 frames' worth of pose variety baked into one.
inline std::unique_ptr<TinyWorld> make_tiny_world(uint64_t seed, bool randomize_params,
                                                  int num_frames = 3) {
  auto w = std::make_unique<TinyWorld>();
  w->right_asset = generate_procedural_hand(HandSide::kRight, seed);
  w->left_asset = generate_procedural_hand(HandSide::kLeft, seed);

  Pose right_pose = Pose::rest();
  HashRng rng(hash_combine(seed, 77));
  for (int j = 1; j < kNumJoints; ++j)
    right_pose.joint_rotation[j] = {rng.next_real(-0.3, 0.3), rng.next_real(-0.1, 0.1),
                                    rng.next_real(-0.1, 0.1)};

  Pose left_pose = Pose::rest();
  for (int j = 1; j < kNumJoints; ++j)
    left_pose.joint_rotation[j] = {rng.next_real(-0.3, 0.3), rng.next_real(-0.1, 0.1),
                                   rng.next_real(-0.1, 0.1)};
  // face the right hand, fingers crossing its palm region
  left_pose.root_rotation = {0, 0, Real(3.14159265358979323846)};
  left_pose.root_translation = {Real(0.15), Real(1.05), Real(0.05)};

  w->right = HandInstance::make(w->right_asset.mesh, w->right_asset.skeleton, right_pose);
  w->left = HandInstance::make(w->left_asset.mesh, w->left_asset.skeleton, left_pose);

  w->fcfg = tiny_field_config();
  w->dcfg = tiny_deform_config();
  const Aabb box = w->right_asset.mesh.rest_bounds().scaled(2);
  w->field = std::make_unique<CanonicalField>(w->fcfg, box, num_frames, seed);
  w->corr = std::make_unique<CorrectionField>(w->dcfg, BoxNormalizer(box), seed);

  if (randomize_params) {
    randomize_store(w->field->density_params(), hash_combine(seed, 101), Real(0.02));
    randomize_store(w->field->color_params(), hash_combine(seed, 102), Real(0.02));
    randomize_store(w->field->latent_params(), hash_combine(seed, 103), Real(0.05));
    randomize_store(w->corr->params(), hash_combine(seed, 104), Real(0.01));
  }

  w->frame.hands = {&w->left, &w->right};
  w->frame.frame_index = 0;
  w->frame_single.hands = {&w->right};
  w->frame_single.frame_index = 0;

  const Vec3 center{Real(0.1), Real(0.55), 0};
  w->camera = CameraModel::look_at(center + Vec3{Real(0.3), Real(-0.1), Real(-2.4)}, center,
                                   {0, 1, 0}, 55, 55, 48, 48);
  w->camera.id = "test0";

  w->params.samples_per_ray = w->dcfg.samples_per_ray;
  w->params.background = {Real(0.0), Real(0.0), Real(0.0)};
  return w;
}

}  // namespace handfield::testutil
