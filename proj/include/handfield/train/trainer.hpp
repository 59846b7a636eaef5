#pragma once

#include <functional>
#include <memory>
#include <string>

#include "handfield/io/scene.hpp"
#include "handfield/nn/adam.hpp"
#include "handfield/render/renderer.hpp"
#include "handfield/train/loss.hpp"

namespace handfield {

// The trainable state: canonical field + correction field + their configs.
struct Model {
  FieldConfig field_cfg;
  DeformConfig deform_cfg;
  std::unique_ptr<CanonicalField> field;
  std::unique_ptr<CorrectionField> correction;

  static Model create(const FieldConfig& fc, const DeformConfig& dc, const Aabb& canonical_box,
                      int num_frames, uint64_t seed);

  struct Snapshot {
    std::vector<Real> sigma, color, latent, corr;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& s);
};

enum class ObjectiveMode {
  kFull,         // L_rgb + weighted depth/dst/dfm/hs/cvar terms
  kDepthDeform,  // lambda_depth * L_depth + lambda_dfm * L_dfm (pose adaptation)
};

// One ray of a fixed batch: targets plus everything needed to march it.
struct BatchPoint {
  Ray ray;
  const FrameState* frame = nullptr;
  Vec3 target_color;
  Real target_depth = std::numeric_limits<Real>::infinity();
  bool foreground = false;
  std::vector<Real> target_feature;
};

struct BatchResult {
  LossBreakdown losses;
  std::vector<RayRecord> records;
};

// Deterministic forward pass of a fixed batch (no gradients). The objective
// value is a pure function of the parameter stores given fixed params/seed,
// which is what the finite-difference gradient suite perturbs.
BatchResult evaluate_batch(const CanonicalField& field, const CorrectionField& correction,
                           std::span<const BatchPoint> batch, const LossWeights& weights,
                           const RenderParams& params, ObjectiveMode mode);

// Same forward, then analytic backward through volume rendering, both
// networks, the hand mapping, and the encodings. Gradients accumulate into
// the stores' gradient buffers (caller zeroes them).
BatchResult evaluate_batch_with_gradients(CanonicalField& field, CorrectionField& correction,
                                          std::span<const BatchPoint> batch,
                                          const LossWeights& weights, const RenderParams& params,
                                          ObjectiveMode mode, int threads = 1);

struct TrainConfig {
  FieldConfig field;
  DeformConfig deform;
  LossWeights loss;
  Real lr = Real(5e-4);
  Real lr_final = Real(5e-5);
  long iterations = 3000;
  Real pixel_budget = Real(0.01);
  Real fg_fraction = Real(0.8);
  uint64_t seed = 1;
  int threads = 1;
  bool jitter = true;
  bool use_features = false;   // distillation targets from feature files
  Real min_delta = Real(1e-4);
  int validation_interval = 1000;  // 0 disables
  int snapshot_interval = 250;     // divergence recovery granularity
  int log_interval = 10;
  std::string log_path;  // line-delimited JSON records; empty = no file
};

struct TrainStats {
  long iterations_run = 0;
  bool aborted = false;
  std::string abort_reason;
  LossBreakdown first_losses;
  LossBreakdown last_losses;
  Real last_validation_psnr = -1;
};

// Full optimization loop over the scene's train-split cameras.
TrainStats train(Model& model, const Scene& scene, const TrainConfig& config);

struct AdaptConfig {
  Real lambda_depth = Real(0.1);
  Real lambda_deform = Real(0.01);
  Real smooth_l1_beta = Real(0.01);
  long iterations = 300;
  Real pixel_budget = Real(0.01);
  Real fg_fraction = Real(0.8);
  Real lr = Real(5e-4);
  Real lr_final = Real(1e-4);
  uint64_t seed = 1;
  int threads = 1;
  bool jitter = true;
  Real min_delta = Real(1e-4);
  bool use_rgb = false;  // rejected if set: adaptation is depth + deformation only
  int log_interval = 10;
  std::string log_path;
};

// Fine-tunes only the correction field on novel poses. Depth targets come
// from rasterizing the posed meshes; no color image is ever read. The
// radiance parameters and latent table are left bitwise untouched.
TrainStats pose_adapt(Model& model, const Scene& novel_scene, const AdaptConfig& config);

// Posed per-frame hand instances for a scene (shared by train/render/eval).
struct PosedScene {
  std::vector<std::vector<HandInstance>> frames;  // [frame][hand]
  FrameState frame_state(int frame_idx, bool novel_latent = false) const;
};
PosedScene pose_scene(const Scene& scene);

}  // namespace handfield
