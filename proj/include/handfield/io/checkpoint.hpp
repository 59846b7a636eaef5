#pragma once

#include "handfield/train/trainer.hpp"

namespace handfield {

// Self-contained binary training state: configs, canonical box, every
// parameter store, and bookkeeping. save -> load -> save is bitwise stable.
struct Checkpoint {
  uint64_t iteration = 0;
  uint64_t rng_seed = 0;      // master seed; with the iteration this pins the RNG state
  std::string config_json;    // opaque training-config snapshot
  int num_frames = 0;
  Aabb canonical_box;
  Model model;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace handfield
