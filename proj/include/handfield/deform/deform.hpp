#pragma once

#include <vector>

#include "handfield/field/canonical_field.hpp"
#include "handfield/hand/hand_mesh.hpp"

namespace handfield {

struct DeformConfig {
  int samples_per_ray = 64;
  // Nearest-facet distance beyond this multiple of the AABB inflation margin
  // marks the sample as empty space.
  Real degenerate_distance_factor = Real(1.5);
  int corr_width = 128;
  int corr_layers = 4;
  int corr_skip = 2;
  int corr_pos_degree = 6;

  int corr_in_dim() const { return 6 * corr_pos_degree + 48; }
};

// One hand in one frame: posed geometry plus the (mirrored) pose conditioning
// the correction network sees.
struct HandInstance {
  PosedHand posed;
  HandSide side = HandSide::kRight;
  std::array<Real, 48> pose_cond{};  // flatten(psi(pose))

  static HandInstance make(const SkinnedHandMesh& mesh, const Skeleton& skeleton,
                           const Pose& pose);
};

struct DeformedSample {
  FrustumGaussian canonical;  // warped mean, transported covariance
  Real t = 0;                 // observation-space depth (segment midpoint)
  HandSide source = HandSide::kRight;
  Vec3 residual;              // correction term, pre outer mirror
  std::array<Real, kNumJoints> blend_weights{};
  Real facet_distance = 0;
  bool degenerate = false;
  Vec3 xhat_can;              // blend-skinning warp alone
  Vec3 corr_point;            // psi(xhat_can), the correction input point
};

struct HandRaySamples {
  bool hit = false;
  Real t_near = 0, t_far = 0;
  std::vector<DeformedSample> samples;
};

struct CorrTapes {
  MlpTape trunk, head;
};

// Pose-conditioned residual correction on top of blend skinning (theta_e).
class CorrectionField {
 public:
  CorrectionField() = default;
  CorrectionField(const DeformConfig& cfg, const BoxNormalizer& canonical_norm, uint64_t seed);

  void rebind();

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const DeformConfig& config() const { return cfg_; }

  // residual = F(psi(xhat), psi(pose)); `corr_point` is psi(xhat).
  Vec3 eval(const Vec3& corr_point, std::span<const Real, 48> pose_cond,
            CorrTapes* tapes) const;
  void backward(const CorrTapes& tapes, const Vec3& d_residual, Real* param_grad) const;

 private:
  DeformConfig cfg_;
  BoxNormalizer norm_;
  ParameterStore store_;
  Mlp trunk_, head_;
};

// lbs_warp: nearest-facet blend weights + blended observation-to-canonical
// transform applied to x_ob.
struct LbsWarp {
  Vec3 xhat_can;
  std::array<Real, kNumJoints> weights{};
  Real facet_distance = 0;
  Affine34 blend;
};
LbsWarp lbs_warp(const Vec3& x_ob, const PosedHand& hand);

// Eq-5 correction with the hand mapping applied literally:
// x_can = psi(xhat + F(psi(xhat), psi(p))).
struct CorrectResult {
  Vec3 x_can;
  Vec3 residual;
};
CorrectResult correct(const Vec3& xhat_can, HandSide side,
                      std::span<const Real, 48> pose_cond, const CorrectionField& field,
                      CorrTapes* tapes = nullptr);

struct RaySampling {
  int samples_per_ray = 64;
  bool jitter = false;
  uint64_t seed = 0;      // combined with the ray stream for per-segment jitter
  uint64_t stream = 0;
};

// Stratified conical-frustum samples through one hand's inflated bounds,
// warped into canonical space. Empty when the ray misses. When `tapes` is
// given it is filled with per-sample correction tapes (degenerate samples
// hold unused entries).
HandRaySamples deform_ray_samples(const Ray& ray, const HandInstance& hand,
                                  const CorrectionField& correction, const Aabb& canonical_box,
                                  const RaySampling& sampling,
                                  std::vector<CorrTapes>* tapes = nullptr);

}  // namespace handfield
