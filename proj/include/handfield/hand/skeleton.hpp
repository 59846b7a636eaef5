#pragma once

#include <array>

#include "handfield/math/geometry.hpp"

namespace handfield {

inline constexpr int kNumJoints = 16;

// Palm root plus five 3-joint finger chains.
struct Skeleton {
  std::array<int, kNumJoints> parent{};        // -1 for the root
  std::array<Vec3, kNumJoints> rest_offset{};  // local offset from parent
};

struct Pose {
  std::array<Vec3, kNumJoints> joint_rotation{};  // axis-angle, radians
  Vec3 root_translation{};
  Vec3 root_rotation{};  // axis-angle

  static Pose rest() { return Pose{}; }
};

using JointTransforms = std::array<RigidTransform, kNumJoints>;

// World transform of every joint: chain composition root -> leaf, with the
// global rigid transform applied ahead of the root.
JointTransforms forward_kinematics(const Skeleton& skeleton, const Pose& pose);

// Per joint: G_j(canonical) * G_j(pose)^-1, taking posed points back to the
// canonical configuration.
JointTransforms observation_to_canonical_transforms(const Skeleton& skeleton, const Pose& pose,
                                                    const Pose& canonical_pose);

// Hand mapping: reflection across the x = 0 plane. Involution.
inline Vec3 mirror_point(const Vec3& p) { return {-p.x, p.y, p.z}; }
// Conjugation of a rotation by diag(-1,1,1).
inline Vec3 mirror_axis_angle(const Vec3& a) { return {a.x, -a.y, -a.z}; }
Pose mirror_pose(const Pose& pose);
Skeleton mirror_skeleton(const Skeleton& skeleton);

// The 48 joint axis-angles, row-major, as network conditioning. The global
// root transform is excluded: blend skinning already accounts for it exactly.
std::array<Real, 48> flatten_joint_rotations(const Pose& pose);

}  // namespace handfield
