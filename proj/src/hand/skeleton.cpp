#include "handfield/hand/skeleton.hpp"

namespace handfield {

JointTransforms forward_kinematics(const Skeleton& skeleton, const Pose& pose) {
  JointTransforms g;
  const RigidTransform global{rotation_from_axis_angle(pose.root_rotation),
                              pose.root_translation};
  for (int j = 0; j < kNumJoints; ++j) {
    const RigidTransform local{rotation_from_axis_angle(pose.joint_rotation[j]),
                               skeleton.rest_offset[j]};
    const int p = skeleton.parent[j];
    g[j] = (p < 0 ? global : g[p]) * local;
  }
  return g;
}

JointTransforms observation_to_canonical_transforms(const Skeleton& skeleton, const Pose& pose,
                                                    const Pose& canonical_pose) {
  const JointTransforms posed = forward_kinematics(skeleton, pose);
  const JointTransforms canon = forward_kinematics(skeleton, canonical_pose);
  JointTransforms t;
  for (int j = 0; j < kNumJoints; ++j) t[j] = canon[j] * posed[j].inverse();
  return t;
}

Pose mirror_pose(const Pose& pose) {
  Pose m;
  for (int j = 0; j < kNumJoints; ++j) m.joint_rotation[j] = mirror_axis_angle(pose.joint_rotation[j]);
  m.root_translation = mirror_point(pose.root_translation);
  m.root_rotation = mirror_axis_angle(pose.root_rotation);
  return m;
}

Skeleton mirror_skeleton(const Skeleton& skeleton) {
  Skeleton m = skeleton;
  for (int j = 0; j < kNumJoints; ++j) m.rest_offset[j] = mirror_point(skeleton.rest_offset[j]);
  return m;
}

std::array<Real, 48> flatten_joint_rotations(const Pose& pose) {
  std::array<Real, 48> out;
  for (int j = 0; j < kNumJoints; ++j) {
    out[j * 3 + 0] = pose.joint_rotation[j].x;
    out[j * 3 + 1] = pose.joint_rotation[j].y;
    out[j * 3 + 2] = pose.joint_rotation[j].z;
  }
  return out;
}

}  // namespace handfield
