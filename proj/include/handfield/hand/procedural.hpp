#pragma once

#include <cstdint>

#include "handfield/hand/hand_mesh.hpp"

namespace handfield {

struct ProceduralHand {
  Skeleton skeleton;
  SkinnedHandMesh mesh;
};

// Capsule-skinned 16-joint hand (palm root + 5 fingers x 3 joints), with
// inverse-surface-distance blend weights over the two nearest bones and a
// banded + speckled albedo. Deterministic per seed; the left hand is the
// x = 0 mirror of the right-hand construction.
ProceduralHand generate_procedural_hand(HandSide side, uint64_t seed);

// Single tessellated capsule with one-hot root weights and constant albedo.
// Generator building block, also used by geometry tests.
SkinnedHandMesh make_capsule_mesh(const Vec3& p0, const Vec3& p1, Real r0, Real r1);

}  // namespace handfield
