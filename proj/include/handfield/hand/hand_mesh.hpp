#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "handfield/hand/skeleton.hpp"
#include "handfield/math/frustum.hpp"

namespace handfield {

enum class HandSide { kLeft, kRight };

struct SkinnedHandMesh {
  std::vector<Vec3> rest_vertices;  // canonical space
  std::vector<Vec3> rest_normals;
  std::vector<std::array<uint32_t, 3>> triangles;
  std::vector<std::array<Real, kNumJoints>> blend_weights;  // nonnegative, sum 1
  std::vector<Vec3> albedo;                                 // RGB in [0,1]
  HandSide side = HandSide::kRight;

  Aabb rest_bounds() const {
    Aabb b;
    for (const Vec3& v : rest_vertices) b.extend(v);
    return b;
  }
};

// Closest point on a triangle and its barycentric coordinates (Ericson).
struct TrianglePoint {
  Vec3 point;
  std::array<Real, 3> barycentric;
};
TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                        const Vec3& c);

struct FacetQuery {
  std::array<Real, kNumJoints> weights{};
  uint32_t triangle = 0;
  Real distance = 0;
  Vec3 closest_point;
  std::array<Real, 3> barycentric{};
};

// Median-split BVH over triangles. Result-identical to the brute-force scan,
// including tie-breaking toward the lowest triangle index.
class TriangleBvh {
 public:
  void build(std::span<const Vec3> vertices, std::span<const std::array<uint32_t, 3>> triangles);
  // Returns (triangle index, squared distance); fills closest point/barycentric.
  std::pair<uint32_t, Real> nearest(const Vec3& p, std::span<const Vec3> vertices,
                                    std::span<const std::array<uint32_t, 3>> triangles,
                                    TrianglePoint& out) const;
  bool empty() const { return nodes_.empty(); }

 private:
  struct Node {
    Aabb box;
    int32_t left = -1, right = -1;  // internal children
    uint32_t first = 0, count = 0;  // leaf triangle range
  };
  int32_t build_node(std::span<const Vec3> vertices,
                     std::span<const std::array<uint32_t, 3>> triangles, uint32_t begin,
                     uint32_t end);
  std::vector<Node> nodes_;
  std::vector<uint32_t> order_;  // triangle indices, leaf-contiguous
};

// A skinned mesh instance at one pose, with query acceleration and bounds.
struct PosedHand {
  const SkinnedHandMesh* mesh = nullptr;
  const Skeleton* skeleton = nullptr;
  Pose pose;
  std::vector<Vec3> vertices;  // posed
  std::vector<Vec3> normals;   // recomputed from posed geometry
  JointTransforms canonical_to_posed;  // G_j(p) * G_j(canonical)^-1
  JointTransforms obs_to_canonical;    // inverse per joint
  Aabb tight_bounds;
  Aabb inflated_bounds;  // +5% of diagonal
  Real inflation_margin = 0;
  TriangleBvh bvh;
};

std::vector<Vec3> skin_vertices(const SkinnedHandMesh& mesh, const Skeleton& skeleton,
                                const Pose& pose, const Pose& canonical_pose = Pose::rest());

std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices,
                                         std::span<const std::array<uint32_t, 3>> triangles);

PosedHand pose_hand(const SkinnedHandMesh& mesh, const Skeleton& skeleton, const Pose& pose,
                    const Pose& canonical_pose = Pose::rest());

// Nearest facet + barycentric blend-weight interpolation. Throws on an empty
// mesh. The brute-force variant is the reference implementation.
FacetQuery query_blend_weights(const PosedHand& hand, const Vec3& x);
FacetQuery query_blend_weights_brute(std::span<const Vec3> vertices,
                                     const SkinnedHandMesh& mesh, const Vec3& x);

// Posed-mesh AABB inflated by 5% of its diagonal.
Aabb scene_bounds(const PosedHand& hand);

}  // namespace handfield
