#include "handfield/hand/hand_mesh.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace handfield {

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                        const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const Real d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0 && d2 <= 0) return {a, {1, 0, 0}};

  const Vec3 bp = p - b;
  const Real d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0 && d4 <= d3) return {b, {0, 1, 0}};

  const Real vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    const Real v = d1 / (d1 - d3);
    return {a + ab * v, {1 - v, v, 0}};
  }

  const Vec3 cp = p - c;
  const Real d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0 && d5 <= d6) return {c, {0, 0, 1}};

  const Real vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    const Real w = d2 / (d2 - d6);
    return {a + ac * w, {1 - w, 0, w}};
  }

  const Real va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    const Real w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + (c - b) * w, {0, 1 - w, w}};
  }

  const Real denom = 1 / (va + vb + vc);
  const Real v = vb * denom, w = vc * denom;
  return {a + ab * v + ac * w, {1 - v - w, v, w}};
}

namespace {

Real point_aabb_dist2(const Vec3& p, const Aabb& box) {
  Real d2 = 0;
  for (int i = 0; i < 3; ++i) {
    const Real v = p[i];
    if (v < box.lo[i]) d2 += (box.lo[i] - v) * (box.lo[i] - v);
    else if (v > box.hi[i]) d2 += (v - box.hi[i]) * (v - box.hi[i]);
  }
  return d2;
}

FacetQuery finish_query(const SkinnedHandMesh& mesh, const Vec3& x, uint32_t tri,
                        const TrianglePoint& tp, Real d2) {
  FacetQuery q;
  q.triangle = tri;
  q.distance = std::sqrt(d2);
  q.closest_point = tp.point;
  q.barycentric = tp.barycentric;
  const auto& t = mesh.triangles[tri];
  for (int j = 0; j < kNumJoints; ++j) {
    q.weights[j] = tp.barycentric[0] * mesh.blend_weights[t[0]][j] +
                   tp.barycentric[1] * mesh.blend_weights[t[1]][j] +
                   tp.barycentric[2] * mesh.blend_weights[t[2]][j];
  }
  (void)x;
  return q;
}

}  // namespace

void TriangleBvh::build(std::span<const Vec3> vertices,
                        std::span<const std::array<uint32_t, 3>> triangles) {
  nodes_.clear();
  order_.resize(triangles.size());
  for (uint32_t i = 0; i < triangles.size(); ++i) order_[i] = i;
  if (!triangles.empty()) build_node(vertices, triangles, 0, uint32_t(triangles.size()));
}

int32_t TriangleBvh::build_node(std::span<const Vec3> vertices,
                                std::span<const std::array<uint32_t, 3>> triangles,
                                uint32_t begin, uint32_t end) {
  const int32_t idx = int32_t(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centroid_box;
  for (uint32_t i = begin; i < end; ++i) {
    const auto& t = triangles[order_[i]];
    Aabb tb;
    for (uint32_t k : t) tb.extend(vertices[k]);
    box.extend(tb);
    centroid_box.extend(tb.center());
  }
  nodes_[idx].box = box;

  const uint32_t count = end - begin;
  if (count <= 4) {
    // Keep leaves in ascending triangle order so ties resolve identically
    // to the brute-force scan.
    std::sort(order_.begin() + begin, order_.begin() + end);
    nodes_[idx].first = begin;
    nodes_[idx].count = count;
    return idx;
  }

  const Vec3 ext = centroid_box.extent();
  int axis = 0;
  if (ext.y > ext.x) axis = 1;
  if (ext.z > ext[axis]) axis = 2;
  const uint32_t mid = begin + count / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](uint32_t a, uint32_t b) {
                     Aabb ba, bb;
                     for (uint32_t k : triangles[a]) ba.extend(vertices[k]);
                     for (uint32_t k : triangles[b]) bb.extend(vertices[k]);
                     return ba.center()[axis] < bb.center()[axis];
                   });
  const int32_t l = build_node(vertices, triangles, begin, mid);
  const int32_t r = build_node(vertices, triangles, mid, end);
  nodes_[idx].left = l;
  nodes_[idx].right = r;
  return idx;
}

std::pair<uint32_t, Real> TriangleBvh::nearest(const Vec3& p, std::span<const Vec3> vertices,
                                               std::span<const std::array<uint32_t, 3>> triangles,
                                               TrianglePoint& out) const {
  assert(!nodes_.empty());
  Real best_d2 = std::numeric_limits<Real>::infinity();
  uint32_t best_tri = 0;
  TrianglePoint best_tp{};

  // Explicit stack; visit closer child first. Prune only on strictly-greater
  // lower bounds so equal-distance candidates still get the index tie-break.
  std::array<int32_t, 64> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (point_aabb_dist2(p, node.box) > best_d2) continue;
    if (node.left < 0) {
      for (uint32_t i = node.first; i < node.first + node.count; ++i) {
        const uint32_t tri = order_[i];
        const auto& t = triangles[tri];
        const TrianglePoint tp =
            closest_point_on_triangle(p, vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        const Real d2 = norm2(p - tp.point);
        if (d2 < best_d2 || (d2 == best_d2 && tri < best_tri)) {
          best_d2 = d2;
          best_tri = tri;
          best_tp = tp;
        }
      }
      continue;
    }
    const Real dl = point_aabb_dist2(p, nodes_[node.left].box);
    const Real dr = point_aabb_dist2(p, nodes_[node.right].box);
    if (dl <= dr) {
      if (dr <= best_d2) stack[top++] = node.right;
      if (dl <= best_d2) stack[top++] = node.left;
    } else {
      if (dl <= best_d2) stack[top++] = node.left;
      if (dr <= best_d2) stack[top++] = node.right;
    }
  }
  out = best_tp;
  return {best_tri, best_d2};
}

std::vector<Vec3> skin_vertices(const SkinnedHandMesh& mesh, const Skeleton& skeleton,
                                const Pose& pose, const Pose& canonical_pose) {
  const JointTransforms posed = forward_kinematics(skeleton, pose);
  const JointTransforms canon = forward_kinematics(skeleton, canonical_pose);
  JointTransforms canon_to_posed;
  for (int j = 0; j < kNumJoints; ++j) canon_to_posed[j] = posed[j] * canon[j].inverse();

  std::vector<Vec3> out(mesh.rest_vertices.size());
  for (size_t v = 0; v < mesh.rest_vertices.size(); ++v) {
    const Affine34 blend = blend_transforms(mesh.blend_weights[v], canon_to_posed);
    out[v] = blend.apply(mesh.rest_vertices[v]);
  }
  return out;
}

std::vector<Vec3> compute_vertex_normals(std::span<const Vec3> vertices,
                                         std::span<const std::array<uint32_t, 3>> triangles) {
  std::vector<Vec3> normals(vertices.size(), Vec3{});
  for (const auto& t : triangles) {
    const Vec3 n = cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]);
    for (uint32_t k : t) normals[k] += n;
  }
  for (Vec3& n : normals) {
    const Real len = norm(n);
    if (len > Real(1e-12)) n = n / len;
  }
  return normals;
}

PosedHand pose_hand(const SkinnedHandMesh& mesh, const Skeleton& skeleton, const Pose& pose,
                    const Pose& canonical_pose) {
  PosedHand h;
  h.mesh = &mesh;
  h.skeleton = &skeleton;
  h.pose = pose;
  h.vertices = skin_vertices(mesh, skeleton, pose, canonical_pose);
  h.normals = compute_vertex_normals(h.vertices, mesh.triangles);

  const JointTransforms posed = forward_kinematics(skeleton, pose);
  const JointTransforms canon = forward_kinematics(skeleton, canonical_pose);
  for (int j = 0; j < kNumJoints; ++j) {
    h.canonical_to_posed[j] = posed[j] * canon[j].inverse();
    h.obs_to_canonical[j] = canon[j] * posed[j].inverse();
  }

  for (const Vec3& v : h.vertices) h.tight_bounds.extend(v);
  h.inflation_margin = Real(0.05) * h.tight_bounds.diagonal();
  h.inflated_bounds = h.tight_bounds.inflated(h.inflation_margin);
  h.bvh.build(h.vertices, mesh.triangles);
  return h;
}

FacetQuery query_blend_weights(const PosedHand& hand, const Vec3& x) {
  if (hand.mesh->triangles.empty()) throw std::runtime_error("query_blend_weights: empty mesh");
  TrianglePoint tp;
  const auto [tri, d2] = hand.bvh.nearest(x, hand.vertices, hand.mesh->triangles, tp);
  return finish_query(*hand.mesh, x, tri, tp, d2);
}

FacetQuery query_blend_weights_brute(std::span<const Vec3> vertices,
                                     const SkinnedHandMesh& mesh, const Vec3& x) {
  if (mesh.triangles.empty()) throw std::runtime_error("query_blend_weights: empty mesh");
  Real best_d2 = std::numeric_limits<Real>::infinity();
  uint32_t best_tri = 0;
  TrianglePoint best_tp{};
  for (uint32_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const TrianglePoint tp =
        closest_point_on_triangle(x, vertices[t[0]], vertices[t[1]], vertices[t[2]]);
    const Real d2 = norm2(x - tp.point);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_tri = i;
      best_tp = tp;
    }
  }
  return finish_query(mesh, x, best_tri, best_tp, best_d2);
}

Aabb scene_bounds(const PosedHand& hand) { return hand.inflated_bounds; }

}  // namespace handfield
