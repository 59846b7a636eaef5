#include "handfield/hand/procedural.hpp"

#include <algorithm>
#include <cmath>

#include "handfield/math/rng.hpp"

namespace handfield {
namespace {

constexpr int kRadialSegments = 12;
constexpr int kBodyRings = 4;
constexpr int kCapRings = 3;
constexpr Real kPi = Real(3.14159265358979323846);

struct FingerLayout {
  Vec3 base;
  Vec3 dir;  // unit, in the palm plane
  Real len[3];
  Real radius;
};

struct Bone {
  Vec3 p0, p1;
  Real radius;
};

Real point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const Real denom = std::max(norm2(ab), Real(1e-18));
  const Real t = std::clamp(dot(p - a, ab) / denom, Real(0), Real(1));
  return norm(p - (a + ab * t));
}

struct MeshBuilder {
  SkinnedHandMesh mesh;
  std::vector<Real> axial_param;  // per-vertex position along its capsule
  std::vector<int> finger_id;     // -1 = palm

  void add_capsule(const Vec3& p0, const Vec3& p1, Real r0, Real r1, int finger) {
    const Vec3 axis = normalized(p1 - p0);
    Vec3 u = std::abs(axis.x) < Real(0.9) ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    u = normalized(u - axis * dot(u, axis));
    const Vec3 v = cross(axis, u);

    const uint32_t base = uint32_t(mesh.rest_vertices.size());
    auto push_ring = [&](const Vec3& center, Real radius, Real axial_z, Real s) {
      for (int k = 0; k < kRadialSegments; ++k) {
        const Real a = 2 * kPi * Real(k) / kRadialSegments;
        const Vec3 radial = u * std::cos(a) + v * std::sin(a);
        mesh.rest_vertices.push_back(center + radial * radius + axis * axial_z);
        axial_param.push_back(s);
        finger_id.push_back(finger);
      }
    };

    // south pole
    mesh.rest_vertices.push_back(p0 - axis * r0);
    axial_param.push_back(0);
    finger_id.push_back(finger);

    int rings = 0;
    for (int k = kCapRings - 1; k >= 1; --k) {  // lower hemisphere (exclusive of equator)
      const Real ang = kPi / 2 * Real(k) / kCapRings;
      push_ring(p0, r0 * std::sin(ang), -r0 * std::cos(ang), 0);
      ++rings;
    }
    const Real body_len = norm(p1 - p0);
    for (int k = 0; k <= kBodyRings; ++k) {
      const Real s = Real(k) / kBodyRings;
      push_ring(p0 + axis * (s * body_len), r0 + (r1 - r0) * s, 0, s);
      ++rings;
    }
    for (int k = 1; k < kCapRings; ++k) {  // upper hemisphere
      const Real ang = kPi / 2 * Real(k) / kCapRings;
      push_ring(p1, r1 * std::cos(ang), r1 * std::sin(ang), 1);
      ++rings;
    }
    // north pole
    const uint32_t north = uint32_t(mesh.rest_vertices.size());
    mesh.rest_vertices.push_back(p1 + axis * r1);
    axial_param.push_back(1);
    finger_id.push_back(finger);

    auto ring_vertex = [&](int ring, int k) {
      return base + 1 + uint32_t(ring) * kRadialSegments + uint32_t(k % kRadialSegments);
    };
    for (int k = 0; k < kRadialSegments; ++k)
      mesh.triangles.push_back({base, ring_vertex(0, k + 1), ring_vertex(0, k)});
    for (int ring = 0; ring + 1 < rings; ++ring) {
      for (int k = 0; k < kRadialSegments; ++k) {
        const uint32_t a = ring_vertex(ring, k), b = ring_vertex(ring, k + 1);
        const uint32_t c = ring_vertex(ring + 1, k), d = ring_vertex(ring + 1, k + 1);
        mesh.triangles.push_back({a, b, d});
        mesh.triangles.push_back({a, d, c});
      }
    }
    for (int k = 0; k < kRadialSegments; ++k)
      mesh.triangles.push_back({north, ring_vertex(rings - 1, k), ring_vertex(rings - 1, k + 1)});
  }
};

}  // namespace

ProceduralHand generate_procedural_hand(HandSide side, uint64_t seed) {
  const FingerLayout fingers[5] = {
      {{Real(0.24), Real(0.16), 0}, normalized({Real(0.78), Real(0.63), 0}),
       {Real(0.20), Real(0.15), Real(0.12)}, Real(0.062)},
      {{Real(0.17), Real(0.50), 0}, normalized({Real(0.10), Real(0.99), 0}),
       {Real(0.22), Real(0.14), Real(0.11)}, Real(0.056)},
      {{Real(0.055), Real(0.52), 0}, normalized({Real(0.02), 1, 0}),
       {Real(0.24), Real(0.15), Real(0.12)}, Real(0.058)},
      {{Real(-0.06), Real(0.51), 0}, normalized({Real(-0.06), 1, 0}),
       {Real(0.22), Real(0.14), Real(0.11)}, Real(0.054)},
      {{Real(-0.17), Real(0.47), 0}, normalized({Real(-0.14), Real(0.99), 0}),
       {Real(0.16), Real(0.11), Real(0.09)}, Real(0.046)},
  };

  // Skeleton: joint 0 at the wrist; per finger f the chain 1+3f, 2+3f, 3+3f.
  Skeleton skel;
  skel.parent[0] = -1;
  skel.rest_offset[0] = {0, 0, 0};
  std::array<Vec3, kNumJoints> joint_pos;
  joint_pos[0] = {0, 0, 0};
  Bone bones[kNumJoints];
  bones[0] = {{0, Real(0.02), 0}, {0, Real(0.46), 0}, Real(0.10)};
  Vec3 finger_tip[5];
  for (int f = 0; f < 5; ++f) {
    const FingerLayout& fl = fingers[f];
    const int knuckle = 1 + 3 * f, mid = 2 + 3 * f, distal = 3 + 3 * f;
    skel.parent[knuckle] = 0;
    skel.parent[mid] = knuckle;
    skel.parent[distal] = mid;
    skel.rest_offset[knuckle] = fl.base;
    skel.rest_offset[mid] = fl.dir * fl.len[0];
    skel.rest_offset[distal] = fl.dir * fl.len[1];
    joint_pos[knuckle] = fl.base;
    joint_pos[mid] = fl.base + fl.dir * fl.len[0];
    joint_pos[distal] = joint_pos[mid] + fl.dir * fl.len[1];
    finger_tip[f] = joint_pos[distal] + fl.dir * fl.len[2];
    bones[knuckle] = {joint_pos[knuckle], joint_pos[mid], fl.radius};
    bones[mid] = {joint_pos[mid], joint_pos[distal], Real(0.9) * fl.radius};
    bones[distal] = {joint_pos[distal], finger_tip[f], Real(0.8) * fl.radius};
  }

  MeshBuilder b;
  // Palm slab: four longitudinal capsules plus a knuckle bar.
  for (Real x : {Real(-0.18), Real(-0.06), Real(0.06), Real(0.18)})
    b.add_capsule({x, Real(0.06), 0}, {x, Real(0.44), 0}, Real(0.095), Real(0.095), -1);
  b.add_capsule({Real(-0.17), Real(0.46), 0}, {Real(0.17), Real(0.46), 0}, Real(0.085),
                Real(0.085), -1);
  for (int f = 0; f < 5; ++f) {
    const FingerLayout& fl = fingers[f];
    const int knuckle = 1 + 3 * f, mid = 2 + 3 * f, distal = 3 + 3 * f;
    b.add_capsule(joint_pos[knuckle], joint_pos[mid], fl.radius, Real(0.92) * fl.radius, f);
    b.add_capsule(joint_pos[mid], joint_pos[distal], Real(0.9) * fl.radius,
                  Real(0.82) * fl.radius, f);
    b.add_capsule(joint_pos[distal], finger_tip[f], Real(0.8) * fl.radius,
                  Real(0.62) * fl.radius, f);
  }

  SkinnedHandMesh& mesh = b.mesh;
  const size_t n = mesh.rest_vertices.size();

  // Blend weights: normalized inverse distance to the two nearest bones.
  // Distances are signed capsule-surface distances rebased to the deeper of
  // the two, so a vertex buried in one bone stays rigidly attached to it even
  // inside overlap regions; near-joint vertices (small gap) blend smoothly.
  // Weights above 0.95 snap to one-hot.
  const Real eps = Real(1e-3);
  mesh.blend_weights.resize(n);
  for (size_t v = 0; v < n; ++v) {
    const Vec3& p = mesh.rest_vertices[v];
    int na = -1, nb = -1;
    Real da = 0, db = 0;
    for (int j = 0; j < kNumJoints; ++j) {
      const Real d = point_segment_distance(p, bones[j].p0, bones[j].p1) - bones[j].radius;
      if (na < 0 || d < da) {
        nb = na; db = da;
        na = j; da = d;
      } else if (nb < 0 || d < db) {
        nb = j; db = d;
      }
    }
    const Real ia = 1 / eps;                  // nearest bone, rebased distance 0
    const Real ib = 1 / ((db - da) + eps);    // second bone at its gap
    auto& w = mesh.blend_weights[v];
    w.fill(Real(0));
    const Real wa = ia / (ia + ib);
    if (wa >= Real(0.95)) {
      w[na] = 1;
    } else {
      w[na] = wa;
      w[nb] = 1 - wa;
    }
  }

  // Albedo: palm skin tone, distinct hue per finger, bands along each
  // capsule, speckle on top.
  const Vec3 palm_tone{Real(0.87), Real(0.62), Real(0.48)};
  const Vec3 finger_tone[5] = {{Real(0.90), Real(0.45), Real(0.35)},
                               {Real(0.85), Real(0.70), Real(0.30)},
                               {Real(0.40), Real(0.75), Real(0.40)},
                               {Real(0.35), Real(0.55), Real(0.85)},
                               {Real(0.70), Real(0.45), Real(0.80)}};
  HashRng rng(hash_combine(seed, 0x68616e64ull));
  mesh.albedo.resize(n);
  for (size_t v = 0; v < n; ++v) {
    const int f = b.finger_id[v];
    Vec3 c = f < 0 ? palm_tone : finger_tone[f];
    const int band = int(std::floor(b.axial_param[v] * 4));
    if (band % 2 == 1) c = c * Real(0.72);
    for (int ch = 0; ch < 3; ++ch)
      c[ch] = std::clamp(c[ch] + Real(0.06) * (2 * rng.next_real() - 1), Real(0.02), Real(0.98));
    mesh.albedo[v] = c;
  }

  mesh.side = side;
  if (side == HandSide::kLeft) {
    for (Vec3& v : mesh.rest_vertices) v = mirror_point(v);
    for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
    skel = mirror_skeleton(skel);
  }
  mesh.rest_normals = compute_vertex_normals(mesh.rest_vertices, mesh.triangles);

  return {skel, std::move(mesh)};
}

SkinnedHandMesh make_capsule_mesh(const Vec3& p0, const Vec3& p1, Real r0, Real r1) {
  MeshBuilder b;
  b.add_capsule(p0, p1, r0, r1, -1);
  SkinnedHandMesh mesh = std::move(b.mesh);
  mesh.blend_weights.assign(mesh.rest_vertices.size(), {});
  for (auto& w : mesh.blend_weights) w[0] = 1;
  mesh.albedo.assign(mesh.rest_vertices.size(), Vec3{Real(0.8), Real(0.7), Real(0.6)});
  mesh.rest_normals = compute_vertex_normals(mesh.rest_vertices, mesh.triangles);
  return mesh;
}

}  // namespace handfield
