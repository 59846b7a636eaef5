#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>

namespace handfield {

using Real = double;

struct Vec3 {
  Real x = 0, y = 0, z = 0;

  Real& operator[](int i) { return (&x)[i]; }
  Real operator[](int i) const { return (&x)[i]; }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(Real s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(Real s) const { return {x / s, y / s, z / s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(Real s) { x *= s; y *= s; z *= s; return *this; }
};

inline Vec3 operator*(Real s, const Vec3& v) { return v * s; }
inline Real dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline Real norm2(const Vec3& v) { return dot(v, v); }
inline Real norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }
inline Vec3 cwise_min(const Vec3& a, const Vec3& b) {
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)};
}
inline Vec3 cwise_max(const Vec3& a, const Vec3& b) {
  return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)};
}
inline bool all_finite(const Vec3& v) {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<Real, 9> m{};

  static Mat3 identity() { return {{1, 0, 0, 0, 1, 0, 0, 0, 1}}; }
  static Mat3 zero() { return {}; }
  static Mat3 diag(Real a, Real b, Real c) { return {{a, 0, 0, 0, b, 0, 0, 0, c}}; }

  Real& operator()(int r, int c) { return m[r * 3 + c]; }
  Real operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        Real s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3 operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }
  Mat3 operator-(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] - o.m[i];
    return r;
  }
  Mat3 operator*(Real s) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
    return r;
  }
  Mat3 transposed() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  Real det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
  }
  Mat3 inverse() const {
    const Real d = det();
    Mat3 r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
  }
};

// Rotation about `axis_angle` (direction = axis, magnitude = angle in radians).
Mat3 rotation_from_axis_angle(const Vec3& axis_angle);

// Eigenvalues of a symmetric 3x3, ascending. Cyclic Jacobi sweeps.
std::array<Real, 3> sym3_eigenvalues(const Mat3& a);

// Nearest rotation to `a` (polar factor). Falls back to identity for
// singular input. Newton iteration X <- (X + X^-T)/2.
Mat3 polar_rotation(const Mat3& a);

// Rigid transform y = R x + t.
struct RigidTransform {
  Mat3 rotation = Mat3::identity();
  Vec3 translation;

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidTransform inverse() const {
    const Mat3 rt = rotation.transposed();
    return {rt, -(rt * translation)};
  }
  // this ∘ o: applies o first.
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
};

// 3x4 affine matrix, row-major. Linear part in columns 0..2, translation in
// column 3. Not necessarily rigid (convex blends of rigid transforms land here).
struct Affine34 {
  std::array<Real, 12> m{};

  static Affine34 identity() {
    Affine34 a;
    a.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
    return a;
  }
  static Affine34 from_rigid(const RigidTransform& t) {
    Affine34 a;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a.m[r * 4 + c] = t.rotation(r, c);
      a.m[r * 4 + 3] = t.translation[r];
    }
    return a;
  }

  Real& operator()(int r, int c) { return m[r * 4 + c]; }
  Real operator()(int r, int c) const { return m[r * 4 + c]; }

  Vec3 apply(const Vec3& p) const {
    return {m[0] * p.x + m[1] * p.y + m[2] * p.z + m[3],
            m[4] * p.x + m[5] * p.y + m[6] * p.z + m[7],
            m[8] * p.x + m[9] * p.y + m[10] * p.z + m[11]};
  }
  Mat3 linear() const {
    return {{m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]}};
  }
  Vec3 translation() const { return {m[3], m[7], m[11]}; }
};

struct Aabb {
  Vec3 lo{std::numeric_limits<Real>::infinity(), std::numeric_limits<Real>::infinity(),
          std::numeric_limits<Real>::infinity()};
  Vec3 hi{-std::numeric_limits<Real>::infinity(), -std::numeric_limits<Real>::infinity(),
          -std::numeric_limits<Real>::infinity()};

  void extend(const Vec3& p) { lo = cwise_min(lo, p); hi = cwise_max(hi, p); }
  void extend(const Aabb& b) { lo = cwise_min(lo, b.lo); hi = cwise_max(hi, b.hi); }
  bool valid() const { return lo.x <= hi.x && lo.y <= hi.y && lo.z <= hi.z; }
  Vec3 center() const { return (lo + hi) * Real(0.5); }
  Vec3 extent() const { return hi - lo; }
  Real diagonal() const { return norm(hi - lo); }
  bool contains(const Vec3& p) const {
    return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
  }
  Aabb inflated(Real margin) const {
    const Vec3 d{margin, margin, margin};
    return {lo - d, hi + d};
  }
  // Scales half-extents by `factor` about the center.
  Aabb scaled(Real factor) const {
    const Vec3 c = center();
    const Vec3 h = (hi - lo) * (Real(0.5) * factor);
    return {c - h, c + h};
  }
};

}  // namespace handfield
