#include "handfield/math/geometry.hpp"

#include <algorithm>

namespace handfield {

Mat3 rotation_from_axis_angle(const Vec3& axis_angle) {
  const Real theta = norm(axis_angle);
  if (theta < Real(1e-12)) {
    // Small-angle: I + [w]x is accurate to O(theta^2); keeps the map smooth at 0.
    Mat3 r = Mat3::identity();
    r(0, 1) = -axis_angle.z; r(0, 2) = axis_angle.y;
    r(1, 0) = axis_angle.z;  r(1, 2) = -axis_angle.x;
    r(2, 0) = -axis_angle.y; r(2, 1) = axis_angle.x;
    return r;
  }
  const Vec3 u = axis_angle / theta;
  const Real c = std::cos(theta), s = std::sin(theta), t = 1 - c;
  Mat3 r;
  r(0, 0) = c + u.x * u.x * t;
  r(0, 1) = u.x * u.y * t - u.z * s;
  r(0, 2) = u.x * u.z * t + u.y * s;
  r(1, 0) = u.y * u.x * t + u.z * s;
  r(1, 1) = c + u.y * u.y * t;
  r(1, 2) = u.y * u.z * t - u.x * s;
  r(2, 0) = u.z * u.x * t - u.y * s;
  r(2, 1) = u.z * u.y * t + u.x * s;
  r(2, 2) = c + u.z * u.z * t;
  return r;
}

std::array<Real, 3> sym3_eigenvalues(const Mat3& a_in) {
  Mat3 a = a_in;
  for (int sweep = 0; sweep < 32; ++sweep) {
    Real off = a(0, 1) * a(0, 1) + a(0, 2) * a(0, 2) + a(1, 2) * a(1, 2);
    if (off < Real(1e-30)) break;
    for (int p = 0; p < 3; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a(p, q)) < Real(1e-300)) continue;
        const Real theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const Real t = (theta >= 0 ? Real(1) : Real(-1)) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Real c = 1 / std::sqrt(t * t + 1);
        const Real s = t * c;
        Mat3 j = Mat3::identity();
        j(p, p) = c; j(q, q) = c; j(p, q) = s; j(q, p) = -s;
        a = j.transposed() * a * j;
      }
    }
  }
  std::array<Real, 3> ev{a(0, 0), a(1, 1), a(2, 2)};
  std::sort(ev.begin(), ev.end());
  return ev;
}

Mat3 polar_rotation(const Mat3& a) {
  if (std::abs(a.det()) < Real(1e-12)) return Mat3::identity();
  Mat3 x = a;
  for (int it = 0; it < 24; ++it) {
    const Mat3 xit = x.inverse().transposed();
    Mat3 next;
    for (int i = 0; i < 9; ++i) next.m[i] = Real(0.5) * (x.m[i] + xit.m[i]);
    Real delta = 0;
    for (int i = 0; i < 9; ++i) delta = std::max(delta, std::abs(next.m[i] - x.m[i]));
    x = next;
    if (delta < Real(1e-14)) break;
  }
  return x;
}

}  // namespace handfield
