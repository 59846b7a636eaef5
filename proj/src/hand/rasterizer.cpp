#include "handfield/hand/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace handfield {

namespace {

struct CamVertex {
  Vec3 cam;      // camera-space position
  Real u, v;     // continuous image coordinates
  bool in_front;
};

}  // namespace

CameraModel CameraModel::look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint,
                                 Real fx, Real fy, int width, int height) {
  const Vec3 fwd = normalized(target - eye);           // camera +z
  Vec3 right = cross(fwd, up_hint);
  if (norm(right) < Real(1e-9)) right = cross(fwd, Vec3{1, 0, 0});
  right = normalized(right);
  const Vec3 down = cross(fwd, right);                 // camera +y (rows grow downward)

  CameraModel cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = Real(width) / 2;
  cam.cy = Real(height) / 2;
  cam.width = width;
  cam.height = height;
  Mat3 r;
  for (int c = 0; c < 3; ++c) {
    r(0, c) = right[c];
    r(1, c) = down[c];
    r(2, c) = fwd[c];
  }
  cam.world_to_camera = {r, -(r * eye)};
  return cam;
}

RasterResult rasterize(const CameraModel& camera, std::span<const PosedHand* const> hands,
                       const RasterOptions& options) {
  if (!camera.valid()) throw std::invalid_argument("rasterize: invalid camera");
  const int h = camera.height, w = camera.width;
  RasterResult out;
  out.depth = ImageF(h, w, 1, std::numeric_limits<Real>::infinity());
  out.color = ImageF(h, w, 3);
  out.mask = ImageU8(h, w, 1, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch) out.color.at(r, c, ch) = options.background[ch];

  std::vector<CamVertex> cv;
  for (const PosedHand* hand : hands) {
    const auto& verts = hand->vertices;
    const auto& tris = hand->mesh->triangles;
    cv.resize(verts.size());
    for (size_t i = 0; i < verts.size(); ++i) {
      const Vec3 c = camera.world_to_camera.apply(verts[i]);
      cv[i].cam = c;
      cv[i].in_front = c.z > Real(1e-6);
      if (cv[i].in_front) {
        cv[i].u = camera.fx * c.x / c.z + camera.cx;
        cv[i].v = camera.fy * c.y / c.z + camera.cy;
      }
    }

    for (const auto& t : tris) {
      const CamVertex &a = cv[t[0]], &b = cv[t[1]], &c = cv[t[2]];
      if (!a.in_front || !b.in_front || !c.in_front) continue;

      const Real area = (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
      if (std::abs(area) < Real(1e-12)) continue;

      const Real min_u = std::min({a.u, b.u, c.u}), max_u = std::max({a.u, b.u, c.u});
      const Real min_v = std::min({a.v, b.v, c.v}), max_v = std::max({a.v, b.v, c.v});
      const int c0 = std::max(0, int(std::ceil(min_u - Real(0.5))));
      const int c1 = std::min(w - 1, int(std::floor(max_u - Real(0.5))));
      const int r0 = std::max(0, int(std::ceil(min_v - Real(0.5))));
      const int r1 = std::min(h - 1, int(std::floor(max_v - Real(0.5))));

      const Real inv_area = 1 / area;
      const Real iz0 = 1 / a.cam.z, iz1 = 1 / b.cam.z, iz2 = 1 / c.cam.z;

      for (int r = r0; r <= r1; ++r) {
        const Real py = Real(r) + Real(0.5);
        for (int col = c0; col <= c1; ++col) {
          const Real px = Real(col) + Real(0.5);
          const Real w0 = ((b.u - px) * (c.v - py) - (b.v - py) * (c.u - px)) * inv_area;
          const Real w1 = ((c.u - px) * (a.v - py) - (c.v - py) * (a.u - px)) * inv_area;
          const Real w2 = 1 - w0 - w1;
          if (w0 < 0 || w1 < 0 || w2 < 0) continue;

          const Real denom = w0 * iz0 + w1 * iz1 + w2 * iz2;
          const Real q0 = w0 * iz0 / denom, q1 = w1 * iz1 / denom, q2 = w2 * iz2 / denom;
          const Vec3 p_cam = a.cam * q0 + b.cam * q1 + c.cam * q2;
          const Real depth = norm(p_cam);
          if (depth >= out.depth.at(r, col)) continue;

          const Vec3 albedo = hand->mesh->albedo[t[0]] * q0 + hand->mesh->albedo[t[1]] * q1 +
                              hand->mesh->albedo[t[2]] * q2;
          Vec3 n = hand->normals[t[0]] * q0 + hand->normals[t[1]] * q1 + hand->normals[t[2]] * q2;
          const Real len = norm(n);
          if (len > Real(1e-12)) n = n / len;
          const Real shade =
              options.ambient + options.diffuse * std::max(Real(0), dot(n, options.light_dir));

          out.depth.at(r, col) = depth;
          out.mask.at(r, col) = 255;
          for (int ch = 0; ch < 3; ++ch)
            out.color.at(r, col, ch) = std::clamp(albedo[ch] * shade, Real(0), Real(1));
        }
      }
    }
  }
  return out;
}

void dilate_mask(ImageU8& mask, int radius) {
  if (radius <= 0) return;
  const int h = mask.height, w = mask.width;
  ImageU8 src = mask;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (src.at(r, c)) continue;
      bool hit = false;
      for (int dr = -radius; dr <= radius && !hit; ++dr) {
        const int rr = r + dr;
        if (rr < 0 || rr >= h) continue;
        for (int dc = -radius; dc <= radius; ++dc) {
          const int cc = c + dc;
          if (cc >= 0 && cc < w && src.at(rr, cc)) {
            hit = true;
            break;
          }
        }
      }
      if (hit) mask.at(r, c) = 255;
    }
  }
}

ProjectedBounds project_bounds(const CameraModel& camera, const PosedHand& hand) {
  bool any_in_front = false;
  for (const Vec3& v : hand.vertices) {
    if (camera.world_to_camera.apply(v).z > Real(1e-6)) {
      any_in_front = true;
      break;
    }
  }
  if (!any_in_front) throw std::runtime_error("project_bounds: mesh entirely behind camera");

  const PosedHand* hands[1] = {&hand};
  RasterResult raster = rasterize(camera, hands);
  ProjectedBounds out;
  out.mask = std::move(raster.mask);
  dilate_mask(out.mask, 3);
  out.min_row = out.mask.height;
  out.min_col = out.mask.width;
  for (int r = 0; r < out.mask.height; ++r)
    for (int c = 0; c < out.mask.width; ++c)
      if (out.mask.at(r, c)) {
        out.min_row = std::min(out.min_row, r);
        out.min_col = std::min(out.min_col, c);
        out.max_row = std::max(out.max_row, r);
        out.max_col = std::max(out.max_col, c);
      }
  return out;
}

}  // namespace handfield
