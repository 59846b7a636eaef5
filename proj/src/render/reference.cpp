// Test-oracle rendering path. Deliberately naive and self-contained: sampling,
// warping, encodings, network evaluation, merging, and integration are all
// re-implemented here rather than shared with the fast path, so the two can
// cross-check each other.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "handfield/render/renderer.hpp"

namespace handfield {

namespace {

constexpr Real kPi = Real(3.14159265358979323846);

Real naive_sigmoid(Real z) { return 1 / (1 + std::exp(-z)); }
Real naive_silu(Real z) { return z * naive_sigmoid(z); }
Real naive_softplus(Real z) {
  if (z > 30) return z;
  if (z < -30) return std::exp(z);
  return std::log(1 + std::exp(z));
}

enum NaiveAct { kActId, kActSilu, kActSoftplus, kActSigmoid };

Real naive_act(NaiveAct a, Real z) {
  switch (a) {
    case kActSilu: return naive_silu(z);
    case kActSoftplus: return naive_softplus(z);
    case kActSigmoid: return naive_sigmoid(z);
    default: return z;
  }
}

// Reads layer shapes straight from the store entries.
std::vector<Real> naive_mlp(const ParameterStore& store, const std::string& prefix,
                            int num_layers, int skip_layer, const std::vector<Real>& input,
                            NaiveAct hidden, NaiveAct output) {
  std::vector<Real> h = input;
  for (int l = 0; l < num_layers; ++l) {
    std::vector<Real> x = h;
    if (l == skip_layer && l > 0) x.insert(x.end(), input.begin(), input.end());
    const auto w = store.values(prefix + ".w" + std::to_string(l));
    const auto b = store.values(prefix + ".b" + std::to_string(l));
    const auto& entry = store.entry(prefix + ".w" + std::to_string(l));
    const size_t out_dim = entry.shape[0], in_dim = entry.shape[1];
    if (in_dim != x.size()) throw std::runtime_error("naive_mlp: dim mismatch at " + prefix);
    std::vector<Real> y(out_dim);
    for (size_t o = 0; o < out_dim; ++o) {
      Real s = b[o];
      for (size_t i = 0; i < in_dim; ++i) s += w[o * in_dim + i] * x[i];
      y[o] = naive_act(l == num_layers - 1 ? output : hidden, s);
    }
    h = std::move(y);
  }
  return h;
}

std::vector<Real> naive_pe(const std::vector<Real>& x, int degree) {
  std::vector<Real> out;
  for (int j = 0; j < degree; ++j)
    for (Real v : x) {
      out.push_back(std::sin(std::pow(Real(2), j) * v));
      out.push_back(std::cos(std::pow(Real(2), j) * v));
    }
  return out;
}

std::vector<Real> naive_ipe(const Vec3& mu, const Vec3& var, int degree) {
  std::vector<Real> out;
  for (int j = 0; j < degree; ++j)
    for (int i = 0; i < 3; ++i) {
      const Real f = std::pow(Real(2), j);
      const Real a = std::exp(-Real(0.5) * f * f * var[i]);
      out.push_back(std::sin(f * mu[i]) * a);
      out.push_back(std::cos(f * mu[i]) * a);
    }
  return out;
}

Vec3 naive_mirror(const Vec3& p) { return {-p.x, p.y, p.z}; }

struct NaiveNorm {
  Vec3 lo, scale;
  explicit NaiveNorm(const Aabb& box) {
    lo = box.lo;
    for (int i = 0; i < 3; ++i) scale[i] = 2 * kPi / std::max(box.hi[i] - lo[i], Real(1e-9));
  }
  Vec3 point(const Vec3& p) const {
    Vec3 q;
    for (int i = 0; i < 3; ++i) q[i] = (p[i] - lo[i]) * scale[i] - kPi;
    return q;
  }
  Vec3 variance(const Vec3& v) const {
    Vec3 q;
    for (int i = 0; i < 3; ++i) q[i] = v[i] * scale[i] * scale[i];
    return q;
  }
};

// Closest point on a triangle by exhaustive region checks: interior via the
// plane projection, then the three edges, then the vertices.
struct NaiveClosest {
  Vec3 point;
  Real bary[3];
};

NaiveClosest naive_closest_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a;
  const Real d00 = dot(ab, ab), d01 = dot(ab, ac), d11 = dot(ac, ac);
  const Real denom = d00 * d11 - d01 * d01;
  if (denom > Real(1e-30)) {
    const Vec3 ap = p - a;
    const Real d20 = dot(ap, ab), d21 = dot(ap, ac);
    const Real v = (d11 * d20 - d01 * d21) / denom;
    const Real w = (d00 * d21 - d01 * d20) / denom;
    if (v >= 0 && w >= 0 && v + w <= 1) {
      NaiveClosest r;
      r.point = a + ab * v + ac * w;
      r.bary[0] = 1 - v - w;
      r.bary[1] = v;
      r.bary[2] = w;
      return r;
    }
  }
  // edges and vertices
  const Vec3 verts[3] = {a, b, c};
  NaiveClosest best{};
  Real best_d2 = std::numeric_limits<Real>::infinity();
  for (int e = 0; e < 3; ++e) {
    const Vec3& p0 = verts[e];
    const Vec3& p1 = verts[(e + 1) % 3];
    const Vec3 d = p1 - p0;
    const Real len2 = std::max(dot(d, d), Real(1e-30));
    const Real t = std::clamp(dot(p - p0, d) / len2, Real(0), Real(1));
    const Vec3 q = p0 + d * t;
    const Real d2 = norm2(p - q);
    if (d2 < best_d2) {
      best_d2 = d2;
      best.point = q;
      best.bary[0] = best.bary[1] = best.bary[2] = 0;
      best.bary[e] = 1 - t;
      best.bary[(e + 1) % 3] = t;
    }
  }
  return best;
}

struct NaiveSample {
  Real t = 0;
  int hand = 0;
  bool degenerate = true;
  Vec3 x_can;
  Vec3 cov_diag;
  HandSide side = HandSide::kRight;
};

}  // namespace

PixelOutputs reference_render(const CanonicalField& field, const CorrectionField& correction,
                              const FrameState& frame, const CameraModel& camera, int row,
                              int col, const RenderParams& params) {
  // own ray setup
  const Vec3 dir_cam{(Real(col) + Real(0.5) - camera.cx) / camera.fx,
                     (Real(row) + Real(0.5) - camera.cy) / camera.fy, 1};
  const Mat3 rt = camera.world_to_camera.rotation.transposed();
  const Vec3 origin = rt * (camera.world_to_camera.translation * Real(-1));
  Vec3 dir = rt * dir_cam;
  dir = dir / std::sqrt(dot(dir, dir));

  const NaiveNorm norm(field.canonical_box());
  const Real base_radius =
      Real(0.5) * (1 / camera.fx + 1 / camera.fy) * (2 / std::sqrt(Real(12)));

  std::vector<NaiveSample> all;
  Real far_total = 0;
  for (size_t h = 0; h < frame.hands.size(); ++h) {
    const HandInstance& hand = *frame.hands[h];
    // own slab intersection
    Real t0 = Real(1e-4), t1 = std::numeric_limits<Real>::infinity();
    bool miss = false;
    for (int axis = 0; axis < 3 && !miss; ++axis) {
      const Real lo = hand.posed.inflated_bounds.lo[axis];
      const Real hi = hand.posed.inflated_bounds.hi[axis];
      if (std::abs(dir[axis]) < Real(1e-15)) {
        if (origin[axis] < lo || origin[axis] > hi) miss = true;
        continue;
      }
      Real ta = (lo - origin[axis]) / dir[axis];
      Real tb = (hi - origin[axis]) / dir[axis];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (miss || t0 >= t1) continue;
    far_total = std::max(far_total, t1);

    const int n = params.samples_per_ray;
    for (int k = 0; k < n; ++k) {
      // midpoint boundaries, midpoint depth
      const Real lo_k = t0 + (Real(k) + Real(0.5)) * (t1 - t0) / Real(n + 1);
      const Real hi_k = t0 + (Real(k) + Real(1.5)) * (t1 - t0) / Real(n + 1);
      NaiveSample s;
      s.t = Real(0.5) * (lo_k + hi_k);
      s.hand = int(h);
      s.side = hand.side;

      // frustum moments
      const Real tm = (lo_k + hi_k) / 2, td = (hi_k - lo_k) / 2;
      const Real mu_t = tm + (2 * tm * td * td) / (3 * tm * tm + td * td);
      const Real var_t = td * td / 3 - Real(4.0 / 15.0) * td * td * td * td *
                                           (12 * tm * tm - td * td) /
                                           ((3 * tm * tm + td * td) * (3 * tm * tm + td * td));
      const Real var_r =
          base_radius * base_radius *
          (tm * tm / 4 + 5 * td * td / 12 - Real(4.0 / 15.0) * td * td * td * td /
                                                (3 * tm * tm + td * td));
      const Vec3 mean = origin + dir * mu_t;
      Mat3 cov;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          cov(i, j) = var_t * dir[i] * dir[j] + var_r * ((i == j ? 1 : 0) - dir[i] * dir[j]);

      // nearest facet, exhaustive
      const auto& tris = hand.posed.mesh->triangles;
      const auto& verts = hand.posed.vertices;
      Real best_d2 = std::numeric_limits<Real>::infinity();
      size_t best_tri = 0;
      NaiveClosest best_cp{};
      for (size_t ti = 0; ti < tris.size(); ++ti) {
        const NaiveClosest cp = naive_closest_on_triangle(mean, verts[tris[ti][0]],
                                                          verts[tris[ti][1]], verts[tris[ti][2]]);
        const Real d2 = norm2(mean - cp.point);
        if (d2 < best_d2) {
          best_d2 = d2;
          best_tri = ti;
          best_cp = cp;
        }
      }
      const Real dist = std::sqrt(best_d2);
      if (dist > correction.config().degenerate_distance_factor * hand.posed.inflation_margin) {
        all.push_back(s);
        continue;
      }

      // barycentric blend weights, blended obs->canonical transform
      Real weights[kNumJoints];
      for (int j = 0; j < kNumJoints; ++j) {
        weights[j] = best_cp.bary[0] * hand.posed.mesh->blend_weights[tris[best_tri][0]][j] +
                     best_cp.bary[1] * hand.posed.mesh->blend_weights[tris[best_tri][1]][j] +
                     best_cp.bary[2] * hand.posed.mesh->blend_weights[tris[best_tri][2]][j];
      }
      Mat3 lin = Mat3::zero();
      Vec3 trans{};
      for (int j = 0; j < kNumJoints; ++j) {
        const RigidTransform& tj = hand.posed.obs_to_canonical[j];
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) lin(r, c) += weights[j] * tj.rotation(r, c);
          trans[r] += weights[j] * tj.translation[r];
        }
      }
      const Vec3 xhat = lin * mean + trans;

      const Mat3 rot = polar_rotation(lin);
      const Mat3 cov_can = rot * cov * rot.transposed();
      s.cov_diag = {cov_can(0, 0), cov_can(1, 1), cov_can(2, 2)};

      // correction with the hand mapping
      const bool mirrored = hand.side == HandSide::kLeft;
      const Vec3 q = mirrored ? naive_mirror(xhat) : xhat;
      const Vec3 qe = norm.point(q);
      std::vector<Real> corr_in = naive_pe({qe.x, qe.y, qe.z}, correction.config().corr_pos_degree);
      corr_in.insert(corr_in.end(), hand.pose_cond.begin(), hand.pose_cond.end());
      std::vector<Real> hdn = naive_mlp(correction.params(), "corr.trunk",
                                        correction.config().corr_layers,
                                        correction.config().corr_skip, corr_in, kActSilu,
                                        kActSilu);
      const std::vector<Real> res = naive_mlp(correction.params(), "corr.head", 1, -1, hdn,
                                              kActId, kActId);
      Vec3 sum = xhat + Vec3{res[0], res[1], res[2]};
      s.x_can = mirrored ? naive_mirror(sum) : sum;

      const Aabb& box = field.canonical_box();
      if (s.x_can.x < box.lo.x || s.x_can.x > box.hi.x || s.x_can.y < box.lo.y ||
          s.x_can.y > box.hi.y || s.x_can.z < box.lo.z || s.x_can.z > box.hi.z) {
        all.push_back(s);
        continue;
      }
      s.degenerate = false;
      all.push_back(s);
    }
  }

  const int d = field.config().feature_dim;
  PixelOutputs out;
  out.feature.assign(size_t(d), Real(0));
  if (all.empty()) {
    out.color = params.background;
    return out;
  }

  // depth re-sort; left-hand samples first on ties
  std::stable_sort(all.begin(), all.end(), [](const NaiveSample& a, const NaiveSample& b) {
    if (a.t != b.t) return a.t < b.t;
    const int ra = a.side == HandSide::kLeft ? 0 : 1;
    const int rb = b.side == HandSide::kLeft ? 0 : 1;
    if (ra != rb) return ra < rb;
    return a.hand < b.hand;
  });

  // per-sample radiance via the naive network evaluator
  const size_t n = all.size();
  std::vector<Real> sigma(n, 0);
  std::vector<Vec3> rgb(n);
  std::vector<std::vector<Real>> feat(n, std::vector<Real>(size_t(d), 0));
  for (size_t i = 0; i < n; ++i) {
    if (all[i].degenerate) continue;
    const std::vector<Real> enc =
        naive_ipe(norm.point(all[i].x_can), norm.variance(all[i].cov_diag),
                  field.config().pos_degree);
    const std::vector<Real> f_sigma =
        naive_mlp(field.density_params(), "density.trunk", field.config().density_layers,
                  field.config().density_skip, enc, kActSilu, kActSilu);
    sigma[i] = naive_mlp(field.density_params(), "density.head", 1, -1, f_sigma, kActId,
                         kActSoftplus)[0];

    const Vec3 view = all[i].side == HandSide::kLeft ? naive_mirror(dir) : dir;
    std::vector<Real> color_in = naive_pe({view.x, view.y, view.z}, field.config().dir_degree);
    color_in.insert(color_in.end(), f_sigma.begin(), f_sigma.end());
    const auto latent = field.latent_code(frame.frame_index);
    color_in.insert(color_in.end(), latent.begin(), latent.end());
    const std::vector<Real> hidden =
        naive_mlp(field.color_params(), "color.trunk", field.config().color_layers, -1,
                  color_in, kActSilu, kActSilu);
    const std::vector<Real> c =
        naive_mlp(field.color_params(), "color.rgb", 1, -1, hidden, kActId, kActSigmoid);
    rgb[i] = {c[0], c[1], c[2]};
    feat[i] = naive_mlp(field.color_params(), "color.feat", 1, -1, hidden, kActId, kActId);
  }

  // quadratic-cost integration straight from the definitions
  Real weight_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    const Real delta =
        i + 1 < n ? all[i + 1].t - all[i].t : std::max(far_total - all[i].t, params.min_delta);
    Real acc = 0;
    for (size_t j = 0; j < i; ++j) {
      const Real dj = j + 1 < n ? all[j + 1].t - all[j].t
                                : std::max(far_total - all[j].t, params.min_delta);
      acc += sigma[j] * dj;
    }
    const Real transmittance = std::exp(-acc);
    const Real w = transmittance * (1 - std::exp(-sigma[i] * delta));
    weight_sum += w;
    out.color += rgb[i] * w;
    out.depth += all[i].t * w;
    for (int k = 0; k < d; ++k) out.feature[size_t(k)] += feat[i][size_t(k)] * w;
  }
  out.color += params.background * (1 - weight_sum);
  out.weight_sum = weight_sum;
  return out;
}

}  // namespace handfield
