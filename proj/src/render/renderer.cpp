#include "handfield/render/renderer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace handfield {

namespace {

// left-hand samples win depth ties; equal sides fall back to list order
bool merge_before(const DeformedSample& a, uint8_t hand_a, const DeformedSample& b,
                  uint8_t hand_b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.source != b.source) return a.source == HandSide::kLeft;
  return hand_a <= hand_b;
}

}  // namespace

std::vector<MergedSample> compose_hands(std::span<const HandRaySamples> per_hand, Real far,
                                        Real min_delta) {
  std::vector<MergedSample> merged;
  size_t total = 0;
  for (const auto& h : per_hand) total += h.samples.size();
  merged.reserve(total);

  if (per_hand.size() > 2) throw std::invalid_argument("compose_hands: at most two hands");

  if (per_hand.size() == 1 || per_hand.size() == 2) {
    static const std::vector<DeformedSample> kEmpty;
    const auto& a = per_hand[0].samples;
    const auto& b = per_hand.size() == 2 ? per_hand[1].samples : kEmpty;
    size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
      bool take_a;
      if (i >= a.size()) take_a = false;
      else if (j >= b.size()) take_a = true;
      else take_a = merge_before(a[i], 0, b[j], 1);
      if (take_a) {
        merged.push_back({a[i].t, 0, 0, uint32_t(i)});
        ++i;
      } else {
        merged.push_back({b[j].t, 0, 1, uint32_t(j)});
        ++j;
      }
    }
  }

  for (size_t i = 0; i + 1 < merged.size(); ++i) merged[i].delta = merged[i + 1].t - merged[i].t;
  if (!merged.empty()) merged.back().delta = std::max(far - merged.back().t, min_delta);
  return merged;
}

void volume_render(std::span<const MergedSample> merged, const RayRadiance& radiance,
                   const Vec3& background, RayRender& out) {
  const size_t n = merged.size();
  const int d = radiance.feature_dim;
  assert(radiance.sigma.size() == n && radiance.rgb.size() == n);

  out.color = {0, 0, 0};
  out.depth = 0;
  out.feature.assign(size_t(d), Real(0));
  out.weights.assign(n, Real(0));
  out.transmittance.assign(n, Real(0));
  out.weight_sum = 0;

  Real transmittance = 1;
  for (size_t i = 0; i < n; ++i) {
    const Real sigma = radiance.sigma[i];
    const Real delta = merged[i].delta;
    if (sigma < 0 || delta < 0) throw std::invalid_argument("volume_render: negative sigma/delta");
    out.transmittance[i] = transmittance;
    const Real att = std::exp(-sigma * delta);
    const Real w = transmittance * (1 - att);
    out.weights[i] = w;
    out.weight_sum += w;
    out.color += radiance.rgb[i] * w;
    out.depth += merged[i].t * w;
    const Real* f = radiance.feature.data() + size_t(i) * d;
    for (int k = 0; k < d; ++k) out.feature[size_t(k)] += f[k] * w;
    transmittance *= att;
  }
  out.color += background * (1 - out.weight_sum);
}

void volume_render_backward(std::span<const MergedSample> merged, const RayRadiance& radiance,
                            const RayRender& render, const Vec3& background,
                            const RayRenderUpstream& upstream, std::vector<Real>& d_sigma,
                            std::vector<Vec3>& d_rgb, std::vector<Real>& d_feature) {
  const size_t n = merged.size();
  const int d = radiance.feature_dim;
  d_sigma.assign(n, Real(0));
  d_rgb.assign(n, Vec3{});
  d_feature.assign(n * size_t(d), Real(0));

  // dL/dw_i, including the background term folded into every weight.
  thread_local std::vector<Real> g;
  g.assign(n, Real(0));
  for (size_t i = 0; i < n; ++i) {
    Real gi = dot(upstream.d_color, radiance.rgb[i] - background) + upstream.d_depth * merged[i].t;
    if (!upstream.d_feature.empty()) {
      const Real* f = radiance.feature.data() + size_t(i) * d;
      for (int k = 0; k < d; ++k) gi += upstream.d_feature[size_t(k)] * f[k];
    }
    if (!upstream.d_weights.empty()) gi += upstream.d_weights[i];
    g[i] = gi;

    const Real w = render.weights[i];
    d_rgb[i] = upstream.d_color * w;
    if (!upstream.d_feature.empty()) {
      Real* df = d_feature.data() + size_t(i) * d;
      for (int k = 0; k < d; ++k) df[k] = upstream.d_feature[size_t(k)] * w;
    }
  }

  // d w_i / d sigma_i = T_i delta_i exp(-sigma_i delta_i);
  // d w_j / d sigma_i = -delta_i w_j for j > i.
  Real suffix = 0;
  for (size_t i = n; i-- > 0;) {
    const Real delta = merged[i].delta;
    const Real att = std::exp(-radiance.sigma[i] * delta);
    d_sigma[i] = g[i] * render.transmittance[i] * delta * att - delta * suffix;
    suffix += g[i] * render.weights[i];
  }
}

PixelSample sample_pixels(const ImageU8& mask, Real budget_fraction, Real fg_fraction,
                          HashRng& rng) {
  if (budget_fraction <= 0 || budget_fraction > 1)
    throw std::invalid_argument("sample_pixels: budget_fraction outside (0, 1]");
  const size_t total = mask.pixel_count();
  std::vector<uint32_t> fg, bg;
  fg.reserve(total);
  bg.reserve(total);
  for (size_t i = 0; i < total; ++i) (mask.data[i] ? fg : bg).push_back(uint32_t(i));

  const size_t budget = std::min(total, size_t(std::ceil(budget_fraction * Real(total))));
  PixelSample out;
  size_t want_fg = size_t(std::llround(fg_fraction * Real(budget)));
  if (fg.empty()) {
    out.empty_mask_warning = true;
    want_fg = 0;
  }
  size_t n_fg = std::min(want_fg, fg.size());
  size_t n_bg = std::min(budget - n_fg, bg.size());
  // top up from whichever stratum still has pixels
  n_fg = std::min(fg.size(), n_fg + (budget - n_fg - n_bg));

  auto draw = [&rng](std::vector<uint32_t>& pool, size_t count,
                     std::vector<uint32_t>& sink) {
    for (size_t k = 0; k < count; ++k) {
      const size_t j = k + size_t(rng.next_below(uint64_t(pool.size() - k)));
      std::swap(pool[k], pool[j]);
      sink.push_back(pool[k]);
    }
  };
  std::vector<uint32_t> chosen;
  chosen.reserve(budget);
  draw(fg, n_fg, chosen);
  draw(bg, n_bg, chosen);

  out.pixels.reserve(chosen.size());
  for (uint32_t idx : chosen)
    out.pixels.emplace_back(int(idx / uint32_t(mask.width)), int(idx % uint32_t(mask.width)));
  return out;
}

PixelOutputs render_pixel(const CanonicalField& field, const CorrectionField& correction,
                          const FrameState& frame, const Ray& ray, const RenderParams& params) {
  thread_local std::vector<HandRaySamples> per_hand;
  per_hand.resize(frame.hands.size());

  RaySampling sampling;
  sampling.samples_per_ray = params.samples_per_ray;
  sampling.jitter = params.jitter;
  sampling.seed = params.seed;

  Real far = 0;
  bool any_hit = false;
  for (size_t h = 0; h < frame.hands.size(); ++h) {
    sampling.stream = hash_combine(uint64_t(ray.row) * 1000003u + uint64_t(ray.col), h);
    per_hand[h] = deform_ray_samples(ray, *frame.hands[h], correction, field.canonical_box(),
                                     sampling);
    if (per_hand[h].hit) {
      far = std::max(far, per_hand[h].t_far);
      any_hit = true;
    }
  }

  PixelOutputs out;
  out.feature.assign(size_t(field.config().feature_dim), Real(0));
  if (!any_hit) {
    out.color = params.background;
    return out;
  }

  const std::vector<MergedSample> merged = compose_hands(per_hand, far, params.min_delta);

  thread_local RayRadiance radiance;
  radiance.resize(merged.size(), field.config().feature_dim);
  thread_local RadianceEval eval;
  for (size_t i = 0; i < merged.size(); ++i) {
    const DeformedSample& s = per_hand[merged[i].hand].samples[merged[i].index];
    if (s.degenerate) continue;
    const Vec3 enc_mean = field.normalizer().point(s.canonical.mean);
    const Vec3 enc_var = field.normalizer().variance(
        {s.canonical.cov(0, 0), s.canonical.cov(1, 1), s.canonical.cov(2, 2)});
    field.query_density(enc_mean, enc_var, eval, false);
    const Vec3 dir =
        s.source == HandSide::kLeft ? mirror_point(ray.direction) : ray.direction;
    field.query_color(dir, frame.frame_index, eval, false);
    radiance.sigma[i] = eval.sigma;
    radiance.rgb[i] = eval.rgb;
    std::copy(eval.f_c.begin(), eval.f_c.end(),
              radiance.feature.begin() + long(i) * field.config().feature_dim);
  }

  thread_local RayRender render;
  volume_render(merged, radiance, params.background, render);
  out.color = render.color;
  out.depth = render.depth;
  out.feature = render.feature;
  out.weight_sum = render.weight_sum;
  return out;
}

ImageRenderResult render_image(const CanonicalField& field, const CorrectionField& correction,
                               const FrameState& frame, const CameraModel& camera,
                               RenderParams params) {
  params.jitter = false;  // full renders are deterministic
  const int d = field.config().feature_dim;
  ImageRenderResult out;
  out.color = ImageF(camera.height, camera.width, 3);
  out.depth = ImageF(camera.height, camera.width, 1);
  out.feature = ImageF(camera.height, camera.width, d);
  out.weight_sum = ImageF(camera.height, camera.width, 1);

  for (int r = 0; r < camera.height; ++r) {
    for (int c = 0; c < camera.width; ++c) {
      try {
        const PixelOutputs px =
            render_pixel(field, correction, frame, camera.pixel_ray(r, c), params);
        for (int ch = 0; ch < 3; ++ch) out.color.at(r, c, ch) = px.color[ch];
        out.depth.at(r, c) = px.depth;
        for (int ch = 0; ch < d; ++ch) out.feature.at(r, c, ch) = px.feature[size_t(ch)];
        out.weight_sum.at(r, c) = px.weight_sum;
      } catch (const std::exception&) {
        out.failed_pixels.emplace_back(r, c);
      }
    }
  }
  return out;
}

}  // namespace handfield
