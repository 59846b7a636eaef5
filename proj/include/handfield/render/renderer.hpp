#pragma once

#include <vector>

#include "handfield/core/image.hpp"
#include "handfield/deform/deform.hpp"
#include "handfield/hand/camera.hpp"

namespace handfield {

// One entry of a merged two-hand sample list; points back into the per-hand
// sample arrays.
struct MergedSample {
  Real t = 0;
  Real delta = 0;
  uint8_t hand = 0;     // index into the frame's hand list
  uint32_t index = 0;   // sample index within that hand
};

// Stable merge by depth (ties: left-hand sample first), with forward
// differences as spacings and `far - t_last` (clamped) closing the list.
std::vector<MergedSample> compose_hands(std::span<const HandRaySamples> per_hand, Real far,
                                        Real min_delta = Real(1e-4));

// Per-sample radiance aligned with a merged list. Feature rows are packed
// D-strided; degenerate samples carry zeros.
struct RayRadiance {
  int feature_dim = 0;
  std::vector<Real> sigma;
  std::vector<Vec3> rgb;
  std::vector<Real> feature;

  void resize(size_t n, int d) {
    feature_dim = d;
    sigma.assign(n, Real(0));
    rgb.assign(n, Vec3{});
    feature.assign(n * size_t(d), Real(0));
  }
};

struct RayRender {
  Vec3 color;
  Real depth = 0;
  std::vector<Real> feature;
  Real weight_sum = 0;
  std::vector<Real> weights;        // w_v per sample
  std::vector<Real> transmittance;  // T per sample
};

// Discrete volume rendering: T_i = exp(-sum_{j<i} sigma_j delta_j),
// w_i = T_i (1 - exp(-sigma_i delta_i)); integrates color, raw depth, and
// features; the residual transmittance composites the background color.
void volume_render(std::span<const MergedSample> merged, const RayRadiance& radiance,
                   const Vec3& background, RayRender& out);

struct RayRenderUpstream {
  Vec3 d_color;
  Real d_depth = 0;
  std::span<const Real> d_feature;        // empty = zero
  std::span<const Real> d_weights;        // per sample, empty = zero
};

// Chain rule through volume_render: fills per-sample gradients of sigma,
// rgb, and feature.
void volume_render_backward(std::span<const MergedSample> merged, const RayRadiance& radiance,
                            const RayRender& render, const Vec3& background,
                            const RayRenderUpstream& upstream, std::vector<Real>& d_sigma,
                            std::vector<Vec3>& d_rgb, std::vector<Real>& d_feature);

// Pixel sampling over a foreground mask: ceil(budget * H * W) unique pixels,
// `fg_fraction` of them uniform over the mask, the rest over the background.
// An empty mask falls back to all-background (with a warning flag).
struct PixelSample {
  std::vector<std::pair<int, int>> pixels;  // (row, col)
  bool empty_mask_warning = false;
};
PixelSample sample_pixels(const ImageU8& mask, Real budget_fraction, Real fg_fraction,
                          HashRng& rng);

// Scene state for rendering one frame.
struct FrameState {
  std::vector<const HandInstance*> hands;  // 1 or 2
  int frame_index = -1;                    // latent row; -1 = novel (mean code)
};

struct RenderParams {
  int samples_per_ray = 64;
  bool jitter = false;
  uint64_t seed = 0;
  Vec3 background{0, 0, 0};
  Real min_delta = Real(1e-4);
};

struct PixelOutputs {
  Vec3 color;
  Real depth = 0;
  std::vector<Real> feature;
  Real weight_sum = 0;
  bool ok = true;
};

// Full forward path for one pixel (no tapes).
PixelOutputs render_pixel(const CanonicalField& field, const CorrectionField& correction,
                          const FrameState& frame, const Ray& ray, const RenderParams& params);

struct ImageRenderResult {
  ImageF color;       // 3ch
  ImageF depth;       // 1ch
  ImageF feature;     // Dch
  ImageF weight_sum;  // 1ch
  std::vector<std::pair<int, int>> failed_pixels;
};

// Deterministic full-image render (midpoint sampling regardless of
// params.jitter). Per-pixel failures are recorded, not fatal.
ImageRenderResult render_image(const CanonicalField& field, const CorrectionField& correction,
                               const FrameState& frame, const CameraModel& camera,
                               RenderParams params);

// Naive re-implementation used as the test oracle; shares only the parameter
// stores and scene data with the fast path.
PixelOutputs reference_render(const CanonicalField& field, const CorrectionField& correction,
                              const FrameState& frame, const CameraModel& camera, int row,
                              int col, const RenderParams& params);

}  // namespace handfield
