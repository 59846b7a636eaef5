#pragma once

#include <optional>
#include <string>
#include <vector>

#include "handfield/core/image.hpp"

namespace handfield {

// 10*log10(1 / MSE) over masked pixels, peak value 1. A zero-MSE pair
// reports the documented 99 dB cap.
Real psnr(const ImageF& pred, const ImageF& target, const ImageU8* mask = nullptr);

// Standard single-scale SSIM on the channel-mean grayscale image: 11x11
// Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, dynamic range 1.
Real ssim(const ImageF& pred, const ImageF& target);

// Mean |pred - target| over pixels where `mask` is set and the target is
// finite. Throws when the mask selects nothing.
Real depth_error(const ImageF& pred, const ImageF& target, const ImageU8& mask);

struct EvalReport {
  struct PerImage {
    int frame_id = 0;
    std::string camera_id;
    Real psnr_full = 0;
    Real psnr_masked = 0;
    Real ssim_value = 0;
    Real de = 0;
  };
  std::vector<PerImage> images;
  Real mean_psnr_full = 0;
  Real mean_psnr_masked = 0;
  Real mean_ssim = 0;
  Real mean_de = 0;
  std::string mode;  // novel-view | novel-pose-generalize | novel-pose-adapt
  // LPIPS intentionally absent from the schema: no perceptual network ships
  // with this artifact.

  void finalize();
  std::string to_json() const;
  std::string to_table() const;
};

}  // namespace handfield
