#include "handfield/metrics/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace handfield {

Real psnr(const ImageF& pred, const ImageF& target, const ImageU8* mask) {
  if (!pred.same_shape(target)) throw std::invalid_argument("psnr: shape mismatch");
  if (mask && (mask->height != pred.height || mask->width != pred.width))
    throw std::invalid_argument("psnr: mask shape mismatch");
  Real acc = 0;
  size_t n = 0;
  for (int r = 0; r < pred.height; ++r) {
    for (int c = 0; c < pred.width; ++c) {
      if (mask && !mask->at(r, c)) continue;
      for (int ch = 0; ch < pred.channels; ++ch) {
        const Real e = pred.at(r, c, ch) - target.at(r, c, ch);
        acc += e * e;
      }
      n += size_t(pred.channels);
    }
  }
  if (n == 0) throw std::invalid_argument("psnr: empty mask");
  const Real mse = acc / Real(n);
  if (mse <= 0) return 99;  // documented cap for identical images
  return std::min(Real(99), 10 * std::log10(1 / mse));
}

namespace {

std::vector<Real> grayscale(const ImageF& img) {
  std::vector<Real> g(img.pixel_count());
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      Real acc = 0;
      for (int ch = 0; ch < img.channels; ++ch) acc += img.at(r, c, ch);
      g[size_t(r) * img.width + c] = acc / img.channels;
    }
  return g;
}

}  // namespace

Real ssim(const ImageF& pred, const ImageF& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("ssim: shape mismatch");
  const int h = pred.height, w = pred.width;
  if (h < 11 || w < 11) throw std::invalid_argument("ssim: image smaller than the 11x11 window");

  const std::vector<Real> x = grayscale(pred);
  const std::vector<Real> y = grayscale(target);

  Real kernel[11];
  Real ksum = 0;
  for (int i = 0; i < 11; ++i) {
    const Real d = Real(i - 5);
    kernel[i] = std::exp(-d * d / (2 * Real(1.5) * Real(1.5)));
    ksum += kernel[i];
  }
  for (Real& k : kernel) k /= ksum;

  const Real c1 = Real(0.01) * Real(0.01);
  const Real c2 = Real(0.03) * Real(0.03);

  Real acc = 0;
  size_t n = 0;
  for (int r = 5; r < h - 5; ++r) {
    for (int c = 5; c < w - 5; ++c) {
      Real mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = -5; i <= 5; ++i) {
        for (int j = -5; j <= 5; ++j) {
          const Real kw = kernel[i + 5] * kernel[j + 5];
          const Real xv = x[size_t(r + i) * w + size_t(c + j)];
          const Real yv = y[size_t(r + i) * w + size_t(c + j)];
          mx += kw * xv;
          my += kw * yv;
          sxx += kw * xv * xv;
          syy += kw * yv * yv;
          sxy += kw * xv * yv;
        }
      }
      const Real vx = sxx - mx * mx;
      const Real vy = syy - my * my;
      const Real cxy = sxy - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cxy + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++n;
    }
  }
  return acc / Real(n);
}

Real depth_error(const ImageF& pred, const ImageF& target, const ImageU8& mask) {
  if (!pred.same_shape(target)) throw std::invalid_argument("depth_error: shape mismatch");
  if (mask.height != pred.height || mask.width != pred.width)
    throw std::invalid_argument("depth_error: mask shape mismatch");
  Real acc = 0;
  size_t n = 0;
  for (int r = 0; r < pred.height; ++r)
    for (int c = 0; c < pred.width; ++c) {
      if (!mask.at(r, c) || !std::isfinite(target.at(r, c))) continue;
      acc += std::abs(pred.at(r, c) - target.at(r, c));
      ++n;
    }
  if (n == 0) throw std::invalid_argument("depth_error: empty mask");
  return acc / Real(n);
}

void EvalReport::finalize() {
  mean_psnr_full = mean_psnr_masked = mean_ssim = mean_de = 0;
  if (images.empty()) return;
  for (const PerImage& im : images) {
    mean_psnr_full += im.psnr_full;
    mean_psnr_masked += im.psnr_masked;
    mean_ssim += im.ssim_value;
    mean_de += im.de;
  }
  const Real n = Real(images.size());
  mean_psnr_full /= n;
  mean_psnr_masked /= n;
  mean_ssim /= n;
  mean_de /= n;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["image_count"] = images.size();
  j["mean"] = {{"psnr", mean_psnr_full},
               {"psnr_masked", mean_psnr_masked},
               {"ssim", mean_ssim},
               {"de", mean_de}};
  j["images"] = nlohmann::json::array();
  for (const PerImage& im : images) {
    j["images"].push_back({{"frame", im.frame_id},
                           {"camera", im.camera_id},
                           {"psnr", im.psnr_full},
                           {"psnr_masked", im.psnr_masked},
                           {"ssim", im.ssim_value},
                           {"de", im.de}});
  }
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "mode: " << mode << "\n";
  os << "frame camera        psnr  psnr_mask   ssim      de\n";
  char line[128];
  for (const PerImage& im : images) {
    std::snprintf(line, sizeof line, "%5d %-10s %7.3f %9.3f %6.4f %7.4f\n", im.frame_id,
                  im.camera_id.c_str(), im.psnr_full, im.psnr_masked, im.ssim_value, im.de);
    os << line;
  }
  std::snprintf(line, sizeof line, "mean             %7.3f %9.3f %6.4f %7.4f\n", mean_psnr_full,
                mean_psnr_masked, mean_ssim, mean_de);
  os << line;
  return os.str();
}

}  // namespace handfield
