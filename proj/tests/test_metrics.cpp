#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "handfield/math/rng.hpp"
#include "handfield/metrics/metrics.hpp"

using namespace handfield;

TEST_CASE("psnr closed forms") {
  ImageF a(16, 16, 3, Real(0.5));
  ImageF b = a;
  CHECK(psnr(a, b) == 99.0);  // documented cap

  for (auto& v : b.data) v += Real(0.1);
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);

  // single masked pixel with error 0.5
  ImageF c = a;
  c.at(3, 4, 0) = a.at(3, 4, 0) + Real(0.5);
  c.at(3, 4, 1) = a.at(3, 4, 1) + Real(0.5);
  c.at(3, 4, 2) = a.at(3, 4, 2) + Real(0.5);
  ImageU8 mask(16, 16, 1, 0);
  mask.at(3, 4) = 255;
  CHECK(psnr(c, a, &mask) == doctest::Approx(10 * std::log10(1 / 0.25)).epsilon(1e-9));

  // monotone decreasing in MSE
  ImageF d = a;
  Real prev = 99;
  for (Real offset : {0.01, 0.05, 0.1, 0.2, 0.4}) {
    for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = a.data[i] + Real(offset);
    const Real v = psnr(d, a);
    CHECK(v < prev);
    prev = v;
  }

  ImageF wrong(8, 8, 3);
  CHECK_THROWS(psnr(a, wrong));
  ImageU8 empty_mask(16, 16, 1, 0);
  CHECK_THROWS(psnr(a, b, &empty_mask));
}

TEST_CASE("ssim self-identity, adversarial structure, and tiny noise") {
  HashRng rng(3);
  ImageF img(32, 32, 3);
  for (auto& v : img.data) v = rng.next_real(0, 1);
  CHECK(std::abs(ssim(img, img) - 1.0) < 1e-9);

  // binary checkerboard against its inverse
  ImageF bin(32, 32, 1), inv(32, 32, 1);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c) {
      const Real v = ((r / 4 + c / 4) % 2) ? Real(1) : Real(0);
      bin.at(r, c) = v;
      inv.at(r, c) = 1 - v;
    }
  CHECK(ssim(bin, inv) < 0.1);

  ImageF noisy = img;
  for (auto& v : noisy.data) v += Real(1e-4) * rng.next_normal();
  CHECK(ssim(noisy, img) >= 0.999);

  ImageF small(8, 8, 1);
  CHECK_THROWS(ssim(small, small));
}

TEST_CASE("depth error detects shifts exactly") {
  ImageF a(10, 10, 1, Real(2.5));
  ImageF b = a;
  ImageU8 mask(10, 10, 1, 255);
  CHECK(depth_error(a, b, mask) == 0.0);

  for (auto& v : b.data) v += Real(0.05);
  CHECK(depth_error(b, a, mask) == doctest::Approx(0.05).epsilon(1e-12));

  // random offsets: mean absolute offset computed independently
  HashRng rng(7);
  ImageF c = a;
  Real mean_abs = 0;
  for (size_t i = 0; i < c.data.size(); ++i) {
    const Real off = rng.next_real(-0.2, 0.2);
    c.data[i] = a.data[i] + off;
    mean_abs += std::abs(off);
  }
  mean_abs /= Real(c.data.size());
  CHECK(depth_error(c, a, mask) == doctest::Approx(mean_abs).epsilon(1e-12));

  // infinite targets are excluded; empty selection throws
  ImageF holes = a;
  holes.at(0, 0) = std::numeric_limits<Real>::infinity();
  CHECK(depth_error(b, holes, mask) == doctest::Approx(0.05).epsilon(1e-12));
  ImageU8 none(10, 10, 1, 0);
  CHECK_THROWS(depth_error(a, b, none));
}

TEST_CASE("eval report aggregates and serializes") {
  EvalReport r;
  r.mode = "novel-view";
  r.images.push_back({0, "test0", 20, 18, Real(0.9), Real(0.1)});
  r.images.push_back({1, "test0", 30, 28, Real(0.8), Real(0.3)});
  r.finalize();
  CHECK(r.mean_psnr_full == doctest::Approx(25.0));
  CHECK(r.mean_de == doctest::Approx(0.2));
  CHECK(r.to_json().find("novel-view") != std::string::npos);
  CHECK(r.to_table().find("test0") != std::string::npos);
}
