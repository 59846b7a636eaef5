#include "handfield/math/encoding.hpp"

#include <cassert>
#include <cmath>

namespace handfield {

void positional_encoding(std::span<const Real> x, int degree, std::span<Real> out) {
  const size_t k = x.size();
  assert(out.size() == 2 * k * size_t(degree));
  size_t o = 0;
  Real freq = 1;
  for (int j = 0; j < degree; ++j, freq *= 2) {
    for (size_t i = 0; i < k; ++i) {
      const Real a = freq * x[i];
      out[o++] = std::sin(a);
      out[o++] = std::cos(a);
    }
  }
}

void positional_encoding_backward(std::span<const Real> out, std::span<const Real> d_out,
                                  int degree, std::span<Real> d_x_accum) {
  const size_t k = d_x_accum.size();
  assert(out.size() == 2 * k * size_t(degree) && d_out.size() == out.size());
  size_t o = 0;
  Real freq = 1;
  for (int j = 0; j < degree; ++j, freq *= 2) {
    for (size_t i = 0; i < k; ++i) {
      const Real s = out[o], ds = d_out[o];
      const Real c = out[o + 1], dc = d_out[o + 1];
      d_x_accum[i] += freq * (ds * c - dc * s);
      o += 2;
    }
  }
}

void integrated_positional_encoding(const Vec3& mu, const Vec3& var, int degree,
                                    std::span<Real> out) {
  assert(out.size() == 6 * size_t(degree));
  size_t o = 0;
  Real freq = 1;
  for (int j = 0; j < degree; ++j, freq *= 2) {
    const Real f2 = freq * freq;
    for (int i = 0; i < 3; ++i) {
      const Real a = freq * mu[i];
      const Real atten = std::exp(Real(-0.5) * f2 * var[i]);
      out[o++] = std::sin(a) * atten;
      out[o++] = std::cos(a) * atten;
    }
  }
}

void integrated_positional_encoding_backward(std::span<const Real> out,
                                             std::span<const Real> d_out, int degree,
                                             Vec3& d_mu_accum) {
  assert(out.size() == 6 * size_t(degree) && d_out.size() == out.size());
  size_t o = 0;
  Real freq = 1;
  for (int j = 0; j < degree; ++j, freq *= 2) {
    for (int i = 0; i < 3; ++i) {
      // out pair is (sin*atten, cos*atten); d sin_out/d mu = freq * cos_out.
      d_mu_accum[i] += freq * (d_out[o] * out[o + 1] - d_out[o + 1] * out[o]);
      o += 2;
    }
  }
}

}  // namespace handfield
