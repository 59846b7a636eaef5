#pragma once

#include <span>
#include <vector>

#include "handfield/math/geometry.hpp"

namespace handfield {

// Sinusoidal positional encoding: for j = 0..L-1 and each input component i,
// emits the pair [sin(2^j x_i), cos(2^j x_i)]. Output dim = 2 * k * L.
// Callers pre-scale inputs into [-pi, pi].
void positional_encoding(std::span<const Real> x, int degree, std::span<Real> out);
inline int positional_encoding_dim(int input_dim, int degree) { return 2 * input_dim * degree; }

// d(loss)/d(x) given d(loss)/d(out) and the forward output values.
void positional_encoding_backward(std::span<const Real> out, std::span<const Real> d_out,
                                  int degree, std::span<Real> d_x_accum);

// Integrated positional encoding of a Gaussian with mean `mu` and per-axis
// variance `var`: each frequency-2^j sinusoid of the mean is attenuated by
// exp(-0.5 * 4^j * var_i). Output dim = 6 * L. Reduces to positional_encoding
// of the mean when var = 0.
void integrated_positional_encoding(const Vec3& mu, const Vec3& var, int degree,
                                    std::span<Real> out);
inline int integrated_positional_encoding_dim(int degree) { return 6 * degree; }

// Gradient w.r.t. the mean only; the variance is treated as constant
// (sample covariances in this pipeline carry no parameter dependence).
void integrated_positional_encoding_backward(std::span<const Real> out,
                                             std::span<const Real> d_out, int degree,
                                             Vec3& d_mu_accum);

// Affine map from an axis-aligned box onto [-pi, pi]^3, the range the
// encoders expect. Variances scale by the squared per-axis factor.
struct BoxNormalizer {
  Vec3 lo;
  Vec3 scale;  // 2*pi / extent

  BoxNormalizer() : lo{}, scale{1, 1, 1} {}
  explicit BoxNormalizer(const Aabb& box) {
    lo = box.lo;
    const Vec3 e = box.extent();
    const Real pi2 = Real(2) * Real(3.14159265358979323846);
    scale = {pi2 / std::max(e.x, Real(1e-9)), pi2 / std::max(e.y, Real(1e-9)),
             pi2 / std::max(e.z, Real(1e-9))};
  }

  Vec3 point(const Vec3& p) const {
    const Real pi = Real(3.14159265358979323846);
    return {(p.x - lo.x) * scale.x - pi, (p.y - lo.y) * scale.y - pi,
            (p.z - lo.z) * scale.z - pi};
  }
  Vec3 variance(const Vec3& v) const {
    return {v.x * scale.x * scale.x, v.y * scale.y * scale.y, v.z * scale.z * scale.z};
  }
  Vec3 point_backward(const Vec3& d_enc) const {
    return {d_enc.x * scale.x, d_enc.y * scale.y, d_enc.z * scale.z};
  }
};

}  // namespace handfield
