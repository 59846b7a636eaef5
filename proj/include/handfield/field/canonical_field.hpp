#pragma once

#include <span>
#include <string>
#include <vector>

#include "handfield/math/encoding.hpp"
#include "handfield/nn/mlp.hpp"

namespace handfield {

struct FieldConfig {
  int pos_degree = 10;   // IPE degree for canonical positions
  int dir_degree = 4;    // PE degree for view directions
  int density_width = 128;
  int density_layers = 4;
  int density_skip = 2;
  int color_width = 64;
  int color_layers = 2;
  int feature_dim = 16;  // D, color feature channels
  int latent_dim = 8;    // per-frame code

  int ipe_dim() const { return 6 * pos_degree; }
  int dir_enc_dim() const { return 6 * dir_degree; }
  int color_in_dim() const { return dir_enc_dim() + density_width + latent_dim; }
};

// Per-sample forward record; holds the tapes backward consumes. Reused
// across samples to avoid churn.
struct RadianceEval {
  Real sigma = 0;
  Vec3 rgb;
  std::vector<Real> f_sigma;
  std::vector<Real> f_c;
  int frame = -1;
  bool has_tape = false;
  MlpTape density_trunk, density_head, color_trunk, rgb_head, feat_head;
};

// Gradient accumulation targets, aligned with each store's layout.
struct FieldGrads {
  Real* sigma = nullptr;
  Real* color = nullptr;
  Real* latent = nullptr;
};

// The canonical radiance field: a density network over integrated positional
// encodings and a color/feature network conditioned on view direction, the
// density feature, and a per-frame latent code.
class CanonicalField {
 public:
  CanonicalField() = default;
  CanonicalField(const FieldConfig& cfg, const Aabb& canonical_box, int num_frames,
                 uint64_t seed);

  // Rebinds network offsets after the stores were replaced (checkpoint load).
  void rebind();

  const FieldConfig& config() const { return cfg_; }
  const Aabb& canonical_box() const { return box_; }
  const BoxNormalizer& normalizer() const { return normalizer_; }
  int num_frames() const { return num_frames_; }

  ParameterStore& density_params() { return sigma_store_; }
  ParameterStore& color_params() { return color_store_; }
  ParameterStore& latent_params() { return latent_store_; }
  const ParameterStore& density_params() const { return sigma_store_; }
  const ParameterStore& color_params() const { return color_store_; }
  const ParameterStore& latent_params() const { return latent_store_; }

  // sigma + density feature from an encoder-space Gaussian (mean and per-axis
  // variance already normalized into [-pi, pi] coordinates).
  void query_density(const Vec3& enc_mean, const Vec3& enc_var, RadianceEval& eval,
                     bool want_tape) const;
  // rgb + color feature; `frame` = -1 selects the mean latent code (novel).
  void query_color(const Vec3& view_dir, int frame, RadianceEval& eval, bool want_tape) const;

  // Chains upstream gradients back through both networks. d_enc_mean (if
  // non-null) receives the gradient w.r.t. the encoder-space mean.
  void backward(const RadianceEval& eval, Real d_sigma, const Vec3& d_rgb,
                std::span<const Real> d_fc, const FieldGrads& grads, Vec3* d_enc_mean) const;

  std::vector<Real> latent_code(int frame) const;  // frame -1 = mean of table

  // Test hook: counts latent-table row reads when enabled.
  void set_latent_audit(bool on) const { audit_latent_ = on; if (on) latent_reads_.assign(size_t(num_frames_), 0); }
  const std::vector<uint64_t>& latent_reads() const { return latent_reads_; }

 private:
  FieldConfig cfg_;
  Aabb box_;
  BoxNormalizer normalizer_;
  int num_frames_ = 0;

  ParameterStore sigma_store_;
  ParameterStore color_store_;
  ParameterStore latent_store_;

  Mlp density_trunk_, density_head_;
  Mlp color_trunk_, rgb_head_, feat_head_;

  mutable bool audit_latent_ = false;
  mutable std::vector<uint64_t> latent_reads_;
};

}  // namespace handfield
