#include "handfield/field/canonical_field.hpp"

#include <cassert>
#include <stdexcept>

namespace handfield {

CanonicalField::CanonicalField(const FieldConfig& cfg, const Aabb& canonical_box, int num_frames,
                               uint64_t seed)
    : cfg_(cfg), box_(canonical_box), normalizer_(canonical_box), num_frames_(num_frames) {
  MlpSpec trunk;
  trunk.input_dim = cfg.ipe_dim();
  trunk.hidden.assign(size_t(cfg.density_layers) - 1, cfg.density_width);
  trunk.output_dim = cfg.density_width;
  trunk.hidden_activation = Activation::kSilu;
  trunk.output_activation = Activation::kSilu;
  if (cfg.density_skip > 0 && cfg.density_skip < cfg.density_layers)
    trunk.skip_layers = {cfg.density_skip};
  density_trunk_ = Mlp(trunk);

  MlpSpec head;
  head.input_dim = cfg.density_width;
  head.output_dim = 1;
  head.output_activation = Activation::kSoftplus;
  density_head_ = Mlp(head);

  MlpSpec ctrunk;
  ctrunk.input_dim = cfg.color_in_dim();
  ctrunk.hidden.assign(size_t(cfg.color_layers) - 1, cfg.color_width);
  ctrunk.output_dim = cfg.color_width;
  ctrunk.hidden_activation = Activation::kSilu;
  ctrunk.output_activation = Activation::kSilu;
  color_trunk_ = Mlp(ctrunk);

  MlpSpec rgb;
  rgb.input_dim = cfg.color_width;
  rgb.output_dim = 3;
  rgb.output_activation = Activation::kSigmoid;
  rgb_head_ = Mlp(rgb);

  MlpSpec feat;
  feat.input_dim = cfg.color_width;
  feat.output_dim = cfg.feature_dim;
  feat_head_ = Mlp(feat);

  HashRng rng_sigma(hash_combine(seed, 1));
  HashRng rng_color(hash_combine(seed, 2));
  density_trunk_.register_params(sigma_store_, "density.trunk", rng_sigma);
  density_head_.register_params(sigma_store_, "density.head", rng_sigma);
  // Start nearly empty: untrained renders show the background instead of
  // mist, and the depth objective carves surfaces in rather than ablating.
  sigma_store_.values("density.head.b0")[0] = -3;
  color_trunk_.register_params(color_store_, "color.trunk", rng_color);
  rgb_head_.register_params(color_store_, "color.rgb", rng_color);
  feat_head_.register_params(color_store_, "color.feat", rng_color);

  latent_store_.add("latent.codes", {uint64_t(num_frames), uint64_t(cfg.latent_dim)});
  HashRng rng_latent(hash_combine(seed, 3));
  for (Real& v : latent_store_.values("latent.codes")) v = Real(0.01) * rng_latent.next_normal();
}

void CanonicalField::rebind() {
  density_trunk_.bind(sigma_store_, "density.trunk");
  density_head_.bind(sigma_store_, "density.head");
  color_trunk_.bind(color_store_, "color.trunk");
  rgb_head_.bind(color_store_, "color.rgb");
  feat_head_.bind(color_store_, "color.feat");
}

void CanonicalField::query_density(const Vec3& enc_mean, const Vec3& enc_var, RadianceEval& eval,
                                   bool want_tape) const {
  thread_local std::vector<Real> enc;
  enc.resize(size_t(cfg_.ipe_dim()));
  integrated_positional_encoding(enc_mean, enc_var, cfg_.pos_degree, enc);

  eval.f_sigma.resize(size_t(cfg_.density_width));
  density_trunk_.forward(sigma_store_, enc, eval.f_sigma,
                         want_tape ? &eval.density_trunk : nullptr);
  Real sigma_out[1];
  density_head_.forward(sigma_store_, eval.f_sigma, {sigma_out, 1},
                        want_tape ? &eval.density_head : nullptr);
  eval.sigma = sigma_out[0];
  eval.has_tape = want_tape;
}

std::vector<Real> CanonicalField::latent_code(int frame) const {
  std::span<const Real> table = latent_store_.values("latent.codes");
  std::vector<Real> code(size_t(cfg_.latent_dim), Real(0));
  if (frame < 0) {
    if (num_frames_ > 0) {
      for (int f = 0; f < num_frames_; ++f)
        for (int d = 0; d < cfg_.latent_dim; ++d)
          code[d] += table[size_t(f) * cfg_.latent_dim + d];
      for (Real& v : code) v /= Real(num_frames_);
    }
    return code;
  }
  if (frame >= num_frames_) throw std::out_of_range("latent_code: unknown frame id");
  if (audit_latent_) ++latent_reads_[size_t(frame)];
  for (int d = 0; d < cfg_.latent_dim; ++d) code[d] = table[size_t(frame) * cfg_.latent_dim + d];
  return code;
}

void CanonicalField::query_color(const Vec3& view_dir, int frame, RadianceEval& eval,
                                 bool want_tape) const {
  assert(int(eval.f_sigma.size()) == cfg_.density_width);
  thread_local std::vector<Real> in;
  in.resize(size_t(cfg_.color_in_dim()));

  const Real dir_raw[3] = {view_dir.x, view_dir.y, view_dir.z};
  positional_encoding({dir_raw, 3}, cfg_.dir_degree, {in.data(), size_t(cfg_.dir_enc_dim())});
  std::copy(eval.f_sigma.begin(), eval.f_sigma.end(), in.begin() + cfg_.dir_enc_dim());

  if (frame < 0) {
    const std::vector<Real> code = latent_code(frame);
    std::copy(code.begin(), code.end(), in.end() - cfg_.latent_dim);
  } else {
    if (frame >= num_frames_) throw std::out_of_range("query_color: unknown frame id");
    if (audit_latent_) ++latent_reads_[size_t(frame)];
    std::span<const Real> table = latent_store_.values("latent.codes");
    std::copy_n(table.begin() + size_t(frame) * cfg_.latent_dim, cfg_.latent_dim,
                in.end() - cfg_.latent_dim);
  }
  eval.frame = frame;

  thread_local std::vector<Real> hidden;
  hidden.resize(size_t(cfg_.color_width));
  color_trunk_.forward(color_store_, in, hidden, want_tape ? &eval.color_trunk : nullptr);
  Real rgb_out[3];
  rgb_head_.forward(color_store_, hidden, {rgb_out, 3}, want_tape ? &eval.rgb_head : nullptr);
  eval.rgb = {rgb_out[0], rgb_out[1], rgb_out[2]};
  eval.f_c.resize(size_t(cfg_.feature_dim));
  feat_head_.forward(color_store_, hidden, eval.f_c, want_tape ? &eval.feat_head : nullptr);
}

void CanonicalField::backward(const RadianceEval& eval, Real d_sigma, const Vec3& d_rgb,
                              std::span<const Real> d_fc, const FieldGrads& grads,
                              Vec3* d_enc_mean) const {
  assert(eval.has_tape);

  thread_local std::vector<Real> d_hidden, d_color_in, d_fsigma, d_enc;
  d_fsigma.assign(size_t(cfg_.density_width), Real(0));

  bool color_upstream = d_rgb.x != 0 || d_rgb.y != 0 || d_rgb.z != 0;
  for (Real v : d_fc) color_upstream = color_upstream || v != 0;

  if (color_upstream) {
    d_hidden.assign(size_t(cfg_.color_width), Real(0));
    const Real d_rgb_arr[3] = {d_rgb.x, d_rgb.y, d_rgb.z};
    rgb_head_.backward(color_store_, eval.rgb_head, {d_rgb_arr, 3}, grads.color, d_hidden);
    if (!d_fc.empty())
      feat_head_.backward(color_store_, eval.feat_head, d_fc, grads.color, d_hidden);

    d_color_in.assign(size_t(cfg_.color_in_dim()), Real(0));
    color_trunk_.backward(color_store_, eval.color_trunk, d_hidden, grads.color, d_color_in);

    // Split the color input gradient: direction encoding has no parameters
    // behind it; the middle block feeds back into the density feature; the
    // tail belongs to the latent row.
    for (int i = 0; i < cfg_.density_width; ++i)
      d_fsigma[i] += d_color_in[cfg_.dir_enc_dim() + i];
    if (eval.frame >= 0 && grads.latent) {
      Real* lrow = grads.latent + size_t(eval.frame) * cfg_.latent_dim;
      const Real* src = d_color_in.data() + cfg_.color_in_dim() - cfg_.latent_dim;
      for (int d = 0; d < cfg_.latent_dim; ++d) lrow[d] += src[d];
    }
  }

  const Real d_sigma_arr[1] = {d_sigma};
  density_head_.backward(sigma_store_, eval.density_head, {d_sigma_arr, 1}, grads.sigma,
                         d_fsigma);

  if (d_enc_mean) {
    d_enc.assign(size_t(cfg_.ipe_dim()), Real(0));
    density_trunk_.backward(sigma_store_, eval.density_trunk, d_fsigma, grads.sigma, d_enc);
    integrated_positional_encoding_backward(eval.density_trunk.input, d_enc, cfg_.pos_degree,
                                            *d_enc_mean);
  } else {
    density_trunk_.backward(sigma_store_, eval.density_trunk, d_fsigma, grads.sigma);
  }
}

}  // namespace handfield
