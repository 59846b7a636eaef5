#include "handfield/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "handfield/core/parallel.hpp"
#include "handfield/hand/rasterizer.hpp"
#include "handfield/io/feature_io.hpp"
#include "handfield/io/image_io.hpp"
#include "handfield/metrics/metrics.hpp"

namespace handfield {

Model Model::create(const FieldConfig& fc, const DeformConfig& dc, const Aabb& canonical_box,
                    int num_frames, uint64_t seed) {
  Model m;
  m.field_cfg = fc;
  m.deform_cfg = dc;
  m.field = std::make_unique<CanonicalField>(fc, canonical_box, num_frames, seed);
  m.correction = std::make_unique<CorrectionField>(dc, BoxNormalizer(canonical_box), seed);
  return m;
}

Model::Snapshot Model::snapshot() const {
  Snapshot s;
  const auto copy = [](const ParameterStore& st) {
    return std::vector<Real>(st.data(), st.data() + st.size());
  };
  s.sigma = copy(field->density_params());
  s.color = copy(field->color_params());
  s.latent = copy(field->latent_params());
  s.corr = copy(correction->params());
  return s;
}

void Model::restore(const Snapshot& s) {
  const auto paste = [](ParameterStore& st, const std::vector<Real>& v) {
    std::copy(v.begin(), v.end(), st.data());
  };
  paste(field->density_params(), s.sigma);
  paste(field->color_params(), s.color);
  paste(field->latent_params(), s.latent);
  paste(correction->params(), s.corr);
}

PosedScene pose_scene(const Scene& scene) {
  PosedScene out;
  out.frames.resize(scene.frames.size());
  for (size_t f = 0; f < scene.frames.size(); ++f) {
    out.frames[f].reserve(scene.hands.size());
    for (size_t h = 0; h < scene.hands.size(); ++h) {
      out.frames[f].push_back(HandInstance::make(scene.hands[h].mesh, scene.hands[h].skeleton,
                                                 scene.frames[f].poses[h]));
    }
  }
  return out;
}

FrameState PosedScene::frame_state(int frame_idx, bool novel_latent) const {
  FrameState fs;
  for (const HandInstance& h : frames[size_t(frame_idx)]) fs.hands.push_back(&h);
  fs.frame_index = novel_latent ? -1 : frame_idx;
  return fs;
}

namespace {

// Everything one ray retains between the forward pass and backward.
struct RayWork {
  const BatchPoint* point = nullptr;
  std::vector<HandRaySamples> per_hand;
  std::vector<std::vector<CorrTapes>> corr_tapes;
  std::vector<MergedSample> merged;
  RayRadiance radiance;
  RayRender render;
  std::vector<RadianceEval> evals;
  std::vector<uint8_t> active;
  Real far = 0;
  RayRecord record;

  Vec3 d_color;
  Real d_depth = 0;
  std::vector<Real> d_feat_up;
  std::vector<Real> d_weight_up;
  Real res_factor = 0;

  std::vector<Real> d_sigma;
  std::vector<Vec3> d_rgb;
  std::vector<Real> d_feature;
};

uint64_t ray_stream(const Ray& ray, size_t hand) {
  return hash_combine(uint64_t(ray.row) * 1000003u + uint64_t(ray.col), hand);
}

void forward_ray(const CanonicalField& field, const CorrectionField& correction,
                 const RenderParams& params, bool want_tapes, bool need_color, RayWork& work) {
  const BatchPoint& point = *work.point;
  const FrameState& frame = *point.frame;
  const int d = field.config().feature_dim;

  work.per_hand.resize(frame.hands.size());
  work.corr_tapes.resize(frame.hands.size());

  RaySampling sampling;
  sampling.samples_per_ray = params.samples_per_ray;
  sampling.jitter = params.jitter;
  sampling.seed = params.seed;

  work.far = 0;
  bool any_hit = false;
  for (size_t h = 0; h < frame.hands.size(); ++h) {
    sampling.stream = ray_stream(point.ray, h);
    work.per_hand[h] =
        deform_ray_samples(point.ray, *frame.hands[h], correction, field.canonical_box(),
                           sampling, want_tapes ? &work.corr_tapes[h] : nullptr);
    if (work.per_hand[h].hit) {
      work.far = std::max(work.far, work.per_hand[h].t_far);
      any_hit = true;
    }
  }

  work.merged.clear();
  if (any_hit) work.merged = compose_hands(work.per_hand, work.far, params.min_delta);

  const size_t n = work.merged.size();
  work.radiance.resize(n, d);
  work.evals.resize(n);
  work.active.assign(n, 0);
  for (size_t i = 0; i < n; ++i) {
    const MergedSample& m = work.merged[i];
    const DeformedSample& s = work.per_hand[m.hand].samples[m.index];
    if (s.degenerate) continue;
    work.active[i] = 1;
    RadianceEval& eval = work.evals[i];
    const Vec3 enc_mean = field.normalizer().point(s.canonical.mean);
    const Vec3 enc_var = field.normalizer().variance(
        {s.canonical.cov(0, 0), s.canonical.cov(1, 1), s.canonical.cov(2, 2)});
    field.query_density(enc_mean, enc_var, eval, want_tapes);
    work.radiance.sigma[i] = eval.sigma;
    if (need_color) {
      const Vec3 dir = s.source == HandSide::kLeft ? mirror_point(point.ray.direction)
                                                   : point.ray.direction;
      field.query_color(dir, frame.frame_index, eval, want_tapes);
      work.radiance.rgb[i] = eval.rgb;
      std::copy(eval.f_c.begin(), eval.f_c.end(), work.radiance.feature.begin() + long(i * size_t(d)));
    }
  }
  volume_render(work.merged, work.radiance, params.background, work.render);

  RayRecord& rec = work.record;
  rec.target_color = point.target_color;
  rec.target_depth = point.target_depth;
  rec.foreground = point.foreground;
  rec.target_feature = point.target_feature;
  rec.color = work.render.color;
  rec.depth = work.render.depth;
  rec.feature = work.render.feature;
  rec.weight_sum = work.render.weight_sum;
  rec.weights = work.render.weights;
  rec.residual_norms.clear();
  for (const HandRaySamples& hs : work.per_hand)
    for (const DeformedSample& s : hs.samples)
      if (!s.degenerate) rec.residual_norms.push_back(norm(s.residual));
}

struct GradSinks {
  FieldGrads field;
  Real* corr = nullptr;
};

void backward_ray(const CanonicalField& field, const CorrectionField& correction, RayWork& work,
                  const Vec3& background, const GradSinks& grads) {
  if (work.merged.empty()) return;
  RayRenderUpstream up;
  up.d_color = work.d_color;
  up.d_depth = work.d_depth;
  up.d_feature = work.d_feat_up;
  up.d_weights = work.d_weight_up;
  volume_render_backward(work.merged, work.radiance, work.render, background, up, work.d_sigma,
                         work.d_rgb, work.d_feature);
  const int d = field.config().feature_dim;
  for (size_t i = 0; i < work.merged.size(); ++i) {
    if (!work.active[i]) continue;
    const MergedSample& m = work.merged[i];
    const DeformedSample& s = work.per_hand[m.hand].samples[m.index];

    Vec3 d_enc_mean{};
    work.evals[i].has_tape = true;
    field.backward(work.evals[i], work.d_sigma[i], work.d_rgb[i],
                   {work.d_feature.data() + i * size_t(d), size_t(d)}, grads.field, &d_enc_mean);

    Vec3 d_res = field.normalizer().point_backward(d_enc_mean);
    if (s.source == HandSide::kLeft) d_res = mirror_point(d_res);
    if (work.res_factor != 0) {
      const Real rn = norm(s.residual);
      if (rn > 0) d_res += s.residual * (work.res_factor / rn);
    }
    correction.backward(work.corr_tapes[m.hand][m.index], d_res, grads.corr);
  }
}

LossBreakdown reduce_losses(std::span<const RayRecord> records, const LossWeights& weights,
                            ObjectiveMode mode) {
  if (mode == ObjectiveMode::kFull) return total_loss(records, weights);
  LossBreakdown b;
  b.depth = loss_depth(records, weights.smooth_l1_beta);
  b.deform = loss_deform(records);
  b.total = weights.depth * b.depth + weights.deform * b.deform;
  if (!std::isfinite(b.total))
    throw std::runtime_error("adaptation objective is non-finite (depth=" +
                             std::to_string(b.depth) + " dfm=" + std::to_string(b.deform) + ")");
  return b;
}

// dL/d(render outputs) for every ray, from the closed-form loss derivatives.
void compute_upstreams(std::span<RayWork> work, const LossWeights& w, ObjectiveMode mode) {
  const size_t n_rays = work.size();
  size_t n_depth = 0, n_feat = 0, n_res = 0, n_weights = 0, n_fg = 0;
  Vec3 mean_t{}, mean_p{};
  for (const RayWork& r : work) {
    const RayRecord& rec = r.record;
    if (rec.foreground && std::isfinite(rec.target_depth)) ++n_depth;
    if (rec.foreground && !rec.target_feature.empty()) ++n_feat;
    n_res += rec.residual_norms.size();
    n_weights += rec.weights.size();
    if (rec.foreground) {
      ++n_fg;
      mean_t += rec.target_color;
      mean_p += rec.color;
    }
  }
  Vec3 var_t{}, var_p{};
  if (n_fg >= 2) {
    mean_t *= 1 / Real(n_fg);
    mean_p *= 1 / Real(n_fg);
    for (const RayWork& r : work) {
      if (!r.record.foreground) continue;
      for (int c = 0; c < 3; ++c) {
        var_t[c] += (r.record.target_color[c] - mean_t[c]) * (r.record.target_color[c] - mean_t[c]);
        var_p[c] += (r.record.color[c] - mean_p[c]) * (r.record.color[c] - mean_p[c]);
      }
    }
    var_t *= 1 / Real(n_fg);
    var_p *= 1 / Real(n_fg);
  }

  const bool full = mode == ObjectiveMode::kFull;
  for (RayWork& r : work) {
    const RayRecord& rec = r.record;
    r.d_color = {0, 0, 0};
    r.d_depth = 0;
    r.d_feat_up.clear();
    r.d_weight_up.clear();
    r.res_factor = w.deform > 0 && n_res > 0 ? w.deform / Real(n_res) : Real(0);

    if (full) {
      r.d_color = (rec.color - rec.target_color) * (2 / Real(n_rays));
      if (w.color_var > 0 && n_fg >= 2 && rec.foreground) {
        for (int c = 0; c < 3; ++c) {
          const Real sll_d = smooth_l1_derivative(var_t[c] - var_p[c], w.smooth_l1_beta);
          r.d_color[c] += w.color_var * sll_d * (-2 / Real(n_fg)) * (rec.color[c] - mean_p[c]);
        }
      }
      if (w.distill > 0 && rec.foreground && !rec.target_feature.empty()) {
        const size_t d = rec.feature.size();
        r.d_feat_up.resize(d);
        for (size_t k = 0; k < d; ++k)
          r.d_feat_up[k] = w.distill * 2 * (rec.feature[k] - rec.target_feature[k]) /
                           (Real(d) * Real(n_feat));
      }
      if (w.hard_surface > 0 && n_weights > 0) {
        r.d_weight_up.resize(rec.weights.size());
        for (size_t i = 0; i < rec.weights.size(); ++i)
          r.d_weight_up[i] =
              w.hard_surface * hard_surface_term_derivative(rec.weights[i]) / Real(n_weights);
      }
    }
    if (w.depth > 0 && rec.foreground && std::isfinite(rec.target_depth) && n_depth > 0) {
      r.d_depth = -w.depth * smooth_l1_derivative(rec.target_depth - rec.depth, w.smooth_l1_beta) /
                  Real(n_depth);
    }
  }
}

std::vector<RayWork>& work_pool(size_t n) {
  static thread_local std::vector<RayWork> pool;
  if (pool.size() < n) pool.resize(n);
  return pool;
}

}  // namespace

BatchResult evaluate_batch(const CanonicalField& field, const CorrectionField& correction,
                           std::span<const BatchPoint> batch, const LossWeights& weights,
                           const RenderParams& params, ObjectiveMode mode) {
  BatchResult out;
  out.records.resize(batch.size());
  std::vector<RayWork>& pool = work_pool(batch.size());
  const bool need_color = mode == ObjectiveMode::kFull;
  for (size_t i = 0; i < batch.size(); ++i) {
    pool[i].point = &batch[i];
    forward_ray(field, correction, params, false, need_color, pool[i]);
    out.records[i] = pool[i].record;
  }
  out.losses = reduce_losses(out.records, weights, mode);
  return out;
}

BatchResult evaluate_batch_with_gradients(CanonicalField& field, CorrectionField& correction,
                                          std::span<const BatchPoint> batch,
                                          const LossWeights& weights, const RenderParams& params,
                                          ObjectiveMode mode, int threads) {
  BatchResult out;
  out.records.resize(batch.size());
  static thread_local std::vector<RayWork> pool;
  if (pool.size() < batch.size()) pool.resize(batch.size());
  const bool need_color = mode == ObjectiveMode::kFull;

  parallel_for_chunks(batch.size(), threads, [&](size_t begin, size_t end, int) {
    for (size_t i = begin; i < end; ++i) {
      pool[i].point = &batch[i];
      forward_ray(field, correction, params, true, need_color, pool[i]);
    }
  });
  for (size_t i = 0; i < batch.size(); ++i) out.records[i] = pool[i].record;

  out.losses = reduce_losses(out.records, weights, mode);
  compute_upstreams({pool.data(), batch.size()}, weights, mode);

  if (threads <= 1) {
    GradSinks sinks;
    sinks.field.sigma = field.density_params().grad();
    sinks.field.color = field.color_params().grad();
    sinks.field.latent = field.latent_params().grad();
    sinks.corr = correction.params().grad();
    for (size_t i = 0; i < batch.size(); ++i)
      backward_ray(field, correction, pool[i], params.background, sinks);
    return out;
  }

  const size_t sizes[4] = {field.density_params().size(), field.color_params().size(),
                           field.latent_params().size(), correction.params().size()};
  const size_t workers = std::min<size_t>(size_t(threads), batch.size());
  std::vector<std::vector<Real>> buffers(workers * 4);
  for (size_t t = 0; t < workers; ++t)
    for (int k = 0; k < 4; ++k) buffers[t * 4 + size_t(k)].assign(sizes[k], Real(0));

  parallel_for_chunks(batch.size(), int(workers), [&](size_t begin, size_t end, int t) {
    GradSinks sinks;
    sinks.field.sigma = buffers[size_t(t) * 4 + 0].data();
    sinks.field.color = buffers[size_t(t) * 4 + 1].data();
    sinks.field.latent = buffers[size_t(t) * 4 + 2].data();
    sinks.corr = buffers[size_t(t) * 4 + 3].data();
    for (size_t i = begin; i < end; ++i)
      backward_ray(field, correction, pool[i], params.background, sinks);
  });
  // deterministic merge in thread order
  ParameterStore* stores[4] = {&field.density_params(), &field.color_params(),
                               &field.latent_params(), &correction.params()};
  for (size_t t = 0; t < workers; ++t)
    for (int k = 0; k < 4; ++k) stores[k]->accumulate_grad(buffers[t * 4 + size_t(k)]);
  return out;
}

namespace {

// Disk-backed training targets with lazy caching. Color reads are counted so
// the adaptation path can prove it never touches them.
class TargetCache {
 public:
  TargetCache(const Scene& scene, bool want_features)
      : scene_(scene), want_features_(want_features) {}

  const ImageF& color(int f, int c) {
    auto [it, fresh] = color_.try_emplace(key(f, c));
    if (fresh)
      it->second = dequantize_image(
          read_png(scene_.root + "/" + Scene::color_rel(scene_.frames[size_t(f)].id,
                                                        scene_.cameras[size_t(c)].id)));
    return it->second;
  }
  const ImageF& depth(int f, int c) {
    auto [it, fresh] = depth_.try_emplace(key(f, c));
    if (fresh)
      it->second = read_pfm(scene_.root + "/" + Scene::depth_rel(scene_.frames[size_t(f)].id,
                                                                 scene_.cameras[size_t(c)].id));
    return it->second;
  }
  const ImageU8& mask(int f, int c) {
    auto [it, fresh] = mask_.try_emplace(key(f, c));
    if (fresh)
      it->second = read_png(scene_.root + "/" + Scene::mask_rel(scene_.frames[size_t(f)].id,
                                                                scene_.cameras[size_t(c)].id));
    return it->second;
  }
  const ImageF* feature(int f, int c) {
    if (!want_features_) return nullptr;
    auto [it, fresh] = feature_.try_emplace(key(f, c));
    if (fresh)
      it->second = read_feature_map(scene_.root + "/" +
                                    Scene::feature_rel(scene_.frames[size_t(f)].id,
                                                       scene_.cameras[size_t(c)].id))
                       .data;
    return &it->second;
  }

 private:
  int key(int f, int c) const { return f * 10000 + c; }
  const Scene& scene_;
  bool want_features_;
  std::map<int, ImageF> color_, depth_, feature_;
  std::map<int, ImageU8> mask_;
};

void log_line(std::ofstream* log, const nlohmann::json& j) {
  if (log && log->is_open()) *log << j.dump() << "\n";
}

}  // namespace

TrainStats train(Model& model, const Scene& scene, const TrainConfig& cfg) {
  if (scene.cameras.size() < 2)
    throw std::invalid_argument("train: scene needs at least two cameras");
  if (scene.frames.empty()) throw std::invalid_argument("train: scene has no frames");
  for (const auto& f : scene.frames)
    if (f.poses.size() != scene.hands.size())
      throw std::invalid_argument("train: frame is missing a pose for a declared hand");

  const std::vector<int> train_cams = scene.camera_indices("train");
  if (train_cams.empty()) throw std::invalid_argument("train: no cameras tagged train");
  const std::vector<int> test_cams = scene.camera_indices("test");

  LossWeights weights = cfg.loss;
  if (!cfg.use_features) weights.distill = 0;

  const PosedScene posed = pose_scene(scene);
  std::vector<FrameState> frame_states;
  frame_states.reserve(posed.frames.size());
  for (int f = 0; f < int(posed.frames.size()); ++f) frame_states.push_back(posed.frame_state(f));

  TargetCache targets(scene, cfg.use_features);
  if (cfg.use_features) {
    const ImageF* probe = targets.feature(0, train_cams[0]);
    if (probe->channels != cfg.field.feature_dim)
      throw std::invalid_argument(
          "train: feature files carry " + std::to_string(probe->channels) +
          " channels but the field is configured for D=" + std::to_string(cfg.field.feature_dim));
  }

  AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.lr_final = cfg.lr_final;
  ocfg.total_steps = cfg.iterations;
  AdamOptimizer opt_sigma(ocfg, model.field->density_params().size());
  AdamOptimizer opt_color(ocfg, model.field->color_params().size());
  AdamOptimizer opt_latent(ocfg, model.field->latent_params().size());
  AdamOptimizer opt_corr(ocfg, model.correction->params().size());

  std::ofstream log;
  if (!cfg.log_path.empty()) log.open(cfg.log_path, std::ios::app);

  HashRng master(hash_combine(cfg.seed, 0x7261696eull));
  TrainStats stats;
  Model::Snapshot good = model.snapshot();
  long good_iter = 0;
  int consecutive_rejects = 0;

  std::vector<BatchPoint> batch;
  for (long it = 0; it < cfg.iterations; ++it) {
    const int fi = int(master.next_below(uint64_t(scene.frames.size())));
    const int ci = train_cams[size_t(master.next_below(uint64_t(train_cams.size())))];
    const CameraModel& cam = scene.cameras[size_t(ci)];

    const PixelSample px = sample_pixels(targets.mask(fi, ci), cfg.pixel_budget,
                                         cfg.fg_fraction, master);
    const ImageF& gt_color = targets.color(fi, ci);
    const ImageF& gt_depth = targets.depth(fi, ci);
    const ImageU8& gt_mask = targets.mask(fi, ci);
    const ImageF* gt_feat = cfg.use_features ? targets.feature(fi, ci) : nullptr;

    batch.clear();
    batch.reserve(px.pixels.size());
    for (auto [r, c] : px.pixels) {
      BatchPoint p;
      p.ray = cam.pixel_ray(r, c);
      p.frame = &frame_states[size_t(fi)];
      p.target_color = {gt_color.at(r, c, 0), gt_color.at(r, c, 1), gt_color.at(r, c, 2)};
      p.target_depth = gt_depth.at(r, c);
      p.foreground = gt_mask.at(r, c) != 0;
      if (gt_feat && p.foreground) {
        p.target_feature.assign(
            gt_feat->data.begin() + (size_t(r) * gt_feat->width + size_t(c)) * gt_feat->channels,
            gt_feat->data.begin() +
                (size_t(r) * gt_feat->width + size_t(c) + 1) * gt_feat->channels);
      }
      batch.push_back(std::move(p));
    }

    RenderParams params;
    params.samples_per_ray = cfg.deform.samples_per_ray;
    params.jitter = cfg.jitter;
    params.seed = hash_combine(cfg.seed, uint64_t(it));
    params.background = scene.background;
    params.min_delta = cfg.min_delta;

    model.field->density_params().zero_grad();
    model.field->color_params().zero_grad();
    model.field->latent_params().zero_grad();
    model.correction->params().zero_grad();

    BatchResult result;
    try {
      result = evaluate_batch_with_gradients(*model.field, *model.correction, batch, weights,
                                             params, ObjectiveMode::kFull, cfg.threads);
    } catch (const std::exception& e) {
      model.restore(good);
      stats.aborted = true;
      stats.abort_reason = std::string("diverged at iteration ") + std::to_string(it) + ": " +
                           e.what() + " (restored iteration " + std::to_string(good_iter) + ")";
      break;
    }
    if (it == 0) stats.first_losses = result.losses;
    stats.last_losses = result.losses;

    bool rejected = false;
    for (AdamOptimizer* opt : {&opt_sigma, &opt_color, &opt_latent, &opt_corr}) {
      ParameterStore* store =
          opt == &opt_sigma  ? &model.field->density_params()
          : opt == &opt_color ? &model.field->color_params()
          : opt == &opt_latent ? &model.field->latent_params()
                               : &model.correction->params();
      if (const auto err = opt->step(*store)) {
        rejected = true;
        log_line(&log, {{"it", it}, {"rejected_step", *err}});
      }
    }
    consecutive_rejects = rejected ? consecutive_rejects + 1 : 0;
    if (consecutive_rejects >= 10) {
      model.restore(good);
      stats.aborted = true;
      stats.abort_reason = "10 consecutive rejected steps (restored iteration " +
                           std::to_string(good_iter) + ")";
      break;
    }

    stats.iterations_run = it + 1;
    if (cfg.log_interval > 0 && it % cfg.log_interval == 0) {
      log_line(&log, {{"it", it},
                      {"loss", result.losses.total},
                      {"rgb", result.losses.rgb},
                      {"depth", result.losses.depth},
                      {"dst", result.losses.distill},
                      {"dfm", result.losses.deform},
                      {"hs", result.losses.hard_surface},
                      {"cvar", result.losses.color_var},
                      {"lr", opt_sigma.current_lr()},
                      {"frame", fi},
                      {"camera", cam.id}});
    }

    if (cfg.snapshot_interval > 0 && (it + 1) % cfg.snapshot_interval == 0) {
      good = model.snapshot();
      good_iter = it + 1;
    }

    if (cfg.validation_interval > 0 && (it + 1) % cfg.validation_interval == 0 &&
        !test_cams.empty()) {
      const int vc = test_cams[0];
      RenderParams vp = params;
      vp.jitter = false;
      const ImageRenderResult img = render_image(*model.field, *model.correction,
                                                 frame_states[0], scene.cameras[size_t(vc)], vp);
      const Real v = psnr(img.color, targets.color(0, vc), &targets.mask(0, vc));
      stats.last_validation_psnr = v;
      log_line(&log, {{"it", it}, {"val_psnr_masked", v}, {"camera", scene.cameras[size_t(vc)].id}});
    }
  }
  return stats;
}

TrainStats pose_adapt(Model& model, const Scene& novel_scene, const AdaptConfig& cfg) {
  if (cfg.use_rgb)
    throw std::invalid_argument(
        "pose_adapt: RGB supervision is not part of adaptation (use_rgb must stay false)");
  if (novel_scene.frames.empty()) throw std::invalid_argument("pose_adapt: no frames");

  std::vector<int> cams = novel_scene.camera_indices("train");
  if (cams.empty()) {
    cams.resize(novel_scene.cameras.size());
    for (int i = 0; i < int(cams.size()); ++i) cams[size_t(i)] = i;
  }
  if (cams.empty()) throw std::invalid_argument("pose_adapt: no cameras");

  const PosedScene posed = pose_scene(novel_scene);
  std::vector<FrameState> frame_states;
  for (int f = 0; f < int(posed.frames.size()); ++f)
    frame_states.push_back(posed.frame_state(f, /*novel_latent=*/true));

  // Pseudo-depth targets rasterized straight from the posed meshes; no color
  // image exists anywhere on this path.
  struct DepthTarget {
    ImageF depth;
    ImageU8 mask;
  };
  std::map<int, DepthTarget> target_cache;
  const auto target = [&](int f, int c) -> const DepthTarget& {
    const int key = f * 10000 + c;
    auto it = target_cache.find(key);
    if (it == target_cache.end()) {
      std::vector<const PosedHand*> hands;
      for (const HandInstance& h : posed.frames[size_t(f)]) hands.push_back(&h.posed);
      RasterResult raster = rasterize(novel_scene.cameras[size_t(c)], hands);
      DepthTarget t;
      t.depth = std::move(raster.depth);
      t.mask = std::move(raster.mask);
      dilate_mask(t.mask, 3);
      it = target_cache.emplace(key, std::move(t)).first;
    }
    return it->second;
  };

  LossWeights weights;
  weights.depth = cfg.lambda_depth;
  weights.deform = cfg.lambda_deform;
  weights.smooth_l1_beta = cfg.smooth_l1_beta;
  weights.distill = weights.hard_surface = weights.color_var = 0;

  AdamConfig ocfg;
  ocfg.lr = cfg.lr;
  ocfg.lr_final = cfg.lr_final;
  ocfg.total_steps = cfg.iterations;
  AdamOptimizer opt_corr(ocfg, model.correction->params().size());

  std::ofstream log;
  if (!cfg.log_path.empty()) log.open(cfg.log_path, std::ios::app);

  HashRng master(hash_combine(cfg.seed, 0x6164617074ull));
  TrainStats stats;
  std::vector<BatchPoint> batch;
  for (long it = 0; it < cfg.iterations; ++it) {
    const int fi = int(master.next_below(uint64_t(novel_scene.frames.size())));
    const int ci = cams[size_t(master.next_below(uint64_t(cams.size())))];
    const DepthTarget& t = target(fi, ci);
    const CameraModel& cam = novel_scene.cameras[size_t(ci)];

    const PixelSample px =
        sample_pixels(t.mask, cfg.pixel_budget, cfg.fg_fraction, master);
    batch.clear();
    for (auto [r, c] : px.pixels) {
      BatchPoint p;
      p.ray = cam.pixel_ray(r, c);
      p.frame = &frame_states[size_t(fi)];
      p.target_depth = t.depth.at(r, c);
      p.foreground = t.mask.at(r, c) != 0;
      batch.push_back(std::move(p));
    }

    RenderParams params;
    params.samples_per_ray = model.deform_cfg.samples_per_ray;
    params.jitter = cfg.jitter;
    params.seed = hash_combine(cfg.seed, uint64_t(it));
    params.background = novel_scene.background;
    params.min_delta = cfg.min_delta;

    model.field->density_params().zero_grad();
    model.field->color_params().zero_grad();
    model.field->latent_params().zero_grad();
    model.correction->params().zero_grad();

    BatchResult result;
    try {
      result = evaluate_batch_with_gradients(*model.field, *model.correction, batch, weights,
                                             params, ObjectiveMode::kDepthDeform, cfg.threads);
    } catch (const std::exception& e) {
      stats.aborted = true;
      stats.abort_reason = e.what();
      break;
    }
    if (it == 0) stats.first_losses = result.losses;
    stats.last_losses = result.losses;

    // Only the deformation field moves; everything else is frozen bitwise.
    if (const auto err = opt_corr.step(model.correction->params()))
      log_line(&log, {{"it", it}, {"rejected_step", *err}});

    stats.iterations_run = it + 1;
    if (cfg.log_interval > 0 && it % cfg.log_interval == 0) {
      log_line(&log, {{"it", it},
                      {"loss", result.losses.total},
                      {"depth", result.losses.depth},
                      {"dfm", result.losses.deform}});
    }
  }
  return stats;
}

}  // namespace handfield
