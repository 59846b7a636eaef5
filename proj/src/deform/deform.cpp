#include "handfield/deform/deform.hpp"

#include "handfield/math/rng.hpp"

namespace handfield {

HandInstance HandInstance::make(const SkinnedHandMesh& mesh, const Skeleton& skeleton,
                                const Pose& pose) {
  HandInstance h;
  h.posed = pose_hand(mesh, skeleton, pose);
  h.side = mesh.side;
  const Pose cond = mesh.side == HandSide::kLeft ? mirror_pose(pose) : pose;
  h.pose_cond = flatten_joint_rotations(cond);
  return h;
}

CorrectionField::CorrectionField(const DeformConfig& cfg, const BoxNormalizer& canonical_norm,
                                 uint64_t seed)
    : cfg_(cfg), norm_(canonical_norm) {
  MlpSpec trunk;
  trunk.input_dim = cfg.corr_in_dim();
  trunk.hidden.assign(size_t(cfg.corr_layers) - 1, cfg.corr_width);
  trunk.output_dim = cfg.corr_width;
  trunk.hidden_activation = Activation::kSilu;
  trunk.output_activation = Activation::kSilu;
  if (cfg.corr_skip > 0 && cfg.corr_skip < cfg.corr_layers) trunk.skip_layers = {cfg.corr_skip};
  trunk_ = Mlp(trunk);

  MlpSpec head;
  head.input_dim = cfg.corr_width;
  head.output_dim = 3;
  head.zero_init_output = true;  // residual starts at 0: early training is pure LBS
  head_ = Mlp(head);

  HashRng rng(hash_combine(seed, 4));
  trunk_.register_params(store_, "corr.trunk", rng);
  head_.register_params(store_, "corr.head", rng);
}

void CorrectionField::rebind() {
  trunk_.bind(store_, "corr.trunk");
  head_.bind(store_, "corr.head");
}

Vec3 CorrectionField::eval(const Vec3& corr_point, std::span<const Real, 48> pose_cond,
                           CorrTapes* tapes) const {
  thread_local std::vector<Real> in, hidden;
  in.resize(size_t(cfg_.corr_in_dim()));
  const Vec3 p = norm_.point(corr_point);
  const Real p_arr[3] = {p.x, p.y, p.z};
  positional_encoding({p_arr, 3}, cfg_.corr_pos_degree,
                      {in.data(), size_t(6 * cfg_.corr_pos_degree)});
  std::copy(pose_cond.begin(), pose_cond.end(), in.end() - 48);

  hidden.resize(size_t(cfg_.corr_width));
  trunk_.forward(store_, in, hidden, tapes ? &tapes->trunk : nullptr);
  Real res[3];
  head_.forward(store_, hidden, {res, 3}, tapes ? &tapes->head : nullptr);
  return {res[0], res[1], res[2]};
}

void CorrectionField::backward(const CorrTapes& tapes, const Vec3& d_residual,
                               Real* param_grad) const {
  thread_local std::vector<Real> d_hidden;
  d_hidden.assign(size_t(cfg_.corr_width), Real(0));
  const Real d_res[3] = {d_residual.x, d_residual.y, d_residual.z};
  head_.backward(store_, tapes.head, {d_res, 3}, param_grad, d_hidden);
  trunk_.backward(store_, tapes.trunk, d_hidden, param_grad);
}

LbsWarp lbs_warp(const Vec3& x_ob, const PosedHand& hand) {
  const FacetQuery q = query_blend_weights(hand, x_ob);
  LbsWarp w;
  w.weights = q.weights;
  w.facet_distance = q.distance;
  w.blend = blend_transforms(q.weights, hand.obs_to_canonical);
  w.xhat_can = w.blend.apply(x_ob);
  return w;
}

CorrectResult correct(const Vec3& xhat_can, HandSide side,
                      std::span<const Real, 48> pose_cond, const CorrectionField& field,
                      CorrTapes* tapes) {
  const bool mirror = side == HandSide::kLeft;
  const Vec3 m = mirror ? mirror_point(xhat_can) : xhat_can;
  const Vec3 res = field.eval(m, pose_cond, tapes);
  const Vec3 sum = xhat_can + res;
  return {mirror ? mirror_point(sum) : sum, res};
}

HandRaySamples deform_ray_samples(const Ray& ray, const HandInstance& hand,
                                  const CorrectionField& correction, const Aabb& canonical_box,
                                  const RaySampling& sampling, std::vector<CorrTapes>* tapes) {
  HandRaySamples out;
  const auto hit = intersect_aabb(ray, hand.posed.inflated_bounds);
  if (!hit) return out;
  out.hit = true;
  out.t_near = hit->first;
  out.t_far = hit->second;

  const int n = sampling.samples_per_ray;
  const Real span = out.t_far - out.t_near;
  HashRng jitter_rng(hash_combine(sampling.seed, sampling.stream));

  // n+1 strictly increasing boundaries -> n frustum segments.
  thread_local std::vector<Real> bounds;
  bounds.resize(size_t(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const Real u = sampling.jitter ? jitter_rng.next_real() : Real(0.5);
    bounds[k] = out.t_near + (Real(k) + u) * span / Real(n + 1);
  }

  out.samples.resize(size_t(n));
  if (tapes) tapes->resize(size_t(n));
  const Real degenerate_dist =
      correction.config().degenerate_distance_factor * hand.posed.inflation_margin;

  for (int k = 0; k < n; ++k) {
    DeformedSample& s = out.samples[size_t(k)];
    const FrustumGaussian g = frustum_to_gaussian(ray, bounds[k], bounds[k + 1]);
    s.t = Real(0.5) * (bounds[k] + bounds[k + 1]);
    s.source = hand.side;
    s.canonical = g;

    const LbsWarp warp = lbs_warp(g.mean, hand.posed);
    s.blend_weights = warp.weights;
    s.facet_distance = warp.facet_distance;
    s.xhat_can = warp.xhat_can;
    if (warp.facet_distance > degenerate_dist) {
      s.degenerate = true;
      continue;
    }

    // Transport the covariance by the polar rotation of the blended linear
    // part; translation leaves it unchanged. The left hand's outer mirror
    // applies to the covariance as well (diagonal entries are unaffected).
    const Mat3 rot = polar_rotation(warp.blend.linear());
    Mat3 cov = rot * g.cov * rot.transposed();
    if (hand.side == HandSide::kLeft) {
      cov(0, 1) = -cov(0, 1); cov(1, 0) = -cov(1, 0);
      cov(0, 2) = -cov(0, 2); cov(2, 0) = -cov(2, 0);
    }
    s.canonical.cov = cov;

    const CorrectResult c = correct(warp.xhat_can, hand.side, hand.pose_cond, correction,
                                    tapes ? &(*tapes)[size_t(k)] : nullptr);
    s.canonical.mean = c.x_can;
    s.residual = c.residual;
    s.corr_point = hand.side == HandSide::kLeft ? mirror_point(warp.xhat_can) : warp.xhat_can;
    if (!canonical_box.contains(c.x_can)) s.degenerate = true;
  }
  return out;
}

}  // namespace handfield
