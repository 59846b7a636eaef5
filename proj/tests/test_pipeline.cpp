#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "handfield/io/checkpoint.hpp"
#include "handfield/io/feature_io.hpp"
#include "handfield/io/image_io.hpp"
#include "handfield/io/scene_io.hpp"
#include "test_support.hpp"

#include "handfield/train/trainer.hpp"

using namespace handfield;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir() {
  static int counter = 0;
  const std::string d = (fs::temp_directory_path() / ("hf_pipe_" + std::to_string(::getpid()) +
                                                      "_" + std::to_string(counter++)))
                            .string();
  fs::create_directories(d);
  return d;
}

TrainConfig smoke_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.field = testutil::tiny_field_config();
  cfg.deform = testutil::tiny_deform_config();
  cfg.deform.samples_per_ray = 16;
  cfg.iterations = 120;
  cfg.pixel_budget = Real(0.03);
  cfg.seed = seed;
  cfg.validation_interval = 0;
  cfg.snapshot_interval = 50;
  cfg.log_interval = 0;
  return cfg;
}

Aabb scene_box(const Scene& scene) {
  for (const ProceduralHand& h : scene.hands)
    if (h.mesh.side == HandSide::kRight) return h.mesh.rest_bounds().scaled(2);
  return scene.hands.at(0).mesh.rest_bounds().scaled(2);
}

}  // namespace

TEST_CASE("short training runs reduce the color loss deterministically") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 2;
  go.train_views = 3;
  go.test_views = 1;
  go.image_size = 32;
  go.seed = 11;
  const Scene scene = generate_dataset(go, dir);

  const TrainConfig cfg = smoke_config(5);
  Model a = Model::create(cfg.field, cfg.deform, scene_box(scene), int(scene.frames.size()), 5);
  const TrainStats sa = train(a, scene, cfg);
  CHECK(sa.iterations_run == cfg.iterations);
  CHECK(!sa.aborted);
  CHECK(sa.last_losses.rgb < sa.first_losses.rgb);

  // same seed, fresh model: bitwise-identical loss trajectory endpoints
  Model b = Model::create(cfg.field, cfg.deform, scene_box(scene), int(scene.frames.size()), 5);
  const TrainStats sb = train(b, scene, cfg);
  CHECK(sb.first_losses.total == sa.first_losses.total);
  CHECK(sb.last_losses.total == sa.last_losses.total);
  const auto snap_a = a.snapshot();
  const auto snap_b = b.snapshot();
  CHECK(snap_a.sigma == snap_b.sigma);
  CHECK(snap_a.corr == snap_b.corr);

  // zero iterations leave the initialization untouched
  Model c = Model::create(cfg.field, cfg.deform, scene_box(scene), int(scene.frames.size()), 5);
  const auto before = c.snapshot();
  TrainConfig none = cfg;
  none.iterations = 0;
  const TrainStats sc = train(c, scene, none);
  CHECK(sc.iterations_run == 0);
  const auto after = c.snapshot();
  CHECK(before.sigma == after.sigma);
  CHECK(before.color == after.color);
  CHECK(before.latent == after.latent);
  CHECK(before.corr == after.corr);
}

TEST_CASE("a 16x16 two-view scene trains: last-50 mean rgb loss beats iteration 0") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 1;
  go.train_views = 2;
  go.test_views = 1;
  go.image_size = 16;
  go.seed = 41;
  const Scene scene = generate_dataset(go, dir);

  TrainConfig cfg = smoke_config(12);
  cfg.iterations = 500;
  cfg.pixel_budget = Real(0.25);  // 16x16: enough rays that step 0 sees the hand
  cfg.log_interval = 1;
  cfg.log_path = dir + "/train.log";
  Model m = Model::create(cfg.field, cfg.deform, scene_box(scene), 1, 12);
  const TrainStats st = train(m, scene, cfg);
  REQUIRE(!st.aborted);

  std::ifstream log(cfg.log_path);
  std::vector<Real> rgb;
  std::string line;
  while (std::getline(log, line)) {
    const auto pos = line.find("\"rgb\":");
    if (pos == std::string::npos) continue;
    rgb.push_back(std::stod(line.substr(pos + 6)));
  }
  REQUIRE(rgb.size() >= 500);
  Real tail = 0;
  for (size_t i = rgb.size() - 50; i < rgb.size(); ++i) tail += rgb[i];
  tail /= 50;
  CHECK(tail < rgb.front());
}

TEST_CASE("training uses distillation targets when enabled") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 1;
  go.train_views = 2;
  go.test_views = 1;
  go.image_size = 32;
  go.seed = 13;
  const Scene scene = generate_dataset(go, dir);
  ExtractOptions eo;
  eo.out_dim = testutil::tiny_field_config().feature_dim;
  extract_teacher_features(scene, eo);

  TrainConfig cfg = smoke_config(6);
  cfg.iterations = 40;
  cfg.use_features = true;
  Model m = Model::create(cfg.field, cfg.deform, scene_box(scene), 1, 6);
  const TrainStats st = train(m, scene, cfg);
  CHECK(!st.aborted);
  CHECK(st.last_losses.distill > 0.0);  // the branch is alive
}

TEST_CASE("pose adaptation freezes the radiance field bitwise and reads no images") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 2;
  go.train_views = 3;
  go.test_views = 1;
  go.image_size = 32;
  go.seed = 17;
  const Scene scene = generate_dataset(go, dir);

  TrainConfig cfg = smoke_config(7);
  cfg.iterations = 60;
  Model model = Model::create(cfg.field, cfg.deform, scene_box(scene), int(scene.frames.size()), 7);
  train(model, scene, cfg);

  // novel poses, in-memory only: no images exist for this scene
  Scene novel;
  novel.hands = scene.hands;
  novel.cameras = scene.cameras;
  novel.background = scene.background;
  Scene::Frame f;
  f.id = 100;
  Pose p = Pose::rest();
  p.joint_rotation[8] = {Real(1.1), 0, Real(0.1)};  // strong novel bend
  p.joint_rotation[5] = {Real(0.9), 0, 0};
  f.poses = {p};
  novel.frames.push_back(f);
  novel.root = dir + "/does_not_exist";  // any file access would fail loudly

  const auto before = model.snapshot();
  AdaptConfig acfg;
  acfg.iterations = 40;
  acfg.pixel_budget = Real(0.03);
  acfg.seed = 3;
  const TrainStats st = pose_adapt(model, novel, acfg);
  CHECK(!st.aborted);
  CHECK(st.iterations_run == 40);

  const auto after = model.snapshot();
  CHECK(before.sigma == after.sigma);    // bitwise frozen
  CHECK(before.color == after.color);
  CHECK(before.latent == after.latent);
  CHECK(before.corr != after.corr);      // the deformation field moved

  // enabling RGB supervision is a configuration error
  AdaptConfig bad = acfg;
  bad.use_rgb = true;
  CHECK_THROWS_AS(pose_adapt(model, novel, bad), std::invalid_argument);
}

TEST_CASE("adaptation on the training poses does not increase the depth loss") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 2;
  go.train_views = 3;
  go.test_views = 1;
  go.image_size = 32;
  go.seed = 23;
  const Scene scene = generate_dataset(go, dir);

  TrainConfig cfg = smoke_config(9);
  cfg.iterations = 100;
  Model model = Model::create(cfg.field, cfg.deform, scene_box(scene), int(scene.frames.size()), 9);
  train(model, scene, cfg);

  AdaptConfig acfg;
  acfg.iterations = 50;
  acfg.pixel_budget = Real(0.04);
  acfg.seed = 31;
  const TrainStats st = pose_adapt(model, scene, acfg);
  CHECK(!st.aborted);
  CHECK(st.last_losses.depth <= st.first_losses.depth * Real(1.05) + Real(1e-4));
}

TEST_CASE("novel-latent rendering never reads latent rows") {
  auto w = testutil::make_tiny_world(71, true);
  w->field->set_latent_audit(true);
  FrameState novel = w->frame;
  novel.frame_index = -1;
  RenderParams params = w->params;
  for (int r = 8; r < 40; r += 4)
    (void)render_pixel(*w->field, *w->corr, novel, w->camera.pixel_ray(r, 24), params);
  for (uint64_t reads : w->field->latent_reads()) CHECK(reads == 0);

  // a concrete frame touches exactly its own row
  FrameState frame1 = w->frame;
  frame1.frame_index = 1;
  (void)render_pixel(*w->field, *w->corr, frame1, w->camera.pixel_ray(24, 24), params);
  CHECK(w->field->latent_reads()[0] == 0);
  CHECK(w->field->latent_reads()[1] > 0);
  CHECK(w->field->latent_reads()[2] == 0);
  w->field->set_latent_audit(false);
}

TEST_CASE("checkpoints preserve rendering behavior exactly") {
  const std::string dir = tmp_dir();
  GenerateOptions go;
  go.hands = 1;
  go.frames = 1;
  go.train_views = 2;
  go.test_views = 1;
  go.image_size = 24;
  go.seed = 29;
  const Scene scene = generate_dataset(go, dir);

  TrainConfig cfg = smoke_config(10);
  cfg.iterations = 30;
  Model model = Model::create(cfg.field, cfg.deform, scene_box(scene), 1, 10);
  train(model, scene, cfg);

  Checkpoint ckpt;
  ckpt.iteration = 30;
  ckpt.rng_seed = 10;
  ckpt.num_frames = 1;
  ckpt.canonical_box = model.field->canonical_box();
  ckpt.model = std::move(model);
  save_checkpoint(dir + "/model.ckpt", ckpt);
  Checkpoint loaded = load_checkpoint(dir + "/model.ckpt");

  const PosedScene posed = pose_scene(scene);
  const FrameState fs = posed.frame_state(0);
  RenderParams params;
  params.samples_per_ray = cfg.deform.samples_per_ray;
  params.background = scene.background;
  const ImageRenderResult a =
      render_image(*ckpt.model.field, *ckpt.model.correction, fs, scene.cameras[0], params);
  const ImageRenderResult b =
      render_image(*loaded.model.field, *loaded.model.correction, fs, scene.cameras[0], params);
  CHECK(a.color.data == b.color.data);
  CHECK(a.depth.data == b.depth.data);
}
