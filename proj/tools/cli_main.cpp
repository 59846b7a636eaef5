// Command-line surface: dataset generation, teacher-feature extraction,
// training, rendering, pose adaptation, and evaluation.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "handfield/io/checkpoint.hpp"
#include "handfield/io/feature_io.hpp"
#include "handfield/io/image_io.hpp"
#include "handfield/io/scene_io.hpp"
#include "handfield/metrics/metrics.hpp"

using namespace handfield;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FileFormatError(std::string("training config: parse error: ") + e.what());
  }
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.pixel_budget = j.value("pixel_budget", c.pixel_budget);
  c.fg_fraction = j.value("fg_fraction", c.fg_fraction);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.jitter = j.value("jitter", c.jitter);
  c.use_features = j.value("use_features", c.use_features);
  c.lr = j.value("lr", c.lr);
  c.lr_final = j.value("lr_final", c.lr_final);
  c.min_delta = j.value("min_delta", c.min_delta);
  c.validation_interval = j.value("validation_interval", c.validation_interval);
  c.snapshot_interval = j.value("snapshot_interval", c.snapshot_interval);
  c.log_interval = j.value("log_interval", c.log_interval);
  if (j.contains("loss")) {
    const json& l = j["loss"];
    c.loss.depth = l.value("lambda_depth", c.loss.depth);
    c.loss.distill = l.value("lambda_distill", c.loss.distill);
    c.loss.deform = l.value("lambda_deform", c.loss.deform);
    c.loss.hard_surface = l.value("lambda_hard_surface", c.loss.hard_surface);
    c.loss.color_var = l.value("lambda_color_var", c.loss.color_var);
    c.loss.smooth_l1_beta = l.value("smooth_l1_beta", c.loss.smooth_l1_beta);
  }
  if (j.contains("field")) {
    const json& f = j["field"];
    c.field.pos_degree = f.value("pos_degree", c.field.pos_degree);
    c.field.dir_degree = f.value("dir_degree", c.field.dir_degree);
    c.field.density_width = f.value("density_width", c.field.density_width);
    c.field.density_layers = f.value("density_layers", c.field.density_layers);
    c.field.density_skip = f.value("density_skip", c.field.density_skip);
    c.field.color_width = f.value("color_width", c.field.color_width);
    c.field.color_layers = f.value("color_layers", c.field.color_layers);
    c.field.feature_dim = f.value("feature_dim", c.field.feature_dim);
    c.field.latent_dim = f.value("latent_dim", c.field.latent_dim);
  }
  if (j.contains("deform")) {
    const json& d = j["deform"];
    c.deform.samples_per_ray = d.value("samples_per_ray", c.deform.samples_per_ray);
    c.deform.degenerate_distance_factor =
        d.value("degenerate_distance_factor", c.deform.degenerate_distance_factor);
    c.deform.corr_width = d.value("corr_width", c.deform.corr_width);
    c.deform.corr_layers = d.value("corr_layers", c.deform.corr_layers);
    c.deform.corr_skip = d.value("corr_skip", c.deform.corr_skip);
    c.deform.corr_pos_degree = d.value("corr_pos_degree", c.deform.corr_pos_degree);
  }
  return c;
}

std::string train_config_to_json(const TrainConfig& c) {
  json j;
  j["iterations"] = c.iterations;
  j["pixel_budget"] = c.pixel_budget;
  j["fg_fraction"] = c.fg_fraction;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["jitter"] = c.jitter;
  j["use_features"] = c.use_features;
  j["lr"] = c.lr;
  j["lr_final"] = c.lr_final;
  j["min_delta"] = c.min_delta;
  j["validation_interval"] = c.validation_interval;
  j["loss"] = {{"lambda_depth", c.loss.depth},
               {"lambda_distill", c.loss.distill},
               {"lambda_deform", c.loss.deform},
               {"lambda_hard_surface", c.loss.hard_surface},
               {"lambda_color_var", c.loss.color_var},
               {"smooth_l1_beta", c.loss.smooth_l1_beta}};
  j["field"] = {{"pos_degree", c.field.pos_degree},
                {"dir_degree", c.field.dir_degree},
                {"density_width", c.field.density_width},
                {"density_layers", c.field.density_layers},
                {"density_skip", c.field.density_skip},
                {"color_width", c.field.color_width},
                {"color_layers", c.field.color_layers},
                {"feature_dim", c.field.feature_dim},
                {"latent_dim", c.field.latent_dim}};
  j["deform"] = {{"samples_per_ray", c.deform.samples_per_ray},
                 {"degenerate_distance_factor", c.deform.degenerate_distance_factor},
                 {"corr_width", c.deform.corr_width},
                 {"corr_layers", c.deform.corr_layers},
                 {"corr_skip", c.deform.corr_skip},
                 {"corr_pos_degree", c.deform.corr_pos_degree}};
  return j.dump();
}

Aabb canonical_box_for(const Scene& scene) {
  // canonical normalization region: rest bounds of the right hand, scaled 2x
  for (const ProceduralHand& h : scene.hands)
    if (h.mesh.side == HandSide::kRight) return h.mesh.rest_bounds().scaled(2);
  return scene.hands.at(0).mesh.rest_bounds().scaled(2);
}

int find_frame(const Scene& scene, int frame_id) {
  for (int i = 0; i < int(scene.frames.size()); ++i)
    if (scene.frames[size_t(i)].id == frame_id) return i;
  throw std::invalid_argument("no frame with id " + std::to_string(frame_id));
}

int find_camera(const Scene& scene, const std::string& id) {
  for (int i = 0; i < int(scene.cameras.size()); ++i)
    if (scene.cameras[size_t(i)].id == id) return i;
  throw std::invalid_argument("no camera with id " + id);
}

int run_generate(const std::string& out, const std::string& config_path, uint64_t seed,
                 int views, int test_views, int frames, int hands, int size) {
  GenerateOptions options;
  if (!config_path.empty()) options = generate_options_from_json(read_text(config_path));
  if (seed) options.seed = seed;
  if (views) options.train_views = views;
  if (test_views) options.test_views = test_views;
  if (frames) options.frames = frames;
  if (hands) options.hands = hands;
  if (size) options.image_size = size;
  const Scene scene = generate_dataset(options, out);
  std::cout << "generated scene: " << scene.hands.size() << " hand(s), "
            << scene.frames.size() << " frame(s), " << scene.cameras.size() << " camera(s) -> "
            << out << "\n";
  return 0;
}

int run_train(const std::string& scene_dir, const std::string& config_path,
              const std::string& out, long iterations, uint64_t seed, bool single_thread,
              int threads, const std::string& log_path, bool features) {
  Scene scene = load_scene(scene_dir);
  TrainConfig cfg;
  if (!config_path.empty()) cfg = train_config_from_json(read_text(config_path));
  if (iterations >= 0) cfg.iterations = iterations;
  if (seed) cfg.seed = seed;
  if (threads > 0) cfg.threads = threads;
  if (single_thread) cfg.threads = 1;
  if (!log_path.empty()) cfg.log_path = log_path;
  if (features) cfg.use_features = true;

  Model model = Model::create(cfg.field, cfg.deform, canonical_box_for(scene),
                              int(scene.frames.size()), cfg.seed);
  const TrainStats stats = train(model, scene, cfg);

  Checkpoint ckpt;
  ckpt.iteration = uint64_t(stats.iterations_run);
  ckpt.rng_seed = cfg.seed;
  ckpt.config_json = train_config_to_json(cfg);
  ckpt.num_frames = int(scene.frames.size());
  ckpt.canonical_box = model.field->canonical_box();
  ckpt.model = std::move(model);
  save_checkpoint(out, ckpt);

  std::cout << "trained " << stats.iterations_run << " iterations";
  if (stats.aborted) std::cout << " (aborted: " << stats.abort_reason << ")";
  if (stats.last_validation_psnr >= 0)
    std::cout << ", validation psnr " << stats.last_validation_psnr;
  std::cout << " -> " << out << "\n";
  return stats.aborted ? 2 : 0;
}

int run_render(const std::string& ckpt_path, const std::string& scene_dir, int frame_id,
               const std::string& camera_id, const std::string& out, bool novel_latent) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Scene scene = load_scene(scene_dir);
  const int fi = find_frame(scene, frame_id);
  const int ci = find_camera(scene, camera_id);

  const PosedScene posed = pose_scene(scene);
  const FrameState fs = posed.frame_state(fi, novel_latent || fi >= ckpt.num_frames);

  RenderParams params;
  params.samples_per_ray = ckpt.model.deform_cfg.samples_per_ray;
  params.background = scene.background;
  const ImageRenderResult img = render_image(*ckpt.model.field, *ckpt.model.correction, fs,
                                             scene.cameras[size_t(ci)], params);

  std::filesystem::create_directories(out);
  const std::string stem = out + "/f" + std::to_string(frame_id) + "_" + camera_id;
  write_png(stem + "_color.png", quantize_image(img.color));
  write_pfm(stem + "_depth.pfm", img.depth);
  write_pfm(stem + "_weightsum.pfm", img.weight_sum);
  std::cout << "rendered " << stem << "_color.png";
  if (!img.failed_pixels.empty())
    std::cout << " (" << img.failed_pixels.size() << " failed pixels)";
  std::cout << "\n";
  return 0;
}

int run_adapt(const std::string& ckpt_path, const std::string& scene_dir, const std::string& out,
              long iterations, uint64_t seed, const std::string& log_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Scene novel = load_scene(scene_dir);

  AdaptConfig cfg;
  if (iterations >= 0) cfg.iterations = iterations;
  if (seed) cfg.seed = seed;
  cfg.log_path = log_path;
  const TrainStats stats = pose_adapt(ckpt.model, novel, cfg);

  ckpt.iteration += uint64_t(stats.iterations_run);
  save_checkpoint(out, ckpt);
  std::cout << "adapted " << stats.iterations_run << " iterations -> " << out << "\n";
  return stats.aborted ? 2 : 0;
}

int run_eval(const std::string& ckpt_path, const std::string& scene_dir, const std::string& out,
             const std::string& split, const std::string& mode, bool novel_latent) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Scene scene = load_scene(scene_dir);
  const std::vector<int> cams = scene.camera_indices(split);
  if (cams.empty()) throw std::invalid_argument("no cameras in split " + split);

  const PosedScene posed = pose_scene(scene);
  RenderParams params;
  params.samples_per_ray = ckpt.model.deform_cfg.samples_per_ray;
  params.background = scene.background;

  EvalReport report;
  report.mode = mode;
  for (int f = 0; f < int(scene.frames.size()); ++f) {
    const FrameState fs = posed.frame_state(f, novel_latent || f >= ckpt.num_frames);
    for (int ci : cams) {
      const CameraModel& cam = scene.cameras[size_t(ci)];
      const ImageRenderResult img =
          render_image(*ckpt.model.field, *ckpt.model.correction, fs, cam, params);
      const int id = scene.frames[size_t(f)].id;
      const ImageF gt_color =
          dequantize_image(read_png(scene.root + "/" + Scene::color_rel(id, cam.id)));
      const ImageF gt_depth = read_pfm(scene.root + "/" + Scene::depth_rel(id, cam.id));
      const ImageU8 mask = read_png(scene.root + "/" + Scene::mask_rel(id, cam.id));

      EvalReport::PerImage im;
      im.frame_id = id;
      im.camera_id = cam.id;
      im.psnr_full = psnr(img.color, gt_color);
      im.psnr_masked = psnr(img.color, gt_color, &mask);
      im.ssim_value = ssim(img.color, gt_color);
      im.de = depth_error(img.depth, gt_depth, mask);
      report.images.push_back(std::move(im));
    }
  }
  report.finalize();
  std::cout << report.to_table();
  if (!out.empty()) {
    std::ofstream o(out, std::ios::trunc);
    if (!o) throw FileFormatError("cannot write " + out);
    o << report.to_json() << "\n";
    std::cout << "report -> " << out << "\n";
  }
  return 0;
}

int run_extract(const std::string& scene_dir, const std::string& teacher,
                const std::string& external_dir, int dim, uint64_t seed) {
  const Scene scene = load_scene(scene_dir);
  ExtractOptions options;
  options.teacher = teacher;
  options.external_dir = external_dir;
  options.out_dim = dim;
  if (seed) options.seed = seed;
  extract_teacher_features(scene, options);
  std::cout << "features (" << teacher << ", D=" << dim << ") -> " << scene_dir
            << "/features\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-driven canonical hand radiance fields"};
  app.require_subcommand(1);

  std::string scene_dir, config_path, ckpt_path, out, log_path, camera_id = "test0";
  std::string split = "test", mode = "novel-view", teacher = "toy", external_dir;
  uint64_t seed = 0;
  long iterations = -1;
  int views = 0, test_views = 0, frames = 0, hands = 0, size = 0, frame_id = 0, dim = 16,
      threads = 0;
  bool single_thread = false, novel_latent = false, features = false;

  CLI::App* generate = app.add_subcommand("generate", "synthesize a multi-view hand dataset");
  generate->add_option("--out", out)->required();
  generate->add_option("--config", config_path);
  generate->add_option("--seed", seed);
  generate->add_option("--views", views);
  generate->add_option("--test-views", test_views);
  generate->add_option("--frames", frames);
  generate->add_option("--hands", hands);
  generate->add_option("--size", size);

  CLI::App* train_cmd = app.add_subcommand("train", "optimize a model on a scene");
  train_cmd->add_option("--scene", scene_dir)->required();
  train_cmd->add_option("--out", out)->required();
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--iterations", iterations);
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--threads", threads);
  train_cmd->add_flag("--single-thread", single_thread);
  train_cmd->add_option("--log", log_path);
  train_cmd->add_flag("--features", features, "enable feature distillation");

  CLI::App* render = app.add_subcommand("render", "render one frame from one camera");
  render->add_option("--checkpoint", ckpt_path)->required();
  render->add_option("--scene", scene_dir)->required();
  render->add_option("--out", out)->required();
  render->add_option("--frame", frame_id);
  render->add_option("--camera", camera_id);
  render->add_flag("--novel-latent", novel_latent);

  CLI::App* adapt = app.add_subcommand("adapt", "fine-tune the deformation field on novel poses");
  adapt->add_option("--checkpoint", ckpt_path)->required();
  adapt->add_option("--scene", scene_dir)->required();
  adapt->add_option("--out", out)->required();
  adapt->add_option("--iterations", iterations);
  adapt->add_option("--seed", seed);
  adapt->add_option("--log", log_path);

  CLI::App* eval_cmd = app.add_subcommand("eval", "quantitative evaluation on a camera split");
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--scene", scene_dir)->required();
  eval_cmd->add_option("--out", out);
  eval_cmd->add_option("--split", split);
  eval_cmd->add_option("--mode", mode);
  eval_cmd->add_flag("--novel-latent", novel_latent);

  CLI::App* extract = app.add_subcommand("extract-features", "teacher features + PCA targets");
  extract->add_option("--scene", scene_dir)->required();
  extract->add_option("--teacher", teacher)->check(CLI::IsMember({"toy", "external"}));
  extract->add_option("--external-dir", external_dir);
  extract->add_option("--dim", dim);
  extract->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed())
      return run_generate(out, config_path, seed, views, test_views, frames, hands, size);
    if (train_cmd->parsed())
      return run_train(scene_dir, config_path, out, iterations, seed, single_thread, threads,
                       log_path, features);
    if (render->parsed())
      return run_render(ckpt_path, scene_dir, frame_id, camera_id, out, novel_latent);
    if (adapt->parsed()) return run_adapt(ckpt_path, scene_dir, out, iterations, seed, log_path);
    if (eval_cmd->parsed()) return run_eval(ckpt_path, scene_dir, out, split, mode, novel_latent);
    if (extract->parsed()) return run_extract(scene_dir, teacher, external_dir, dim, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
