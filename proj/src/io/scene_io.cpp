#include "handfield/io/scene_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "handfield/hand/rasterizer.hpp"
#include "handfield/io/image_io.hpp"
#include "handfield/math/rng.hpp"
#include "handfield/train/trainer.hpp"

namespace handfield {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint32_t kMeshMagic = 0x424d4648;  // "HFMB"

void put_u32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
}
void put_f64(std::vector<uint8_t>& b, double v) {
  const uint64_t u = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) b.push_back(uint8_t(u >> (8 * i)));
}

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;
  std::string path;
  void need(size_t n) const {
    if (pos + n > b.size()) throw FileFormatError(path + ": truncated mesh blob");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + size_t(i)]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
};

void write_hand_blob(const std::string& path, const ProceduralHand& hand) {
  std::vector<uint8_t> b;
  put_u32(b, kMeshMagic);
  put_u32(b, 1);
  put_u32(b, hand.mesh.side == HandSide::kLeft ? 0u : 1u);
  for (int j = 0; j < kNumJoints; ++j) put_u32(b, uint32_t(int32_t(hand.skeleton.parent[j])));
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) put_f64(b, hand.skeleton.rest_offset[j][a]);
  put_u32(b, uint32_t(hand.mesh.rest_vertices.size()));
  put_u32(b, uint32_t(hand.mesh.triangles.size()));
  for (const Vec3& v : hand.mesh.rest_vertices)
    for (int a = 0; a < 3; ++a) put_f64(b, v[a]);
  for (const Vec3& v : hand.mesh.rest_normals)
    for (int a = 0; a < 3; ++a) put_f64(b, v[a]);
  for (const auto& t : hand.mesh.triangles)
    for (uint32_t k : t) put_u32(b, k);
  for (const auto& w : hand.mesh.blend_weights)
    for (Real x : w) put_f64(b, x);
  for (const Vec3& v : hand.mesh.albedo)
    for (int a = 0; a < 3; ++a) put_f64(b, v[a]);
  put_u32(b, crc32(b.data(), b.size()));
  write_file_bytes(path, b.data(), b.size());
}

ProceduralHand read_hand_blob(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 16) throw FileFormatError(path + ": truncated mesh blob");
  const uint32_t stored_crc = [&] {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[bytes.size() - 4 + size_t(i)]) << (8 * i);
    return v;
  }();
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw FileFormatError(path + ": mesh blob checksum mismatch");

  Reader r{bytes, 0, path};
  if (r.u32() != kMeshMagic) throw FileFormatError(path + ": bad mesh blob magic");
  if (r.u32() != 1) throw FileFormatError(path + ": unsupported mesh blob version");
  ProceduralHand hand;
  hand.mesh.side = r.u32() == 0 ? HandSide::kLeft : HandSide::kRight;
  for (int j = 0; j < kNumJoints; ++j) hand.skeleton.parent[j] = int(int32_t(r.u32()));
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a) hand.skeleton.rest_offset[j][a] = r.f64();
  const uint32_t nv = r.u32(), nt = r.u32();
  if (nv > 1u << 24 || nt > 1u << 24) throw FileFormatError(path + ": implausible mesh size");
  hand.mesh.rest_vertices.resize(nv);
  hand.mesh.rest_normals.resize(nv);
  hand.mesh.triangles.resize(nt);
  hand.mesh.blend_weights.resize(nv);
  hand.mesh.albedo.resize(nv);
  for (Vec3& v : hand.mesh.rest_vertices)
    for (int a = 0; a < 3; ++a) v[a] = r.f64();
  for (Vec3& v : hand.mesh.rest_normals)
    for (int a = 0; a < 3; ++a) v[a] = r.f64();
  for (auto& t : hand.mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      t[size_t(k)] = r.u32();
      if (t[size_t(k)] >= nv) throw FileFormatError(path + ": triangle index out of range");
    }
  for (auto& w : hand.mesh.blend_weights)
    for (Real& x : w) x = r.f64();
  for (Vec3& v : hand.mesh.albedo)
    for (int a = 0; a < 3; ++a) v[a] = r.f64();
  return hand;
}

json pose_to_json(const Pose& p) {
  json j;
  json rot = json::array();
  for (int i = 0; i < kNumJoints; ++i)
    for (int a = 0; a < 3; ++a) rot.push_back(p.joint_rotation[i][a]);
  j["joint_rotations"] = rot;
  j["root_translation"] = {p.root_translation.x, p.root_translation.y, p.root_translation.z};
  j["root_rotation"] = {p.root_rotation.x, p.root_rotation.y, p.root_rotation.z};
  return j;
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto& rot = j.at("joint_rotations");
  if (rot.size() != 48) throw FileFormatError("scene.json: pose needs 48 joint rotation values");
  for (int i = 0; i < kNumJoints; ++i)
    for (int a = 0; a < 3; ++a) p.joint_rotation[i][a] = rot[size_t(i * 3 + a)].get<Real>();
  for (int a = 0; a < 3; ++a) {
    p.root_translation[a] = j.at("root_translation")[size_t(a)].get<Real>();
    p.root_rotation[a] = j.at("root_rotation")[size_t(a)].get<Real>();
  }
  return p;
}

}  // namespace

void save_scene(const Scene& scene, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "blobs");
  fs::create_directories(fs::path(dir) / "images");

  json j;
  j["format"] = "handfield-scene";
  j["version"] = 1;
  j["background"] = {scene.background.x, scene.background.y, scene.background.z};
  j["scene_unit"] = scene.scene_unit;

  json hands = json::array();
  for (size_t h = 0; h < scene.hands.size(); ++h) {
    const std::string rel = "blobs/hand" + std::to_string(h) + ".bin";
    write_hand_blob(dir + "/" + rel, scene.hands[h]);
    hands.push_back({{"side", scene.hands[h].mesh.side == HandSide::kLeft ? "left" : "right"},
                     {"blob", rel}});
  }
  j["hands"] = hands;

  json frames = json::array();
  for (const Scene::Frame& f : scene.frames) {
    json poses = json::array();
    for (const Pose& p : f.poses) poses.push_back(pose_to_json(p));
    frames.push_back({{"id", f.id}, {"poses", poses}});
  }
  j["frames"] = frames;

  json cams = json::array();
  for (const CameraModel& c : scene.cameras) {
    json rot = json::array();
    for (int i = 0; i < 9; ++i) rot.push_back(c.world_to_camera.rotation.m[size_t(i)]);
    cams.push_back({{"id", c.id},
                    {"split", c.split},
                    {"fx", c.fx},
                    {"fy", c.fy},
                    {"cx", c.cx},
                    {"cy", c.cy},
                    {"width", c.width},
                    {"height", c.height},
                    {"rotation", rot},
                    {"translation",
                     {c.world_to_camera.translation.x, c.world_to_camera.translation.y,
                      c.world_to_camera.translation.z}}});
  }
  j["cameras"] = cams;

  std::ofstream out(dir + "/scene.json", std::ios::trunc);
  if (!out) throw FileFormatError("cannot write " + dir + "/scene.json");
  out << j.dump(2) << "\n";
}

Scene load_scene(const std::string& dir) {
  std::ifstream in(dir + "/scene.json");
  if (!in) throw FileFormatError("cannot open " + dir + "/scene.json");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FileFormatError(dir + "/scene.json: parse error: " + e.what());
  }
  if (j.value("format", "") != "handfield-scene")
    throw FileFormatError(dir + "/scene.json: not a scene file");
  if (j.value("version", 0) != 1)
    throw FileFormatError(dir + "/scene.json: unsupported version");

  Scene scene;
  scene.root = dir;
  scene.background = {j["background"][0].get<Real>(), j["background"][1].get<Real>(),
                      j["background"][2].get<Real>()};
  scene.scene_unit = j.value("scene_unit", Real(1));

  for (const json& h : j.at("hands")) {
    ProceduralHand hand = read_hand_blob(dir + "/" + h.at("blob").get<std::string>());
    const std::string side = h.at("side").get<std::string>();
    const HandSide expect = side == "left" ? HandSide::kLeft : HandSide::kRight;
    if (hand.mesh.side != expect)
      throw FileFormatError(dir + ": hand side disagrees between scene.json and blob");
    scene.hands.push_back(std::move(hand));
  }

  for (const json& f : j.at("frames")) {
    Scene::Frame frame;
    frame.id = f.at("id").get<int>();
    for (const json& p : f.at("poses")) frame.poses.push_back(pose_from_json(p));
    if (frame.poses.size() != scene.hands.size())
      throw FileFormatError("scene.json: frame " + std::to_string(frame.id) +
                            " is missing a pose for a declared hand");
    scene.frames.push_back(std::move(frame));
  }

  for (const json& c : j.at("cameras")) {
    CameraModel cam;
    cam.id = c.at("id").get<std::string>();
    cam.split = c.at("split").get<std::string>();
    cam.fx = c.at("fx").get<Real>();
    cam.fy = c.at("fy").get<Real>();
    cam.cx = c.at("cx").get<Real>();
    cam.cy = c.at("cy").get<Real>();
    cam.width = c.at("width").get<int>();
    cam.height = c.at("height").get<int>();
    for (int i = 0; i < 9; ++i)
      cam.world_to_camera.rotation.m[size_t(i)] = c.at("rotation")[size_t(i)].get<Real>();
    for (int a = 0; a < 3; ++a)
      cam.world_to_camera.translation[a] = c.at("translation")[size_t(a)].get<Real>();
    if (!cam.valid()) throw FileFormatError("scene.json: invalid camera " + cam.id);
    for (const CameraModel& other : scene.cameras)
      if (other.id == cam.id) throw FileFormatError("scene.json: duplicate camera id " + cam.id);
    scene.cameras.push_back(std::move(cam));
  }
  return scene;
}

namespace {

Pose synth_pose(int frame, int frames, Real amplitude, HashRng& rng) {
  Pose p = Pose::rest();
  const Real phase = frames > 1 ? Real(frame) / Real(frames - 1) : Real(0);
  for (int f = 0; f < 5; ++f) {
    const Real finger_phase = rng.next_real(0, 2 * Real(3.14159265358979323846));
    const Real finger_amp = amplitude * rng.next_real(0.5, 1.0);
    for (int k = 0; k < 3; ++k) {
      const int j = 1 + 3 * f + k;
      const Real curl = finger_amp * (Real(0.4) + Real(0.6) * std::sin(finger_phase +
                                                                       2 * phase + Real(0.9) * k));
      p.joint_rotation[j] = {curl, rng.next_real(-0.06, 0.06), rng.next_real(-0.06, 0.06)};
    }
  }
  return p;
}

}  // namespace

Scene generate_dataset(const GenerateOptions& options, const std::string& out_dir) {
  if (options.hands != 1 && options.hands != 2)
    throw std::invalid_argument("generate_dataset: hand count must be 1 or 2");
  if (options.frames < 1 || options.train_views < 1 || options.image_size < 16)
    throw std::invalid_argument("generate_dataset: degenerate options");

  Scene scene;
  scene.background = options.background;
  scene.hands.push_back(generate_procedural_hand(HandSide::kRight, options.seed));
  if (options.hands == 2)
    scene.hands.insert(scene.hands.begin(),
                       generate_procedural_hand(HandSide::kLeft, options.seed));

  // Poses. For two hands the left is flipped to face the right palm; its
  // distance is tightened until the occlusion audit passes.
  const int left_idx = options.hands == 2 ? 0 : -1;
  const int right_idx = options.hands == 2 ? 1 : 0;
  Real approach = Real(1.12);
  for (int attempt = 0; attempt < 8; ++attempt) {
    scene.frames.clear();
    HashRng pose_rng(hash_combine(options.seed, 0x706f7365ull));
    for (int f = 0; f < options.frames; ++f) {
      Scene::Frame frame;
      frame.id = f;
      frame.poses.resize(scene.hands.size());
      frame.poses[size_t(right_idx)] = synth_pose(f, options.frames, options.pose_amplitude,
                                                  pose_rng);
      if (left_idx >= 0) {
        Pose lp = synth_pose(f, options.frames, options.pose_amplitude, pose_rng);
        lp.root_rotation = {0, 0, Real(3.14159265358979323846)};
        lp.root_translation = {Real(0.16), approach, Real(0.07)};
        frame.poses[size_t(left_idx)] = lp;
      }
      scene.frames.push_back(std::move(frame));
    }
    if (options.hands == 1) break;

    // occlusion audit on a probe camera ring
    bool ok = false;
    const PosedScene posed = pose_scene(scene);
    for (int f = 0; f < options.frames && !ok; ++f) {
      Aabb bounds;
      for (const HandInstance& h : posed.frames[size_t(f)]) bounds.extend(h.posed.tight_bounds);
      const Vec3 center = bounds.center();
      for (int v = 0; v < 4 && !ok; ++v) {
        const Real az = Real(-0.7) + Real(1.4) * v / 3;
        const CameraModel cam = CameraModel::look_at(
            center + Vec3{options.camera_radius * std::sin(az), Real(0.3),
                          options.camera_radius * std::cos(az)},
            center, {0, 1, 0}, options.focal_scale * options.image_size,
            options.focal_scale * options.image_size, options.image_size, options.image_size);
        size_t overlap = 0;
        std::vector<RasterResult> per_hand;
        for (const HandInstance& h : posed.frames[size_t(f)]) {
          const PosedHand* hp[1] = {&h.posed};
          per_hand.push_back(rasterize(cam, hp));
        }
        for (size_t p = 0; p < per_hand[0].depth.data.size(); ++p)
          if (std::isfinite(per_hand[0].depth.data[p]) &&
              std::isfinite(per_hand[1].depth.data[p]))
            ++overlap;
        ok = overlap >= 50;
      }
    }
    if (ok) break;
    approach -= Real(0.04);  // bring the hands closer and retry
  }

  // camera ring around the union of all frames
  Aabb bounds;
  const PosedScene posed = pose_scene(scene);
  for (const auto& frame : posed.frames)
    for (const HandInstance& h : frame) bounds.extend(h.posed.tight_bounds);
  const Vec3 center = bounds.center();

  // Frontal arc facing the palm plane: edge-on slivers supervise no texture,
  // so cameras sweep azimuth across the +z hemisphere with alternating
  // elevation, test views interleaved between the training ones.
  const Real arc = Real(options.arc_degrees) * Real(3.14159265358979323846) / 180;
  const int total_views = options.train_views + options.test_views;
  for (int v = 0; v < total_views; ++v) {
    const bool is_train = v < options.train_views;
    const int k = is_train ? v : v - options.train_views;
    const int n = is_train ? options.train_views : options.test_views;
    const Real az = is_train ? -arc / 2 + arc * (Real(k) + Real(0.5)) / Real(n)
                             : -arc / 2 + arc * (Real(k) + 1) / Real(n + 1);
    const Real el = (is_train ? (k % 2 ? Real(0.22) : Real(-0.18)) : Real(0.05));
    const Vec3 eye = center + Vec3{options.camera_radius * std::sin(az) * std::cos(el),
                                   options.camera_radius * std::sin(el),
                                   options.camera_radius * std::cos(az) * std::cos(el)};
    CameraModel cam = CameraModel::look_at(eye, center, {0, 1, 0},
                                           options.focal_scale * options.image_size,
                                           options.focal_scale * options.image_size,
                                           options.image_size, options.image_size);
    cam.id = (is_train ? "train" : "test") + std::to_string(k);
    cam.split = is_train ? "train" : "test";
    scene.cameras.push_back(std::move(cam));
  }

  save_scene(scene, out_dir);
  scene.root = out_dir;

  // ground truth per (frame, camera)
  for (int f = 0; f < int(scene.frames.size()); ++f) {
    std::vector<const PosedHand*> hand_ptrs;
    for (const HandInstance& h : posed.frames[size_t(f)]) hand_ptrs.push_back(&h.posed);
    for (const CameraModel& cam : scene.cameras) {
      RasterOptions ro;
      ro.background = scene.background;
      ro.ambient = options.ambient;
      ro.diffuse = options.diffuse;
      RasterResult raster = rasterize(cam, hand_ptrs, ro);
      write_png(out_dir + "/" + Scene::color_rel(f, cam.id), quantize_image(raster.color));
      write_pfm(out_dir + "/" + Scene::depth_rel(f, cam.id), raster.depth);
      ImageU8 mask = raster.mask;
      dilate_mask(mask, 3);
      write_png(out_dir + "/" + Scene::mask_rel(f, cam.id), mask);

      if (scene.hands.size() == 2) {
        ImageU8 occlusion(cam.height, cam.width, 1, 0);
        std::vector<RasterResult> per_hand;
        for (const PosedHand* hp : hand_ptrs) {
          const PosedHand* one[1] = {hp};
          per_hand.push_back(rasterize(cam, one));
        }
        for (size_t p = 0; p < occlusion.data.size(); ++p)
          if (std::isfinite(per_hand[0].depth.data[p]) &&
              std::isfinite(per_hand[1].depth.data[p]))
            occlusion.data[p] = 255;
        write_png(out_dir + "/" + Scene::occlusion_rel(f, cam.id), occlusion);
      }
    }
  }
  return scene;
}

GenerateOptions generate_options_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FileFormatError(std::string("generator config: parse error: ") + e.what());
  }
  GenerateOptions o;
  o.hands = j.value("hands", o.hands);
  o.frames = j.value("frames", o.frames);
  o.train_views = j.value("train_views", o.train_views);
  o.test_views = j.value("test_views", o.test_views);
  o.image_size = j.value("image_size", o.image_size);
  o.seed = j.value("seed", o.seed);
  o.camera_radius = j.value("camera_radius", o.camera_radius);
  o.pose_amplitude = j.value("pose_amplitude", o.pose_amplitude);
  o.focal_scale = j.value("focal_scale", o.focal_scale);
  o.arc_degrees = j.value("arc_degrees", o.arc_degrees);
  o.ambient = j.value("ambient", o.ambient);
  o.diffuse = j.value("diffuse", o.diffuse);
  if (j.contains("background"))
    o.background = {j["background"][0].get<Real>(), j["background"][1].get<Real>(),
                    j["background"][2].get<Real>()};
  return o;
}

}  // namespace handfield
