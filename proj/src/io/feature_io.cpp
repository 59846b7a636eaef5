#include "handfield/io/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "handfield/io/image_io.hpp"
#include "handfield/math/rng.hpp"

namespace handfield {

namespace {

constexpr uint32_t kFeatureMagic = 0x504d4648;  // "HFMP"
constexpr uint32_t kFeatureVersion = 1;
constexpr uint32_t kBasisMagic = 0x42504648;  // "HFPB"

struct ByteWriter {
  std::vector<uint8_t> bytes;
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(uint8_t(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(uint32_t(v)); }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void f64(double v) {
    const uint64_t u = std::bit_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes.push_back(uint8_t(u >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
};

struct ByteReader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  std::string path;

  void need(size_t n) const {
    if (pos + n > bytes.size()) throw FileFormatError(path + ": truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  int32_t i32() { return int32_t(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(bytes[pos + size_t(i)]) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(v);
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(bytes.begin() + long(pos), bytes.begin() + long(pos + n));
    pos += n;
    return s;
  }
};

}  // namespace

void write_feature_map(const std::string& path, const FeatureMap& map) {
  ByteWriter w;
  w.u32(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(uint32_t(map.data.height));
  w.u32(uint32_t(map.data.width));
  w.u32(uint32_t(map.data.channels));
  w.i32(map.frame_id);
  w.str(map.camera_id);

  std::vector<uint8_t> payload;
  payload.reserve(map.data.data.size() * 4);
  for (Real v : map.data.data) {
    const uint32_t u = std::bit_cast<uint32_t>(float(v));
    for (int i = 0; i < 4; ++i) payload.push_back(uint8_t(u >> (8 * i)));
  }
  w.u32(crc32(payload.data(), payload.size()));
  w.bytes.insert(w.bytes.end(), payload.begin(), payload.end());
  write_file_bytes(path, w.bytes.data(), w.bytes.size());
}

FeatureMap read_feature_map(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r{bytes, 0, path};
  if (r.u32() != kFeatureMagic) throw FileFormatError(path + ": bad feature-map magic");
  const uint32_t version = r.u32();
  if (version != kFeatureVersion)
    throw FileFormatError(path + ": unsupported feature-map version " + std::to_string(version));
  const uint32_t h = r.u32(), w = r.u32(), c = r.u32();
  if (h == 0 || w == 0 || c == 0 || h > 1u << 20 || w > 1u << 20 || c > 4096)
    throw FileFormatError(path + ": implausible feature-map dimensions");
  FeatureMap out;
  out.frame_id = r.i32();
  out.camera_id = r.str();
  const uint32_t crc_stored = r.u32();

  const size_t count = size_t(h) * w * c;
  if (bytes.size() - r.pos != count * 4)
    throw FileFormatError(path + ": payload length does not match the header");
  if (crc32(bytes.data() + r.pos, count * 4) != crc_stored)
    throw FileFormatError(path + ": payload checksum mismatch");

  out.data = ImageF(int(h), int(w), int(c));
  for (size_t i = 0; i < count; ++i) {
    uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= uint32_t(bytes[r.pos + i * 4 + size_t(k)]) << (8 * k);
    out.data.data[i] = Real(std::bit_cast<float>(u));
  }
  return out;
}

void PcaBasis::project(std::span<const Real> in, std::span<Real> out) const {
  for (int o = 0; o < out_dim; ++o) {
    Real acc = 0;
    const Real* row = components.data() + size_t(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) acc += row[i] * (in[size_t(i)] - mean[size_t(i)]);
    out[size_t(o)] = acc;
  }
}

PcaBasis fit_pca(std::span<const Real> samples, int in_dim, int out_dim) {
  if (out_dim > in_dim) throw std::invalid_argument("fit_pca: out_dim exceeds input channels");
  const size_t n = samples.size() / size_t(in_dim);
  if (n < 2) throw std::invalid_argument("fit_pca: needs at least two samples");

  PcaBasis basis;
  basis.in_dim = in_dim;
  basis.out_dim = out_dim;
  basis.mean.assign(size_t(in_dim), Real(0));
  for (size_t s = 0; s < n; ++s)
    for (int i = 0; i < in_dim; ++i) basis.mean[size_t(i)] += samples[s * size_t(in_dim) + size_t(i)];
  for (Real& m : basis.mean) m /= Real(n);

  std::vector<Real> cov(size_t(in_dim) * size_t(in_dim), Real(0));
  std::vector<Real> centered(static_cast<size_t>(in_dim));
  for (size_t s = 0; s < n; ++s) {
    for (int i = 0; i < in_dim; ++i)
      centered[size_t(i)] = samples[s * size_t(in_dim) + size_t(i)] - basis.mean[size_t(i)];
    for (int i = 0; i < in_dim; ++i)
      for (int j = i; j < in_dim; ++j) cov[size_t(i) * in_dim + size_t(j)] += centered[size_t(i)] * centered[size_t(j)];
  }
  for (int i = 0; i < in_dim; ++i)
    for (int j = i; j < in_dim; ++j) {
      cov[size_t(i) * in_dim + size_t(j)] /= Real(n);
      cov[size_t(j) * in_dim + size_t(i)] = cov[size_t(i) * in_dim + size_t(j)];
    }

  // cyclic Jacobi; V accumulates eigenvectors in columns
  const int d = in_dim;
  std::vector<Real> a = cov;
  std::vector<Real> v(size_t(d) * size_t(d), Real(0));
  for (int i = 0; i < d; ++i) v[size_t(i) * d + size_t(i)] = 1;
  for (int sweep = 0; sweep < 64; ++sweep) {
    Real off = 0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a[size_t(p) * d + size_t(q)] * a[size_t(p) * d + size_t(q)];
    if (off < Real(1e-24)) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const Real apq = a[size_t(p) * d + size_t(q)];
        if (std::abs(apq) < Real(1e-300)) continue;
        const Real theta = (a[size_t(q) * d + size_t(q)] - a[size_t(p) * d + size_t(p)]) / (2 * apq);
        const Real t = (theta >= 0 ? Real(1) : Real(-1)) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Real c = 1 / std::sqrt(t * t + 1);
        const Real s = t * c;
        for (int k = 0; k < d; ++k) {
          const Real akp = a[size_t(k) * d + size_t(p)], akq = a[size_t(k) * d + size_t(q)];
          a[size_t(k) * d + size_t(p)] = c * akp - s * akq;
          a[size_t(k) * d + size_t(q)] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const Real apk = a[size_t(p) * d + size_t(k)], aqk = a[size_t(q) * d + size_t(k)];
          a[size_t(p) * d + size_t(k)] = c * apk - s * aqk;
          a[size_t(q) * d + size_t(k)] = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const Real vkp = v[size_t(k) * d + size_t(p)], vkq = v[size_t(k) * d + size_t(q)];
          v[size_t(k) * d + size_t(p)] = c * vkp - s * vkq;
          v[size_t(k) * d + size_t(q)] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) order[size_t(i)] = i;
  std::sort(order.begin(), order.end(),
            [&](int x, int y) { return a[size_t(x) * d + size_t(x)] > a[size_t(y) * d + size_t(y)]; });

  basis.eigenvalues.resize(size_t(d));
  for (int i = 0; i < d; ++i) basis.eigenvalues[size_t(i)] = a[size_t(order[size_t(i)]) * d + size_t(order[size_t(i)])];
  basis.components.resize(size_t(out_dim) * size_t(d));
  for (int o = 0; o < out_dim; ++o)
    for (int i = 0; i < d; ++i)
      basis.components[size_t(o) * d + size_t(i)] = v[size_t(i) * d + size_t(order[size_t(o)])];
  return basis;
}

void write_pca_basis(const std::string& path, const PcaBasis& basis) {
  ByteWriter w;
  w.u32(kBasisMagic);
  w.u32(1);
  w.u32(uint32_t(basis.in_dim));
  w.u32(uint32_t(basis.out_dim));
  for (Real m : basis.mean) w.f64(m);
  for (Real c : basis.components) w.f64(c);
  for (Real e : basis.eigenvalues) w.f64(e);
  write_file_bytes(path, w.bytes.data(), w.bytes.size());
}

PcaBasis read_pca_basis(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  ByteReader r{bytes, 0, path};
  if (r.u32() != kBasisMagic) throw FileFormatError(path + ": bad basis magic");
  if (r.u32() != 1) throw FileFormatError(path + ": unsupported basis version");
  PcaBasis b;
  b.in_dim = int(r.u32());
  b.out_dim = int(r.u32());
  if (b.in_dim <= 0 || b.out_dim <= 0 || b.out_dim > b.in_dim || b.in_dim > 4096)
    throw FileFormatError(path + ": implausible basis dimensions");
  b.mean.resize(size_t(b.in_dim));
  for (Real& m : b.mean) m = r.f64();
  b.components.resize(size_t(b.out_dim) * size_t(b.in_dim));
  for (Real& c : b.components) c = r.f64();
  b.eigenvalues.resize(size_t(b.in_dim));
  for (Real& e : b.eigenvalues) e = r.f64();
  return b;
}

ImageF toy_teacher_raw(const ImageF& color) {
  if (color.channels != 3) throw std::invalid_argument("toy_teacher_raw: expects RGB input");
  const int h = color.height, w = color.width;
  ImageF out(h, w, 27);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          const int rr = std::clamp(r + dr, 0, h - 1);
          const int cc = std::clamp(c + dc, 0, w - 1);
          for (int ch = 0; ch < 3; ++ch) out.at(r, c, k++) = color.at(rr, cc, ch);
        }
      }
    }
  }
  return out;
}

void l2_normalize_pixels(ImageF& features) {
  const int c = features.channels;
  for (size_t p = 0; p < features.pixel_count(); ++p) {
    Real* v = features.data.data() + p * size_t(c);
    Real n2 = 0;
    for (int i = 0; i < c; ++i) n2 += v[i] * v[i];
    if (n2 <= 0) continue;
    const Real inv = 1 / std::sqrt(n2);
    for (int i = 0; i < c; ++i) v[i] *= inv;
  }
}

void extract_teacher_features(const Scene& scene, const ExtractOptions& options) {
  namespace fs = std::filesystem;
  if (options.teacher != "toy" && options.teacher != "external")
    throw std::invalid_argument("extract_teacher_features: teacher must be toy or external");
  fs::create_directories(fs::path(scene.root) / "features");

  struct Entry {
    int frame_idx;
    int cam_idx;
    ImageF raw;  // L2-normalized raw features
  };
  std::vector<Entry> entries;
  int raw_dim = -1;
  for (int f = 0; f < int(scene.frames.size()); ++f) {
    for (int c = 0; c < int(scene.cameras.size()); ++c) {
      const Scene::Frame& frame = scene.frames[size_t(f)];
      const CameraModel& cam = scene.cameras[size_t(c)];
      ImageF raw;
      if (options.teacher == "toy") {
        const ImageU8 png =
            read_png(scene.root + "/" + Scene::color_rel(frame.id, cam.id));
        raw = toy_teacher_raw(dequantize_image(png));
      } else {
        const std::string path = options.external_dir + "/f" + std::to_string(frame.id) + "_" +
                                 cam.id + ".hfm";
        raw = read_feature_map(path).data;
      }
      if (raw_dim < 0) raw_dim = raw.channels;
      if (raw.channels != raw_dim)
        throw FileFormatError("teacher maps disagree on channel count");
      l2_normalize_pixels(raw);
      entries.push_back({f, c, std::move(raw)});
    }
  }
  if (options.out_dim > raw_dim)
    throw std::invalid_argument("extract_teacher_features: D exceeds raw channel count");

  // PCA fit on foreground pixels sampled across the dataset
  std::vector<Real> fit;
  HashRng rng(hash_combine(options.seed, 0xfeeedull));
  size_t fg_total = 0;
  std::vector<ImageU8> masks(entries.size());
  for (size_t e = 0; e < entries.size(); ++e) {
    const Scene::Frame& frame = scene.frames[size_t(entries[e].frame_idx)];
    const CameraModel& cam = scene.cameras[size_t(entries[e].cam_idx)];
    masks[e] = read_png(scene.root + "/" + Scene::mask_rel(frame.id, cam.id));
    for (uint8_t m : masks[e].data) fg_total += m ? 1 : 0;
  }
  const Real keep = fg_total > 0
                        ? std::min(Real(1), Real(options.max_fit_samples) / Real(fg_total))
                        : Real(0);
  for (size_t e = 0; e < entries.size(); ++e) {
    const ImageF& raw = entries[e].raw;
    for (size_t p = 0; p < raw.pixel_count(); ++p) {
      if (!masks[e].data[p]) continue;
      if (rng.next_real() > keep) continue;
      const Real* v = raw.data.data() + p * size_t(raw_dim);
      fit.insert(fit.end(), v, v + raw_dim);
    }
  }
  if (fit.size() < 2 * size_t(raw_dim))
    throw std::runtime_error("extract_teacher_features: too few foreground pixels to fit PCA");

  const PcaBasis basis = fit_pca(fit, raw_dim, options.out_dim);
  write_pca_basis(scene.root + "/features/pca_basis.bin", basis);

  for (const Entry& e : entries) {
    const Scene::Frame& frame = scene.frames[size_t(e.frame_idx)];
    const CameraModel& cam = scene.cameras[size_t(e.cam_idx)];
    FeatureMap fm;
    fm.frame_id = frame.id;
    fm.camera_id = cam.id;
    fm.data = ImageF(e.raw.height, e.raw.width, options.out_dim);
    for (size_t p = 0; p < e.raw.pixel_count(); ++p) {
      basis.project({e.raw.data.data() + p * size_t(raw_dim), size_t(raw_dim)},
                    {fm.data.data.data() + p * size_t(options.out_dim), size_t(options.out_dim)});
    }
    write_feature_map(scene.root + "/" + Scene::feature_rel(frame.id, cam.id), fm);
  }
}

}  // namespace handfield
