#include "handfield/io/checkpoint.hpp"

#include <cstring>

#include "handfield/io/image_io.hpp"

namespace handfield {

namespace {

constexpr uint32_t kMagic = 0x4b434648;  // "HFCK"
constexpr uint32_t kVersion = 1;

struct Writer {
  std::vector<uint8_t> b;
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(uint8_t(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(uint8_t(v >> (8 * i)));
  }
  void i32(int32_t v) { u32(uint32_t(v)); }
  void f64(double v) { u64(std::bit_cast<uint64_t>(v)); }
  void str(const std::string& s) {
    u32(uint32_t(s.size()));
    b.insert(b.end(), s.begin(), s.end());
  }
};

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;
  std::string path;
  void need(size_t n) const {
    if (pos + n > b.size()) throw FileFormatError(path + ": truncated checkpoint");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(b[pos + size_t(i)]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[pos + size_t(i)]) << (8 * i);
    pos += 8;
    return v;
  }
  int32_t i32() { return int32_t(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const uint32_t n = u32();
    if (n > (1u << 24)) throw FileFormatError(path + ": implausible string length");
    need(n);
    std::string s(b.begin() + long(pos), b.begin() + long(pos + n));
    pos += n;
    return s;
  }
};

void write_store(Writer& w, const ParameterStore& store) {
  w.u32(uint32_t(store.entries().size()));
  for (const auto& e : store.entries()) {
    w.str(e.name);
    w.u32(uint32_t(e.shape.size()));
    for (uint64_t d : e.shape) w.u64(d);
    const std::span<const Real> v{store.data() + e.offset, e.size};
    for (Real x : v) w.f64(x);
  }
}

void read_store_into(Reader& r, ParameterStore& store) {
  const uint32_t count = r.u32();
  if (count != store.entries().size())
    throw FileFormatError(r.path + ": parameter store layout mismatch (entry count)");
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str();
    const auto& e = store.entry(name);  // throws on unknown name
    const uint32_t dims = r.u32();
    if (dims != e.shape.size()) throw FileFormatError(r.path + ": shape rank mismatch at " + name);
    size_t size = 1;
    for (uint32_t d = 0; d < dims; ++d) {
      const uint64_t dim = r.u64();
      if (dim != e.shape[d]) throw FileFormatError(r.path + ": shape mismatch at " + name);
      size *= size_t(dim);
    }
    std::span<Real> dst{store.data() + e.offset, e.size};
    if (size != dst.size()) throw FileFormatError(r.path + ": size mismatch at " + name);
    for (Real& x : dst) x = r.f64();
  }
}

void write_field_config(Writer& w, const FieldConfig& c) {
  w.i32(c.pos_degree);
  w.i32(c.dir_degree);
  w.i32(c.density_width);
  w.i32(c.density_layers);
  w.i32(c.density_skip);
  w.i32(c.color_width);
  w.i32(c.color_layers);
  w.i32(c.feature_dim);
  w.i32(c.latent_dim);
}

FieldConfig read_field_config(Reader& r) {
  FieldConfig c;
  c.pos_degree = r.i32();
  c.dir_degree = r.i32();
  c.density_width = r.i32();
  c.density_layers = r.i32();
  c.density_skip = r.i32();
  c.color_width = r.i32();
  c.color_layers = r.i32();
  c.feature_dim = r.i32();
  c.latent_dim = r.i32();
  return c;
}

void write_deform_config(Writer& w, const DeformConfig& c) {
  w.i32(c.samples_per_ray);
  w.f64(c.degenerate_distance_factor);
  w.i32(c.corr_width);
  w.i32(c.corr_layers);
  w.i32(c.corr_skip);
  w.i32(c.corr_pos_degree);
}

DeformConfig read_deform_config(Reader& r) {
  DeformConfig c;
  c.samples_per_ray = r.i32();
  c.degenerate_distance_factor = r.f64();
  c.corr_width = r.i32();
  c.corr_layers = r.i32();
  c.corr_skip = r.i32();
  c.corr_pos_degree = r.i32();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Writer w;
  w.u32(kMagic);
  w.u32(kVersion);
  w.u64(ckpt.iteration);
  w.u64(ckpt.rng_seed);
  w.str(ckpt.config_json);
  w.i32(ckpt.num_frames);
  for (int a = 0; a < 3; ++a) w.f64(ckpt.canonical_box.lo[a]);
  for (int a = 0; a < 3; ++a) w.f64(ckpt.canonical_box.hi[a]);
  write_field_config(w, ckpt.model.field_cfg);
  write_deform_config(w, ckpt.model.deform_cfg);
  write_store(w, ckpt.model.field->density_params());
  write_store(w, ckpt.model.field->color_params());
  write_store(w, ckpt.model.field->latent_params());
  write_store(w, ckpt.model.correction->params());
  w.u32(crc32(w.b.data(), w.b.size()));
  write_file_bytes(path, w.b.data(), w.b.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() < 12) throw FileFormatError(path + ": truncated checkpoint");
  uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i)
    stored_crc |= uint32_t(bytes[bytes.size() - 4 + size_t(i)]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw FileFormatError(path + ": checkpoint checksum mismatch");

  Reader r{bytes, 0, path};
  if (r.u32() != kMagic) throw FileFormatError(path + ": bad checkpoint magic");
  const uint32_t version = r.u32();
  if (version != kVersion)
    throw FileFormatError(path + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.iteration = r.u64();
  ckpt.rng_seed = r.u64();
  ckpt.config_json = r.str();
  ckpt.num_frames = r.i32();
  for (int a = 0; a < 3; ++a) ckpt.canonical_box.lo[a] = r.f64();
  for (int a = 0; a < 3; ++a) ckpt.canonical_box.hi[a] = r.f64();
  const FieldConfig fc = read_field_config(r);
  const DeformConfig dc = read_deform_config(r);
  if (fc.density_layers < 1 || fc.density_layers > 64 || fc.density_width < 1 ||
      fc.density_width > 8192 || ckpt.num_frames < 0 || ckpt.num_frames > 1 << 20)
    throw FileFormatError(path + ": implausible checkpoint configuration");

  ckpt.model = Model::create(fc, dc, ckpt.canonical_box, ckpt.num_frames, /*seed=*/0);
  read_store_into(r, ckpt.model.field->density_params());
  read_store_into(r, ckpt.model.field->color_params());
  read_store_into(r, ckpt.model.field->latent_params());
  read_store_into(r, ckpt.model.correction->params());
  if (r.pos != bytes.size() - 4)
    throw FileFormatError(path + ": trailing bytes after checkpoint payload");
  return ckpt;
}

}  // namespace handfield
