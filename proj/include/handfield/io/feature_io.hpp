#pragma once

#include <string>
#include <vector>

#include "handfield/core/image.hpp"
#include "handfield/io/scene.hpp"

namespace handfield {

// Binary teacher-feature map: fixed little-endian header (magic, version,
// H, W, C, frame id, camera id) followed by row-major float32 data with a
// payload checksum.
struct FeatureMap {
  ImageF data;  // channels = C
  int frame_id = 0;
  std::string camera_id;
};

void write_feature_map(const std::string& path, const FeatureMap& map);
FeatureMap read_feature_map(const std::string& path);

// PCA projection basis shared between target extraction and any consumer.
struct PcaBasis {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<Real> mean;         // in_dim
  std::vector<Real> components;   // out_dim x in_dim, row-major
  std::vector<Real> eigenvalues;  // in_dim, descending

  void project(std::span<const Real> in, std::span<Real> out) const;
};

// Covariance eigendecomposition (cyclic Jacobi) over row-major samples.
PcaBasis fit_pca(std::span<const Real> samples, int in_dim, int out_dim);

void write_pca_basis(const std::string& path, const PcaBasis& basis);
PcaBasis read_pca_basis(const std::string& path);

// Toy teacher: 27 raw channels per pixel = the 3x3 neighborhood's RGB
// (edge-clamped), giving the extractor a small receptive field.
ImageF toy_teacher_raw(const ImageF& color);

// Per-pixel L2 normalization across channels; zero vectors stay zero.
void l2_normalize_pixels(ImageF& features);

struct ExtractOptions {
  int out_dim = 16;              // D
  size_t max_fit_samples = 100000;  // PCA fit subsample (foreground pixels)
  uint64_t seed = 1;
  // "toy" runs the built-in teacher on the scene's color images; "external"
  // ingests precomputed raw maps (FeatureMap files) from `external_dir`.
  std::string teacher = "toy";
  std::string external_dir;
};

// Produces features/f<frame>_<cam>.hfm for every (frame, camera) plus
// features/pca_basis.bin under scene.root.
void extract_teacher_features(const Scene& scene, const ExtractOptions& options);

}  // namespace handfield
