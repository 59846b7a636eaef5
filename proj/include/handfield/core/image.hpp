#pragma once

#include <cstdint>
#include <vector>

#include "handfield/math/geometry.hpp"

namespace handfield {

template <typename T>
struct Image {
  int height = 0, width = 0, channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int h, int w, int c, T fill = T{})
      : height(h), width(w), channels(c), data(size_t(h) * w * c, fill) {}

  T& at(int r, int c, int ch = 0) { return data[(size_t(r) * width + c) * channels + ch]; }
  const T& at(int r, int c, int ch = 0) const {
    return data[(size_t(r) * width + c) * channels + ch];
  }
  size_t pixel_count() const { return size_t(height) * width; }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

using ImageF = Image<Real>;
using ImageU8 = Image<uint8_t>;

}  // namespace handfield
