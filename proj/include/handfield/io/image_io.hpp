#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "handfield/core/image.hpp"

namespace handfield {

// Typed failure for any malformed input file (bad magic, truncation,
// checksum, unsupported layout).
struct FileFormatError : std::runtime_error {
  explicit FileFormatError(const std::string& what) : std::runtime_error(what) {}
};

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, size_t size);

uint32_t crc32(const uint8_t* data, size_t size, uint32_t seed = 0);

// 8-bit PNG, gray/RGB/RGBA, no interlacing. The writer emits stored
// (uncompressed) deflate blocks; the reader handles any standard stream.
void write_png(const std::string& path, const ImageU8& image);
ImageU8 read_png(const std::string& path);

// Portable float map, 32-bit little-endian ("Pf" grayscale). Non-finite
// values round-trip, which encodes empty depth as +inf.
void write_pfm(const std::string& path, const ImageF& image);
ImageF read_pfm(const std::string& path);

// [0,1] real image <-> 8-bit with round-to-nearest.
ImageU8 quantize_image(const ImageF& image);
ImageF dequantize_image(const ImageU8& image);

}  // namespace handfield
