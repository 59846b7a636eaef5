#include "handfield/io/image_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace handfield {

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileFormatError("cannot open " + path);
  f.seekg(0, std::ios::end);
  const std::streamoff size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw FileFormatError("short read on " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const void* data, size_t size) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FileFormatError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(data), std::streamsize(size));
  if (!f) throw FileFormatError("short write on " + path);
}

uint32_t crc32(const uint8_t* data, size_t size, uint32_t seed) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t c = seed ^ 0xffffffffu;
  for (size_t i = 0; i < size; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

namespace {

uint32_t adler32(const uint8_t* data, size_t size) {
  uint32_t a = 1, b = 0;
  for (size_t i = 0; i < size; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

uint32_t get_u32_be(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& data) {
  put_u32_be(out, uint32_t(data.size()));
  const size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32_be(out, crc32(out.data() + type_at, 4 + data.size()));
}

// --- inflate -------------------------------------------------------------

struct BitReader {
  const uint8_t* data;
  size_t size;
  size_t pos = 0;
  uint32_t bit = 0;

  uint32_t take_bit() {
    if (pos >= size) throw FileFormatError("deflate stream truncated");
    const uint32_t v = (data[pos] >> bit) & 1u;
    if (++bit == 8) {
      bit = 0;
      ++pos;
    }
    return v;
  }
  uint32_t take(int n) {
    uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= take_bit() << i;
    return v;
  }
  void align_byte() {
    if (bit) {
      bit = 0;
      ++pos;
    }
  }
};

// Canonical Huffman decoder per RFC 1951.
struct Huffman {
  std::vector<int> counts;       // codes per length
  std::vector<int> symbols;      // sorted by (length, symbol)

  void build(const std::vector<int>& lengths) {
    const int max_len = 15;
    counts.assign(size_t(max_len) + 1, 0);
    for (int l : lengths)
      if (l) ++counts[size_t(l)];
    symbols.clear();
    std::vector<int> offsets(size_t(max_len) + 2, 0);
    for (int l = 1; l <= max_len; ++l) offsets[size_t(l) + 1] = offsets[size_t(l)] + counts[size_t(l)];
    symbols.resize(size_t(offsets[size_t(max_len) + 1]));
    for (size_t s = 0; s < lengths.size(); ++s)
      if (lengths[s]) symbols[size_t(offsets[size_t(lengths[s])]++)] = int(s);
  }

  int decode(BitReader& br) const {
    int code = 0, first = 0, index = 0;
    for (int len = 1; len <= 15; ++len) {
      code |= int(br.take_bit());
      const int count = counts[size_t(len)];
      if (code - first < count) return symbols[size_t(index + (code - first))];
      index += count;
      first = (first + count) << 1;
      code <<= 1;
    }
    throw FileFormatError("invalid huffman code");
  }
};

std::vector<uint8_t> inflate(const uint8_t* data, size_t size) {
  BitReader br{data, size};
  std::vector<uint8_t> out;

  static const int kLenBase[29] = {3,  4,  5,  6,  7,  8,  9,  10, 11,  13,  15,  17,  19, 23, 27,
                                   31, 35, 43, 51, 59, 67, 83, 99, 115, 131, 163, 195, 227, 258};
  static const int kLenExtra[29] = {0, 0, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2,
                                    2, 3, 3, 3, 3, 4, 4, 4, 4, 5, 5, 5, 5, 0};
  static const int kDistBase[30] = {1,    2,    3,    4,    5,    7,     9,     13,   17,   25,
                                    33,   49,   65,   97,   129,  193,   257,   385,  513,  769,
                                    1025, 1537, 2049, 3073, 4097, 6145,  8193,  12289, 16385, 24577};
  static const int kDistExtra[30] = {0, 0, 0, 0, 1, 1, 2, 2,  3,  3,  4,  4,  5,  5,  6,
                                     6, 7, 7, 8, 8, 9, 9, 10, 10, 11, 11, 12, 12, 13, 13};

  for (;;) {
    const uint32_t final = br.take_bit();
    const uint32_t type = br.take(2);
    if (type == 0) {
      br.align_byte();
      if (br.pos + 4 > br.size) throw FileFormatError("stored block truncated");
      const uint32_t len = uint32_t(data[br.pos]) | (uint32_t(data[br.pos + 1]) << 8);
      const uint32_t nlen = uint32_t(data[br.pos + 2]) | (uint32_t(data[br.pos + 3]) << 8);
      if ((len ^ 0xffffu) != nlen) throw FileFormatError("stored block length mismatch");
      br.pos += 4;
      if (br.pos + len > br.size) throw FileFormatError("stored block truncated");
      out.insert(out.end(), data + br.pos, data + br.pos + len);
      br.pos += len;
    } else if (type == 1 || type == 2) {
      Huffman lit, dist;
      if (type == 1) {
        std::vector<int> ll(288);
        for (int i = 0; i < 144; ++i) ll[size_t(i)] = 8;
        for (int i = 144; i < 256; ++i) ll[size_t(i)] = 9;
        for (int i = 256; i < 280; ++i) ll[size_t(i)] = 7;
        for (int i = 280; i < 288; ++i) ll[size_t(i)] = 8;
        lit.build(ll);
        dist.build(std::vector<int>(30, 5));
      } else {
        const uint32_t hlit = br.take(5) + 257;
        const uint32_t hdist = br.take(5) + 1;
        const uint32_t hclen = br.take(4) + 4;
        static const int kOrder[19] = {16, 17, 18, 0, 8,  7, 9,  6, 10, 5,
                                       11, 4,  12, 3, 13, 2, 14, 1, 15};
        std::vector<int> cl(19, 0);
        for (uint32_t i = 0; i < hclen; ++i) cl[size_t(kOrder[i])] = int(br.take(3));
        Huffman clh;
        clh.build(cl);
        std::vector<int> lengths;
        lengths.reserve(hlit + hdist);
        while (lengths.size() < hlit + hdist) {
          const int sym = clh.decode(br);
          if (sym < 16) {
            lengths.push_back(sym);
          } else if (sym == 16) {
            if (lengths.empty()) throw FileFormatError("bad code-length repeat");
            const int prev = lengths.back();
            for (uint32_t r = br.take(2) + 3; r-- > 0;) lengths.push_back(prev);
          } else if (sym == 17) {
            for (uint32_t r = br.take(3) + 3; r-- > 0;) lengths.push_back(0);
          } else {
            for (uint32_t r = br.take(7) + 11; r-- > 0;) lengths.push_back(0);
          }
        }
        if (lengths.size() != hlit + hdist) throw FileFormatError("bad code-length table");
        lit.build({lengths.begin(), lengths.begin() + hlit});
        dist.build({lengths.begin() + hlit, lengths.end()});
      }
      for (;;) {
        const int sym = lit.decode(br);
        if (sym < 256) {
          out.push_back(uint8_t(sym));
        } else if (sym == 256) {
          break;
        } else {
          const int li = sym - 257;
          if (li >= 29) throw FileFormatError("invalid length symbol");
          const int len = kLenBase[li] + int(br.take(kLenExtra[li]));
          const int ds = dist.decode(br);
          if (ds >= 30) throw FileFormatError("invalid distance symbol");
          const size_t d = size_t(kDistBase[ds]) + br.take(kDistExtra[ds]);
          if (d > out.size()) throw FileFormatError("distance beyond window");
          for (int i = 0; i < len; ++i) out.push_back(out[out.size() - d]);
        }
      }
    } else {
      throw FileFormatError("invalid deflate block type");
    }
    if (final) break;
  }
  return out;
}

uint8_t paeth(uint8_t a, uint8_t b, uint8_t c) {
  const int p = int(a) + int(b) - int(c);
  const int pa = std::abs(p - int(a)), pb = std::abs(p - int(b)), pc = std::abs(p - int(c));
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3 && image.channels != 4)
    throw std::invalid_argument("write_png: supported channel counts are 1, 3, 4");
  const int h = image.height, w = image.width, c = image.channels;

  std::vector<uint8_t> raw;
  raw.reserve(size_t(h) * (1 + size_t(w) * c));
  for (int r = 0; r < h; ++r) {
    raw.push_back(0);  // filter: none
    const uint8_t* row = image.data.data() + size_t(r) * w * c;
    raw.insert(raw.end(), row, row + size_t(w) * c);
  }

  // zlib wrapper around stored deflate blocks
  std::vector<uint8_t> z{0x78, 0x01};
  size_t off = 0;
  do {
    const size_t n = std::min<size_t>(raw.size() - off, 65535);
    const bool last = off + n == raw.size();
    z.push_back(last ? 1 : 0);
    z.push_back(uint8_t(n & 0xff));
    z.push_back(uint8_t(n >> 8));
    z.push_back(uint8_t(~n & 0xff));
    z.push_back(uint8_t((~n >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + long(off), raw.begin() + long(off + n));
    off += n;
  } while (off < raw.size());
  put_u32_be(z, adler32(raw.data(), raw.size()));

  std::vector<uint8_t> png{137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, uint32_t(w));
  put_u32_be(ihdr, uint32_t(h));
  ihdr.push_back(8);
  ihdr.push_back(c == 1 ? 0 : (c == 3 ? 2 : 6));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  append_chunk(png, "IHDR", ihdr);
  append_chunk(png, "IDAT", z);
  append_chunk(png, "IEND", {});
  write_file_bytes(path, png.data(), png.size());
}

ImageU8 read_png(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  static const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0)
    throw FileFormatError(path + ": not a PNG (bad signature)");

  size_t pos = 8;
  int w = 0, h = 0, channels = 0;
  bool have_ihdr = false, have_iend = false;
  std::vector<uint8_t> idat;
  while (pos < bytes.size()) {
    if (pos + 12 > bytes.size()) throw FileFormatError(path + ": truncated chunk header");
    const uint32_t len = get_u32_be(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw FileFormatError(path + ": truncated chunk");
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const uint8_t* data = &bytes[pos + 8];
    const uint32_t crc_stored = get_u32_be(&bytes[pos + 8 + len]);
    if (crc32(&bytes[pos + 4], 4 + len) != crc_stored)
      throw FileFormatError(path + ": chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw FileFormatError(path + ": bad IHDR length");
      w = int(get_u32_be(data));
      h = int(get_u32_be(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (w <= 0 || h <= 0) throw FileFormatError(path + ": bad dimensions");
      if (depth != 8) throw FileFormatError(path + ": only 8-bit supported");
      if (interlace != 0) throw FileFormatError(path + ": interlacing unsupported");
      switch (color) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: throw FileFormatError(path + ": unsupported color type");
      }
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      have_iend = true;
      break;
    }
    pos += 12 + len;
  }
  if (!have_ihdr || !have_iend || idat.empty())
    throw FileFormatError(path + ": missing required chunks");
  if (idat.size() < 6 || (idat[0] & 0x0f) != 8 || ((idat[0] << 8) | idat[1]) % 31 != 0)
    throw FileFormatError(path + ": bad zlib header");

  const std::vector<uint8_t> raw = inflate(idat.data() + 2, idat.size() - 6);
  if (adler32(raw.data(), raw.size()) !=
      get_u32_be(&idat[idat.size() - 4]))
    throw FileFormatError(path + ": zlib checksum mismatch");

  const size_t stride = size_t(w) * size_t(channels);
  if (raw.size() != size_t(h) * (stride + 1))
    throw FileFormatError(path + ": decompressed size mismatch");

  ImageU8 img(h, w, channels);
  std::vector<uint8_t> prev(stride, 0);
  const int bpp = channels;
  for (int r = 0; r < h; ++r) {
    const uint8_t filter = raw[size_t(r) * (stride + 1)];
    const uint8_t* src = &raw[size_t(r) * (stride + 1) + 1];
    uint8_t* dst = img.data.data() + size_t(r) * stride;
    for (size_t i = 0; i < stride; ++i) {
      const uint8_t left = i >= size_t(bpp) ? dst[i - size_t(bpp)] : 0;
      const uint8_t up = prev[i];
      const uint8_t ul = i >= size_t(bpp) ? prev[i - size_t(bpp)] : 0;
      switch (filter) {
        case 0: dst[i] = src[i]; break;
        case 1: dst[i] = uint8_t(src[i] + left); break;
        case 2: dst[i] = uint8_t(src[i] + up); break;
        case 3: dst[i] = uint8_t(src[i] + (int(left) + int(up)) / 2); break;
        case 4: dst[i] = uint8_t(src[i] + paeth(left, up, ul)); break;
        default: throw FileFormatError(path + ": unknown filter type");
      }
    }
    std::copy(dst, dst + stride, prev.begin());
  }
  return img;
}

void write_pfm(const std::string& path, const ImageF& image) {
  if (image.channels != 1) throw std::invalid_argument("write_pfm: grayscale only");
  std::string header = "Pf\n" + std::to_string(image.width) + " " +
                       std::to_string(image.height) + "\n-1.0\n";
  std::vector<uint8_t> bytes(header.begin(), header.end());
  // PFM rows run bottom-to-top; negative scale marks little-endian.
  for (int r = image.height - 1; r >= 0; --r) {
    for (int c = 0; c < image.width; ++c) {
      const float v = float(image.at(r, c));
      uint32_t u = std::bit_cast<uint32_t>(v);
      bytes.push_back(uint8_t(u));
      bytes.push_back(uint8_t(u >> 8));
      bytes.push_back(uint8_t(u >> 16));
      bytes.push_back(uint8_t(u >> 24));
    }
  }
  write_file_bytes(path, bytes.data(), bytes.size());
}

ImageF read_pfm(const std::string& path) {
  const std::vector<uint8_t> bytes = read_file_bytes(path);
  size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(char(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  if (magic != "Pf") throw FileFormatError(path + ": not a grayscale PFM");
  int w = 0, h = 0;
  double scale = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    scale = std::stod(token());
  } catch (...) {
    throw FileFormatError(path + ": malformed PFM header");
  }
  if (w <= 0 || h <= 0 || scale == 0) throw FileFormatError(path + ": bad PFM header values");
  if (pos >= bytes.size()) throw FileFormatError(path + ": truncated header");
  ++pos;  // single whitespace after the scale
  if (bytes.size() - pos < size_t(w) * size_t(h) * 4)
    throw FileFormatError(path + ": truncated PFM payload");
  const bool little = scale < 0;

  ImageF img(h, w, 1);
  for (int r = h - 1; r >= 0; --r) {
    for (int c = 0; c < w; ++c) {
      uint32_t u;
      if (little) {
        u = uint32_t(bytes[pos]) | (uint32_t(bytes[pos + 1]) << 8) |
            (uint32_t(bytes[pos + 2]) << 16) | (uint32_t(bytes[pos + 3]) << 24);
      } else {
        u = uint32_t(bytes[pos + 3]) | (uint32_t(bytes[pos + 2]) << 8) |
            (uint32_t(bytes[pos + 1]) << 16) | (uint32_t(bytes[pos]) << 24);
      }
      pos += 4;
      img.at(r, c) = Real(std::bit_cast<float>(u));
    }
  }
  return img;
}

ImageU8 quantize_image(const ImageF& image) {
  ImageU8 out(image.height, image.width, image.channels);
  for (size_t i = 0; i < image.data.size(); ++i) {
    const Real v = std::clamp(image.data[i], Real(0), Real(1));
    out.data[i] = uint8_t(std::lround(v * 255));
  }
  return out;
}

ImageF dequantize_image(const ImageU8& image) {
  ImageF out(image.height, image.width, image.channels);
  for (size_t i = 0; i < image.data.size(); ++i) out.data[i] = Real(image.data[i]) / 255;
  return out;
}

}  // namespace handfield
