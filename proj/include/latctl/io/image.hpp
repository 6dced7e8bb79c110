// latctl — 8-bit grayscale raster output: PNG (via zlib), PGM fallback, montage.
// SPDX-License-Identifier: MIT
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl::io {

struct GrayImage {
  int w = 0, h = 0;
  std::vector<std::uint8_t> px;  // row-major, h*w entries

  std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }

  static GrayImage filled(int w, int h, std::uint8_t value) {
    if (w < 1 || h < 1) throw ValidationError("GrayImage: non-positive size");
    GrayImage im;
    im.w = w;
    im.h = h;
    im.px.assign(static_cast<std::size_t>(w) * h, value);
    return im;
  }
};

// Maps an observation vector (values in [0, 1], one or more stacked channel
// images) to pixels as round(255·p), channels stacked vertically.
inline GrayImage observation_image(const Vec& obs, int image_w, int image_h, int channels) {
  if (image_w < 1 || image_h < 1 || channels < 1)
    throw ValidationError("observation_image: non-positive geometry");
  if (obs.size() != static_cast<Eigen::Index>(image_w) * image_h * channels)
    throw ValidationError("observation_image: vector length does not match geometry");
  GrayImage im = GrayImage::filled(image_w, channels * image_h, 0);
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    const double p = std::min(1.0, std::max(0.0, obs[i]));
    im.px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(255.0 * p));
  }
  return im;
}

// Horizontal montage with a mid-gray separator column between frames.
inline GrayImage filmstrip(const std::vector<GrayImage>& frames, int gap = 2,
                           std::uint8_t gap_value = 128) {
  if (frames.empty()) throw ValidationError("filmstrip: no frames");
  if (gap < 0) throw ValidationError("filmstrip: negative gap");
  const int h = frames.front().h;
  int total_w = 0;
  for (const GrayImage& f : frames) {
    if (f.h != h) throw ValidationError("filmstrip: frame heights differ");
    total_w += f.w;
  }
  total_w += gap * static_cast<int>(frames.size() - 1);
  GrayImage strip = GrayImage::filled(total_w, h, gap_value);
  int x0 = 0;
  for (const GrayImage& f : frames) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < f.w; ++x) strip.at(y, x0 + x) = f.at(y, x);
    x0 += f.w + gap;
  }
  return strip;
}

namespace detail {

inline void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[5],
                      const std::vector<std::uint8_t>& data) {
  be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t type_at = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = static_cast<std::uint32_t>(
      ::crc32(0L, out.data() + type_at, static_cast<uInt>(4 + data.size())));
  be32(out, crc);
}

}  // namespace detail

// Minimal grayscale PNG: 8-bit, color type 0, filter 0 on every scanline,
// one zlib-compressed IDAT.  Deterministic for fixed pixels (fixed zlib level).
inline std::vector<std::uint8_t> png_bytes(const GrayImage& im) {
  if (im.w < 1 || im.h < 1 || im.px.size() != static_cast<std::size_t>(im.w) * im.h)
    throw ValidationError("png_bytes: inconsistent image");
  // Raw stream: per scanline one filter byte (0 = none) then the pixels.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(im.h) * (im.w + 1));
  for (int y = 0; y < im.h; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), im.px.begin() + static_cast<std::size_t>(y) * im.w,
               im.px.begin() + static_cast<std::size_t>(y + 1) * im.w);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw NumericError("png_bytes: deflate failed");
  comp.resize(comp_len);

  std::vector<std::uint8_t> out = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> ihdr;
  detail::be32(ihdr, static_cast<std::uint32_t>(im.w));
  detail::be32(ihdr, static_cast<std::uint32_t>(im.h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // color type: grayscale
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", {});
  return out;
}

inline void write_png(const std::string& path, const GrayImage& im) {
  const std::vector<std::uint8_t> bytes = png_bytes(im);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

// Binary PGM (P5), maxval 255 — the no-dependency fallback format.
inline void write_pgm(const std::string& path, const GrayImage& im) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << im.w << " " << im.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(im.px.data()),
            static_cast<std::streamsize>(im.px.size()));
  out.close();
  if (!out) throw IoError("write failed: " + path);
}

// Writes `base` + ".png" (or ".pgm" when PNG is disabled) and returns the path.
inline std::string write_image(const std::string& base, const GrayImage& im, bool png = true) {
  const std::string path = base + (png ? ".png" : ".pgm");
  if (png)
    write_png(path, im);
  else
    write_pgm(path, im);
  return path;
}

// Reads back a PNG produced by png_bytes (8-bit grayscale, filter 0); used by
// round-trip tests and the filmstrip assembly step.  Verifies chunk CRCs.
inline GrayImage read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (buf.size() < 8 || !std::equal(sig, sig + 8, buf.begin()))
    throw IoError("not a PNG file: " + path);

  GrayImage im;
  std::vector<std::uint8_t> idat;
  std::size_t at = 8;
  bool saw_ihdr = false, saw_iend = false;
  while (at + 12 <= buf.size() && !saw_iend) {
    const std::uint32_t len = detail::read_be32(&buf[at]);
    if (at + 12 + len > buf.size()) throw IoError("truncated PNG chunk: " + path);
    const std::uint8_t* type = &buf[at + 4];
    const std::uint8_t* data = &buf[at + 8];
    const std::uint32_t crc_stored = detail::read_be32(&buf[at + 8 + len]);
    const auto crc = static_cast<std::uint32_t>(::crc32(0L, type, static_cast<uInt>(4 + len)));
    if (crc != crc_stored) throw IoError("PNG chunk CRC mismatch: " + path);
    const std::string name(reinterpret_cast<const char*>(type), 4);
    if (name == "IHDR") {
      if (len != 13) throw IoError("bad IHDR length: " + path);
      im.w = static_cast<int>(detail::read_be32(data));
      im.h = static_cast<int>(detail::read_be32(data + 4));
      if (data[8] != 8 || data[9] != 0)
        throw IoError("unsupported PNG (need 8-bit grayscale): " + path);
      saw_ihdr = true;
    } else if (name == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (name == "IEND") {
      saw_iend = true;
    }
    at += 12 + len;
  }
  if (!saw_ihdr || !saw_iend || im.w < 1 || im.h < 1)
    throw IoError("malformed PNG structure: " + path);

  std::vector<std::uint8_t> raw(static_cast<std::size_t>(im.h) * (im.w + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw IoError("PNG inflate failed: " + path);
  im.px.resize(static_cast<std::size_t>(im.h) * im.w);
  for (int y = 0; y < im.h; ++y) {
    const std::uint8_t* row = raw.data() + static_cast<std::size_t>(y) * (im.w + 1);
    if (row[0] != 0) throw IoError("unsupported PNG scanline filter: " + path);
    std::copy(row + 1, row + 1 + im.w, im.px.begin() + static_cast<std::size_t>(y) * im.w);
  }
  return im;
}

}  // namespace latctl::io
