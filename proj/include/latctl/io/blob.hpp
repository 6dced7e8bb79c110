// latctl — bit-exact binary container shared by dataset and checkpoint files.
// SPDX-License-Identifier: MIT
//
// Layout (all integers little-endian):
//   bytes 0..3   magic (4 ASCII bytes identifying the file kind)
//   u32          format version
//   u64          header length in bytes
//   ...          JSON header (UTF-8, keys emitted in sorted order)
//   u64          number of payload blocks
//   per block:   u64 rows, u64 cols, rows*cols f64 values (row-major)
//   u64          FNV-1a hash of every preceding byte
//
// The trailing hash covers the whole file up to itself — header included — so
// any single corrupted byte is guaranteed to be detected: FNV-1a's update
// (h ← (h ⊕ b) · p with odd p) is a bijection on 64-bit states, so streams
// that ever differ can never re-collide.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latctl/core/dense.hpp"
#include "latctl/errors.hpp"

namespace latctl::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are defined little-endian; big-endian hosts need byte swaps");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559,
              "payload blocks assume IEEE-754 binary64");

inline constexpr std::uint32_t kBlobVersion = 1;
inline constexpr char kDatasetMagic[5] = "LTDS";
inline constexpr char kCheckpointMagic[5] = "LTCK";

struct Blob {
  nlohmann::json header = nlohmann::json::object();
  std::vector<Mat> blocks;
};

namespace detail {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  }
};

struct BlobWriter {
  std::ofstream out;
  Fnv1a hash;
  const std::string& path;

  BlobWriter(const std::string& p) : out(p, std::ios::binary), path(p) {
    if (!out) throw IoError("cannot open for writing: " + path);
  }
  void bytes(const void* data, std::size_t n) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed: " + path);
    hash.update(data, n);
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
};

struct BlobReader {
  std::ifstream in;
  Fnv1a hash;
  const std::string& path;
  std::uint64_t remaining;  // bytes left in the file from the current position

  BlobReader(const std::string& p) : in(p, std::ios::binary), path(p) {
    if (!in) throw IoError("cannot open for reading: " + path);
    in.seekg(0, std::ios::end);
    remaining = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);
  }
  void bytes(void* data, std::size_t n) {
    if (n > remaining) throw IoError("unexpected end of file: " + path);
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in) throw IoError("read failed: " + path);
    remaining -= n;
    hash.update(data, n);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
};

}  // namespace detail

// Serializes `blob` to `path`.  The JSON header is dumped with sorted keys and
// no timestamps, so identical contents give byte-identical files.
inline void save_blob(const std::string& path, const char magic[5], const Blob& blob) {
  detail::BlobWriter w(path);
  w.bytes(magic, 4);
  w.u32(kBlobVersion);
  const std::string header = blob.header.dump();
  w.u64(header.size());
  w.bytes(header.data(), header.size());
  w.u64(blob.blocks.size());
  for (const Mat& m : blob.blocks) {
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    w.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  w.u64(w.hash.h);  // hash of everything before this field
  w.out.close();
  if (!w.out) throw IoError("close failed: " + path);
}

// Loads and fully validates a container: magic, version, structural bounds,
// and the trailing hash.  Throws IoError naming the path on any mismatch.
inline Blob load_blob(const std::string& path, const char magic[5]) {
  detail::BlobReader r(path);
  char got[4];
  r.bytes(got, 4);
  if (std::memcmp(got, magic, 4) != 0)
    throw IoError("bad magic (expected " + std::string(magic, 4) + "): " + path);
  const std::uint32_t version = r.u32();
  if (version != kBlobVersion)
    throw IoError("unsupported format version " + std::to_string(version) + ": " + path);

  Blob blob;
  const std::uint64_t header_len = r.u64();
  if (header_len > r.remaining) throw IoError("header length exceeds file size: " + path);
  std::string header(header_len, '\0');
  r.bytes(header.data(), header_len);

  const std::uint64_t nblocks = r.u64();
  if (nblocks > r.remaining / 16)  // each block costs at least two u64 fields
    throw IoError("block count exceeds file size: " + path);
  blob.blocks.reserve(nblocks);
  for (std::uint64_t k = 0; k < nblocks; ++k) {
    const std::uint64_t rows = r.u64();
    const std::uint64_t cols = r.u64();
    if (cols != 0 && rows > r.remaining / (8 * cols))
      throw IoError("block size exceeds file size: " + path);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    r.bytes(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    blob.blocks.push_back(std::move(m));
  }

  const std::uint64_t expected = r.hash.h;  // state before consuming the stored hash
  const std::uint64_t stored = r.u64();
  if (stored != expected) throw IoError("checksum mismatch: " + path);
  if (r.remaining != 0) throw IoError("trailing bytes after checksum: " + path);

  try {
    blob.header = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed header JSON (" + std::string(e.what()) + "): " + path);
  }
  return blob;
}

// Header field access that converts missing/mistyped keys into IoError with
// the offending key name, instead of nlohmann's generic exceptions.
template <typename T>
T header_get(const nlohmann::json& header, const std::string& key) {
  if (!header.contains(key)) throw IoError("header missing field '" + key + "'");
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError("header field '" + key + "' has the wrong type");
  }
}

}  // namespace latctl::io
