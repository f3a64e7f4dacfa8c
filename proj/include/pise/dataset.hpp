/*
 * Copyright 2026 PISE Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "pise/binio.hpp"
#include "pise/common.hpp"
#include "pise/sensing.hpp"

namespace pise {

// Dataset ingestion and the local normalized cache.
//
// Source material arrives as IDX containers (Fashion-MNIST style, big-endian
// headers, optionally gzip-compressed) or as CIFAR-10 binary batches. Both
// are converted once into a flat cache directory, one subdirectory per
// dataset tag, holding raw uint8 blobs plus a meta.json with counts,
// geometry, and CRC32 checksums. Loading normalizes pixels to [0,1] floats.

/// One labeled split (train or test) with pixel values in [0,1].
struct LabeledImages {
  ImageBatch<float> images;
  std::vector<int> labels;
};

struct Dataset {
  std::string tag;
  std::size_t classes = 0;
  LabeledImages train;
  LabeledImages test;
};

struct IngestReport {
  bool already_valid = false;  // cache was intact; nothing rewritten
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::string cache_dir;
};

/// Cache root resolution: PISE_CACHE env var, else ~/.cache/pise,
/// else ./pise_cache when HOME is unset.
inline std::string default_cache_root() {
  if (const char* env = std::getenv("PISE_CACHE"); env && *env) return env;
  if (const char* home = std::getenv("HOME"); home && *home)
    return std::string(home) + "/.cache/pise";
  return "pise_cache";
}

namespace detail {

inline std::uint32_t crc32_of(const std::vector<std::uint8_t>& bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  if (!bytes.empty())
    c = ::crc32(c, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(c);
}

inline std::vector<std::uint8_t> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

inline bool looks_gzip(const std::vector<std::uint8_t>& b) {
  return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& in) {
  z_stream strm{};
  // 16 + MAX_WBITS selects the gzip wrapper.
  if (inflateInit2(&strm, 16 + MAX_WBITS) != Z_OK)
    throw IoError("zlib inflateInit2 failed");
  std::vector<std::uint8_t> out;
  out.reserve(in.size() * 3);
  std::vector<std::uint8_t> buf(1 << 16);
  strm.next_in = const_cast<Bytef*>(in.data());
  strm.avail_in = static_cast<uInt>(in.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = buf.data();
    strm.avail_out = static_cast<uInt>(buf.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw IoError("gzip stream is corrupt or truncated");
    }
    out.insert(out.end(), buf.data(),
               buf.data() + (buf.size() - strm.avail_out));
    if (rc != Z_STREAM_END && strm.avail_in == 0 && strm.avail_out != 0) {
      inflateEnd(&strm);
      throw IoError("gzip stream is truncated");
    }
  }
  inflateEnd(&strm);
  return out;
}

/// Reads a file, transparently inflating a gzip wrapper if present.
inline std::vector<std::uint8_t> read_file_maybe_gz(const std::string& path) {
  auto bytes = read_all_bytes(path);
  if (looks_gzip(bytes)) return gunzip(bytes);
  return bytes;
}

/// Finds `name` or `name.gz` under dir; empty string when neither exists.
inline std::string find_source_file(const std::string& dir,
                                    const std::string& name) {
  namespace fs = std::filesystem;
  fs::path plain = fs::path(dir) / name;
  if (fs::exists(plain)) return plain.string();
  fs::path gz = fs::path(dir) / (name + ".gz");
  if (fs::exists(gz)) return gz.string();
  return "";
}

}  // namespace detail

// IDX container parsing. The header is big-endian: two zero bytes, a dtype
// byte (0x08 = unsigned byte), a rank byte, then rank 32-bit dimension
// sizes. Image files carry magic 2051 (rank 3), label files 2049 (rank 1).

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

struct IdxData {
  std::uint32_t magic = 0;
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> values;
};

inline IdxData parse_idx(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw IoError("IDX container shorter than its magic");
  std::uint32_t magic = (std::uint32_t(bytes[0]) << 24) |
                        (std::uint32_t(bytes[1]) << 16) |
                        (std::uint32_t(bytes[2]) << 8) | std::uint32_t(bytes[3]);
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08)
    throw IoError("IDX magic mismatch: expected uint8 container");
  std::size_t rank = bytes[3];
  if (rank < 1 || rank > 3) throw IoError("unsupported IDX rank");
  std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header) throw IoError("IDX header truncated");
  IdxData idx;
  idx.magic = magic;
  std::size_t total = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    std::size_t off = 4 + 4 * d;
    std::uint32_t v = (std::uint32_t(bytes[off]) << 24) |
                      (std::uint32_t(bytes[off + 1]) << 16) |
                      (std::uint32_t(bytes[off + 2]) << 8) |
                      std::uint32_t(bytes[off + 3]);
    idx.dims.push_back(v);
    total *= v;
  }
  if (bytes.size() != header + total)
    throw IoError("IDX payload size does not match its header dimensions");
  idx.values.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                    bytes.end());
  return idx;
}

namespace detail {

struct RawSplit {
  std::size_t count = 0, height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // count*height*width, row-major
  std::vector<std::uint8_t> labels;  // count entries
};

inline RawSplit load_idx_split(const std::string& dir,
                               const std::string& image_name,
                               const std::string& label_name) {
  std::string ipath = find_source_file(dir, image_name);
  std::string lpath = find_source_file(dir, label_name);
  if (ipath.empty() || lpath.empty())
    throw IoError("missing source archives under " + dir + ": need " +
                  image_name + " and " + label_name + " (or .gz)");
  IdxData images = parse_idx(read_file_maybe_gz(ipath));
  IdxData labels = parse_idx(read_file_maybe_gz(lpath));
  if (images.magic != kIdxImageMagic || images.dims.size() != 3)
    throw IoError(ipath + " is not an IDX image container (magic 2051)");
  if (labels.magic != kIdxLabelMagic || labels.dims.size() != 1)
    throw IoError(lpath + " is not an IDX label container (magic 2049)");
  if (images.dims[0] != labels.dims[0])
    throw IoError("image/label counts disagree between " + ipath + " and " +
                  lpath);
  RawSplit split;
  split.count = images.dims[0];
  split.height = images.dims[1];
  split.width = images.dims[2];
  split.pixels = std::move(images.values);
  split.labels = std::move(labels.values);
  return split;
}

inline void write_blob(const std::string& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

inline constexpr int kCacheFormatVersion = 1;

inline std::string meta_path(const std::string& root, const std::string& tag) {
  return (std::filesystem::path(root) / tag / "meta.json").string();
}

inline nlohmann::json split_meta(const RawSplit& s) {
  return {{"count", s.count},
          {"images_crc32", crc32_of(s.pixels)},
          {"labels_crc32", crc32_of(s.labels)}};
}

inline bool blob_matches(const std::string& path, std::size_t expect_size,
                         std::uint32_t expect_crc) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec) || fs::file_size(path, ec) != expect_size)
    return false;
  return crc32_of(read_all_bytes(path)) == expect_crc;
}

}  // namespace detail

/// True when the cache directory for `tag` exists, its meta.json parses,
/// and every blob matches its recorded size and CRC32.
inline bool cache_valid(const std::string& cache_root, const std::string& tag) {
  namespace fs = std::filesystem;
  std::string mpath = detail::meta_path(cache_root, tag);
  if (!fs::exists(mpath)) return false;
  nlohmann::json meta;
  try {
    std::ifstream in(mpath);
    in >> meta;
  } catch (...) {
    return false;
  }
  if (!meta.contains("format_version") ||
      meta["format_version"].get<int>() != detail::kCacheFormatVersion)
    return false;
  if (!meta.contains("height") || !meta.contains("width") ||
      !meta.contains("classes") || !meta.contains("splits"))
    return false;
  std::size_t h = meta["height"].get<std::size_t>();
  std::size_t w = meta["width"].get<std::size_t>();
  fs::path dir = fs::path(cache_root) / tag;
  for (const char* split : {"train", "test"}) {
    if (!meta["splits"].contains(split)) return false;
    const auto& sm = meta["splits"][split];
    std::size_t count = sm["count"].get<std::size_t>();
    if (!detail::blob_matches((dir / (std::string(split) + "_images.u8")).string(),
                              count * h * w,
                              sm["images_crc32"].get<std::uint32_t>()))
      return false;
    if (!detail::blob_matches((dir / (std::string(split) + "_labels.u8")).string(),
                              count, sm["labels_crc32"].get<std::uint32_t>()))
      return false;
  }
  return true;
}

namespace detail {

inline IngestReport store_dataset(const std::string& cache_root,
                                  const std::string& tag, std::size_t classes,
                                  const RawSplit& train, const RawSplit& test) {
  namespace fs = std::filesystem;
  check(train.height == test.height && train.width == test.width,
        "train/test geometry disagrees");
  fs::path dir = fs::path(cache_root) / tag;
  fs::create_directories(dir);
  write_blob((dir / "train_images.u8").string(), train.pixels);
  write_blob((dir / "train_labels.u8").string(), train.labels);
  write_blob((dir / "test_images.u8").string(), test.pixels);
  write_blob((dir / "test_labels.u8").string(), test.labels);
  nlohmann::json meta = {{"format_version", kCacheFormatVersion},
                         {"dataset", tag},
                         {"height", train.height},
                         {"width", train.width},
                         {"classes", classes},
                         {"splits",
                          {{"train", split_meta(train)},
                           {"test", split_meta(test)}}}};
  std::ofstream out(meta_path(cache_root, tag), std::ios::trunc);
  if (!out) throw IoError("cannot write " + meta_path(cache_root, tag));
  out << meta.dump(2) << '\n';
  IngestReport report;
  report.already_valid = false;
  report.train_count = train.count;
  report.test_count = test.count;
  report.cache_dir = dir.string();
  return report;
}

}  // namespace detail

/// Ingests Fashion-MNIST (or any MNIST-layout IDX pack) from `source_dir`
/// into the cache. Expects train-images-idx3-ubyte, train-labels-idx1-ubyte,
/// t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte, each optionally .gz.
/// Re-ingesting over a valid cache is a no-op.
inline IngestReport ingest_fashion_mnist(const std::string& source_dir,
                                         const std::string& cache_root) {
  const std::string tag = "fashion_mnist";
  if (cache_valid(cache_root, tag)) {
    nlohmann::json meta;
    std::ifstream in(detail::meta_path(cache_root, tag));
    in >> meta;
    IngestReport report;
    report.already_valid = true;
    report.train_count = meta["splits"]["train"]["count"].get<std::size_t>();
    report.test_count = meta["splits"]["test"]["count"].get<std::size_t>();
    report.cache_dir =
        (std::filesystem::path(cache_root) / tag).string();
    return report;
  }
  detail::RawSplit train = detail::load_idx_split(
      source_dir, "train-images-idx3-ubyte", "train-labels-idx1-ubyte");
  detail::RawSplit test = detail::load_idx_split(
      source_dir, "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
  for (std::uint8_t l : train.labels)
    check(l < 10, "label outside the 10-class range");
  for (std::uint8_t l : test.labels)
    check(l < 10, "label outside the 10-class range");
  return detail::store_dataset(cache_root, tag, 10, train, test);
}

/// Ingests CIFAR-10 binary batches from `source_dir` and converts them to
/// single-channel grayscale via ITU-R BT.601 luminance weights
/// (0.299 R + 0.587 G + 0.114 B), cached under tag "cifar10_gray".
/// Expects data_batch_1.bin .. data_batch_5.bin and test_batch.bin.
inline IngestReport ingest_cifar10_gray(const std::string& source_dir,
                                        const std::string& cache_root) {
  const std::string tag = "cifar10_gray";
  if (cache_valid(cache_root, tag)) {
    nlohmann::json meta;
    std::ifstream in(detail::meta_path(cache_root, tag));
    in >> meta;
    IngestReport report;
    report.already_valid = true;
    report.train_count = meta["splits"]["train"]["count"].get<std::size_t>();
    report.test_count = meta["splits"]["test"]["count"].get<std::size_t>();
    report.cache_dir =
        (std::filesystem::path(cache_root) / tag).string();
    return report;
  }
  constexpr std::size_t kSide = 32;
  constexpr std::size_t kPlane = kSide * kSide;
  constexpr std::size_t kRecord = 1 + 3 * kPlane;
  auto load_batches =
      [&](const std::vector<std::string>& names) -> detail::RawSplit {
    detail::RawSplit split;
    split.height = kSide;
    split.width = kSide;
    for (const std::string& name : names) {
      std::string path = detail::find_source_file(source_dir, name);
      if (path.empty())
        throw IoError("missing CIFAR-10 batch " + name + " under " +
                      source_dir);
      auto bytes = detail::read_file_maybe_gz(path);
      if (bytes.size() % kRecord != 0)
        throw IoError(path + " is truncated: not a whole number of records");
      std::size_t records = bytes.size() / kRecord;
      for (std::size_t r = 0; r < records; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kRecord;
        check(rec[0] < 10, "label outside the 10-class range");
        split.labels.push_back(rec[0]);
        const std::uint8_t* red = rec + 1;
        const std::uint8_t* green = red + kPlane;
        const std::uint8_t* blue = green + kPlane;
        for (std::size_t p = 0; p < kPlane; ++p) {
          double y = 0.299 * red[p] + 0.587 * green[p] + 0.114 * blue[p];
          split.pixels.push_back(
              static_cast<std::uint8_t>(std::lround(std::min(255.0, y))));
        }
      }
      split.count += records;
    }
    return split;
  };
  detail::RawSplit train =
      load_batches({"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                    "data_batch_4.bin", "data_batch_5.bin"});
  detail::RawSplit test = load_batches({"test_batch.bin"});
  return detail::store_dataset(cache_root, tag, 10, train, test);
}

/// Loads a cached dataset, normalizing pixels to [0,1] floats.
inline Dataset load_dataset(const std::string& cache_root,
                            const std::string& tag) {
  namespace fs = std::filesystem;
  if (!cache_valid(cache_root, tag))
    throw IoError("dataset cache for '" + tag + "' under " + cache_root +
                  " is missing or corrupt; run ingest first");
  nlohmann::json meta;
  {
    std::ifstream in(detail::meta_path(cache_root, tag));
    in >> meta;
  }
  std::size_t h = meta["height"].get<std::size_t>();
  std::size_t w = meta["width"].get<std::size_t>();
  fs::path dir = fs::path(cache_root) / tag;
  Dataset ds;
  ds.tag = tag;
  ds.classes = meta["classes"].get<std::size_t>();
  auto load_split = [&](const char* split) -> LabeledImages {
    std::size_t count = meta["splits"][split]["count"].get<std::size_t>();
    auto pixels = detail::read_all_bytes(
        (dir / (std::string(split) + "_images.u8")).string());
    auto labels = detail::read_all_bytes(
        (dir / (std::string(split) + "_labels.u8")).string());
    LabeledImages out;
    out.images = ImageBatch<float>(count, h, w);
    for (std::size_t i = 0; i < pixels.size(); ++i)
      out.images.values[i] = static_cast<float>(pixels[i]) / 255.0f;
    out.labels.assign(labels.begin(), labels.end());
    return out;
  };
  ds.train = load_split("train");
  ds.test = load_split("test");
  return ds;
}

/// Copies images [first, first+count) into a fresh batch with labels.
inline LabeledImages slice(const LabeledImages& src, std::size_t first,
                           std::size_t count) {
  check(first + count <= src.images.count, "slice exceeds split size");
  LabeledImages out;
  out.images = ImageBatch<float>(count, src.images.height, src.images.width);
  std::copy_n(src.images.image(first), count * src.images.pixels(),
              out.images.values.data());
  out.labels.assign(src.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    src.labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

}  // namespace pise
