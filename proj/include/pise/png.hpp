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
#include <fstream>
#include <string>
#include <vector>

#include "pise/sensing.hpp"

namespace pise {

namespace detail {

inline void png_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

inline void png_chunk(std::ofstream& os, const char type[4],
                      const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> head;
  png_be32(head, std::uint32_t(payload.size()));
  os.write(reinterpret_cast<const char*>(head.data()), 4);
  os.write(type, 4);
  if (!payload.empty())
    os.write(reinterpret_cast<const char*>(payload.data()),
             std::streamsize(payload.size()));
  std::uint32_t crc =
      ::crc32(0, reinterpret_cast<const Bytef*>(type), 4);
  if (!payload.empty())
    crc = ::crc32(crc, payload.data(), uInt(payload.size()));
  std::vector<std::uint8_t> tail;
  png_be32(tail, crc);
  os.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace detail

/// Writes an 8-bit grayscale PNG (color type 0, no interlace).
inline void write_png_gray(const std::string& path, std::size_t width,
                           std::size_t height,
                           const std::vector<std::uint8_t>& pixels) {
  check(width >= 1 && height >= 1, "png needs positive dimensions");
  check(pixels.size() == width * height, "png pixel buffer size mismatch");

  // Raw stream: one filter byte (0 = none) in front of each scanline.
  std::vector<std::uint8_t> raw;
  raw.reserve(height * (width + 1));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + std::ptrdiff_t(y * width),
               pixels.begin() + std::ptrdiff_t((y + 1) * width));
  }
  uLongf bound = ::compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> idat(bound);
  check(::compress2(idat.data(), &bound, raw.data(), uLong(raw.size()), 9) ==
            Z_OK,
        "png deflate failed");
  idat.resize(bound);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os.good()) throw IoError("cannot write " + path);
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n',
                                      0x1a, '\n'};
  os.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  detail::png_be32(ihdr, std::uint32_t(width));
  detail::png_be32(ihdr, std::uint32_t(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // adaptive filtering
  ihdr.push_back(0);  // no interlace
  detail::png_chunk(os, "IHDR", ihdr);
  detail::png_chunk(os, "IDAT", idat);
  detail::png_chunk(os, "IEND", {});
  if (!os.good()) throw IoError("failed writing " + path);
}

/// Maps [0,1] floats to 8-bit gray, clamping out-of-range values.
template <class S>
inline std::uint8_t to_gray8(S v) {
  const double c = std::clamp(double(v), 0.0, 1.0);
  return std::uint8_t(std::lround(c * 255.0));
}

/// Lays out one image batch per column, one item per row, with a light
/// separator margin: column j, row i shows columns[j]->image(i). All
/// batches must share geometry; rows beyond max_rows are dropped.
inline void save_mosaic_png(const std::string& path,
                            const std::vector<const ImageBatch<float>*>& cols,
                            std::size_t max_rows = 8, std::size_t margin = 2) {
  check(!cols.empty(), "mosaic needs at least one column");
  for (const auto* c : cols) {
    check(c != nullptr, "null mosaic column");
    check(c->count == cols[0]->count && c->height == cols[0]->height &&
              c->width == cols[0]->width,
          "mosaic columns must share geometry");
  }
  const std::size_t rows = std::min<std::size_t>(cols[0]->count, max_rows);
  check(rows >= 1, "mosaic needs at least one image row");
  const std::size_t ih = cols[0]->height, iw = cols[0]->width;
  const std::size_t W = cols.size() * (iw + margin) + margin;
  const std::size_t H = rows * (ih + margin) + margin;
  std::vector<std::uint8_t> canvas(W * H, 32);  // dark separator background
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const float* img = cols[c]->image(r);
      const std::size_t y0 = margin + r * (ih + margin);
      const std::size_t x0 = margin + c * (iw + margin);
      for (std::size_t y = 0; y < ih; ++y)
        for (std::size_t x = 0; x < iw; ++x)
          canvas[(y0 + y) * W + x0 + x] = to_gray8(img[y * iw + x]);
    }
  write_png_gray(path, W, H, canvas);
}

}  // namespace pise
