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

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pise/common.hpp"

// Little-endian binary primitives for the fixed on-disk formats.
// Byte order is explicit so files are portable across hosts.

namespace pise::binio {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts unsupported");

template <class T>
inline T byteswap(T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
    std::swap(b[i], b[sizeof(T) - 1 - i]);
  std::memcpy(&v, b, sizeof(T));
  return v;
}

template <class T>
inline void write_le(std::ostream& os, T v) {
  if constexpr (sizeof(T) > 1) {
    if (std::endian::native == std::endian::big) v = byteswap(v);
  }
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
inline T read_le(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("unexpected end of stream");
  if constexpr (sizeof(T) > 1) {
    if (std::endian::native == std::endian::big) v = byteswap(v);
  }
  return v;
}

template <class T>
inline T read_be(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("unexpected end of stream");
  if constexpr (sizeof(T) > 1) {
    if (std::endian::native == std::endian::little) v = byteswap(v);
  }
  return v;
}

inline void write_magic(std::ostream& os, const char (&magic)[5]) {
  os.write(magic, 4);
}

inline void expect_magic(std::istream& is, const char (&magic)[5],
                         const std::string& what) {
  char got[4];
  is.read(got, 4);
  if (!is || std::memcmp(got, magic, 4) != 0)
    throw IoError("bad magic for " + what);
}

}  // namespace pise::binio
