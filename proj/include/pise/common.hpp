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

#include <cstddef>
#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>

namespace pise {

inline constexpr int kVersionMajor = 0;
inline constexpr int kVersionMinor = 1;
inline constexpr int kVersionPatch = 0;

inline std::string version_string() {
  return std::to_string(kVersionMajor) + "." + std::to_string(kVersionMinor) +
         "." + std::to_string(kVersionPatch);
}

/// Raised when an operation's preconditions are violated.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised on malformed files, failed IO, or inconsistent on-disk state.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void fail_check(const std::string& msg) {
  throw InvalidArgument(msg);
}
}  // namespace detail

/// Precondition check; throws InvalidArgument with `msg` when `cond` is false.
inline void check(bool cond, const std::string& msg) {
  if (!cond) detail::fail_check(msg);
}

/// Allocator pinning every buffer to a fixed 64-byte boundary. Numeric
/// buffers must not inherit their alignment from the heap state: SIMD
/// kernels peel loop heads by runtime alignment, so address-dependent
/// alignment would change summation order between otherwise identical
/// runs and break bit-exact replay.
template <class T>
struct AlignedAlloc {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(
        ::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t) {
    ::operator delete(p, std::align_val_t(kAlign));
  }

  template <class U>
  bool operator==(const AlignedAlloc<U>&) const { return true; }
  template <class U>
  bool operator!=(const AlignedAlloc<U>&) const { return false; }
};

}  // namespace pise
