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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "pise/binio.hpp"
#include "pise/common.hpp"
#include "pise/rng.hpp"
#include "pise/tensor.hpp"

// Sensing operators and single-detector measurement simulation.
//
// The forward model is y = A x + eta for a vectorized H x W scene x, an
// M x N pattern matrix A (N = H*W) and detector noise eta. The adjoint
// proxy reshape(A^T y) is the physics-anchored image estimate that seeds
// reconstruction.

namespace pise {

enum class PatternKind : std::uint8_t { gaussian = 0, binary = 1 };

inline const char* to_string(PatternKind k) {
  return k == PatternKind::gaussian ? "gaussian" : "binary";
}

inline PatternKind pattern_kind_from_string(const std::string& s) {
  if (s == "gaussian") return PatternKind::gaussian;
  if (s == "binary") return PatternKind::binary;
  throw InvalidArgument("unknown pattern kind: " + s);
}

/// Batch of H x W scenes or reconstructions, values nominally in [0,1].
template <class S>
struct ImageBatch {
  std::size_t count = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor<S> values;  // shape {count, height, width}

  ImageBatch() = default;
  ImageBatch(std::size_t b, std::size_t h, std::size_t w)
      : count(b), height(h), width(w), values({b, h, w}) {}

  std::size_t pixels() const { return height * width; }
  S* image(std::size_t i) { return values.data() + i * pixels(); }
  const S* image(std::size_t i) const { return values.data() + i * pixels(); }
};

enum class NoiseKind : std::uint8_t { none = 0, awgn = 1, poisson = 2 };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::awgn: return "awgn";
    case NoiseKind::poisson: return "poisson";
    default: return "none";
  }
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "awgn") return NoiseKind::awgn;
  if (s == "poisson") return NoiseKind::poisson;
  throw InvalidArgument("unknown noise kind: " + s);
}

/// Detector model applied to clean measurements. Exactly one noise kind is
/// active; quantization (when quant_bits >= 1) runs after the noise.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  /// AWGN standard deviation as a fraction of the clean batch RMS magnitude.
  double sigma_rel = 0.0;
  /// Expected photon count at the maximum clean measurement (Poisson only).
  double photon_scale = 1.0e4;
  /// 0 disables quantization; >= 1 selects 2^quant_bits uniform levels.
  int quant_bits = 0;
  /// Calibration range for the quantizer, fixed once from a clean
  /// training-set pass. Required when quant_bits >= 1.
  bool has_quant_range = false;
  double quant_lo = 0.0;
  double quant_hi = 0.0;

  // Filled by measure() so the applied transform is reproducible.
  double applied_sigma_abs = 0.0;
  double applied_poisson_shift = 0.0;
  double applied_poisson_scale = 0.0;

  static NoiseSpec none() { return {}; }
  static NoiseSpec awgn(double sigma_rel) {
    NoiseSpec n;
    n.kind = NoiseKind::awgn;
    n.sigma_rel = sigma_rel;
    return n;
  }
  static NoiseSpec poisson(double photon_scale) {
    NoiseSpec n;
    n.kind = NoiseKind::poisson;
    n.photon_scale = photon_scale;
    return n;
  }
  NoiseSpec& with_quantization(int bits, double lo, double hi) {
    quant_bits = bits;
    has_quant_range = true;
    quant_lo = lo;
    quant_hi = hi;
    return *this;
  }

  void validate() const {
    check(sigma_rel >= 0.0, "sigma_rel must be nonnegative");
    if (kind == NoiseKind::poisson)
      check(photon_scale > 0.0, "photon_scale must be positive");
    if (quant_bits != 0) {
      check(quant_bits >= 1, "quant_bits must be 0 (off) or >= 1");
      check(quant_bits <= 30, "quant_bits above 30 is not supported");
      check(has_quant_range, "quantization requires a calibrated range");
      check(quant_lo < quant_hi, "quantizer range must satisfy lo < hi");
    }
  }
};

/// Batch of M-vector measurements with a record of the applied noise.
template <class S>
struct MeasurementBatch {
  std::size_t count = 0;
  std::size_t length = 0;
  Tensor<S> values;  // shape {count, length}
  NoiseSpec noise_tag;

  MeasurementBatch() = default;
  MeasurementBatch(std::size_t b, std::size_t m)
      : count(b), length(m), values({b, m}) {}
};

/// The sensing matrix with its geometry and generation recipe. Immutable
/// after construction; safe for concurrent reads.
template <class S = float>
struct SensingOperator {
  std::size_t rows = 0;  // M
  std::size_t cols = 0;  // N = height * width
  std::size_t height = 0;
  std::size_t width = 0;
  /// Requested sampling rate. After a file round trip this is the effective
  /// rate rows/cols (the container stores geometry, not the request).
  double rate = 0.0;
  PatternKind pattern_kind = PatternKind::gaussian;
  std::uint64_t seed = 0;
  Tensor<S> entries;  // shape {rows, cols}, row-major

  typename Tensor<S>::ConstMatrixMap matrix() const {
    return entries.as_matrix(rows, cols);
  }
};

/// Number of detector measurements at sampling rate `rate` for N pixels.
inline std::size_t measurement_count(double rate, std::size_t pixels) {
  check(rate > 0.0 && rate <= 1.0, "sampling rate must lie in (0, 1]");
  check(pixels >= 1, "image must contain at least one pixel");
  auto m = static_cast<std::size_t>(std::floor(rate * static_cast<double>(pixels)));
  return m < 1 ? 1 : m;
}

/// Generates a sensing operator. Pure function of its arguments: identical
/// inputs yield bit-identical entries.
template <class S = float>
SensingOperator<S> make_operator(double rate, std::size_t height,
                                 std::size_t width, PatternKind kind,
                                 std::uint64_t seed) {
  check(height >= 1 && width >= 1, "image dimensions must be positive");
  const std::size_t n = height * width;
  const std::size_t m = measurement_count(rate, n);

  SensingOperator<S> op;
  op.rows = m;
  op.cols = n;
  op.height = height;
  op.width = width;
  op.rate = rate;
  op.pattern_kind = kind;
  op.seed = seed;
  op.entries = Tensor<S>({m, n});

  Rng rng(derive_seed(seed, "sensing_operator"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  S* e = op.entries.data();
  if (kind == PatternKind::gaussian) {
    for (std::size_t i = 0; i < m * n; ++i)
      e[i] = static_cast<S>(rng.normal(0.0, scale));
  } else {
    for (std::size_t i = 0; i < m * n; ++i)
      e[i] = static_cast<S>(rng.below(2) ? scale : -scale);
  }
  return op;
}

// ---------------------------------------------------------------------------
// Operator container format (bit-exact):
//   magic "PISE" | u16 version=1 | u32 M,N,H,W | u8 pattern_kind |
//   u64 seed | M*N float32, row-major.
// All multi-byte fields little-endian.
// ---------------------------------------------------------------------------

inline constexpr char kOperatorMagic[5] = "PISE";
inline constexpr std::uint16_t kOperatorFormatVersion = 1;

template <class S>
void save_operator(const SensingOperator<S>& op, std::ostream& os) {
  binio::write_magic(os, kOperatorMagic);
  binio::write_le<std::uint16_t>(os, kOperatorFormatVersion);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(op.rows));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(op.cols));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(op.height));
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(op.width));
  binio::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(op.pattern_kind));
  binio::write_le<std::uint64_t>(os, op.seed);
  for (std::size_t i = 0; i < op.entries.size(); ++i)
    binio::write_le<float>(os, static_cast<float>(op.entries[i]));
  if (!os) throw IoError("failed writing operator stream");
}

template <class S>
void save_operator(const SensingOperator<S>& op,
                   const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  save_operator(op, f);
}

template <class S = float>
SensingOperator<S> load_operator(std::istream& is) {
  binio::expect_magic(is, kOperatorMagic, "operator file");
  const auto version = binio::read_le<std::uint16_t>(is);
  if (version != kOperatorFormatVersion)
    throw IoError("unsupported operator format version " +
                  std::to_string(version));
  SensingOperator<S> op;
  op.rows = binio::read_le<std::uint32_t>(is);
  op.cols = binio::read_le<std::uint32_t>(is);
  op.height = binio::read_le<std::uint32_t>(is);
  op.width = binio::read_le<std::uint32_t>(is);
  const auto kind = binio::read_le<std::uint8_t>(is);
  if (kind > 1) throw IoError("bad pattern kind byte");
  op.pattern_kind = static_cast<PatternKind>(kind);
  op.seed = binio::read_le<std::uint64_t>(is);
  if (op.rows == 0 || op.cols == 0 || op.height * op.width != op.cols)
    throw IoError("inconsistent operator header");
  op.rate = static_cast<double>(op.rows) / static_cast<double>(op.cols);
  op.entries = Tensor<S>({op.rows, op.cols});
  for (std::size_t i = 0; i < op.entries.size(); ++i)
    op.entries[i] = static_cast<S>(binio::read_le<float>(is));
  return op;
}

template <class S = float>
SensingOperator<S> load_operator(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open operator file: " + path.string());
  return load_operator<S>(f);
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Maps `v` to the nearest of 2^bits uniform levels over [lo, hi], in real
/// units. Levels sit at cell centers lo + (k + 1/2) * (hi - lo) / 2^bits,
/// which keeps the absolute error within (hi - lo) / 2^(bits+1) for every
/// in-range input. Arithmetic runs in double so the map is idempotent.
template <class S>
inline S quantize_value(S v, int bits, double lo, double hi) {
  const double cells = std::ldexp(1.0, bits);  // 2^bits
  double x = static_cast<double>(v);
  x = x < lo ? lo : (x > hi ? hi : x);
  double k = std::floor((x - lo) / (hi - lo) * cells);
  if (k >= cells) k = cells - 1.0;
  if (k < 0.0) k = 0.0;
  return static_cast<S>(lo + (k + 0.5) * (hi - lo) / cells);
}

/// Clips every measurement to [lo, hi] and snaps it to the quantizer grid.
template <class S>
MeasurementBatch<S> quantize(const MeasurementBatch<S>& m, int bits, double lo,
                             double hi) {
  check(bits >= 1 && bits <= 30, "quantizer bits must lie in [1, 30]");
  check(lo < hi, "quantizer range must satisfy lo < hi");
  MeasurementBatch<S> out = m;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = quantize_value(out.values[i], bits, lo, hi);
  out.noise_tag.quant_bits = bits;
  out.noise_tag.has_quant_range = true;
  out.noise_tag.quant_lo = lo;
  out.noise_tag.quant_hi = hi;
  return out;
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

namespace detail {

template <class S>
void apply_awgn(Tensor<S>& y, double sigma_rel, Rng& rng, NoiseSpec& tag) {
  if (y.size() == 0) return;
  double sumsq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = static_cast<double>(y[i]);
    sumsq += v * v;
  }
  const double rms = std::sqrt(sumsq / static_cast<double>(y.size()));
  const double sigma = sigma_rel * rms;
  tag.applied_sigma_abs = sigma;
  if (sigma == 0.0) return;  // sigma_rel = 0 reproduces the clean values
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = static_cast<S>(static_cast<double>(y[i]) + sigma * rng.normal());
}

// Patterns produce signed measurements, so the batch is shifted to be
// nonnegative before photon scaling; the shift and scale are recorded in
// the tag and undone after sampling.
template <class S>
void apply_poisson(Tensor<S>& y, double photon_scale, Rng& rng,
                   NoiseSpec& tag) {
  if (y.size() == 0) return;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < y.size(); ++i) {
    double v = static_cast<double>(y[i]);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  tag.applied_poisson_shift = lo;
  if (hi <= lo) {  // constant batch carries no photon contrast
    tag.applied_poisson_scale = 0.0;
    return;
  }
  const double scale = photon_scale / (hi - lo);
  tag.applied_poisson_scale = scale;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double lambda = (static_cast<double>(y[i]) - lo) * scale;
    const double k = static_cast<double>(rng.poisson(lambda));
    y[i] = static_cast<S>(k / scale + lo);
  }
}

}  // namespace detail

/// Simulates y = A x + eta for every image in the batch. The clean part is
/// exact; noise and quantization follow `noise`. Randomness comes from the
/// caller's stream, making the call pure given (op, batch, noise, rng).
template <class S>
MeasurementBatch<S> measure(const SensingOperator<S>& op,
                            const ImageBatch<S>& batch, const NoiseSpec& noise,
                            Rng& rng) {
  check(batch.height == op.height && batch.width == op.width,
        "image geometry does not match operator");
  noise.validate();

  MeasurementBatch<S> out(batch.count, op.rows);
  out.noise_tag = noise;
  if (batch.count > 0) {
    auto x = batch.values.as_matrix(batch.count, op.cols);
    auto y = out.values.as_matrix(batch.count, op.rows);
    y.noalias() = x * op.matrix().transpose();
  }

  switch (noise.kind) {
    case NoiseKind::none:
      break;
    case NoiseKind::awgn:
      detail::apply_awgn(out.values, noise.sigma_rel, rng, out.noise_tag);
      break;
    case NoiseKind::poisson:
      detail::apply_poisson(out.values, noise.photon_scale, rng, out.noise_tag);
      break;
  }

  if (noise.quant_bits >= 1)
    for (std::size_t i = 0; i < out.values.size(); ++i)
      out.values[i] = quantize_value(out.values[i], noise.quant_bits,
                                     noise.quant_lo, noise.quant_hi);
  return out;
}

/// Noise-free convenience overload.
template <class S>
MeasurementBatch<S> measure_clean(const SensingOperator<S>& op,
                                  const ImageBatch<S>& batch) {
  Rng unused(0);
  return measure(op, batch, NoiseSpec::none(), unused);
}

/// Back-projection x_init = reshape(A^T y) per image. No normalization.
template <class S>
ImageBatch<S> adjoint_proxy(const SensingOperator<S>& op,
                            const MeasurementBatch<S>& m) {
  check(m.length == op.rows, "measurement length does not match operator");
  ImageBatch<S> out(m.count, op.height, op.width);
  if (m.count > 0) {
    auto y = m.values.as_matrix(m.count, op.rows);
    auto x = out.values.as_matrix(m.count, op.cols);
    x.noalias() = y * op.matrix();
  }
  return out;
}

/// Per-image affine map of [min, max] onto [0, 1]; constant images map to
/// 0.5 everywhere. Conditions the back-projection for the network input.
template <class S>
ImageBatch<S> normalize_proxy(const ImageBatch<S>& batch) {
  check(batch.values.all_finite(), "normalize_proxy requires finite values");
  ImageBatch<S> out(batch.count, batch.height, batch.width);
  const std::size_t px = batch.pixels();
  for (std::size_t i = 0; i < batch.count; ++i) {
    const S* src = batch.image(i);
    S* dst = out.image(i);
    S lo = src[0], hi = src[0];
    for (std::size_t p = 1; p < px; ++p) {
      lo = std::min(lo, src[p]);
      hi = std::max(hi, src[p]);
    }
    if (hi == lo) {
      for (std::size_t p = 0; p < px; ++p) dst[p] = S(0.5);
    } else {
      const S inv = S(1) / (hi - lo);
      for (std::size_t p = 0; p < px; ++p) dst[p] = (src[p] - lo) * inv;
    }
  }
  return out;
}

/// Quantizer calibration from a clean training-set pass: [mu - 4 s, mu + 4 s]
/// of the clean measurements, fixed once per operator.
template <class S>
std::pair<double, double> calibrate_quant_range(const SensingOperator<S>& op,
                                                const ImageBatch<S>& train) {
  check(train.count > 0, "calibration needs at least one image");
  MeasurementBatch<S> clean = measure_clean(op, train);
  double sum = 0.0, sumsq = 0.0;
  const std::size_t n = clean.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    double v = static_cast<double>(clean.values[i]);
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var =
      std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  return {mean - 4.0 * sd, mean + 4.0 * sd};
}

}  // namespace pise
