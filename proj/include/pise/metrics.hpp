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

#include <algorithm>
#include <cmath>
#include <vector>

#include "pise/classifier.hpp"
#include "pise/sensing.hpp"

namespace pise {

/// Peak signal-to-noise ratio per image plus the batch mean, in dB.
struct PsnrResult {
  std::vector<double> per_image;
  double mean = 0.0;
};

/// PSNR against a fixed peak (images live in [0,1], so peak defaults to 1).
/// A zero-MSE image has infinite PSNR; it is reported as `cap` so the value
/// stays serializable.
template <class S>
inline PsnrResult psnr(const ImageBatch<S>& x, const ImageBatch<S>& xhat,
                       double peak = 1.0, double cap = 99.0) {
  check(x.count == xhat.count && x.height == xhat.height &&
            x.width == xhat.width,
        "psnr needs matching geometry");
  check(peak > 0.0, "psnr peak must be positive");
  PsnrResult out;
  const std::size_t n = x.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.count; ++i) {
    const S* a = x.image(i);
    const S* b = xhat.image(i);
    double mse = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = double(a[j]) - double(b[j]);
      mse += d * d;
    }
    mse /= double(n);
    const double db =
        mse == 0.0 ? cap
                   : std::min(cap, 10.0 * std::log10(peak * peak / mse));
    out.per_image.push_back(db);
    acc += db;
  }
  out.mean = x.count == 0 ? 0.0 : acc / double(x.count);
  return out;
}

/// Scalar-type bridge for mixed-precision pipelines feeding the classifier.
template <class S>
inline ImageBatch<float> to_float(const ImageBatch<S>& batch) {
  ImageBatch<float> out(batch.count, batch.height, batch.width);
  for (std::size_t i = 0; i < batch.values.size(); ++i)
    out.values[i] = static_cast<float>(batch.values[i]);
  return out;
}

/// Fraction of reconstructions the frozen classifier labels correctly.
/// Inputs are clamped to [0,1] first so they match the value range the
/// classifier was trained on. An empty batch is an error, not zero.
inline double eval_accuracy(const ClassifierHandle& handle,
                            const ImageBatch<float>& reconstructions,
                            const std::vector<int>& labels) {
  check(reconstructions.count == labels.size(),
        "labels misaligned with reconstructions");
  check(reconstructions.count > 0, "cannot evaluate an empty batch");
  ImageBatch<float> clamped = reconstructions;
  for (auto& v : clamped.values.raw()) v = std::clamp(v, 0.0f, 1.0f);
  Classification cls = classify(handle, clamped);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (cls.labels[i] == labels[i]) ++hits;
  return double(hits) / double(labels.size());
}

}  // namespace pise
