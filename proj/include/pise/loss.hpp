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

#include <mutex>
#include <vector>

#include "pise/features.hpp"
#include "pise/sensing.hpp"

namespace pise {

/// Weights of the composite objective: total = mse * mean squared pixel
/// error + perc * sum over taps of the per-tap mean absolute feature
/// difference. Both zero is invalid.
struct LossWeights {
  double mse = 1.0;
  double perc = 0.05;

  void validate() const {
    check(mse >= 0.0 && perc >= 0.0, "loss weights must be nonnegative");
    check(mse > 0.0 || perc > 0.0, "loss weights must not both be zero");
  }
};

template <class S>
struct LossValue {
  double total = 0.0;      // weighted sum
  double mse_raw = 0.0;    // unweighted mean squared pixel error
  double perc_raw = 0.0;   // unweighted sum of per-tap mean abs differences
  Tensor<S> grad;          // d total / d xhat, shape (B, H, W)
};

/// Composite pixel+perceptual loss with its analytic gradient in x̂. The
/// extractor may be null when the perceptual weight is zero; otherwise it
/// is locked for the duration of the call so the forward caches stay
/// coherent. Both inputs pass through identical extractor normalization,
/// making the value symmetric in (x, x̂).
template <class S>
inline LossValue<S> composite_loss(const ImageBatch<S>& x,
                                   const ImageBatch<S>& xhat,
                                   FeatureExtractor<S>* extractor,
                                   const LossWeights& w,
                                   bool want_grad = true) {
  w.validate();
  check(x.count == xhat.count && x.height == xhat.height &&
            x.width == xhat.width,
        "loss inputs must share geometry");
  check(x.count >= 1, "loss needs a nonempty batch");

  LossValue<S> out;
  const std::size_t n = x.values.size();
  if (want_grad) out.grad = Tensor<S>({x.count, x.height, x.width});

  if (w.mse > 0.0 || want_grad) {
    double acc = 0.0;
    const double scale = 2.0 * w.mse / double(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d =
          double(xhat.values[i]) - double(x.values[i]);
      acc += d * d;
      if (want_grad) out.grad[i] = S(scale * d);
    }
    out.mse_raw = acc / double(n);
  }

  if (w.perc > 0.0) {
    check(extractor != nullptr,
          "perceptual term requires a feature extractor");
    std::lock_guard<std::mutex> guard(extractor->mutex());
    std::vector<Tensor<S>> fx = extractor->features(x);
    std::vector<Tensor<S>> fxh = extractor->features(xhat);
    std::vector<Tensor<S>> tap_grads;
    if (want_grad) tap_grads.resize(fx.size());
    for (std::size_t t = 0; t < fx.size(); ++t) {
      check(fx[t].same_shape(fxh[t]), "tap shapes diverged");
      const std::size_t m = fx[t].size();
      check(m > 0, "empty feature map");
      double acc = 0.0;
      if (want_grad) tap_grads[t] = Tensor<S>(fxh[t].shape());
      const double gscale = w.perc / double(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double d = double(fxh[t][i]) - double(fx[t][i]);
        acc += std::abs(d);
        if (want_grad)
          tap_grads[t][i] = S(d > 0.0 ? gscale : (d < 0.0 ? -gscale : 0.0));
      }
      out.perc_raw += acc / double(m);
    }
    if (want_grad) {
      // The extractor caches hold the x̂ forward (it ran last).
      Tensor<S> gperc = extractor->features_backward(tap_grads);
      for (std::size_t i = 0; i < n; ++i) out.grad[i] += gperc[i];
    }
  }

  out.total = w.mse * out.mse_raw + w.perc * out.perc_raw;
  return out;
}

}  // namespace pise
