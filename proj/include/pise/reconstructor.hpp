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

#include <memory>
#include <string>

#include "pise/sensing.hpp"
#include "pise/unet.hpp"

namespace pise {

// The reconstruction network. In adjoint mode it consumes the normalized
// adjoint proxy, so the measurement-to-image stage carries zero trainable
// parameters. In learned_random mode a trainable dense lift maps the raw
// measurement vector to an H x W plane first (M*N weights plus N biases),
// which houses the physics-free ablation arm.

enum class InitMode { adjoint, learned_random };

inline const char* to_string(InitMode m) {
  return m == InitMode::adjoint ? "adjoint" : "learned_random";
}

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "adjoint") return InitMode::adjoint;
  if (s == "learned_random") return InitMode::learned_random;
  throw InvalidArgument("unknown init mode: " + s);
}

struct ReconstructorSpec {
  InitMode init_mode = InitMode::adjoint;
  std::size_t depth = 3;
  std::size_t base_width = 32;
  std::uint64_t seed = 0;
};

template <class S>
class Reconstructor {
 public:
  /// `measurements` is required (nonzero) in learned_random mode and
  /// ignored in adjoint mode.
  Reconstructor(const ReconstructorSpec& spec, std::size_t height,
                std::size_t width, std::size_t measurements = 0)
      : spec_(spec),
        height_(height),
        width_(width),
        measurements_(measurements),
        net_(spec.depth, spec.base_width) {
    check(height >= 1 && width >= 1, "image dimensions must be positive");
    if (spec.init_mode == InitMode::learned_random) {
      check(measurements >= 1,
            "learned_random mode needs the measurement length");
      lift_ = std::make_unique<nn::Dense<S>>(measurements, height * width,
                                             "lift");
    }
    init();
  }

  const ReconstructorSpec& spec() const { return spec_; }
  InitMode init_mode() const { return spec_.init_mode; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t measurements() const { return measurements_; }
  bool initialized() const { return initialized_; }

  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> out;
    if (lift_) lift_->collect_params(out);
    auto unet_params = net_.params();
    out.insert(out.end(), unet_params.begin(), unet_params.end());
    return out;
  }

  std::size_t parameter_count() {
    auto p = params();
    return nn::parameter_count(p);
  }

  /// Trainable parameters in the measurement-to-image stage alone:
  /// zero in adjoint mode, M*N + N in learned_random mode.
  std::size_t lift_parameter_count() const {
    return lift_ ? measurements_ * height_ * width_ + height_ * width_ : 0;
  }

  std::uint64_t macs_per_image() const {
    std::uint64_t total = net_.macs_per_image(height_, width_);
    if (lift_) total += std::uint64_t(measurements_) * height_ * width_;
    return total;
  }

  // -- training-time forward/backward (single writer) ----------------------

  /// Adjoint-mode forward from a normalized proxy batch. Output (B,1,H,W).
  Tensor<S> forward_proxy(const ImageBatch<S>& proxy) {
    check(spec_.init_mode == InitMode::adjoint,
          "learned_random reconstructor consumes measurements, not proxies");
    check(proxy.height == height_ && proxy.width == width_,
          "proxy geometry does not match the reconstructor");
    Tensor<S> x = proxy.values;
    x.reshape({proxy.count, 1, height_, width_});
    return net_.forward(x);
  }

  /// learned_random-mode forward from raw measurements. Output (B,1,H,W).
  Tensor<S> forward_measurements(const MeasurementBatch<S>& m) {
    check(spec_.init_mode == InitMode::learned_random,
          "adjoint reconstructor consumes proxies, not measurements");
    check(m.length == measurements_,
          "measurement length does not match the reconstructor");
    lift_in_count_ = m.count;
    Tensor<S> lifted = lift_->forward(m.values);
    lifted.reshape({m.count, 1, height_, width_});
    return net_.forward(lifted);
  }

  /// Backward from a gradient on the (B,1,H,W) output. Parameter gradients
  /// accumulate; the return value is the gradient at the network input
  /// (proxy plane or measurement vector, depending on mode).
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = net_.backward(gy);
    if (lift_) {
      g.reshape({lift_in_count_, height_ * width_});
      return lift_->backward(g);
    }
    return g;
  }

  // -- inference ------------------------------------------------------------

  /// Pure inference on a normalized proxy batch (adjoint mode only).
  /// Chunks internally; output values lie in (0,1). Empty in, empty out.
  ImageBatch<S> reconstruct(const ImageBatch<S>& proxy) {
    check(spec_.init_mode == InitMode::adjoint,
          "learned_random reconstructor consumes measurements, not proxies");
    check(proxy.count == 0 || (proxy.height == height_ && proxy.width == width_),
          "proxy geometry does not match the reconstructor");
    ImageBatch<S> out(proxy.count, height_, width_);
    const std::size_t hw = height_ * width_;
    for (std::size_t start = 0; start < proxy.count; start += kChunk) {
      const std::size_t n = std::min(kChunk, proxy.count - start);
      ImageBatch<S> part(n, height_, width_);
      std::copy_n(proxy.values.data() + start * hw, n * hw,
                  part.values.data());
      Tensor<S> y = forward_proxy(part);
      std::copy_n(y.data(), n * hw, out.values.data() + start * hw);
    }
    return out;
  }

  /// Pure inference from measurements (learned_random mode only).
  ImageBatch<S> reconstruct(const MeasurementBatch<S>& m) {
    check(spec_.init_mode == InitMode::learned_random,
          "adjoint reconstructor consumes proxies, not measurements");
    check(m.count == 0 || m.length == measurements_,
          "measurement length does not match the reconstructor");
    ImageBatch<S> out(m.count, height_, width_);
    const std::size_t hw = height_ * width_;
    for (std::size_t start = 0; start < m.count; start += kChunk) {
      const std::size_t n = std::min(kChunk, m.count - start);
      MeasurementBatch<S> part(n, measurements_);
      std::copy_n(m.values.data() + start * measurements_, n * measurements_,
                  part.values.data());
      Tensor<S> y = forward_measurements(part);
      std::copy_n(y.data(), n * hw, out.values.data() + start * hw);
    }
    return out;
  }

 private:
  void init() {
    net_.init(derive_seed(spec_.seed, "reconstructor"));
    if (lift_) {
      Rng rng(derive_seed(spec_.seed, "reconstructor_lift"));
      lift_->init(rng);
    }
    initialized_ = true;
  }

  static constexpr std::size_t kChunk = 64;

  ReconstructorSpec spec_;
  std::size_t height_, width_, measurements_;
  UNet<S> net_;
  std::unique_ptr<nn::Dense<S>> lift_;
  std::size_t lift_in_count_ = 0;
  bool initialized_ = false;
};

template <class S>
inline Reconstructor<S> build_reconstructor(const ReconstructorSpec& spec,
                                            std::size_t height,
                                            std::size_t width,
                                            std::size_t measurements = 0) {
  return Reconstructor<S>(spec, height, width, measurements);
}

/// Full inference path from raw measurements for either mode: adjoint
/// models get the normalized adjoint proxy, learned_random models take the
/// measurement vector directly.
template <class S>
inline ImageBatch<S> reconstruct_from_measurements(
    Reconstructor<S>& model, const SensingOperator<S>& op,
    const MeasurementBatch<S>& m) {
  if (model.init_mode() == InitMode::adjoint) {
    ImageBatch<S> proxy = normalize_proxy(adjoint_proxy(op, m));
    return model.reconstruct(proxy);
  }
  return model.reconstruct(m);
}

}  // namespace pise
