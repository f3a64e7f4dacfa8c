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

#include <array>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "pise/classifier.hpp"
#include "pise/nn.hpp"

namespace pise {

// Frozen feature extractors for the perceptual loss term.
//
// kind=pretrained_perceptual is a VGG-16 front end (through relu3_3) that
// replicates grayscale input to 3 channels and applies the ImageNet
// per-channel normalization. When no weights file is available it falls
// back to a seeded random initialization and reports pretrained()==false.
//
// kind=domain_cnn is a plain-CNN trunk with taps at its three activation
// depths; inputs stay single-channel and are normalized with the dataset's
// fixed mean/std. Its weights come either from a seeded initialization or
// from the convolutional trunk of a trained plain-CNN evaluation
// classifier.
//
// Parameters are frozen: nothing here ever steps them. features() and
// features_backward() share per-layer caches, so a features/backward
// sequence is single-writer; concurrent use requires external locking via
// mutex() or one extractor per thread.

enum class ExtractorKind { pretrained_perceptual, domain_cnn };

inline const char* to_string(ExtractorKind k) {
  return k == ExtractorKind::pretrained_perceptual ? "pretrained_perceptual"
                                                   : "domain_cnn";
}

inline ExtractorKind extractor_kind_from_string(const std::string& s) {
  if (s == "pretrained_perceptual") return ExtractorKind::pretrained_perceptual;
  if (s == "domain_cnn") return ExtractorKind::domain_cnn;
  throw InvalidArgument("unknown feature extractor kind: " + s);
}

struct FeatureExtractorSpec {
  ExtractorKind kind = ExtractorKind::domain_cnn;
  std::vector<std::string> taps;  // empty selects the kind's default set

  std::vector<std::string> resolved_taps() const {
    if (!taps.empty()) return taps;
    if (kind == ExtractorKind::pretrained_perceptual)
      return {"relu1_2", "relu2_2", "relu3_3"};
    return {"relu1", "relu2", "relu3"};
  }
};

namespace detail {

inline std::size_t vgg_tap_index(const std::string& name) {
  static const std::map<std::string, std::size_t> taps = {
      {"relu1_1", 1},  {"relu1_2", 3},  {"relu2_1", 6}, {"relu2_2", 8},
      {"relu3_1", 11}, {"relu3_2", 13}, {"relu3_3", 15}};
  auto it = taps.find(name);
  if (it == taps.end())
    throw InvalidArgument("tap point not present in the network: " + name);
  return it->second;
}

}  // namespace detail

template <class S>
class FeatureExtractor {
 public:
  /// Seeded-random construction. For pretrained_perceptual this is the
  /// no-weights fallback; the instance reports pretrained()==false.
  FeatureExtractor(const FeatureExtractorSpec& spec, std::uint64_t seed)
      : spec_(spec) {
    build_trunk();
    Rng rng(derive_seed(seed, "extractor_init"));
    for (std::size_t i = 0; i < trunk_.size(); ++i)
      if (auto* c = dynamic_cast<nn::Conv2d<S>*>(&trunk_.layer(i)))
        c->init(rng);
    pretrained_ = false;
  }

  /// pretrained_perceptual from a serialized weights stream.
  FeatureExtractor(const FeatureExtractorSpec& spec,
                   const std::string& weights_path)
      : spec_(spec) {
    check(spec.kind == ExtractorKind::pretrained_perceptual,
          "weights-file construction is for the pretrained extractor");
    build_trunk();
    auto params = trunk_.params();
    nn::load_parameters(weights_path, params);
    pretrained_ = true;
  }

  /// domain_cnn from a frozen plain-architecture classifier.
  FeatureExtractor(const FeatureExtractorSpec& spec,
                   const ClassifierHandle& classifier)
      : spec_(spec) {
    check(spec.kind == ExtractorKind::domain_cnn,
          "classifier-trunk construction is for the domain extractor");
    check(classifier.net != nullptr, "classifier handle is empty");
    build_trunk();
    nn::Sequential<float>& src = classifier.net->plain_net();
    std::vector<nn::ParamRef<float>> sp;
    src.collect_params(sp);
    auto dp = trunk_.params();
    for (auto& dst : dp) {
      bool found = false;
      for (auto& s : sp) {
        if (s.name != dst.name) continue;
        check(s.value->size() == dst.value->size(),
              "classifier trunk shape mismatch on " + dst.name);
        for (std::size_t i = 0; i < dst.value->size(); ++i)
          (*dst.value)[i] = static_cast<S>((*s.value)[i]);
        found = true;
        break;
      }
      check(found, "classifier trunk is missing tensor " + dst.name);
    }
    pretrained_ = classifier.frozen;
  }

  const FeatureExtractorSpec& spec() const { return spec_; }
  bool pretrained() const { return pretrained_; }
  std::size_t input_channels() const { return channels_; }
  std::mutex& mutex() { return lock_; }

  std::uint64_t checksum() {
    auto params = trunk_.params();
    return nn::parameter_checksum(params);
  }

  /// One feature map per tap point, in tap order. Grayscale input is
  /// replicated to the trunk's channel count and normalized with the fixed
  /// per-channel mean/std before the forward pass.
  std::vector<Tensor<S>> features(const ImageBatch<S>& batch) {
    check(batch.values.all_finite(), "feature extraction needs finite input");
    last_b_ = batch.count;
    last_h_ = batch.height;
    last_w_ = batch.width;
    Tensor<S> x = prepare(batch);
    std::vector<Tensor<S>> taps;
    trunk_.forward_with_taps(x, tap_indices_, taps);
    return taps;
  }

  /// Gradient with respect to the raw grayscale input, shaped (B, H, W),
  /// from gradients at each tap of the most recent features() call.
  Tensor<S> features_backward(const std::vector<Tensor<S>>& tap_grads) {
    Tensor<S> g = trunk_.backward_from_taps(tap_indices_, tap_grads);
    check(g.dim(0) == last_b_ && g.dim(1) == channels_,
          "no matching forward pass cached");
    Tensor<S> out({last_b_, last_h_, last_w_});
    const std::size_t hw = last_h_ * last_w_;
    for (std::size_t n = 0; n < last_b_; ++n)
      for (std::size_t c = 0; c < channels_; ++c) {
        const S* src = g.data() + (n * channels_ + c) * hw;
        S* dst = out.data() + n * hw;
        const S inv = S(1) / std_[c];
        for (std::size_t i = 0; i < hw; ++i) dst[i] += src[i] * inv;
      }
    return out;
  }

  /// Static per-image MAC count at the given geometry.
  std::uint64_t macs_per_image(std::size_t h, std::size_t w) const {
    return trunk_.macs({1, channels_, h, w});
  }

 private:
  void build_trunk() {
    const auto taps = spec_.resolved_taps();
    check(!taps.empty(), "extractor needs at least one tap");
    if (spec_.kind == ExtractorKind::pretrained_perceptual) {
      channels_ = 3;
      mean_ = {S(0.485), S(0.456), S(0.406)};
      std_ = {S(0.229), S(0.224), S(0.225)};
      trunk_.template add<nn::Conv2d<S>>(3, 64, 3, "conv1_1");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::Conv2d<S>>(64, 64, 3, "conv1_2");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::MaxPool2d<S>>();
      trunk_.template add<nn::Conv2d<S>>(64, 128, 3, "conv2_1");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::Conv2d<S>>(128, 128, 3, "conv2_2");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::MaxPool2d<S>>();
      trunk_.template add<nn::Conv2d<S>>(128, 256, 3, "conv3_1");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::Conv2d<S>>(256, 256, 3, "conv3_2");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::Conv2d<S>>(256, 256, 3, "conv3_3");
      trunk_.template add<nn::ReLU<S>>();
      for (const auto& t : taps)
        tap_indices_.push_back(detail::vgg_tap_index(t));
    } else {
      // Domain statistics of the Fashion-MNIST corpus. Normalizing inputs
      // with the extractor's own fixed mean/std mirrors the pretrained
      // branch and keeps feature magnitudes at unit scale.
      channels_ = 1;
      mean_ = {S(0.2860), S(0.2860), S(0.2860)};
      std_ = {S(0.3530), S(0.3530), S(0.3530)};
      trunk_.template add<nn::Conv2d<S>>(1, 16, 3, "c1");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::MaxPool2d<S>>();
      trunk_.template add<nn::Conv2d<S>>(16, 32, 3, "c2");
      trunk_.template add<nn::ReLU<S>>();
      trunk_.template add<nn::MaxPool2d<S>>();
      trunk_.template add<nn::Conv2d<S>>(32, 64, 3, "c3");
      trunk_.template add<nn::ReLU<S>>();
      for (const auto& t : taps) tap_indices_.push_back(plain_tap_index(t));
    }
  }

  Tensor<S> prepare(const ImageBatch<S>& batch) const {
    const std::size_t hw = batch.pixels();
    Tensor<S> x({batch.count, channels_, batch.height, batch.width});
    for (std::size_t n = 0; n < batch.count; ++n)
      for (std::size_t c = 0; c < channels_; ++c) {
        const S* src = batch.image(n);
        S* dst = x.data() + (n * channels_ + c) * hw;
        const S m = mean_[c], inv = S(1) / std_[c];
        for (std::size_t i = 0; i < hw; ++i) dst[i] = (src[i] - m) * inv;
      }
    return x;
  }

  FeatureExtractorSpec spec_;
  nn::Sequential<S> trunk_;
  std::vector<std::size_t> tap_indices_;
  std::size_t channels_ = 1;
  std::array<S, 3> mean_{};
  std::array<S, 3> std_{};
  bool pretrained_ = false;
  std::mutex lock_;
  std::size_t last_b_ = 0, last_h_ = 0, last_w_ = 0;
};

}  // namespace pise
