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
#include <vector>

#include "pise/nn.hpp"

namespace pise {

/// Encoder-decoder with skip connections and a sigmoid head. `depth` is the
/// number of 2x2 poolings; channel width doubles per level starting from
/// `base_width`. The decoder upsamples by nearest-neighbour resize to the
/// exact skip geometry, so odd spatial sizes round-trip correctly.
template <class S>
class UNet {
 public:
  UNet(std::size_t depth, std::size_t base_width, std::size_t in_channels = 1)
      : depth_(depth), base_(base_width), in_channels_(in_channels) {
    check(depth >= 1, "unet depth must be at least 1");
    check(base_width >= 1, "unet base width must be at least 1");
    std::size_t cin = in_channels;
    for (std::size_t i = 0; i < depth_; ++i) {
      const std::size_t c = base_ << i;
      enc_.push_back(make_block(cin, c, "enc" + std::to_string(i)));
      pool_.push_back(std::make_unique<nn::MaxPool2d<S>>());
      cin = c;
    }
    const std::size_t cb = base_ << depth_;
    bottleneck_ = make_block(cin, cb, "bottleneck");
    for (std::size_t i = depth_; i-- > 0;) {
      const std::size_t c = base_ << i;
      const std::size_t deeper = base_ << (i + 1);
      dec_.push_back(make_block(deeper + c, c, "dec" + std::to_string(i)));
    }
    head_ = std::make_unique<nn::Conv2d<S>>(base_, 1, 1, "head");
  }

  std::size_t depth() const { return depth_; }
  std::size_t base_width() const { return base_; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "unet_init"));
    for (auto& b : enc_) init_block(*b, rng);
    init_block(*bottleneck_, rng);
    for (auto& b : dec_) init_block(*b, rng);
    head_->init(rng);
  }

  /// x: (B, in_channels, H, W) with H, W surviving `depth` halvings.
  Tensor<S> forward(const Tensor<S>& x) {
    check(x.rank() == 4 && x.dim(1) == in_channels_,
          "unet input must be (B, C, H, W)");
    check((x.dim(2) >> depth_) >= 1 && (x.dim(3) >> depth_) >= 1,
          "unet input too small for its depth");
    skip_h_.assign(depth_, 0);
    skip_w_.assign(depth_, 0);
    skip_c_.assign(depth_, 0);
    Tensor<S> cur = x;
    std::vector<Tensor<S>> skips(depth_);
    for (std::size_t i = 0; i < depth_; ++i) {
      cur = run_block(*enc_[i], cur);
      skips[i] = cur;
      skip_h_[i] = cur.dim(2);
      skip_w_[i] = cur.dim(3);
      skip_c_[i] = cur.dim(1);
      cur = pool_[i]->forward(cur);
    }
    inner_h_.assign(depth_, 0);
    inner_w_.assign(depth_, 0);
    cur = run_block(*bottleneck_, cur);
    for (std::size_t d = 0; d < depth_; ++d) {
      const std::size_t i = depth_ - 1 - d;
      inner_h_[i] = cur.dim(2);
      inner_w_[i] = cur.dim(3);
      Tensor<S> up = nn::resize_nearest(cur, skip_h_[i], skip_w_[i]);
      cur = run_block(*dec_[d], nn::concat_channels(up, skips[i]));
    }
    Tensor<S> logits = head_->forward(cur);
    return out_act_.forward(logits);
  }

  /// Gradient with respect to the input; parameter gradients accumulate
  /// into the registries returned by params().
  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = out_act_.backward(gy);
    g = head_->backward(g);
    std::vector<Tensor<S>> skip_grads(depth_);
    for (std::size_t d = depth_; d-- > 0;) {
      const std::size_t i = depth_ - 1 - d;
      g = back_block(*dec_[d], g);
      auto [gup, gskip] = nn::split_channels(g, base_ << (i + 1), skip_c_[i]);
      skip_grads[i] = std::move(gskip);
      g = nn::resize_nearest_backward(gup, inner_h_[i], inner_w_[i]);
    }
    g = back_block(*bottleneck_, g);
    for (std::size_t i = depth_; i-- > 0;) {
      g = pool_[i]->backward(g);
      for (std::size_t e = 0; e < g.size(); ++e) g[e] += skip_grads[i][e];
      g = back_block(*enc_[i], g);
    }
    return g;
  }

  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> out;
    for (auto& b : enc_) collect_block(*b, out);
    collect_block(*bottleneck_, out);
    for (auto& b : dec_) collect_block(*b, out);
    head_->collect_params(out);
    return out;
  }

  /// Static multiply-accumulate count for one image at the given geometry.
  std::uint64_t macs_per_image(std::size_t h, std::size_t w) const {
    std::uint64_t total = 0;
    std::vector<std::size_t> shape = {1, in_channels_, h, w};
    std::vector<std::pair<std::size_t, std::size_t>> skip_hw(depth_);
    for (std::size_t i = 0; i < depth_; ++i) {
      total += block_macs(*enc_[i], shape);
      skip_hw[i] = {shape[2], shape[3]};
      shape = pool_[i]->out_shape(shape);
    }
    total += block_macs(*bottleneck_, shape);
    shape[1] = base_ << depth_;
    for (std::size_t d = 0; d < depth_; ++d) {
      const std::size_t i = depth_ - 1 - d;
      shape[2] = skip_hw[i].first;
      shape[3] = skip_hw[i].second;
      shape[1] = (base_ << (i + 1)) + (base_ << i);
      total += block_macs(*dec_[d], shape);
      shape[1] = base_ << i;
    }
    total += head_->macs(shape);
    return total;
  }

 private:
  struct Block {
    std::unique_ptr<nn::Conv2d<S>> c1, c2;
    nn::ReLU<S> r1, r2;
  };

  std::unique_ptr<Block> make_block(std::size_t cin, std::size_t cout,
                                    const std::string& name) {
    auto b = std::make_unique<Block>();
    b->c1 = std::make_unique<nn::Conv2d<S>>(cin, cout, 3, name + ".c1");
    b->c2 = std::make_unique<nn::Conv2d<S>>(cout, cout, 3, name + ".c2");
    return b;
  }

  static void init_block(Block& b, Rng& rng) {
    b.c1->init(rng);
    b.c2->init(rng);
  }

  static Tensor<S> run_block(Block& b, const Tensor<S>& x) {
    return b.r2.forward(b.c2->forward(b.r1.forward(b.c1->forward(x))));
  }

  static Tensor<S> back_block(Block& b, const Tensor<S>& g) {
    return b.c1->backward(b.r1.backward(b.c2->backward(b.r2.backward(g))));
  }

  static void collect_block(Block& b, std::vector<nn::ParamRef<S>>& out) {
    b.c1->collect_params(out);
    b.c2->collect_params(out);
  }

  static std::uint64_t block_macs(const Block& b,
                                  std::vector<std::size_t>& shape) {
    std::uint64_t total = b.c1->macs(shape);
    shape = b.c1->out_shape(shape);
    total += b.c2->macs(shape);
    shape = b.c2->out_shape(shape);
    return total;
  }

  std::size_t depth_, base_, in_channels_;
  std::vector<std::unique_ptr<Block>> enc_;
  std::vector<std::unique_ptr<nn::MaxPool2d<S>>> pool_;
  std::unique_ptr<Block> bottleneck_;
  std::vector<std::unique_ptr<Block>> dec_;  // deepest level first
  std::unique_ptr<nn::Conv2d<S>> head_;
  nn::Sigmoid<S> out_act_;

  std::vector<std::size_t> skip_h_, skip_w_, skip_c_;
  std::vector<std::size_t> inner_h_, inner_w_;
};

}  // namespace pise
