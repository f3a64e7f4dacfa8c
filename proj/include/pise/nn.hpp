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

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pise/binio.hpp"
#include "pise/common.hpp"
#include "pise/rng.hpp"
#include "pise/tensor.hpp"

namespace pise::nn {

// Minimal training-capable layer stack. Image activations use the
// (batch, channels, height, width) layout; dense activations use
// (batch, features). Convolutions run as im2col plus a GEMM. Each layer
// caches what its own backward pass needs, so the usage pattern is
// strictly forward-then-backward per batch, single writer.

template <class S>
struct ParamRef {
  std::string name;
  Tensor<S>* value = nullptr;
  Tensor<S>* grad = nullptr;
};

template <class S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<S> forward(const Tensor<S>& x) = 0;
  virtual Tensor<S> backward(const Tensor<S>& gy) = 0;
  virtual void collect_params(std::vector<ParamRef<S>>&) {}
  /// Output shape under static propagation (no data involved).
  virtual std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const = 0;
  /// Multiply-accumulate ops for one forward pass at the given input shape.
  /// Only GEMM-backed layers count; element-wise work is excluded.
  virtual std::uint64_t macs(const std::vector<std::size_t>& in) const {
    (void)in;
    return 0;
  }
  virtual std::string kind() const = 0;
};

template <class S>
inline void zero_grads(std::vector<ParamRef<S>>& params) {
  for (auto& p : params) p.grad->zero();
}

template <class S>
inline std::size_t parameter_count(const std::vector<ParamRef<S>>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

/// Order-sensitive content hash over parameter values, used to prove that
/// frozen models stay frozen. Values are hashed as float bit patterns.
template <class S>
inline std::uint64_t parameter_checksum(const std::vector<ParamRef<S>>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* bytes, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      float v = static_cast<float>((*p.value)[i]);
      mix(&v, sizeof(v));
    }
  }
  return h;
}

/// Fills a tensor with He-normal values: N(0, sqrt(2 / fan_in)).
template <class S>
inline void he_init(Tensor<S>& t, std::size_t fan_in, Rng& rng) {
  check(fan_in >= 1, "fan_in must be positive");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i)
    t[i] = static_cast<S>(rng.normal() * stddev);
}

// ---------------------------------------------------------------------------
// Convolution, k x k, stride 1, same padding (requires odd k).

template <class S>
class Conv2d : public Layer<S> {
 public:
  Conv2d(std::size_t cin, std::size_t cout, std::size_t k, std::string name)
      : cin_(cin),
        cout_(cout),
        k_(k),
        pad_(k / 2),
        name_(std::move(name)),
        weight_({cout, cin * k * k}),
        bias_({cout}),
        grad_weight_({cout, cin * k * k}),
        grad_bias_({cout}) {
    check(k % 2 == 1, "convolution kernel must be odd for same padding");
    check(cin >= 1 && cout >= 1, "channel counts must be positive");
  }

  void init(Rng& rng) { he_init(weight_, cin_ * k_ * k_, rng); bias_.zero(); }

  Tensor<S> forward(const Tensor<S>& x) override {
    check(x.rank() == 4 && x.dim(1) == cin_, "conv input shape mismatch");
    input_ = x;
    const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
    Tensor<S> y({b, cout_, h, w});
    Tensor<S> col({cin_ * k_ * k_, h * w});
    for (std::size_t i = 0; i < b; ++i) {
      im2col(x.data() + i * cin_ * h * w, h, w, col.data());
      auto cmat = col.as_matrix(cin_ * k_ * k_, h * w);
      auto wmat = weight_.as_matrix(cout_, cin_ * k_ * k_);
      typename Tensor<S>::MatrixMap ymat(y.data() + i * cout_ * h * w,
                                         Eigen::Index(cout_),
                                         Eigen::Index(h * w));
      ymat.noalias() = wmat * cmat;
      for (std::size_t c = 0; c < cout_; ++c)
        ymat.row(Eigen::Index(c)).array() += bias_[c];
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const std::size_t b = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
    check(gy.rank() == 4 && gy.dim(0) == b && gy.dim(1) == cout_ &&
              gy.dim(2) == h && gy.dim(3) == w,
          "conv gradient shape mismatch");
    Tensor<S> gx({b, cin_, h, w});
    Tensor<S> col({cin_ * k_ * k_, h * w});
    Tensor<S> dcol({cin_ * k_ * k_, h * w});
    auto wmat = weight_.as_matrix(cout_, cin_ * k_ * k_);
    auto gwmat = grad_weight_.as_matrix(cout_, cin_ * k_ * k_);
    for (std::size_t i = 0; i < b; ++i) {
      im2col(input_.data() + i * cin_ * h * w, h, w, col.data());
      auto cmat = col.as_matrix(cin_ * k_ * k_, h * w);
      typename Tensor<S>::ConstMatrixMap gymat(gy.data() + i * cout_ * h * w,
                                               Eigen::Index(cout_),
                                               Eigen::Index(h * w));
      gwmat.noalias() += gymat * cmat.transpose();
      for (std::size_t c = 0; c < cout_; ++c)
        grad_bias_[c] += static_cast<S>(gymat.row(Eigen::Index(c)).sum());
      auto dcmat = dcol.as_matrix(cin_ * k_ * k_, h * w);
      dcmat.noalias() = wmat.transpose() * gymat;
      col2im(dcol.data(), h, w, gx.data() + i * cin_ * h * w);
    }
    return gx;
  }

  void collect_params(std::vector<ParamRef<S>>& out) override {
    out.push_back({name_ + ".weight", &weight_, &grad_weight_});
    out.push_back({name_ + ".bias", &bias_, &grad_bias_});
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    return {in[0], cout_, in[2], in[3]};
  }

  std::uint64_t macs(const std::vector<std::size_t>& in) const override {
    return std::uint64_t(in[0]) * cout_ * cin_ * k_ * k_ * in[2] * in[3];
  }

  std::string kind() const override { return "conv2d"; }

  std::size_t in_channels() const { return cin_; }
  std::size_t out_channels() const { return cout_; }

 private:
  void im2col(const S* x, std::size_t h, std::size_t w, S* col) const {
    const std::ptrdiff_t ph = std::ptrdiff_t(pad_);
    std::size_t row = 0;
    for (std::size_t c = 0; c < cin_; ++c) {
      const S* plane = x + c * h * w;
      for (std::size_t di = 0; di < k_; ++di) {
        for (std::size_t dj = 0; dj < k_; ++dj, ++row) {
          S* dst = col + row * h * w;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = std::ptrdiff_t(y + di) - ph;
            if (sy < 0 || sy >= std::ptrdiff_t(h)) {
              std::fill(dst + y * w, dst + (y + 1) * w, S(0));
              continue;
            }
            const S* srow = plane + std::size_t(sy) * w;
            for (std::size_t xcol = 0; xcol < w; ++xcol) {
              const std::ptrdiff_t sx = std::ptrdiff_t(xcol + dj) - ph;
              dst[y * w + xcol] =
                  (sx < 0 || sx >= std::ptrdiff_t(w)) ? S(0) : srow[sx];
            }
          }
        }
      }
    }
  }

  void col2im(const S* col, std::size_t h, std::size_t w, S* gx) const {
    std::fill(gx, gx + cin_ * h * w, S(0));
    const std::ptrdiff_t ph = std::ptrdiff_t(pad_);
    std::size_t row = 0;
    for (std::size_t c = 0; c < cin_; ++c) {
      S* plane = gx + c * h * w;
      for (std::size_t di = 0; di < k_; ++di) {
        for (std::size_t dj = 0; dj < k_; ++dj, ++row) {
          const S* src = col + row * h * w;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = std::ptrdiff_t(y + di) - ph;
            if (sy < 0 || sy >= std::ptrdiff_t(h)) continue;
            S* drow = plane + std::size_t(sy) * w;
            for (std::size_t xcol = 0; xcol < w; ++xcol) {
              const std::ptrdiff_t sx = std::ptrdiff_t(xcol + dj) - ph;
              if (sx >= 0 && sx < std::ptrdiff_t(w))
                drow[sx] += src[y * w + xcol];
            }
          }
        }
      }
    }
  }

  std::size_t cin_, cout_, k_, pad_;
  std::string name_;
  Tensor<S> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<S> input_;
};

// ---------------------------------------------------------------------------
// Fully connected layer on (batch, features) activations.

template <class S>
class Dense : public Layer<S> {
 public:
  Dense(std::size_t in, std::size_t out, std::string name)
      : in_(in),
        out_(out),
        name_(std::move(name)),
        weight_({out, in}),
        bias_({out}),
        grad_weight_({out, in}),
        grad_bias_({out}) {
    check(in >= 1 && out >= 1, "dense dimensions must be positive");
  }

  void init(Rng& rng) { he_init(weight_, in_, rng); bias_.zero(); }

  Tensor<S> forward(const Tensor<S>& x) override {
    check(x.rank() == 2 && x.dim(1) == in_, "dense input shape mismatch");
    input_ = x;
    const std::size_t b = x.dim(0);
    Tensor<S> y({b, out_});
    auto xmat = x.as_matrix(b, in_);
    auto wmat = weight_.as_matrix(out_, in_);
    auto ymat = y.as_matrix(b, out_);
    ymat.noalias() = xmat * wmat.transpose();
    for (std::size_t c = 0; c < out_; ++c)
      ymat.col(Eigen::Index(c)).array() += bias_[c];
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    const std::size_t b = input_.dim(0);
    check(gy.rank() == 2 && gy.dim(0) == b && gy.dim(1) == out_,
          "dense gradient shape mismatch");
    auto xmat = input_.as_matrix(b, in_);
    auto gymat = gy.as_matrix(b, out_);
    auto gwmat = grad_weight_.as_matrix(out_, in_);
    gwmat.noalias() += gymat.transpose() * xmat;
    for (std::size_t c = 0; c < out_; ++c)
      grad_bias_[c] += static_cast<S>(gymat.col(Eigen::Index(c)).sum());
    Tensor<S> gx({b, in_});
    auto wmat = weight_.as_matrix(out_, in_);
    gx.as_matrix(b, in_).noalias() = gymat * wmat;
    return gx;
  }

  void collect_params(std::vector<ParamRef<S>>& out) override {
    out.push_back({name_ + ".weight", &weight_, &grad_weight_});
    out.push_back({name_ + ".bias", &bias_, &grad_bias_});
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    return {in[0], out_};
  }

  std::uint64_t macs(const std::vector<std::size_t>& in) const override {
    return std::uint64_t(in[0]) * in_ * out_;
  }

  std::string kind() const override { return "dense"; }

 private:
  std::size_t in_, out_;
  std::string name_;
  Tensor<S> weight_, bias_, grad_weight_, grad_bias_;
  Tensor<S> input_;
};

// ---------------------------------------------------------------------------
// Element-wise activations.

template <class S>
class ReLU : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x) override {
    mask_.assign(x.size(), 0);
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] > S(0))
        mask_[i] = 1;
      else
        y[i] = S(0);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    check(gy.size() == mask_.size(), "relu gradient shape mismatch");
    Tensor<S> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (!mask_[i]) gx[i] = S(0);
    return gx;
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }

  std::string kind() const override { return "relu"; }

 private:
  std::vector<unsigned char> mask_;
};

template <class S>
class Sigmoid : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x) override {
    Tensor<S> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double v = static_cast<double>(y[i]);
      y[i] = static_cast<S>(1.0 / (1.0 + std::exp(-v)));
    }
    output_ = y;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    check(gy.size() == output_.size(), "sigmoid gradient shape mismatch");
    Tensor<S> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const S s = output_[i];
      gx[i] = gy[i] * s * (S(1) - s);
    }
    return gx;
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    return in;
  }

  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor<S> output_;
};

// ---------------------------------------------------------------------------
// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped.

template <class S>
class MaxPool2d : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x) override {
    check(x.rank() == 4, "pool input must be 4D");
    in_shape_ = x.shape();
    const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    check(oh >= 1 && ow >= 1, "pool input too small");
    Tensor<S> y({b, c, oh, ow});
    argmax_.assign(y.size(), 0);
    for (std::size_t bc = 0; bc < b * c; ++bc) {
      const S* plane = x.data() + bc * h * w;
      S* out = y.data() + bc * oh * ow;
      std::size_t* arg = argmax_.data() + bc * oh * ow;
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = (2 * i) * w + 2 * j;
          S bv = plane[best];
          const std::size_t cands[3] = {(2 * i) * w + 2 * j + 1,
                                        (2 * i + 1) * w + 2 * j,
                                        (2 * i + 1) * w + 2 * j + 1};
          for (std::size_t cand : cands) {
            if (plane[cand] > bv) {
              bv = plane[cand];
              best = cand;
            }
          }
          out[i * ow + j] = bv;
          arg[i * ow + j] = bc * h * w + best;
        }
      }
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    check(gy.size() == argmax_.size(), "pool gradient shape mismatch");
    Tensor<S> gx(in_shape_);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax_[i]] += gy[i];
    return gx;
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    return {in[0], in[1], in[2] / 2, in[3] / 2};
  }

  std::string kind() const override { return "maxpool2d"; }

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

// ---------------------------------------------------------------------------
// Rank adapter between image and dense activations.

template <class S>
class Flatten : public Layer<S> {
 public:
  Tensor<S> forward(const Tensor<S>& x) override {
    check(x.rank() >= 2, "flatten input must have a batch axis");
    in_shape_ = x.shape();
    Tensor<S> y = x;
    y.reshape({x.dim(0), x.size() / x.dim(0)});
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gy) override {
    Tensor<S> gx = gy;
    gx.reshape(in_shape_);
    return gx;
  }

  std::vector<std::size_t> out_shape(
      const std::vector<std::size_t>& in) const override {
    std::size_t n = 1;
    for (std::size_t i = 1; i < in.size(); ++i) n *= in[i];
    return {in[0], n};
  }

  std::string kind() const override { return "flatten"; }

 private:
  std::vector<std::size_t> in_shape_;
};

// ---------------------------------------------------------------------------
// Free-function nearest-neighbour resize and channel concat, used by the
// U-Net wiring (they carry no parameters and need explicit targets).

template <class S>
inline Tensor<S> resize_nearest(const Tensor<S>& x, std::size_t oh,
                                std::size_t ow) {
  check(x.rank() == 4, "resize input must be 4D");
  const std::size_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<S> y({b, c, oh, ow});
  for (std::size_t bc = 0; bc < b * c; ++bc) {
    const S* in = x.data() + bc * h * w;
    S* out = y.data() + bc * oh * ow;
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t si = i * h / oh;
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t sj = j * w / ow;
        out[i * ow + j] = in[si * w + sj];
      }
    }
  }
  return y;
}

template <class S>
inline Tensor<S> resize_nearest_backward(const Tensor<S>& gy, std::size_t h,
                                         std::size_t w) {
  check(gy.rank() == 4, "resize gradient must be 4D");
  const std::size_t b = gy.dim(0), c = gy.dim(1), oh = gy.dim(2),
                    ow = gy.dim(3);
  Tensor<S> gx({b, c, h, w});
  for (std::size_t bc = 0; bc < b * c; ++bc) {
    const S* in = gy.data() + bc * oh * ow;
    S* out = gx.data() + bc * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      const std::size_t si = i * h / oh;
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t sj = j * w / ow;
        out[si * w + sj] += in[i * ow + j];
      }
    }
  }
  return gx;
}

template <class S>
inline Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  check(a.rank() == 4 && b.rank() == 4, "concat inputs must be 4D");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
        "concat inputs must agree on batch and spatial dims");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2),
                    w = a.dim(3);
  Tensor<S> y({n, ca + cb, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * h * w, ca * h * w,
                y.data() + i * (ca + cb) * h * w);
    std::copy_n(b.data() + i * cb * h * w, cb * h * w,
                y.data() + i * (ca + cb) * h * w + ca * h * w);
  }
  return y;
}

template <class S>
inline std::pair<Tensor<S>, Tensor<S>> split_channels(const Tensor<S>& gy,
                                                      std::size_t ca,
                                                      std::size_t cb) {
  check(gy.rank() == 4 && gy.dim(1) == ca + cb, "split shape mismatch");
  const std::size_t n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
  Tensor<S> ga({n, ca, h, w}), gb({n, cb, h, w});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(gy.data() + i * (ca + cb) * h * w, ca * h * w,
                ga.data() + i * ca * h * w);
    std::copy_n(gy.data() + i * (ca + cb) * h * w + ca * h * w, cb * h * w,
                gb.data() + i * cb * h * w);
  }
  return {std::move(ga), std::move(gb)};
}

// ---------------------------------------------------------------------------
// Linear chain of layers with tap access for feature extraction.

template <class S>
class Sequential {
 public:
  Sequential() = default;

  template <class L, class... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  std::size_t size() const { return layers_.size(); }
  Layer<S>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<S>& layer(std::size_t i) const { return *layers_[i]; }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> cur = x;
    for (auto& l : layers_) cur = l->forward(cur);
    return cur;
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> cur = gy;
    for (std::size_t i = layers_.size(); i-- > 0;)
      cur = layers_[i]->backward(cur);
    return cur;
  }

  /// Forward pass that also returns the outputs of the listed layers
  /// (0-based indices into the chain), in the order given.
  Tensor<S> forward_with_taps(const Tensor<S>& x,
                              const std::vector<std::size_t>& taps,
                              std::vector<Tensor<S>>& tap_outputs) {
    tap_outputs.clear();
    tap_outputs.resize(taps.size());
    Tensor<S> cur = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      cur = layers_[i]->forward(cur);
      for (std::size_t t = 0; t < taps.size(); ++t)
        if (taps[t] == i) tap_outputs[t] = cur;
    }
    return cur;
  }

  /// Backward from gradients injected at tap outputs. Propagation starts at
  /// the deepest tap; layers above it never run. Requires a prior
  /// forward_with_taps covering at least the deepest tap.
  Tensor<S> backward_from_taps(const std::vector<std::size_t>& taps,
                               const std::vector<Tensor<S>>& tap_grads) {
    check(!taps.empty() && taps.size() == tap_grads.size(),
          "tap gradients must align with tap indices");
    std::size_t deepest = 0;
    for (std::size_t t : taps) deepest = std::max(deepest, t);
    Tensor<S> cur;
    bool live = false;
    for (std::size_t i = deepest + 1; i-- > 0;) {
      for (std::size_t t = 0; t < taps.size(); ++t) {
        if (taps[t] != i) continue;
        if (!live) {
          cur = tap_grads[t];
          live = true;
        } else {
          check(cur.same_shape(tap_grads[t]), "tap gradient shape mismatch");
          for (std::size_t e = 0; e < cur.size(); ++e)
            cur[e] += tap_grads[t][e];
        }
      }
      cur = layers_[i]->backward(cur);
    }
    return cur;
  }

  void collect_params(std::vector<ParamRef<S>>& out) {
    for (auto& l : layers_) l->collect_params(out);
  }

  std::vector<ParamRef<S>> params() {
    std::vector<ParamRef<S>> out;
    collect_params(out);
    return out;
  }

  std::vector<std::size_t> out_shape(std::vector<std::size_t> in) const {
    for (const auto& l : layers_) in = l->out_shape(in);
    return in;
  }

  std::uint64_t macs(std::vector<std::size_t> in) const {
    std::uint64_t total = 0;
    for (const auto& l : layers_) {
      total += l->macs(in);
      in = l->out_shape(in);
    }
    return total;
  }

 private:
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// ---------------------------------------------------------------------------
// Parameter serialization: magic "PISW", u16 version, u32 tensor count,
// then per tensor: u16 name length, name bytes, u8 rank, u32 dims,
// float32 little-endian payload.

inline constexpr char kWeightsMagic[5] = "PISW";
inline constexpr std::uint16_t kWeightsFormatVersion = 1;

template <class S>
inline void save_parameters(std::ostream& os,
                            const std::vector<ParamRef<S>>& params) {
  binio::write_magic(os, kWeightsMagic);
  binio::write_le<std::uint16_t>(os, kWeightsFormatVersion);
  binio::write_le<std::uint32_t>(os, std::uint32_t(params.size()));
  for (const auto& p : params) {
    check(p.name.size() < 65536, "parameter name too long");
    binio::write_le<std::uint16_t>(os, std::uint16_t(p.name.size()));
    os.write(p.name.data(), std::streamsize(p.name.size()));
    binio::write_le<std::uint8_t>(os, std::uint8_t(p.value->rank()));
    for (std::size_t d = 0; d < p.value->rank(); ++d)
      binio::write_le<std::uint32_t>(os, std::uint32_t(p.value->dim(d)));
    for (std::size_t i = 0; i < p.value->size(); ++i)
      binio::write_le<float>(os, static_cast<float>((*p.value)[i]));
  }
  if (!os) throw IoError("failed writing parameter stream");
}

template <class S>
inline void save_parameters(const std::string& path,
                            const std::vector<ParamRef<S>>& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  save_parameters(os, params);
}

/// Loads a parameter stream into an existing registry. Names, order, and
/// shapes must match the registry exactly.
template <class S>
inline void load_parameters(std::istream& is,
                            std::vector<ParamRef<S>>& params) {
  binio::expect_magic(is, kWeightsMagic, "parameter stream");
  const auto version = binio::read_le<std::uint16_t>(is);
  if (version != kWeightsFormatVersion)
    throw IoError("unsupported weights format version");
  const auto count = binio::read_le<std::uint32_t>(is);
  if (count != params.size())
    throw IoError("weights tensor count mismatch");
  for (auto& p : params) {
    const auto name_len = binio::read_le<std::uint16_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is || name != p.name)
      throw IoError("weights name mismatch: expected " + p.name);
    const auto rank = binio::read_le<std::uint8_t>(is);
    if (rank != p.value->rank()) throw IoError("weights rank mismatch");
    for (std::size_t d = 0; d < rank; ++d) {
      const auto dim = binio::read_le<std::uint32_t>(is);
      if (dim != p.value->dim(d))
        throw IoError("weights shape mismatch on " + p.name);
    }
    for (std::size_t i = 0; i < p.value->size(); ++i)
      (*p.value)[i] = static_cast<S>(binio::read_le<float>(is));
  }
}

template <class S>
inline void load_parameters(const std::string& path,
                            std::vector<ParamRef<S>>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  load_parameters(is, params);
}

}  // namespace pise::nn
