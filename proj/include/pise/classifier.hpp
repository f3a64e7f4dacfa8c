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

#include <json.hpp>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pise/adam.hpp"
#include "pise/dataset.hpp"
#include "pise/nn.hpp"
#include "pise/rng.hpp"

namespace pise {

// Frozen evaluation classifiers. Two desk-scale architectures are provided:
// a plain CNN whose trunk doubles as the domain feature extractor, and a
// small residual CNN. Both consume single-channel images in [0,1] with no
// further input normalization; evaluation callers clamp reconstructions to
// [0,1] to match.

enum class ClassifierArch { plain_cnn, resnet_small };

inline const char* to_string(ClassifierArch a) {
  return a == ClassifierArch::plain_cnn ? "plain_cnn" : "resnet_small";
}

inline ClassifierArch classifier_arch_from_string(const std::string& s) {
  if (s == "plain_cnn") return ClassifierArch::plain_cnn;
  if (s == "resnet_small") return ClassifierArch::resnet_small;
  throw InvalidArgument("unknown classifier architecture: " + s);
}

template <class S>
struct SoftmaxCE {
  double loss = 0.0;
  Tensor<S> dlogits;
};

/// Mean cross-entropy over the batch with a stable log-sum-exp, plus the
/// gradient (softmax minus one-hot, divided by the batch size).
template <class S>
inline SoftmaxCE<S> softmax_cross_entropy(const Tensor<S>& logits,
                                          const std::vector<int>& labels) {
  check(logits.rank() == 2, "logits must be (batch, classes)");
  const std::size_t b = logits.dim(0), c = logits.dim(1);
  check(labels.size() == b, "label count must match the batch");
  SoftmaxCE<S> out;
  out.dlogits = Tensor<S>({b, c});
  double total = 0.0;
  for (std::size_t n = 0; n < b; ++n) {
    const S* row = logits.data() + n * c;
    check(labels[n] >= 0 && std::size_t(labels[n]) < c,
          "label outside the class range");
    double mx = static_cast<double>(row[0]);
    for (std::size_t j = 1; j < c; ++j)
      mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      sum += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - static_cast<double>(row[std::size_t(labels[n])]);
    for (std::size_t j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(row[j]) - lse);
      if (j == std::size_t(labels[n])) p -= 1.0;
      out.dlogits[n * c + j] = static_cast<S>(p / double(b));
    }
  }
  out.loss = total / double(b);
  return out;
}

// ---------------------------------------------------------------------------
// Residual variant: stem, two residual blocks with a projection between,
// pooled twice, then a linear head.

template <class S>
class ResidualNet {
 public:
  ResidualNet(std::size_t classes, std::size_t h, std::size_t w)
      : stem_(1, 16, 3, "stem"),
        a1_(16, 16, 3, "a1"),
        a2_(16, 16, 3, "a2"),
        proj_(16, 32, 3, "proj"),
        b1_(32, 32, 3, "b1"),
        b2_(32, 32, 3, "b2"),
        fc_(32 * (h / 4) * (w / 4), classes, "fc") {
    check(h / 4 >= 1 && w / 4 >= 1, "input too small for two poolings");
  }

  void init(Rng& rng) {
    stem_.init(rng);
    a1_.init(rng);
    a2_.init(rng);
    proj_.init(rng);
    b1_.init(rng);
    b2_.init(rng);
    fc_.init(rng);
  }

  Tensor<S> forward(const Tensor<S>& x) {
    Tensor<S> s = r_stem_.forward(stem_.forward(x));
    Tensor<S> t = a2_.forward(r_a_.forward(a1_.forward(s)));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += s[i];
    t = pool1_.forward(r_add1_.forward(t));
    t = r_proj_.forward(proj_.forward(t));
    Tensor<S> u = b2_.forward(r_b_.forward(b1_.forward(t)));
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += t[i];
    u = pool2_.forward(r_add2_.forward(u));
    u = flat_.forward(u);
    return fc_.forward(u);
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    Tensor<S> g = flat_.backward(fc_.backward(gy));
    g = r_add2_.backward(pool2_.backward(g));
    Tensor<S> branch = b1_.backward(r_b_.backward(b2_.backward(g)));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += branch[i];
    g = proj_.backward(r_proj_.backward(g));
    g = r_add1_.backward(pool1_.backward(g));
    branch = a1_.backward(r_a_.backward(a2_.backward(g)));
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += branch[i];
    return stem_.backward(r_stem_.backward(g));
  }

  void collect_params(std::vector<nn::ParamRef<S>>& out) {
    stem_.collect_params(out);
    a1_.collect_params(out);
    a2_.collect_params(out);
    proj_.collect_params(out);
    b1_.collect_params(out);
    b2_.collect_params(out);
    fc_.collect_params(out);
  }

  std::uint64_t macs_per_image(std::size_t h, std::size_t w) const {
    std::vector<std::size_t> shape = {1, 1, h, w};
    std::uint64_t total = stem_.macs(shape);
    shape = stem_.out_shape(shape);
    total += a1_.macs(shape) + a2_.macs(shape);
    shape = pool1_.out_shape(shape);
    total += proj_.macs(shape);
    shape = proj_.out_shape(shape);
    total += b1_.macs(shape) + b2_.macs(shape);
    shape = pool2_.out_shape(shape);
    std::size_t flat = shape[1] * shape[2] * shape[3];
    total += fc_.macs({1, flat});
    return total;
  }

 private:
  nn::Conv2d<S> stem_, a1_, a2_, proj_, b1_, b2_;
  nn::Dense<S> fc_;
  nn::ReLU<S> r_stem_, r_a_, r_add1_, r_proj_, r_b_, r_add2_;
  nn::MaxPool2d<S> pool1_, pool2_;
  nn::Flatten<S> flat_;
};

// ---------------------------------------------------------------------------

template <class S>
class ClassifierNet {
 public:
  ClassifierNet(ClassifierArch arch, std::size_t classes, std::size_t h,
                std::size_t w)
      : arch_(arch), classes_(classes), height_(h), width_(w) {
    check(classes >= 2, "need at least two classes");
    if (arch == ClassifierArch::plain_cnn) {
      plain_ = std::make_unique<nn::Sequential<S>>();
      plain_->template add<nn::Conv2d<S>>(1, 16, 3, "c1");
      plain_->template add<nn::ReLU<S>>();  // tap relu1, index 1
      plain_->template add<nn::MaxPool2d<S>>();
      plain_->template add<nn::Conv2d<S>>(16, 32, 3, "c2");
      plain_->template add<nn::ReLU<S>>();  // tap relu2, index 4
      plain_->template add<nn::MaxPool2d<S>>();
      plain_->template add<nn::Conv2d<S>>(32, 64, 3, "c3");
      plain_->template add<nn::ReLU<S>>();  // tap relu3, index 7
      plain_->template add<nn::Flatten<S>>();
      plain_->template add<nn::Dense<S>>(64 * (h / 4) * (w / 4), classes, "fc");
    } else {
      res_ = std::make_unique<ResidualNet<S>>(classes, h, w);
    }
  }

  ClassifierArch arch() const { return arch_; }
  std::size_t classes() const { return classes_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }

  void init(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "classifier_init"));
    if (plain_) {
      for (std::size_t i = 0; i < plain_->size(); ++i) {
        if (auto* c = dynamic_cast<nn::Conv2d<S>*>(&plain_->layer(i)))
          c->init(rng);
        else if (auto* d = dynamic_cast<nn::Dense<S>*>(&plain_->layer(i)))
          d->init(rng);
      }
    } else {
      res_->init(rng);
    }
  }

  Tensor<S> forward(const Tensor<S>& x) {
    check(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == height_ &&
              x.dim(3) == width_,
          "classifier input geometry mismatch");
    return plain_ ? plain_->forward(x) : res_->forward(x);
  }

  Tensor<S> backward(const Tensor<S>& gy) {
    return plain_ ? plain_->backward(gy) : res_->backward(gy);
  }

  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> out;
    if (plain_)
      plain_->collect_params(out);
    else
      res_->collect_params(out);
    return out;
  }

  std::uint64_t macs_per_image() const {
    if (plain_) return plain_->macs({1, 1, height_, width_});
    return res_->macs_per_image(height_, width_);
  }

  /// Plain-architecture trunk access for the domain feature extractor.
  nn::Sequential<S>& plain_net() {
    check(plain_ != nullptr,
          "feature taps require the plain_cnn classifier architecture");
    return *plain_;
  }
  bool is_plain() const { return plain_ != nullptr; }

 private:
  ClassifierArch arch_;
  std::size_t classes_, height_, width_;
  std::unique_ptr<nn::Sequential<S>> plain_;
  std::unique_ptr<ResidualNet<S>> res_;
};

/// Layer indices of the named taps inside the plain classifier trunk.
inline std::size_t plain_tap_index(const std::string& name) {
  if (name == "relu1") return 1;
  if (name == "relu2") return 4;
  if (name == "relu3") return 7;
  throw InvalidArgument("tap point not present in the network: " + name);
}

// ---------------------------------------------------------------------------

/// Frozen classifier with its freeze-time accuracy. Copyable; all copies
/// share one network and serialize inference through a shared mutex, so
/// concurrent reads are safe.
struct ClassifierHandle {
  ClassifierArch arch = ClassifierArch::plain_cnn;
  std::string dataset_tag;
  bool frozen = false;
  double freeze_accuracy = 0.0;
  std::uint64_t seed = 0;
  std::shared_ptr<ClassifierNet<float>> net;
  std::shared_ptr<std::mutex> lock = std::make_shared<std::mutex>();
};

struct Classification {
  std::vector<int> labels;
  Tensor<float> scores;  // (batch, classes) logits
};

namespace detail {

/// Forward a labeled batch in chunks, returning logits. The caller holds
/// the handle's lock when the net is shared.
inline Tensor<float> classifier_logits(ClassifierNet<float>& net,
                                       const ImageBatch<float>& batch) {
  const std::size_t b = batch.count, hw = batch.pixels();
  Tensor<float> scores({b, net.classes()});
  if (b == 0) return scores;
  const std::size_t chunk = 256;
  for (std::size_t start = 0; start < b; start += chunk) {
    const std::size_t n = std::min(chunk, b - start);
    Tensor<float> x({n, 1, batch.height, batch.width});
    std::copy_n(batch.values.data() + start * hw, n * hw, x.data());
    Tensor<float> logits = net.forward(x);
    std::copy_n(logits.data(), n * net.classes(),
                scores.data() + start * net.classes());
  }
  return scores;
}

}  // namespace detail

/// Deterministic labels plus per-class scores for a batch. Empty batches
/// yield empty results.
inline Classification classify(const ClassifierHandle& handle,
                               const ImageBatch<float>& batch) {
  check(handle.net != nullptr, "classifier handle is empty");
  if (batch.count > 0)
    check(batch.height == handle.net->height() &&
              batch.width == handle.net->width(),
          "batch geometry does not match the classifier");
  std::lock_guard<std::mutex> guard(*handle.lock);
  Classification out;
  out.scores = detail::classifier_logits(*handle.net, batch);
  const std::size_t c = handle.net->classes();
  out.labels.reserve(batch.count);
  for (std::size_t n = 0; n < batch.count; ++n) {
    const float* row = out.scores.data() + n * c;
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;
    out.labels.push_back(int(best));
  }
  return out;
}

namespace detail {

inline double fraction_correct(const std::vector<int>& predicted,
                               const std::vector<int>& truth) {
  check(predicted.size() == truth.size(), "label count mismatch");
  check(!predicted.empty(), "empty evaluation batch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return double(hits) / double(predicted.size());
}

}  // namespace detail

struct TrainClassifierOptions {
  std::size_t epochs = 3;
  std::size_t batch = 128;
  double lr = 1e-3;
  std::string dataset_tag = "unknown";
};

/// Trains on clean labeled images, then freezes and records clean test
/// accuracy. Deterministic in (seed, data, options).
inline ClassifierHandle train_classifier(
    const LabeledImages& train, const LabeledImages& test, ClassifierArch arch,
    std::uint64_t seed, const TrainClassifierOptions& opt = {}) {
  check(!train.labels.empty(), "dataset is missing labels");
  check(train.labels.size() == train.images.count,
        "training labels misaligned with images");
  check(!test.labels.empty() && test.labels.size() == test.images.count,
        "test labels misaligned with images");
  const std::size_t h = train.images.height, w = train.images.width;
  std::size_t classes = 0;
  for (int l : train.labels) {
    check(l >= 0, "negative label");
    classes = std::max(classes, std::size_t(l) + 1);
  }
  classes = std::max<std::size_t>(classes, 2);

  auto net = std::make_shared<ClassifierNet<float>>(arch, classes, h, w);
  net->init(seed);
  auto params = net->params();
  Adam<float> opt_state(params, opt.lr);

  const std::size_t n = train.images.count, hw = h * w;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, "classifier_epoch", epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += opt.batch) {
      const std::size_t b = std::min(opt.batch, n - start);
      Tensor<float> x({b, 1, h, w});
      std::vector<int> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        std::copy_n(train.images.image(order[start + i]), hw,
                    x.data() + i * hw);
        y[i] = train.labels[order[start + i]];
      }
      Tensor<float> logits = net->forward(x);
      SoftmaxCE<float> ce = softmax_cross_entropy(logits, y);
      nn::zero_grads(params);
      net->backward(ce.dlogits);
      opt_state.step(params);
    }
  }

  ClassifierHandle handle;
  handle.arch = arch;
  handle.dataset_tag = opt.dataset_tag;
  handle.seed = seed;
  handle.net = net;
  Classification cls = classify(handle, test.images);
  handle.freeze_accuracy = detail::fraction_correct(cls.labels, test.labels);
  handle.frozen = true;
  return handle;
}

// ---------------------------------------------------------------------------
// Checkpointing: weights stream plus a JSON sidecar at <path>.json.

inline void save_classifier(const ClassifierHandle& handle,
                            const std::string& path) {
  check(handle.net != nullptr, "classifier handle is empty");
  auto params = handle.net->params();
  nn::save_parameters(path, params);
  nlohmann::json side = {
      {"format", "pise-classifier"},
      {"format_version", 1},
      {"arch", to_string(handle.arch)},
      {"dataset", handle.dataset_tag},
      {"seed", handle.seed},
      {"classes", handle.net->classes()},
      {"height", handle.net->height()},
      {"width", handle.net->width()},
      {"frozen", handle.frozen},
      {"freeze_accuracy", handle.freeze_accuracy},
      {"parameter_count", nn::parameter_count(params)}};
  std::ofstream out(path + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + path + ".json");
  out << side.dump(2) << '\n';
}

inline ClassifierHandle load_classifier(const std::string& path) {
  nlohmann::json side;
  {
    std::ifstream in(path + ".json");
    if (!in) throw IoError("missing classifier sidecar " + path + ".json");
    in >> side;
  }
  if (side.value("format", "") != "pise-classifier")
    throw IoError(path + ".json is not a classifier sidecar");
  ClassifierHandle handle;
  handle.arch = classifier_arch_from_string(side["arch"].get<std::string>());
  handle.dataset_tag = side["dataset"].get<std::string>();
  handle.seed = side["seed"].get<std::uint64_t>();
  handle.frozen = side["frozen"].get<bool>();
  handle.freeze_accuracy = side["freeze_accuracy"].get<double>();
  handle.net = std::make_shared<ClassifierNet<float>>(
      handle.arch, side["classes"].get<std::size_t>(),
      side["height"].get<std::size_t>(), side["width"].get<std::size_t>());
  auto params = handle.net->params();
  nn::load_parameters(path, params);
  if (side.contains("parameter_count"))
    check(nn::parameter_count(params) ==
              side["parameter_count"].get<std::size_t>(),
          "sidecar parameter count disagrees with the weights stream");
  return handle;
}

}  // namespace pise
