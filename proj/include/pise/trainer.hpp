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

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "pise/adam.hpp"
#include "pise/classifier.hpp"
#include "pise/config.hpp"
#include "pise/cost.hpp"
#include "pise/dataset.hpp"
#include "pise/dynamics.hpp"
#include "pise/features.hpp"
#include "pise/loss.hpp"
#include "pise/metrics.hpp"
#include "pise/reconstructor.hpp"
#include "pise/sensing.hpp"

namespace pise {

// End-to-end seeded training of one reconstructor configuration.
//
// The random streams are all derived from the two config seeds, with
// disjoint tags so their consumption orders cannot interleave:
//   param_seed -> network init, per-epoch shuffle order
//   noise_seed -> training noise draws, the frozen validation noise, and
//                 the per-epoch test-evaluation noise
// Given identical configs and data the whole run replays bit for bit.

/// One frozen-classifier evaluation of the test split (1-based epoch).
struct TestEval {
  std::size_t epoch = 0;
  double accuracy = 0.0;
  double psnr_db = 0.0;
};

struct RunResult {
  ConfigMap config;             // resolved snapshot of the TrainConfig
  std::string run_dir;          // output directory holding the artifacts
  std::string checkpoint_path;  // final reconstructor weights
  GradientTrace trace;          // G(1)..G(T) on the frozen validation probe
  double grad_index = 0.0;      // last-5-epoch mean of G over G(1)
  std::vector<double> val_loss;       // per-epoch composite loss, length T
  std::vector<TestEval> test_evals;   // last-5-epoch test evaluations
  double accuracy = 0.0;        // mean accuracy over test_evals
  double psnr_db = 0.0;         // final-epoch test PSNR
  double final_val_loss = 0.0;  // val_loss.back()
  double wall_seconds = 0.0;
  std::uint64_t parameters = 0;
  std::string hardware;
};

/// Frozen collaborators shared by every run of an experiment: the data
/// splits, the clean-trained classifier judge, and the feature extractor.
/// Build once per experiment; runs never mutate the frozen parts (asserted
/// by checksum before and after each run).
struct TrainContext {
  LabeledImages train;
  LabeledImages val;
  LabeledImages test;
  ClassifierHandle classifier;
  std::shared_ptr<FeatureExtractor<float>> extractor;
};

namespace detail {

/// Seed for the self-contained classifier fallback when no checkpoint is
/// configured. Fixed so every run shares the same frozen judge.
inline constexpr std::uint64_t kFallbackJudgeSeed = 17;

}  // namespace detail

/// Builds the frozen collaborators for `cfg`. Splits come from the cached
/// dataset: train/val are leading slices of the training split, test is a
/// leading slice of the test split. A configured classifier checkpoint is
/// loaded; otherwise a small classifier is trained on the clean train
/// slice at a fixed seed. The extractor is always constructed (arms that
/// skip the perceptual term simply ignore it).
inline TrainContext make_train_context(
    const TrainConfig& cfg, const std::string& cache_root = default_cache_root()) {
  cfg.validate();
  Dataset ds = load_dataset(cache_root, cfg.dataset);
  check(cfg.train_count + cfg.val_count <= ds.train.images.count,
        "train_count + val_count exceeds the training split");
  check(cfg.test_count <= ds.test.images.count,
        "test_count exceeds the test split");

  TrainContext ctx;
  ctx.train = slice(ds.train, 0, cfg.train_count);
  ctx.val = slice(ds.train, cfg.train_count, cfg.val_count);
  ctx.test = slice(ds.test, 0, cfg.test_count);

  if (!cfg.classifier_checkpoint.empty()) {
    ctx.classifier = load_classifier(cfg.classifier_checkpoint);
    check(ctx.classifier.net->height() == ctx.train.images.height &&
              ctx.classifier.net->width() == ctx.train.images.width,
          "classifier checkpoint geometry does not match the dataset");
  } else {
    TrainClassifierOptions opt;
    opt.dataset_tag = cfg.dataset;
    opt.batch = std::min<std::size_t>(opt.batch, ctx.train.images.count);
    ctx.classifier =
        train_classifier(ctx.train, ctx.test, ClassifierArch::plain_cnn,
                         detail::kFallbackJudgeSeed, opt);
  }

  FeatureExtractorSpec spec;
  spec.kind = extractor_kind_from_string(cfg.extractor);
  if (spec.kind == ExtractorKind::domain_cnn && cfg.extractor_from_classifier) {
    ctx.extractor =
        std::make_shared<FeatureExtractor<float>>(spec, ctx.classifier);
  } else if (spec.kind == ExtractorKind::pretrained_perceptual &&
             !cfg.extractor_checkpoint.empty()) {
    ctx.extractor = std::make_shared<FeatureExtractor<float>>(
        spec, cfg.extractor_checkpoint);
  } else {
    ctx.extractor =
        std::make_shared<FeatureExtractor<float>>(spec, cfg.extractor_seed);
  }
  return ctx;
}

namespace detail {

/// Cosine decay from the configured peak rate to 5% of it across the run.
/// Late epochs take small steps so the parameters settle, which is what
/// makes the end-of-training gradient norms comparable across arms.
inline double cosine_lr(double peak, std::size_t epoch, std::size_t total) {
  if (total <= 1) return peak;
  const double progress = double(epoch - 1) / double(total - 1);
  const double floor = 0.05 * peak;
  constexpr double kPi = 3.14159265358979323846;
  return floor + (peak - floor) * 0.5 * (1.0 + std::cos(progress * kPi));
}

inline ImageBatch<float> gather_images(const ImageBatch<float>& src,
                                       const std::vector<std::size_t>& order,
                                       std::size_t start, std::size_t count) {
  ImageBatch<float> out(count, src.height, src.width);
  const std::size_t px = src.pixels();
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(src.image(order[start + i]), px, out.image(i));
  return out;
}

inline ImageBatch<float> copy_range(const ImageBatch<float>& src,
                                    std::size_t start, std::size_t count) {
  ImageBatch<float> out(count, src.height, src.width);
  std::copy_n(src.image(start), count * src.pixels(), out.values.data());
  return out;
}

/// Builds the evaluation-time detector model from the config. Quantization
/// (when enabled) is calibrated once from clean measurements of the train
/// split, matching how a deployed quantizer would be ranged.
inline NoiseSpec eval_noise_spec(const TrainConfig& cfg,
                                 const SensingOperator<float>& op,
                                 const ImageBatch<float>& train_images) {
  NoiseSpec spec;
  if (cfg.eval_noise == "none") {
    spec = NoiseSpec::none();
  } else if (cfg.eval_noise == "awgn") {
    // No dedicated evaluation sigma is configured; reuse the top of the
    // training range so evaluation never sees milder noise than training.
    spec = NoiseSpec::awgn(cfg.train_sigma_max);
  } else {
    spec = NoiseSpec::poisson(cfg.eval_photon_scale);
  }
  if (cfg.eval_quant_bits >= 1) {
    auto [lo, hi] = calibrate_quant_range(op, train_images);
    spec.with_quantization(cfg.eval_quant_bits, lo, hi);
  }
  return spec;
}

inline std::vector<double> flat_gradient(
    std::vector<nn::ParamRef<float>>& params) {
  std::size_t total = 0;
  for (const auto& p : params) total += p.grad->size();
  std::vector<double> flat;
  flat.reserve(total);
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.grad->size(); ++i)
      flat.push_back(static_cast<double>((*p.grad)[i]));
  return flat;
}

inline std::uint64_t classifier_checksum(const ClassifierHandle& handle) {
  std::lock_guard<std::mutex> guard(*handle.lock);
  auto params = handle.net->params();
  return nn::parameter_checksum(params);
}

}  // namespace detail

inline void save_run_result(const RunResult& r, const std::string& path) {
  nlohmann::json evals = nlohmann::json::array();
  for (const auto& e : r.test_evals)
    evals.push_back({{"epoch", e.epoch},
                     {"accuracy", e.accuracy},
                     {"psnr_db", e.psnr_db}});
  nlohmann::json doc = {{"format", "pise-run"},
                        {"format_version", 1},
                        {"config", r.config},
                        {"run_dir", r.run_dir},
                        {"checkpoint", r.checkpoint_path},
                        {"trace", r.trace.g},
                        {"trace_mode", r.trace.mode},
                        {"grad_index", r.grad_index},
                        {"val_loss", r.val_loss},
                        {"test_evals", evals},
                        {"accuracy", r.accuracy},
                        {"psnr_db", r.psnr_db},
                        {"final_val_loss", r.final_val_loss},
                        {"wall_seconds", r.wall_seconds},
                        {"parameters", r.parameters},
                        {"hardware", r.hardware}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("short write to " + path);
}

inline RunResult load_run_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + " is not a run result: " + e.what());
  }
  if (doc.value("format", "") != "pise-run")
    throw IoError(path + " is not a run result document");
  RunResult r;
  try {
    r.config = doc.at("config").get<ConfigMap>();
    r.run_dir = doc.at("run_dir").get<std::string>();
    r.checkpoint_path = doc.at("checkpoint").get<std::string>();
    r.trace.g = doc.at("trace").get<std::vector<double>>();
    r.trace.mode = doc.at("trace_mode").get<std::string>();
    r.grad_index = doc.at("grad_index").get<double>();
    r.val_loss = doc.at("val_loss").get<std::vector<double>>();
    for (const auto& e : doc.at("test_evals"))
      r.test_evals.push_back({e.at("epoch").get<std::size_t>(),
                              e.at("accuracy").get<double>(),
                              e.at("psnr_db").get<double>()});
    r.accuracy = doc.at("accuracy").get<double>();
    r.psnr_db = doc.at("psnr_db").get<double>();
    r.final_val_loss = doc.at("final_val_loss").get<double>();
    r.wall_seconds = doc.at("wall_seconds").get<double>();
    r.parameters = doc.at("parameters").get<std::uint64_t>();
    r.hardware = doc.at("hardware").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + " is missing run result fields: " + e.what());
  }
  return r;
}

/// Trains one reconstructor per `cfg` against the frozen collaborators in
/// `ctx` and writes the run artifacts (weights, gradient trace CSV,
/// validation-loss CSV, test-evaluation CSV, run.json) under
/// cfg.output_dir. Deterministic given (cfg, ctx): replays bit for bit.
inline RunResult train_reconstructor(const TrainConfig& cfg,
                                     const TrainContext& ctx) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  check(ctx.train.images.count == cfg.train_count &&
            ctx.val.images.count == cfg.val_count &&
            ctx.test.images.count == cfg.test_count,
        "context split sizes do not match the configuration");
  check(ctx.classifier.net != nullptr, "context is missing the classifier");
  check(ctx.classifier.frozen, "the classifier judge must be frozen");

  const std::size_t h = ctx.train.images.height;
  const std::size_t w = ctx.train.images.width;
  SensingOperator<float> op =
      make_operator<float>(cfg.rate, h, w, cfg.pattern, cfg.operator_seed);

  ReconstructorSpec rspec;
  rspec.init_mode = cfg.init_mode;
  rspec.depth = cfg.unet_depth;
  rspec.base_width = cfg.unet_base;
  rspec.seed = cfg.param_seed;
  Reconstructor<float> model(rspec, h, w, op.rows);
  auto params = model.params();
  Adam<float> adam(params, cfg.learning_rate);

  FeatureExtractor<float>* extractor = nullptr;
  if (cfg.loss.perc > 0.0) {
    check(ctx.extractor != nullptr,
          "perceptual loss configured but the context has no extractor");
    extractor = ctx.extractor.get();
  }

  const std::uint64_t judge_sum_before =
      detail::classifier_checksum(ctx.classifier);
  const std::uint64_t extractor_sum_before =
      ctx.extractor ? ctx.extractor->checksum() : 0;

  const NoiseSpec eval_noise =
      detail::eval_noise_spec(cfg, op, ctx.train.images);

  const bool adjoint = cfg.init_mode == InitMode::adjoint;
  auto forward = [&](const MeasurementBatch<float>& m,
                     const ImageBatch<float>* proxy) -> Tensor<float> {
    if (!adjoint) return model.forward_measurements(m);
    if (proxy) return model.forward_proxy(*proxy);
    return model.forward_proxy(normalize_proxy(adjoint_proxy(op, m)));
  };

  // Validation probe for G(t) and the per-epoch validation loss. Probe
  // measurements carry one fixed AWGN realization drawn from the training
  // noise scheme and reused every epoch, so the trace reflects movement of
  // the parameters rather than movement of the noise. The probe noise is
  // keyed off the operator seed, which experiments share across arms, so
  // every run of an ablation sees the identical probe set. Probe batches
  // are much larger than training batches so per-batch sampling noise does
  // not set the late-training gradient floor.
  constexpr std::size_t kProbeBatch = 512;
  struct ValBatch {
    ImageBatch<float> x;
    MeasurementBatch<float> m;
    ImageBatch<float> proxy;  // populated in adjoint mode only
  };
  std::vector<ValBatch> val_batches;
  Rng probe_rng(derive_seed(cfg.operator_seed, "probe_noise"));
  for (std::size_t start = 0; start < ctx.val.images.count;
       start += kProbeBatch) {
    const std::size_t b = std::min(kProbeBatch, ctx.val.images.count - start);
    ValBatch vb;
    vb.x = detail::copy_range(ctx.val.images, start, b);
    const double sigma = probe_rng.uniform(0.0, cfg.train_sigma_max);
    vb.m = measure(op, vb.x, NoiseSpec::awgn(sigma), probe_rng);
    if (adjoint) vb.proxy = normalize_proxy(adjoint_proxy(op, vb.m));
    val_batches.push_back(std::move(vb));
  }

  RunResult result;
  result.config = train_config_to_map(cfg);
  result.run_dir = cfg.output_dir;
  result.parameters = nn::parameter_count(params);
  result.hardware = hardware_tag();

  Rng train_rng(derive_seed(cfg.noise_seed, "train_noise"));
  std::vector<std::size_t> order(ctx.train.images.count);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  // Test evaluations cover the last five epochs per the averaging protocol.
  const std::size_t first_eval_epoch = cfg.epochs >= 5 ? cfg.epochs - 4 : 1;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Gradient-dynamics probe on the frozen validation set, taken with the
    // parameters the optimizer faces entering this epoch. G(1) is therefore
    // the gradient at initialization, which anchors the grad index as decay
    // relative to the start of training.
    std::vector<std::vector<double>> probe_grads;
    probe_grads.reserve(val_batches.size());
    for (ValBatch& vb : val_batches) {
      Tensor<float> y = forward(vb.m, adjoint ? &vb.proxy : nullptr);
      ImageBatch<float> xhat(vb.x.count, h, w);
      std::copy_n(y.data(), y.size(), xhat.values.data());
      LossValue<float> lv = composite_loss(vb.x, xhat, extractor, cfg.loss);
      lv.grad.reshape({vb.x.count, 1, h, w});
      nn::zero_grads(params);
      model.backward(lv.grad);
      probe_grads.push_back(detail::flat_gradient(params));
    }
    nn::zero_grads(params);
    result.trace.g.push_back(epoch_grad_norm(probe_grads));

    adam.set_learning_rate(
        detail::cosine_lr(cfg.learning_rate, epoch, cfg.epochs));
    Rng shuffle_rng(derive_seed(cfg.param_seed, "train_epoch", epoch));
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      ImageBatch<float> xb =
          detail::gather_images(ctx.train.images, order, start, b);
      const double sigma = train_rng.uniform(0.0, cfg.train_sigma_max);
      MeasurementBatch<float> mb =
          measure(op, xb, NoiseSpec::awgn(sigma), train_rng);
      Tensor<float> y = forward(mb, nullptr);
      ImageBatch<float> xhat(b, h, w);
      std::copy_n(y.data(), y.size(), xhat.values.data());
      LossValue<float> lv = composite_loss(xb, xhat, extractor, cfg.loss);
      lv.grad.reshape({b, 1, h, w});
      nn::zero_grads(params);
      model.backward(lv.grad);
      adam.step(params);
    }

    // Validation loss of the parameters this epoch produced (forward only).
    double loss_acc = 0.0;
    std::size_t loss_count = 0;
    for (ValBatch& vb : val_batches) {
      Tensor<float> y = forward(vb.m, adjoint ? &vb.proxy : nullptr);
      ImageBatch<float> xhat(vb.x.count, h, w);
      std::copy_n(y.data(), y.size(), xhat.values.data());
      LossValue<float> lv =
          composite_loss(vb.x, xhat, extractor, cfg.loss, false);
      loss_acc += lv.total * double(vb.x.count);
      loss_count += vb.x.count;
    }
    result.val_loss.push_back(loss_acc / double(loss_count));

    if (epoch >= first_eval_epoch) {
      Rng test_rng(derive_seed(cfg.noise_seed, "test_noise", epoch));
      MeasurementBatch<float> mt =
          measure(op, ctx.test.images, eval_noise, test_rng);
      ImageBatch<float> recon = reconstruct_from_measurements(model, op, mt);
      TestEval ev;
      ev.epoch = epoch;
      ev.accuracy = eval_accuracy(ctx.classifier, recon, ctx.test.labels);
      ev.psnr_db = psnr(ctx.test.images, recon).mean;
      result.test_evals.push_back(ev);
    }
  }

  result.grad_index = grad_index(result.trace);
  double acc_sum = 0.0;
  for (const auto& ev : result.test_evals) acc_sum += ev.accuracy;
  result.accuracy = acc_sum / double(result.test_evals.size());
  result.psnr_db = result.test_evals.back().psnr_db;
  result.final_val_loss = result.val_loss.back();

  check(detail::classifier_checksum(ctx.classifier) == judge_sum_before,
        "frozen classifier parameters changed during training");
  check((ctx.extractor ? ctx.extractor->checksum() : 0) ==
            extractor_sum_before,
        "frozen extractor parameters changed during training");

  fs::create_directories(cfg.output_dir);
  result.checkpoint_path =
      (fs::path(cfg.output_dir) / "reconstructor.weights").string();
  nn::save_parameters(result.checkpoint_path, params);
  save_trace_csv(result.trace,
                 (fs::path(cfg.output_dir) / "grad_trace.csv").string());
  {
    std::ofstream out(fs::path(cfg.output_dir) / "val_loss.csv",
                      std::ios::trunc);
    if (!out) throw IoError("cannot write val_loss.csv");
    out << "epoch,val_loss\n";
    out.precision(10);
    for (std::size_t t = 0; t < result.val_loss.size(); ++t)
      out << (t + 1) << ',' << result.val_loss[t] << '\n';
  }
  {
    std::ofstream out(fs::path(cfg.output_dir) / "test_evals.csv",
                      std::ios::trunc);
    if (!out) throw IoError("cannot write test_evals.csv");
    out << "epoch,accuracy,psnr_db\n";
    out.precision(10);
    for (const auto& ev : result.test_evals)
      out << ev.epoch << ',' << ev.accuracy << ',' << ev.psnr_db << '\n';
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  save_run_result(result, (fs::path(cfg.output_dir) / "run.json").string());
  return result;
}

/// Self-contained overload: builds the context from the cached dataset.
inline RunResult train_reconstructor(const TrainConfig& cfg) {
  TrainContext ctx = make_train_context(cfg);
  return train_reconstructor(cfg, ctx);
}

}  // namespace pise
