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

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pise/stats.hpp"
#include "pise/trainer.hpp"

namespace pise {

// Multi-run experiment drivers. Each (arm, seed) run is fully independent:
// it gets its own operator, model, optimizer, and derived random streams,
// so executing the grid in any order (or across processes) produces the
// same per-run results.

/// One ablation arm: a measurement-to-image initialization strategy plus
/// loss weights, layered over a shared base configuration.
struct AblationArm {
  std::string name;
  InitMode init_mode = InitMode::adjoint;
  LossWeights loss;
};

/// The standard four-arm grid crossing {random lift, adjoint} x
/// {pixel-only, pixel+perceptual}.
inline std::vector<AblationArm> standard_arms(double lambda_perc = 0.05) {
  return {{"A", InitMode::learned_random, {1.0, 0.0}},
          {"B", InitMode::adjoint, {1.0, 0.0}},
          {"C", InitMode::learned_random, {1.0, lambda_perc}},
          {"D", InitMode::adjoint, {1.0, lambda_perc}}};
}

struct ArmSummary {
  std::string arm;
  MetricSummary accuracy;    // per-run accuracy is the last-5-epoch mean
  MetricSummary grad_index;
  MetricSummary psnr_db;
  std::vector<RunResult> runs;  // one per seed, in seed order
};

struct AblationTable {
  std::vector<std::uint64_t> seeds;
  std::vector<ArmSummary> arms;
};

namespace detail {

/// Like summarize() but admits a single run (std 0 by convention) so
/// degenerate grids still produce a table row.
inline MetricSummary summary_of(const std::vector<double>& values) {
  if (values.size() >= 2) return summarize(values);
  check(values.size() == 1, "summary needs at least one run");
  MetricSummary s;
  s.mean = values.front();
  s.std = 0.0;
  s.runs = 1;
  s.values = values;
  return s;
}

inline std::string format_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", rate);
  return buf;
}

}  // namespace detail

/// Derives the per-run configuration for (arm, seed) from the base config.
/// The seed replaces both run-local streams (parameters and noise) while
/// the operator stays shared, so arms see identical measurement physics.
inline TrainConfig arm_config(const TrainConfig& base, const AblationArm& arm,
                              std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.init_mode = arm.init_mode;
  cfg.loss = arm.loss;
  cfg.param_seed = seed;
  cfg.noise_seed = derive_seed(seed, "run_noise");
  cfg.output_dir = base.output_dir + "/" + arm.name + "_seed_" +
                   std::to_string(seed);
  return cfg;
}

inline ArmSummary summarize_arm(const std::string& name,
                                std::vector<RunResult> runs) {
  check(!runs.empty(), "arm summary needs at least one run");
  ArmSummary s;
  s.arm = name;
  std::vector<double> accs, gidx, psnrs;
  for (const auto& r : runs) {
    accs.push_back(r.accuracy);
    gidx.push_back(r.grad_index);
    psnrs.push_back(r.psnr_db);
  }
  s.accuracy = detail::summary_of(accs);
  s.grad_index = detail::summary_of(gidx);
  s.psnr_db = detail::summary_of(psnrs);
  s.runs = std::move(runs);
  return s;
}

/// Runs every (arm, seed) combination sequentially and aggregates per-arm
/// statistics across seeds. Rows appear in arm order; permuting the arm
/// list permutes rows without changing any row's contents.
inline AblationTable run_ablation(const TrainConfig& base,
                                  const std::vector<AblationArm>& arms,
                                  const std::vector<std::uint64_t>& seeds,
                                  const TrainContext& ctx) {
  check(!arms.empty(), "ablation needs at least one arm");
  check(!seeds.empty(), "ablation needs at least one seed");
  AblationTable table;
  table.seeds = seeds;
  for (const auto& arm : arms) {
    std::vector<RunResult> runs;
    runs.reserve(seeds.size());
    for (std::uint64_t seed : seeds)
      runs.push_back(train_reconstructor(arm_config(base, arm, seed), ctx));
    table.arms.push_back(summarize_arm(arm.name, std::move(runs)));
  }
  return table;
}

/// Self-contained overload; the context is built once and shared by every
/// run in the grid.
inline AblationTable run_ablation(const TrainConfig& base,
                                  const std::vector<AblationArm>& arms,
                                  const std::vector<std::uint64_t>& seeds) {
  TrainContext ctx = make_train_context(base);
  return run_ablation(base, arms, seeds, ctx);
}

/// Per-arm summary CSV (one row per arm).
inline void save_ablation_csv(const AblationTable& table,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.precision(10);
  out << "arm,runs,accuracy_mean,accuracy_std,grad_index_mean,grad_index_std,"
         "psnr_mean,psnr_std\n";
  for (const auto& a : table.arms)
    out << a.arm << ',' << a.accuracy.runs << ',' << a.accuracy.mean << ','
        << a.accuracy.std << ',' << a.grad_index.mean << ','
        << a.grad_index.std << ',' << a.psnr_db.mean << ',' << a.psnr_db.std
        << '\n';
  if (!out) throw IoError("short write to " + path);
}

/// Per-run detail CSV (one row per arm x seed).
inline void save_ablation_runs_csv(const AblationTable& table,
                                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.precision(10);
  out << "arm,seed,accuracy,grad_index,psnr_db,final_val_loss\n";
  for (const auto& a : table.arms) {
    check(a.runs.size() == table.seeds.size(),
          "run rows misaligned with the seed list");
    for (std::size_t i = 0; i < a.runs.size(); ++i)
      out << a.arm << ',' << table.seeds[i] << ',' << a.runs[i].accuracy
          << ',' << a.runs[i].grad_index << ',' << a.runs[i].psnr_db << ','
          << a.runs[i].final_val_loss << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

/// Stability comparison between two arms of a finished table: accuracy
/// mean +/- std for each plus the baseline/method std ratio.
inline RunStatistics stability_stats(const AblationTable& table,
                                     const std::string& method_arm,
                                     const std::string& baseline_arm) {
  const ArmSummary* method = nullptr;
  const ArmSummary* baseline = nullptr;
  for (const auto& a : table.arms) {
    if (a.arm == method_arm) method = &a;
    if (a.arm == baseline_arm) baseline = &a;
  }
  check(method != nullptr, "method arm not present: " + method_arm);
  check(baseline != nullptr, "baseline arm not present: " + baseline_arm);
  return multi_run_stats(method->accuracy.values, baseline->accuracy.values,
                         baseline_arm);
}

// ---------------------------------------------------------------------------
// Sampling-rate sweep.

struct SweepResult {
  std::vector<double> rates;
  std::vector<RunResult> runs;  // aligned with rates
};

/// One run per sampling rate with shared seeds; everything except the rate
/// (and therefore the operator's row count) is held fixed.
inline SweepResult sampling_sweep(const TrainConfig& base,
                                  const std::vector<double>& rates,
                                  const TrainContext& ctx) {
  check(!rates.empty(), "sweep needs at least one rate");
  SweepResult sweep;
  sweep.rates = rates;
  for (double rate : rates) {
    TrainConfig cfg = base;
    cfg.rate = rate;
    cfg.output_dir = base.output_dir + "/rate_" + detail::format_rate(rate);
    sweep.runs.push_back(train_reconstructor(cfg, ctx));
  }
  return sweep;
}

inline SweepResult sampling_sweep(const TrainConfig& base,
                                  const std::vector<double>& rates) {
  TrainContext ctx = make_train_context(base);
  return sampling_sweep(base, rates, ctx);
}

inline void save_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.precision(10);
  out << "rate,accuracy,psnr_db,grad_index,final_val_loss\n";
  for (std::size_t i = 0; i < sweep.rates.size(); ++i)
    out << sweep.rates[i] << ',' << sweep.runs[i].accuracy << ','
        << sweep.runs[i].psnr_db << ',' << sweep.runs[i].grad_index << ','
        << sweep.runs[i].final_val_loss << '\n';
  if (!out) throw IoError("short write to " + path);
}

// ---------------------------------------------------------------------------
// Reloading finished runs.

/// A trained run rebuilt from its on-disk artifacts: the resolved config,
/// the sensing operator it trained against, and the reconstructor with the
/// final checkpoint weights loaded.
struct ReloadedRun {
  TrainConfig cfg;
  SensingOperator<float> op;
  Reconstructor<float> model;
};

/// Rebuilds config, operator, and model from a run directory written by
/// train_reconstructor. Image geometry comes from the dataset's cached
/// metadata via the context-free default of 28x28 unless the checkpoint
/// sidecar records otherwise; the operator is regenerated from its seed, so
/// the reload is exact.
inline ReloadedRun reload_run(const std::string& run_dir, std::size_t height,
                              std::size_t width) {
  RunResult result = load_run_result(run_dir + "/run.json");
  TrainConfig cfg = train_config_from_map(result.config);
  SensingOperator<float> op = make_operator<float>(
      cfg.rate, height, width, cfg.pattern, cfg.operator_seed);
  ReconstructorSpec rs;
  rs.init_mode = cfg.init_mode;
  rs.depth = cfg.unet_depth;
  rs.base_width = cfg.unet_base;
  rs.seed = cfg.param_seed;
  const std::size_t rows = op.rows;
  ReloadedRun out{std::move(cfg), std::move(op),
                  Reconstructor<float>(rs, height, width, rows)};
  auto params = out.model.params();
  // The weights live beside run.json, which stays valid when the run
  // directory is moved; the recorded absolute path may not.
  nn::load_parameters(run_dir + "/reconstructor.weights", params);
  return out;
}

}  // namespace pise
