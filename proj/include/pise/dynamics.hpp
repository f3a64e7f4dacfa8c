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
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "pise/common.hpp"

namespace pise {

// Gradient-norm optimization-health diagnostics. G(t) is the mean over
// validation mini-batches of the l2 norm of the full parameter gradient of
// the run's own training objective, recorded once per epoch. The reported
// grad index normalizes the late-training mean by G(1), so it compares
// runs of identical architecture only.

struct GradientTrace {
  std::vector<double> g;  // G(1)..G(T)
  std::string mode = "g1_relative";

  std::size_t epochs() const { return g.size(); }

  void validate() const {
    for (double v : g)
      check(std::isfinite(v) && v >= 0.0,
            "gradient trace entries must be finite and nonnegative");
  }
};

/// Mean over validation mini-batches of the l2 norm of the per-batch
/// parameter gradient. Each inner vector is one batch's full gradient.
inline double epoch_grad_norm(
    const std::vector<std::vector<double>>& per_batch_grads) {
  check(!per_batch_grads.empty(), "epoch_grad_norm needs >= 1 batch");
  double total = 0.0;
  for (const auto& grad : per_batch_grads) {
    double sq = 0.0;
    for (double v : grad) sq += v * v;
    total += std::sqrt(sq);
  }
  return total / double(per_batch_grads.size());
}

/// Callback form: evaluates `grad_of_batch` for each batch index and
/// averages the gradient norms.
inline double epoch_grad_norm(
    std::size_t batches,
    const std::function<std::vector<double>(std::size_t)>& grad_of_batch) {
  check(batches >= 1, "epoch_grad_norm needs >= 1 batch");
  std::vector<std::vector<double>> grads;
  grads.reserve(batches);
  for (std::size_t i = 0; i < batches; ++i) grads.push_back(grad_of_batch(i));
  return epoch_grad_norm(grads);
}

/// Mean of the last `window` entries divided by G(1). Requires a trace of
/// at least max(window, 2) epochs and a nonzero first entry.
inline double grad_index(const GradientTrace& trace, std::size_t window = 5) {
  trace.validate();
  check(window >= 1, "window must be positive");
  check(trace.g.size() >= window && trace.g.size() >= 2,
        "gradient trace too short for the requested window");
  check(trace.g.front() > 0.0, "grad index undefined: G(1) is zero");
  double tail = 0.0;
  for (std::size_t i = trace.g.size() - window; i < trace.g.size(); ++i)
    tail += trace.g[i];
  return (tail / double(window)) / trace.g.front();
}

/// Persists a trace as CSV with columns (epoch, G, normalized_G), where
/// normalized_G is G(t)/G(1) (zero when G(1) is zero).
inline void save_trace_csv(const GradientTrace& trace,
                           const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,G,normalized_G\n";
  const double g1 = trace.g.empty() ? 0.0 : trace.g.front();
  for (std::size_t t = 0; t < trace.g.size(); ++t) {
    const double norm = g1 > 0.0 ? trace.g[t] / g1 : 0.0;
    out << (t + 1) << ',' << trace.g[t] << ',' << norm << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

/// Reads back a trace CSV produced by save_trace_csv.
inline GradientTrace load_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,G", 0) != 0)
    throw IoError(path + " is not a gradient trace CSV");
  GradientTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    check(c1 != std::string::npos && c2 != std::string::npos,
          "malformed trace row: " + line);
    trace.g.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  trace.validate();
  return trace;
}

}  // namespace pise
