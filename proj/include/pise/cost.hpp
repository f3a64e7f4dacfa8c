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
#include <fstream>
#include <string>

#include "pise/reconstructor.hpp"

namespace pise {

/// Complexity and speed accounting for one model. Parameter and MAC counts
/// are exact integers from static shape propagation. Throughput is a
/// measurement on this machine and is descriptive only; FLOP figures use
/// the 2 * MACs convention (one multiply plus one add).
struct CostReport {
  std::uint64_t parameters = 0;
  std::uint64_t macs_per_item = 0;
  double items_per_second = 0.0;
  std::size_t batch = 0;
  std::string hardware;

  std::uint64_t flops_per_item() const { return 2 * macs_per_item; }
};

/// First CPU model string from /proc/cpuinfo, or a generic tag.
inline std::string hardware_tag() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find(':');
    if (line.rfind("model name", 0) == 0 && pos != std::string::npos) {
      std::size_t start = line.find_first_not_of(" \t", pos + 1);
      if (start != std::string::npos) return line.substr(start);
    }
  }
  return "unknown-cpu";
}

/// Exact counts plus a timed reconstruction loop (warmup excluded).
template <class S>
inline CostReport model_cost(Reconstructor<S>& model, std::size_t batch = 16,
                             std::size_t warmup = 2, std::size_t timed = 8,
                             std::uint64_t seed = 0) {
  check(batch >= 1, "cost measurement needs a positive batch");
  check(timed >= 1, "cost measurement needs timed iterations");
  CostReport report;
  auto params = model.params();
  report.parameters = nn::parameter_count(params);
  report.macs_per_item = model.macs_per_image();
  report.batch = batch;
  report.hardware = hardware_tag();

  Rng rng(derive_seed(seed, "cost_input"));
  ImageBatch<S> proxy(batch, model.height(), model.width());
  MeasurementBatch<S> y(batch, std::max<std::size_t>(model.measurements(), 1));
  const bool adjoint = model.spec().init_mode == InitMode::adjoint;
  if (adjoint)
    for (auto& v : proxy.values.raw()) v = S(rng.uniform());
  else
    for (std::size_t i = 0; i < y.values.size(); ++i)
      y.values[i] = S(rng.normal());

  auto run_once = [&] {
    if (adjoint)
      (void)model.reconstruct(proxy);
    else
      (void)model.reconstruct(y);
  };
  for (std::size_t i = 0; i < warmup; ++i) run_once();
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < timed; ++i) run_once();
  const auto stop = std::chrono::steady_clock::now();
  const double seconds = std::chrono::duration<double>(stop - start).count();
  report.items_per_second =
      seconds > 0.0 ? double(batch * timed) / seconds : 0.0;
  return report;
}

}  // namespace pise
