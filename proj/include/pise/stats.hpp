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
#include <string>
#include <vector>

#include "pise/common.hpp"

namespace pise {

/// Mean and sample standard deviation of one metric across repeated runs.
struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // (n-1) denominator
  std::size_t runs = 0;
  std::vector<double> values;
};

/// Multi-run comparison of a method against a named baseline. The std-ratio
/// is baseline std over method std, the variance-stability figure of merit.
struct RunStatistics {
  MetricSummary method;
  MetricSummary baseline;
  std::string baseline_tag;
  double std_ratio = 0.0;
};

/// Sample mean and (n-1) standard deviation. At least two values are
/// required so the std is always defined.
inline MetricSummary summarize(const std::vector<double>& values) {
  check(values.size() >= 2, "need at least 2 runs for a sample std");
  MetricSummary s;
  s.values = values;
  s.runs = values.size();
  double acc = 0.0;
  for (double v : values) {
    check(std::isfinite(v), "non-finite run value");
    acc += v;
  }
  s.mean = acc / double(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / double(values.size() - 1));
  return s;
}

/// Ratio of two spreads; defined only for a strictly positive method std.
inline double std_ratio(double baseline_std, double method_std) {
  check(std::isfinite(baseline_std) && baseline_std >= 0.0,
        "baseline std must be non-negative");
  check(std::isfinite(method_std) && method_std > 0.0,
        "std ratio needs a positive method std");
  return baseline_std / method_std;
}

/// Summary of repeated method runs against repeated baseline runs on a
/// single metric (for example test accuracy over seeds).
inline RunStatistics multi_run_stats(const std::vector<double>& method_runs,
                                     const std::vector<double>& baseline_runs,
                                     const std::string& baseline_tag = "") {
  RunStatistics out;
  out.method = summarize(method_runs);
  out.baseline = summarize(baseline_runs);
  out.baseline_tag = baseline_tag;
  out.std_ratio = std_ratio(out.baseline.std, out.method.std);
  return out;
}

}  // namespace pise
