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

#include <fstream>
#include <string>
#include <vector>

#include "pise/metrics.hpp"
#include "pise/reconstructor.hpp"

namespace pise {

/// Reconstruction quality as a function of measurement-noise level.
/// Sigma values are relative to the clean-measurement RMS.
struct RobustnessCurve {
  std::string method;
  std::vector<double> sigmas;
  std::vector<double> psnr_db;
  std::vector<double> accuracy;

  /// dB lost from the clean point to the noisiest point.
  double psnr_drop() const {
    check(sigmas.size() >= 2, "drop needs at least two grid points");
    return psnr_db.front() - psnr_db.back();
  }

  void validate() const {
    check(!sigmas.empty(), "empty sigma grid");
    check(sigmas.front() == 0.0, "sigma grid must start at 0");
    for (std::size_t i = 1; i < sigmas.size(); ++i)
      check(sigmas[i] > sigmas[i - 1], "sigma grid must strictly increase");
    check(psnr_db.size() == sigmas.size() && accuracy.size() == sigmas.size(),
          "curve column lengths disagree");
  }
};

/// Default grid: clean point plus four steps up to the 0.2 endpoint.
inline std::vector<double> default_sigma_grid() {
  return {0.0, 0.05, 0.10, 0.15, 0.20};
}

/// Measures the test set under AWGN at each sigma, reconstructs, and scores
/// mean PSNR plus frozen-classifier accuracy. The noise stream is seeded
/// per grid point, so the curve is reproducible and the sigma = 0 entry is
/// bit-identical to a clean evaluation.
inline RobustnessCurve robustness_sweep(Reconstructor<float>& model,
                                        const SensingOperator<float>& op,
                                        const std::vector<double>& sigma_grid,
                                        const LabeledImages& test,
                                        const ClassifierHandle& classifier,
                                        std::uint64_t seed,
                                        const std::string& method_tag = "") {
  check(model.initialized(), "model must be trained before the sweep");
  check(test.images.count > 0, "robustness sweep needs test images");
  RobustnessCurve curve;
  curve.method = method_tag;
  curve.sigmas = sigma_grid;
  curve.psnr_db.resize(sigma_grid.size());
  curve.accuracy.resize(sigma_grid.size());
  curve.validate();

  for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
    const double sigma = sigma_grid[i];
    Rng rng(derive_seed(seed, "robustness_sigma", i));
    const NoiseSpec noise =
        sigma == 0.0 ? NoiseSpec::none() : NoiseSpec::awgn(sigma);
    MeasurementBatch<float> y = measure(op, test.images, noise, rng);
    ImageBatch<float> xhat = reconstruct_from_measurements(model, op, y);
    curve.psnr_db[i] = psnr(test.images, to_float(xhat)).mean;
    curve.accuracy[i] = eval_accuracy(classifier, to_float(xhat), test.labels);
  }
  return curve;
}

/// One row per grid point: sigma, mean PSNR, accuracy.
inline void save_curve_csv(const RobustnessCurve& curve,
                           const std::string& path) {
  curve.validate();
  std::ofstream out(path, std::ios::trunc);
  check(out.good(), "cannot open " + path);
  out << "sigma,psnr_db,accuracy\n";
  out.precision(10);
  for (std::size_t i = 0; i < curve.sigmas.size(); ++i)
    out << curve.sigmas[i] << ',' << curve.psnr_db[i] << ','
        << curve.accuracy[i] << '\n';
  if (!out.good()) throw IoError("failed writing " + path);
}

}  // namespace pise
