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
#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <pise/cost.hpp>
#include <pise/metrics.hpp>
#include <pise/png.hpp>
#include <pise/robustness.hpp>
#include <pise/stats.hpp>
#include <pise/svg.hpp>

using namespace pise;
namespace fs = std::filesystem;

namespace {

LabeledImages stripes(std::size_t count, std::size_t side, std::uint64_t seed) {
  LabeledImages out;
  out.images = ImageBatch<float>(count, side, side);
  Rng rng(seed);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = int(n % 2);
    out.labels.push_back(label);
    float* img = out.images.image(n);
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j) {
        const std::size_t stripe = (label == 0 ? i : j);
        const double base = (stripe % 2 == 0) ? 0.85 : 0.15;
        img[i * side + j] = float(base + rng.uniform(-0.08, 0.08));
      }
  }
  return out;
}

std::uint32_t be32(const std::string& bytes, std::size_t at) {
  return (std::uint32_t(std::uint8_t(bytes[at])) << 24) |
         (std::uint32_t(std::uint8_t(bytes[at + 1])) << 16) |
         (std::uint32_t(std::uint8_t(bytes[at + 2])) << 8) |
         std::uint32_t(std::uint8_t(bytes[at + 3]));
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("psnr hits its analytic anchor points", "[metrics]") {
  ImageBatch<float> x(2, 4, 4);
  Rng rng(1);
  for (auto& v : x.values.raw()) v = float(rng.uniform(0.2, 0.8));

  // Identical images report the cap on every image.
  PsnrResult same = psnr(x, x);
  CHECK(same.per_image == std::vector<double>{99.0, 99.0});
  CHECK(same.mean == 99.0);

  // Uniform +0.1 error: per-pixel MSE 0.01, peak 1 -> exactly 20 dB.
  ImageBatch<float> shifted = x;
  for (auto& v : shifted.values.raw()) v += 0.1f;
  PsnrResult twenty = psnr(x, shifted);
  for (double db : twenty.per_image)
    CHECK(db == Catch::Approx(20.0).margin(1e-5));
  CHECK(twenty.mean == Catch::Approx(20.0).margin(1e-5));

  // Larger uniform shifts always score lower (shift-detecting).
  double prev = 1e9;
  for (float delta : {0.05f, 0.1f, 0.2f, 0.4f}) {
    ImageBatch<float> y = x;
    for (auto& v : y.values.raw()) v += delta;
    const double db = psnr(x, y).mean;
    CHECK(db < prev);
    prev = db;
  }

  ImageBatch<float> wrong(2, 4, 5);
  CHECK_THROWS_AS(psnr(x, wrong), InvalidArgument);
}

TEST_CASE("psnr agrees with an independent recomputation", "[metrics]") {
  ImageBatch<float> x(3, 5, 7), y(3, 5, 7);
  Rng rng(9);
  for (auto& v : x.values.raw()) v = float(rng.uniform());
  for (auto& v : y.values.raw()) v = float(rng.uniform());
  PsnrResult got = psnr(x, y);
  for (std::size_t n = 0; n < 3; ++n) {
    double mse = 0.0;
    for (std::size_t i = 0; i < 35; ++i) {
      const double d = double(x.image(n)[i]) - double(y.image(n)[i]);
      mse += d * d;
    }
    mse /= 35.0;
    CHECK(got.per_image[n] ==
          Catch::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
  }

  // Custom peak: doubling the peak adds 10*log10(4) dB.
  PsnrResult peak2 = psnr(x, y, 2.0);
  CHECK(peak2.mean ==
        Catch::Approx(got.mean + 10.0 * std::log10(4.0)).epsilon(1e-9));
}

TEST_CASE("eval_accuracy matches a brute-force tally", "[metrics]") {
  LabeledImages train = stripes(96, 12, 1);
  LabeledImages test = stripes(48, 12, 2);
  TrainClassifierOptions opt;
  opt.epochs = 4;
  opt.batch = 32;
  ClassifierHandle handle =
      train_classifier(train, test, ClassifierArch::plain_cnn, 3, opt);
  REQUIRE(handle.freeze_accuracy >= 0.9);

  const double acc = eval_accuracy(handle, test.images, test.labels);
  Classification cls = classify(handle, test.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < cls.labels.size(); ++i)
    if (cls.labels[i] == test.labels[i]) ++hits;
  CHECK(acc == double(hits) / double(test.labels.size()));
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  // Out-of-range pixels are clamped before classification, so an
  // over-ranged copy scores identically to its clamped version.
  ImageBatch<float> wild = test.images;
  for (std::size_t i = 0; i < wild.values.size(); i += 3)
    wild.values[i] = wild.values[i] > 0.5f ? 1.7f : -0.9f;
  ImageBatch<float> clamped = wild;
  for (auto& v : clamped.values.raw()) v = std::clamp(v, 0.0f, 1.0f);
  CHECK(eval_accuracy(handle, wild, test.labels) ==
        eval_accuracy(handle, clamped, test.labels));

  ImageBatch<float> empty(0, 12, 12);
  CHECK_THROWS_AS(eval_accuracy(handle, empty, {}), InvalidArgument);
  CHECK_THROWS_AS(eval_accuracy(handle, test.images, {0, 1}),
                  InvalidArgument);
}

TEST_CASE("run summaries use the sample standard deviation", "[stats]") {
  MetricSummary flat = summarize({1.0, 1.0, 1.0});
  CHECK(flat.mean == 1.0);
  CHECK(flat.std == 0.0);
  CHECK(flat.runs == 3);

  // Hand oracle: {1,2,3,4} has mean 2.5 and sample variance 5/3.
  MetricSummary s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == Catch::Approx(2.5).epsilon(1e-15));
  CHECK(s.std == Catch::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-12));

  // Brute-force recomputation on random values.
  Rng rng(4);
  std::vector<double> vals;
  for (int i = 0; i < 11; ++i) vals.push_back(rng.uniform(-3.0, 7.0));
  MetricSummary r = summarize(vals);
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= double(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= double(vals.size() - 1);
  CHECK(r.mean == Catch::Approx(mean).epsilon(1e-12));
  CHECK(r.std == Catch::Approx(std::sqrt(var)).epsilon(1e-12));

  CHECK_THROWS_AS(summarize({1.0}), InvalidArgument);
  CHECK_THROWS_AS(summarize({}), InvalidArgument);
}

TEST_CASE("std-ratio reproduces the published stability figure", "[stats]") {
  // Identity: a set against itself.
  CHECK(std_ratio(0.5, 0.5) == 1.0);

  // Published five-run spreads: 2.12 baseline vs 0.23 method.
  const double ratio = std_ratio(2.12, 0.23);
  CHECK(ratio >= 9.0);
  CHECK(ratio <= 9.5);

  CHECK_THROWS_AS(std_ratio(1.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(std_ratio(-1.0, 1.0), InvalidArgument);
}

TEST_CASE("multi-run statistics compare method to baseline", "[stats]") {
  // Two-point lists with exact target mean m and sample std s:
  // {m - s/sqrt(2), m + s/sqrt(2)}.
  auto two_runs = [](double m, double s) {
    const double d = s / std::sqrt(2.0);
    return std::vector<double>{m - d, m + d};
  };
  RunStatistics rs = multi_run_stats(two_runs(83.08, 0.23),
                                     two_runs(80.51, 2.12), "mse-baseline");
  CHECK(rs.method.mean == Catch::Approx(83.08).epsilon(1e-12));
  CHECK(rs.method.std == Catch::Approx(0.23).epsilon(1e-9));
  CHECK(rs.baseline.mean == Catch::Approx(80.51).epsilon(1e-12));
  CHECK(rs.baseline.std == Catch::Approx(2.12).epsilon(1e-9));
  CHECK(rs.baseline_tag == "mse-baseline");
  CHECK(rs.std_ratio >= 9.0);
  CHECK(rs.std_ratio <= 9.5);

  CHECK_THROWS_AS(multi_run_stats({1.0}, {1.0, 2.0}), InvalidArgument);
}

TEST_CASE("robustness sweep anchors its clean point exactly",
          "[metrics][robustness]") {
  const std::size_t side = 12;
  LabeledImages train = stripes(96, side, 1);
  LabeledImages test = stripes(16, side, 2);
  TrainClassifierOptions copt;
  copt.epochs = 2;
  ClassifierHandle cls =
      train_classifier(train, test, ClassifierArch::plain_cnn, 3, copt);

  auto op = make_operator<float>(0.1, side, side, PatternKind::gaussian, 7);
  ReconstructorSpec rspec;
  rspec.depth = 1;
  rspec.base_width = 4;
  rspec.seed = 5;
  Reconstructor<float> model(rspec, side, side);

  RobustnessCurve curve = robustness_sweep(model, op, default_sigma_grid(),
                                           test, cls, 11, "demo");
  curve.validate();
  REQUIRE(curve.sigmas.size() == 5);
  CHECK(curve.method == "demo");

  // Clean entry must equal an independent clean evaluation bit for bit.
  Rng unused(0);
  MeasurementBatch<float> clean =
      measure(op, test.images, NoiseSpec::none(), unused);
  ImageBatch<float> xhat = reconstruct_from_measurements(model, op, clean);
  CHECK(curve.psnr_db[0] == psnr(test.images, xhat).mean);
  CHECK(curve.accuracy[0] == eval_accuracy(cls, xhat, test.labels));

  // Deterministic under a fixed seed.
  RobustnessCurve again = robustness_sweep(model, op, default_sigma_grid(),
                                           test, cls, 11, "demo");
  CHECK(curve.psnr_db == again.psnr_db);
  CHECK(curve.accuracy == again.accuracy);

  CHECK(curve.psnr_drop() == curve.psnr_db.front() - curve.psnr_db.back());

  // Grid validation: must start at zero and strictly increase.
  CHECK_THROWS_AS(robustness_sweep(model, op, {0.05, 0.1}, test, cls, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(robustness_sweep(model, op, {0.0, 0.1, 0.1}, test, cls, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(robustness_sweep(model, op, {}, test, cls, 1),
                  InvalidArgument);

  // CSV emission round-trips the grid.
  fs::path dir = fs::temp_directory_path() / "pise_rob_test";
  fs::create_directories(dir);
  const std::string path = (dir / "curve.csv").string();
  save_curve_csv(curve, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "sigma,psnr_db,accuracy");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == curve.sigmas.size());
  fs::remove_all(dir);
}

TEST_CASE("cost report counts are exact and throughput is measured",
          "[metrics][cost]") {
  ReconstructorSpec spec;
  spec.depth = 1;
  spec.base_width = 4;
  spec.seed = 2;
  Reconstructor<float> model(spec, 16, 16);

  CostReport report = model_cost(model, 4, 1, 2);
  auto params = model.params();
  CHECK(report.parameters == nn::parameter_count(params));
  CHECK(report.macs_per_item == model.macs_per_image());
  CHECK(report.flops_per_item() == 2 * report.macs_per_item);
  CHECK(report.items_per_second > 0.0);
  CHECK(report.batch == 4);
  CHECK_FALSE(report.hardware.empty());

  // Reference arithmetic: one same-padded 3x3 conv, 1 -> 8 channels, on
  // 28x28 has 80 parameters and 72 * 784 MACs.
  nn::Conv2d<float> conv(1, 8, 3, "probe");
  std::vector<nn::ParamRef<float>> cp;
  conv.collect_params(cp);
  CHECK(nn::parameter_count(cp) == 80u);
  CHECK(conv.macs({1, 1, 28, 28}) == 72u * 784u);

  CHECK_THROWS_AS(model_cost(model, 0), InvalidArgument);
}

TEST_CASE("grayscale PNG files carry the right header and geometry",
          "[metrics][png]") {
  fs::path dir = fs::temp_directory_path() / "pise_png_test";
  fs::create_directories(dir);

  const std::string path = (dir / "ramp.png").string();
  std::vector<std::uint8_t> ramp(4 * 3);
  for (std::size_t i = 0; i < ramp.size(); ++i)
    ramp[i] = std::uint8_t(i * 255 / (ramp.size() - 1));
  write_png_gray(path, 4, 3, ramp);

  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() > 45);
  // Signature.
  const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  for (int i = 0; i < 8; ++i)
    REQUIRE(std::uint8_t(bytes[i]) == sig[i]);
  // IHDR: length 13, then width/height big-endian, depth 8, gray (0).
  CHECK(be32(bytes, 8) == 13u);
  CHECK(bytes.substr(12, 4) == "IHDR");
  CHECK(be32(bytes, 16) == 4u);
  CHECK(be32(bytes, 20) == 3u);
  CHECK(std::uint8_t(bytes[24]) == 8);
  CHECK(std::uint8_t(bytes[25]) == 0);
  CHECK(bytes.find("IDAT") != std::string::npos);
  CHECK(bytes.substr(bytes.size() - 8, 4) == "IEND");

  CHECK_THROWS_AS(write_png_gray(path, 4, 4, ramp), InvalidArgument);

  // Mosaic: 2 columns x 2 rows of 8x8 tiles with 2px margins -> 22x22.
  ImageBatch<float> a(2, 8, 8), b(2, 8, 8);
  Rng rng(3);
  for (auto& v : a.values.raw()) v = float(rng.uniform());
  for (auto& v : b.values.raw()) v = float(rng.uniform());
  const std::string mosaic = (dir / "mosaic.png").string();
  save_mosaic_png(mosaic, {&a, &b});
  const std::string mbytes = slurp(mosaic);
  CHECK(be32(mbytes, 16) == 22u);
  CHECK(be32(mbytes, 20) == 22u);

  ImageBatch<float> odd(2, 8, 9);
  CHECK_THROWS_AS(save_mosaic_png(mosaic, {&a, &odd}), InvalidArgument);
  CHECK(to_gray8(1.7f) == 255);
  CHECK(to_gray8(-0.2f) == 0);
  CHECK(to_gray8(0.5f) == 128);
  fs::remove_all(dir);
}

TEST_CASE("line plots render every series into valid SVG",
          "[metrics][svg]") {
  fs::path dir = fs::temp_directory_path() / "pise_svg_test";
  fs::create_directories(dir);
  const std::string path = (dir / "plot.svg").string();

  PlotSeries one{"method D", {0, 1, 2, 3}, {1.0, 0.8, 0.7, 0.65}};
  PlotSeries two{"baseline A", {0, 1, 2, 3}, {1.0, 0.5, 0.2, 0.1}};
  save_line_plot_svg(path, "Decay", "epoch", "G(t)", {one, two},
                     "index 0.7 vs 0.1");

  const std::string text = slurp(path);
  CHECK(text.find("<svg") == 0);
  CHECK(text.find("method D") != std::string::npos);
  CHECK(text.find("baseline A") != std::string::npos);
  CHECK(text.find("index 0.7 vs 0.1") != std::string::npos);
  std::size_t polylines = 0;
  for (std::size_t at = text.find("<polyline"); at != std::string::npos;
       at = text.find("<polyline", at + 1))
    ++polylines;
  CHECK(polylines == 2);

  // Constant series exercise the degenerate-range padding.
  PlotSeries flat{"flat", {0, 1, 2}, {1.0, 1.0, 1.0}};
  save_line_plot_svg(path, "Flat", "epoch", "G", {flat});
  CHECK(slurp(path).find("flat") != std::string::npos);

  CHECK_THROWS_AS(save_line_plot_svg(path, "t", "x", "y", {}),
                  InvalidArgument);
  PlotSeries bad{"bad", {0, 1}, {1.0}};
  CHECK_THROWS_AS(save_line_plot_svg(path, "t", "x", "y", {bad}),
                  InvalidArgument);
  fs::remove_all(dir);
}
