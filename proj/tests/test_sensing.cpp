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

#include <Eigen/QR>
#include <cstring>
#include <future>
#include <sstream>

#include "pise/sensing.hpp"

using namespace pise;

TEST_CASE("measurement count follows floor rule with a floor of one",
          "[sensing]") {
  CHECK(measurement_count(0.05, 28 * 28) == 39);
  CHECK(measurement_count(1.0, 1) == 1);
  // Independent arithmetic oracle for a grid of (rate, pixels) pairs.
  const double rates[] = {0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 1e-6};
  const std::size_t sizes[] = {1, 16, 784, 1024, 4096};
  for (double r : rates)
    for (std::size_t n : sizes) {
      std::size_t expect = static_cast<std::size_t>(
          std::floor(r * static_cast<double>(n)));
      if (expect < 1) expect = 1;
      CHECK(measurement_count(r, n) == expect);
    }
  CHECK(measurement_count(0.02, 784) == 15);
}

TEST_CASE("make_operator validates its arguments", "[sensing]") {
  CHECK_THROWS_AS(make_operator<float>(0.0, 28, 28, PatternKind::gaussian, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(make_operator<float>(1.5, 28, 28, PatternKind::gaussian, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(make_operator<float>(-0.1, 28, 28, PatternKind::binary, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(make_operator<float>(0.5, 0, 28, PatternKind::gaussian, 1),
                  InvalidArgument);
}

TEST_CASE("operator geometry and entry statistics", "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 7);
  REQUIRE(op.rows == 39);
  REQUIRE(op.cols == 784);
  const double scale = 1.0 / std::sqrt(39.0);

  double sum = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < op.entries.size(); ++i) {
    sum += op.entries[i];
    sumsq += double(op.entries[i]) * op.entries[i];
  }
  const double n = double(op.entries.size());
  const double mean = sum / n;
  const double sd = std::sqrt(sumsq / n - mean * mean);
  CHECK(std::abs(mean) < 5.0 * scale / std::sqrt(n));
  CHECK(sd == Catch::Approx(scale).epsilon(0.02));

  auto bop = make_operator<float>(0.05, 28, 28, PatternKind::binary, 7);
  std::size_t plus = 0;
  for (std::size_t i = 0; i < bop.entries.size(); ++i) {
    const float v = bop.entries[i];
    REQUIRE((v == Catch::Approx(scale) || v == Catch::Approx(-scale)));
    plus += v > 0;
  }
  // Binomial(n, 1/2): five sigmas around the mean.
  const double half = n / 2.0, dev = 5.0 * std::sqrt(n) / 2.0;
  CHECK(std::abs(double(plus) - half) < dev);
}

TEST_CASE("operator generation is bit-deterministic in its inputs",
          "[sensing]") {
  auto a = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 42);
  auto b = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 42);
  REQUIRE(a.entries.size() == b.entries.size());
  CHECK(std::memcmp(a.entries.data(), b.entries.data(),
                    a.entries.size() * sizeof(float)) == 0);

  auto c = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 43);
  CHECK(std::memcmp(a.entries.data(), c.entries.data(),
                    a.entries.size() * sizeof(float)) != 0);
}

TEST_CASE("operator file round trip is bit exact", "[sensing]") {
  auto op = make_operator<float>(0.1, 8, 6, PatternKind::binary, 99);
  std::ostringstream s1, s2;
  save_operator(op, s1);
  save_operator(op, s2);
  CHECK(s1.str() == s2.str());  // identical bytes for identical operators

  std::istringstream in(s1.str());
  auto back = load_operator<float>(in);
  CHECK(back.rows == op.rows);
  CHECK(back.cols == op.cols);
  CHECK(back.height == 8);
  CHECK(back.width == 6);
  CHECK(back.pattern_kind == PatternKind::binary);
  CHECK(back.seed == 99);
  CHECK(std::memcmp(back.entries.data(), op.entries.data(),
                    op.entries.size() * sizeof(float)) == 0);

  SECTION("corrupted magic is rejected") {
    std::string bytes = s1.str();
    bytes[0] = 'X';
    std::istringstream bad(bytes);
    CHECK_THROWS_AS(load_operator<float>(bad), IoError);
  }
  SECTION("truncated payload is rejected") {
    std::string bytes = s1.str();
    bytes.resize(bytes.size() - 7);
    std::istringstream bad(bytes);
    CHECK_THROWS_AS(load_operator<float>(bad), IoError);
  }
}

TEST_CASE("identity measurement on a single pixel", "[sensing]") {
  SensingOperator<float> op;
  op.rows = op.cols = op.height = op.width = 1;
  op.rate = 1.0;
  op.entries = Tensor<float>({1, 1});
  op.entries[0] = 1.0f;

  ImageBatch<float> x(1, 1, 1);
  x.values[0] = 0.5f;
  auto y = measure_clean(op, x);
  REQUIRE(y.count == 1);
  REQUIRE(y.length == 1);
  CHECK(y.values[0] == 0.5f);
}

TEST_CASE("awgn at sigma_rel zero reproduces the clean measurements",
          "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 3);
  ImageBatch<float> x(4, 28, 28);
  Rng rng(11);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    x.values[i] = float(rng.uniform());

  auto clean = measure_clean(op, x);
  Rng noise_rng(5);
  auto noisy = measure(op, x, NoiseSpec::awgn(0.0), noise_rng);
  REQUIRE(noisy.values.size() == clean.values.size());
  for (std::size_t i = 0; i < clean.values.size(); ++i)
    CHECK(noisy.values[i] == clean.values[i]);
}

TEST_CASE("poisson sample mean matches the clean value (Monte-Carlo oracle)",
          "[sensing]") {
  auto op = make_operator<double>(0.5, 2, 2, PatternKind::gaussian, 17);
  ImageBatch<double> x(1, 2, 2);
  x.values[0] = 0.9;
  x.values[1] = 0.2;
  x.values[2] = 0.55;
  x.values[3] = 0.7;

  auto clean = measure_clean(op, x);
  const double photons = 1.0e4;
  const int reps = 1000;

  std::vector<double> sum(clean.values.size(), 0.0);
  Rng rng(123);
  double scale = 0.0, shift = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto noisy = measure(op, x, NoiseSpec::poisson(photons), rng);
    scale = noisy.noise_tag.applied_poisson_scale;
    shift = noisy.noise_tag.applied_poisson_shift;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += noisy.values[i];
  }
  REQUIRE(scale > 0.0);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double mean = sum[i] / reps;
    const double lambda = (clean.values[i] - shift) * scale;
    // standard error of the rescaled Poisson mean over `reps` draws
    const double se = std::sqrt(std::max(lambda, 0.0)) / scale /
                      std::sqrt(double(reps));
    CHECK(std::abs(mean - clean.values[i]) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("poisson converges to clean measurements as photons grow",
          "[sensing]") {
  auto op = make_operator<double>(0.05, 28, 28, PatternKind::binary, 21);
  ImageBatch<double> x(8, 28, 28);
  Rng rng(7);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    x.values[i] = rng.uniform();

  auto clean = measure_clean(op, x);
  Rng noise_rng(77);
  auto noisy = measure(op, x, NoiseSpec::poisson(1.0e6), noise_rng);

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < clean.values.size(); ++i) {
    const double d = noisy.values[i] - clean.values[i];
    num += d * d;
    den += clean.values[i] * clean.values[i];
  }
  CHECK(std::sqrt(num / den) < 1e-2);
}

TEST_CASE("quantizer analytic cases", "[sensing]") {
  MeasurementBatch<double> m(1, 1);
  m.values[0] = 0.5;
  auto q8 = quantize(m, 8, 0.0, 1.0);
  CHECK(std::abs(q8.values[0] - 0.5) <= 1.0 / 510.0 + 1e-15);

  // Two-level quantizer: 0.1 and 0.9 land in the low and high cells.
  MeasurementBatch<double> two(1, 2);
  two.values[0] = 0.1;
  two.values[1] = 0.9;
  auto q1 = quantize(two, 1, 0.0, 1.0);
  CHECK(q1.values[0] == 0.25);
  CHECK(q1.values[1] == 0.75);
  CHECK(q1.values[0] < 0.5);
  CHECK(q1.values[1] > 0.5);

  CHECK_THROWS_AS(quantize(m, 0, 0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(quantize(m, 8, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(quantize(m, 8, 2.0, 1.0), InvalidArgument);
}

TEST_CASE("quantizer error bound, idempotence, monotonicity", "[sensing]") {
  Rng rng(31);
  for (int bits : {1, 4, 8}) {
    const double lo = -2.0, hi = 3.0;
    const double bound = (hi - lo) / std::ldexp(1.0, bits + 1);
    MeasurementBatch<float> m(16, 64);
    for (std::size_t i = 0; i < m.values.size(); ++i)
      m.values[i] = float(rng.uniform(lo, hi));

    auto q = quantize(m, bits, lo, hi);
    auto qq = quantize(q, bits, lo, hi);
    double prev_in = -1e300, prev_out = -1e300;
    std::vector<std::pair<float, float>> pairs;
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      CHECK(std::abs(double(q.values[i]) - double(m.values[i])) <=
            bound + 1e-12);
      CHECK(qq.values[i] == q.values[i]);  // exact idempotence
      pairs.emplace_back(m.values[i], q.values[i]);
    }
    std::sort(pairs.begin(), pairs.end());
    for (auto& [in, out] : pairs) {
      if (in >= prev_in) CHECK(double(out) >= prev_out - 1e-12);
      prev_in = in;
      prev_out = out;
    }
  }
}

TEST_CASE("adjoint proxy of zero measurements is the zero image",
          "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 5);
  MeasurementBatch<float> y(3, op.rows);
  auto proxy = adjoint_proxy(op, y);
  for (std::size_t i = 0; i < proxy.values.size(); ++i)
    CHECK(proxy.values[i] == 0.0f);

  MeasurementBatch<float> bad(1, op.rows + 1);
  CHECK_THROWS_AS(adjoint_proxy(op, bad), InvalidArgument);
}

TEST_CASE("orthonormal full-rank operator inverts through the adjoint",
          "[sensing]") {
  // Oracle: with orthonormal rows spanning the full space, A^T A = I, so
  // the proxy of a noiseless measurement recovers the scene exactly.
  const std::size_t n = 16;
  Eigen::MatrixXd g(n, n);
  Rng rng(13);
  for (std::size_t i = 0; i < n * n; ++i) g.data()[i] = rng.normal();
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();

  SensingOperator<double> op;
  op.rows = op.cols = n;
  op.height = op.width = 4;
  op.rate = 1.0;
  op.entries = Tensor<double>({n, n});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < n; ++c) op.entries[r * n + c] = q(r, c);

  ImageBatch<double> x(2, 4, 4);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    x.values[i] = rng.uniform();

  auto y = measure_clean(op, x);
  auto back = adjoint_proxy(op, y);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    CHECK(back.values[i] == Catch::Approx(x.values[i]).epsilon(1e-5));
}

TEST_CASE("adjoint dot-product identity across pattern kinds", "[sensing]") {
  Rng rng(2024);
  for (PatternKind kind : {PatternKind::gaussian, PatternKind::binary}) {
    for (double rate : {0.02, 0.05, 0.2}) {
      auto op = make_operator<double>(rate, 28, 28, kind, rng.bits());
      ImageBatch<double> x(1, 28, 28);
      for (std::size_t i = 0; i < x.values.size(); ++i)
        x.values[i] = rng.normal();
      MeasurementBatch<double> y(1, op.rows);
      for (std::size_t i = 0; i < y.values.size(); ++i)
        y.values[i] = rng.normal();

      auto ax = measure_clean(op, x);
      auto aty = adjoint_proxy(op, y);
      const double lhs =
          dot_double(ax.values.data(), y.values.data(), op.rows);
      const double rhs =
          dot_double(x.values.data(), aty.values.data(), op.cols);
      CHECK(std::abs(lhs - rhs) / (std::abs(lhs) + 1e-12) < 1e-5);
    }
  }
}

TEST_CASE("normalize_proxy maps image ranges onto [0,1]", "[sensing]") {
  ImageBatch<float> constant(1, 3, 3);
  constant.values.fill(7.3f);
  auto n1 = normalize_proxy(constant);
  for (std::size_t i = 0; i < n1.values.size(); ++i)
    CHECK(n1.values[i] == 0.5f);

  ImageBatch<float> unit(1, 2, 2);
  unit.values[0] = 0.0f;
  unit.values[1] = 1.0f;
  unit.values[2] = 0.25f;
  unit.values[3] = 0.75f;
  auto n2 = normalize_proxy(unit);
  for (std::size_t i = 0; i < unit.values.size(); ++i)
    CHECK(n2.values[i] == Catch::Approx(unit.values[i]).margin(1e-6));

  Rng rng(8);
  ImageBatch<float> random(5, 7, 7);
  for (std::size_t i = 0; i < random.values.size(); ++i)
    random.values[i] = float(rng.normal(0.0, 10.0));
  auto n3 = normalize_proxy(random);
  for (std::size_t b = 0; b < n3.count; ++b) {
    float lo = 2.0f, hi = -1.0f;
    for (std::size_t p = 0; p < n3.pixels(); ++p) {
      lo = std::min(lo, n3.image(b)[p]);
      hi = std::max(hi, n3.image(b)[p]);
    }
    CHECK(lo == Catch::Approx(0.0f).margin(1e-6));
    CHECK(hi == Catch::Approx(1.0f).margin(1e-6));
  }

  ImageBatch<float> nan_batch(1, 2, 2);
  nan_batch.values[0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(normalize_proxy(nan_batch), InvalidArgument);
}

TEST_CASE("measure rejects invalid noise and geometry", "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 5);
  ImageBatch<float> wrong(1, 27, 28);
  Rng rng(1);
  CHECK_THROWS_AS(measure(op, wrong, NoiseSpec::none(), rng), InvalidArgument);

  ImageBatch<float> x(1, 28, 28);
  CHECK_THROWS_AS(measure(op, x, NoiseSpec::awgn(-0.1), rng), InvalidArgument);
  CHECK_THROWS_AS(measure(op, x, NoiseSpec::poisson(0.0), rng),
                  InvalidArgument);
  NoiseSpec q = NoiseSpec::none();
  q.quant_bits = 8;  // no calibrated range supplied
  CHECK_THROWS_AS(measure(op, x, q, rng), InvalidArgument);
}

TEST_CASE("empty batches flow through measurement and back-projection",
          "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 5);
  ImageBatch<float> empty(0, 28, 28);
  auto y = measure_clean(op, empty);
  CHECK(y.count == 0);
  auto proxy = adjoint_proxy(op, y);
  CHECK(proxy.count == 0);
}

TEST_CASE("calibrated quantizer range covers the clean measurements",
          "[sensing]") {
  auto op = make_operator<float>(0.05, 28, 28, PatternKind::gaussian, 9);
  ImageBatch<float> train(32, 28, 28);
  Rng rng(14);
  for (std::size_t i = 0; i < train.values.size(); ++i)
    train.values[i] = float(rng.uniform());

  auto [lo, hi] = calibrate_quant_range(op, train);
  REQUIRE(lo < hi);
  auto clean = measure_clean(op, train);
  std::size_t inside = 0;
  for (std::size_t i = 0; i < clean.values.size(); ++i)
    inside += clean.values[i] >= lo && clean.values[i] <= hi;
  // mu +/- 4 sd clips essentially nothing
  CHECK(double(inside) / double(clean.values.size()) > 0.999);
}

TEST_CASE("concurrent reads of one operator match sequential results",
          "[sensing]") {
  auto op = make_operator<float>(0.1, 16, 16, PatternKind::gaussian, 4);
  ImageBatch<float> x(8, 16, 16);
  Rng rng(3);
  for (std::size_t i = 0; i < x.values.size(); ++i)
    x.values[i] = float(rng.uniform());

  auto seq = measure_clean(op, x);
  auto fut1 = std::async(std::launch::async,
                         [&] { return measure_clean(op, x); });
  auto fut2 = std::async(std::launch::async,
                         [&] { return measure_clean(op, x); });
  auto r1 = fut1.get();
  auto r2 = fut2.get();
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    CHECK(r1.values[i] == seq.values[i]);
    CHECK(r2.values[i] == seq.values[i]);
  }
}
