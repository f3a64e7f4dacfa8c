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

#include <vector>

#include "pise/rng.hpp"

using namespace pise;

TEST_CASE("random streams replay exactly for equal seeds", "[rng]") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    double x = a.uniform(), y = b.uniform(), z = c.uniform();
    all_equal &= (x == y);
    any_diff |= (x != z);
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("derived substream seeds separate by tag and index", "[rng]") {
  auto s1 = derive_seed(7, "shuffle");
  auto s2 = derive_seed(7, "noise");
  auto s3 = derive_seed(7, "shuffle", 1);
  auto s4 = derive_seed(8, "shuffle");
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(s1 != s4);
  CHECK(derive_seed(7, "shuffle") == s1);
}

TEST_CASE("normal sampler first and second moments", "[rng]") {
  Rng rng(99);
  const int n = 200000;
  double sum = 0, sumsq = 0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sumsq += v * v;
  }
  CHECK(sum / n == Catch::Approx(0.0).margin(0.01));
  CHECK(sumsq / n == Catch::Approx(1.0).epsilon(0.02));
}

TEST_CASE("poisson sampler moments across both regimes", "[rng]") {
  for (double lambda : {0.5, 3.0, 25.0, 400.0}) {
    Rng rng(42);
    const int n = 100000;
    double sum = 0, sumsq = 0;
    for (int i = 0; i < n; ++i) {
      double v = double(rng.poisson(lambda));
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double se = std::sqrt(lambda / n);
    CHECK(std::abs(mean - lambda) < 6.0 * se);
    CHECK(var == Catch::Approx(lambda).epsilon(0.05));
  }
  Rng rng(1);
  CHECK(rng.poisson(0.0) == 0);
  CHECK_THROWS_AS(rng.poisson(-1.0), InvalidArgument);
}

TEST_CASE("bounded draws stay in range and shuffles permute", "[rng]") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);

  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == orig);

  Rng r1(9), r2(9);
  std::vector<int> a = orig, b = orig;
  r1.shuffle(a);
  r2.shuffle(b);
  CHECK(a == b);
}
