// Copyright 2026 The malcom-psgd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "malcom/rng.hpp"

namespace malcom {
namespace {

TEST(CounterRng, SameKeyAndCounterGiveSameDraw) {
  const auto a = make_stream(42, StreamTag::kDither, 3, 7);
  const auto b = make_stream(42, StreamTag::kDither, 3, 7);
  for (std::uint64_t c = 0; c < 100; ++c) {
    EXPECT_EQ(a.bits(c), b.bits(c));
    EXPECT_EQ(a.uniform(c), b.uniform(c));
  }
}

TEST(CounterRng, StreamsAreKeyedByEveryComponent) {
  std::set<std::uint64_t> keys;
  for (std::uint64_t seed : {1, 2})
    for (auto tag : {StreamTag::kDither, StreamTag::kBatch, StreamTag::kData})
      for (std::uint64_t a : {0, 1})
        for (std::uint64_t b : {0, 1}) keys.insert(make_stream(seed, tag, a, b).key());
  EXPECT_EQ(keys.size(), 2u * 3u * 2u * 2u);
}

TEST(CounterRng, UniformInUnitInterval) {
  const auto r = make_stream(9, StreamTag::kMonteCarlo);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform(i);
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // standard error of the mean is 1/sqrt(12 n) ~ 9e-4
  EXPECT_NEAR(sum / n, 0.5, 5e-3);
}

TEST(CounterRng, NormalMoments) {
  const auto r = make_stream(11, StreamTag::kMonteCarlo);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal(i);
    s1 += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(CounterRng, LaplaceMeanAbsoluteIsScale) {
  const auto r = make_stream(13, StreamTag::kMonteCarlo);
  const int n = 200000;
  double s = 0.0, signed_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = r.laplace(i, 0.7);
    s += std::abs(x);
    signed_sum += x;
  }
  EXPECT_NEAR(s / n, 0.7, 0.01);
  EXPECT_NEAR(signed_sum / n, 0.0, 0.01);
}

TEST(CounterRng, BelowStaysInRangeAndCoversIt) {
  const auto r = make_stream(5, StreamTag::kBatch);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto k = r.below(i, 7);
    ASSERT_LT(k, 7u);
    ++hist[k];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

}  // namespace
}  // namespace malcom
