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
#include <random>
#include <vector>

#include "malcom/quantizer.hpp"

namespace malcom {
namespace {

constexpr std::int32_t Z = kExactZero;

TEST(Quantize, HandEvaluatedExample) {
  // p_hat = (0, 1/3, 2/3, 1); floor(2 p_hat + 0.5) = (.., 1, 1, 2 -> 1)
  const std::vector<double> p = {0.0, 1.0, 2.0, 3.0};
  const auto q = quantize(p, 2, ConstantDither{0.5});
  EXPECT_EQ(q.levels, (std::vector<std::int32_t>{Z, 1, 1, 1}));
  EXPECT_EQ(q.min_val, 0.0);
  EXPECT_EQ(q.range, 3.0);
  EXPECT_EQ(q.levels_count, 2u);
}

TEST(Quantize, AllZerosAreExactZeroSymbols) {
  const std::vector<double> p(8, 0.0);
  const auto q = quantize(p, 4, ConstantDither{0.9});
  for (auto s : q.levels) EXPECT_EQ(s, Z);
  for (double v : dequantize(q)) EXPECT_EQ(v, 0.0);
}

TEST(Quantize, ConstantVectorHasZeroRange) {
  const std::vector<double> p(5, -1.25);
  const auto q = quantize(p, 4, ConstantDither{0.7});
  EXPECT_EQ(q.range, 0.0);
  for (auto s : q.levels) EXPECT_EQ(s, 0);
  const double tau = 1.0 + 5.0 / 16.0;
  for (double v : dequantize(q)) EXPECT_DOUBLE_EQ(v, -1.25 / tau);
}

TEST(Quantize, RejectsBadInput) {
  const std::vector<double> p = {1.0, NAN, 2.0};
  try {
    quantize(p, 4, ConstantDither{0.0});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  const std::vector<double> ok = {1.0, 2.0};
  EXPECT_THROW(quantize(ok, 1, ConstantDither{0.0}), Error);
  EXPECT_THROW(quantize(std::vector<double>{}, 4, ConstantDither{0.0}), Error);
  const std::vector<double> inf = {1.0, INFINITY};
  EXPECT_THROW(quantize(inf, 4, ConstantDither{0.0}), Error);
}

TEST(Quantize, MatchesDirectFormulaOnRandomInputs) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> pick_l(2, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t d = 1 + trial % 57;
    const auto L = static_cast<std::uint32_t>(pick_l(gen));
    std::vector<double> p(d);
    for (auto& v : p) v = (gen() % 4 == 0) ? 0.0 : normal(gen);
    const CounterDither dither{make_stream(trial, StreamTag::kDither)};
    const auto q = quantize(p, L, dither);

    double lo = p[0], hi = p[0];
    for (double v : p) lo = std::min(lo, v), hi = std::max(hi, v);
    for (std::size_t i = 0; i < d; ++i) {
      std::int32_t expect;
      if (p[i] == 0.0) {
        expect = Z;
      } else if (hi == lo) {
        expect = 0;
      } else {
        const double cell = std::floor((p[i] - lo) / (hi - lo) * L + dither(i));
        expect = static_cast<std::int32_t>(std::min<double>(cell, L - 1));
      }
      ASSERT_EQ(q.levels[i], expect) << "trial " << trial << " index " << i;
      ASSERT_TRUE(q.levels[i] == Z || (q.levels[i] >= 0 && q.levels[i] < std::int32_t(L)));
    }
  }
}

TEST(Quantize, DeterministicForSameDither) {
  std::vector<double> p(300);
  const auto src = make_stream(1, StreamTag::kData);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = src.laplace(i, 0.3);
  const CounterDither d{make_stream(7, StreamTag::kDither, 2, 9)};
  EXPECT_EQ(quantize(p, 8, d), quantize(p, 8, d));
}

TEST(Dequantize, WorkedExample) {
  QuantizedResidual q;
  q.levels = {Z, 1, 1, 1};
  q.levels_count = 2;
  q.min_val = 0.0;
  q.range = 3.0;
  // tau = 1 + 4/4 = 2; (3 * 1/2 + 0) / 2
  EXPECT_EQ(dequantize(q), (std::vector<double>{0.0, 0.75, 0.75, 0.75}));
}

TEST(Dequantize, LowestLevelIsMinOverTau) {
  QuantizedResidual q;
  q.levels = {0, 0, Z};
  q.levels_count = 3;
  q.min_val = -0.6;
  q.range = 2.0;
  const double tau = 1.0 + 3.0 / 9.0;
  const auto v = dequantize(q);
  EXPECT_DOUBLE_EQ(v[0], -0.6 / tau);
  EXPECT_DOUBLE_EQ(v[1], -0.6 / tau);
  EXPECT_EQ(v[2], 0.0);
}

TEST(Dequantize, RejectsOutOfRangeSymbol) {
  QuantizedResidual q;
  q.levels = {0, 2};
  q.levels_count = 2;
  EXPECT_THROW(dequantize(q), Error);
}

TEST(Dequantize, ZeroEntriesStayExactlyZero) {
  std::vector<double> p(200);
  const auto src = make_stream(4, StreamTag::kData);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = (i % 3 == 0) ? 0.0 : src.normal(i);
  const auto out = dequantize(quantize(p, 8, CounterDither{make_stream(4, StreamTag::kDither)}));
  for (std::size_t i = 0; i < p.size(); i += 3) EXPECT_EQ(out[i], 0.0);
}

TEST(ContractionParams, Examples) {
  auto c = contraction_params(100, 10);
  EXPECT_DOUBLE_EQ(c.tau, 2.0);
  EXPECT_DOUBLE_EQ(c.bound, 0.5);
  c = contraction_params(4, 2);
  EXPECT_DOUBLE_EQ(c.tau, 2.0);
  EXPECT_DOUBLE_EQ(c.bound, 0.5);
  c = contraction_params(10, 1000000);
  EXPECT_GT(c.bound, 0.0);
  EXPECT_LT(c.bound, 1e-10);
  EXPECT_THROW(contraction_params(0, 4), Error);
  EXPECT_THROW(contraction_params(4, 1), Error);
}

TEST(EmpiricalContraction, StandardNormalAtL10) {
  std::vector<double> p(100);
  const auto src = make_stream(21, StreamTag::kData);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = src.normal(i);
  EXPECT_LE(empirical_contraction(p, 10, 2000, 5), 0.5 * 1.02);
}

TEST(EmpiricalContraction, SingleTrialAndZeroVector) {
  const std::vector<double> p = {0.3, -1.0, 2.0};
  EXPECT_GE(empirical_contraction(p, 4, 1, 1), 0.0);
  EXPECT_THROW(empirical_contraction(std::vector<double>(4, 0.0), 4, 10, 1), Error);
  EXPECT_THROW(empirical_contraction(p, 4, 0, 1), Error);
}

}  // namespace
}  // namespace malcom
