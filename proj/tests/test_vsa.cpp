// Copyright (c) 2026, The holofactor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "holofactor/vsa.hpp"

using namespace holofactor;

namespace {

// Scalar reference: integer dot products, no bit packing.
std::vector<double> scalar_mvm(const Codebook& cb, const Hypervector& x) {
  std::vector<double> out(cb.size());
  for (std::size_t i = 0; i < cb.size(); ++i) {
    long dot = 0;
    for (std::size_t d = 0; d < cb.dim(); ++d) dot += cb.row(i)[d] * x[d];
    out[i] = static_cast<double>(dot) / static_cast<double>(cb.dim());
  }
  return out;
}

}  // namespace

TEST(Hypervector, RejectsNonBipolarAndEmpty) {
  EXPECT_THROW(Hypervector(std::vector<std::int8_t>{1, 0, -1}), std::invalid_argument);
  EXPECT_THROW(Hypervector(std::vector<std::int8_t>{}), std::invalid_argument);
  EXPECT_NO_THROW((Hypervector{1, -1, 1}));
}

TEST(Hypervector, RandomIsBipolarAndBalanced) {
  Rng rng(3);
  const auto x = Hypervector::random(10000, rng);
  long sum = 0;
  for (auto e : x.elements()) {
    ASSERT_TRUE(e == 1 || e == -1);
    sum += e;
  }
  EXPECT_LT(std::abs(sum), 400);  // 4 sigma
}

TEST(Algebra, BindUnbindInverse) {
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = Hypervector::random(257, rng);
    const auto b = Hypervector::random(257, rng);
    const auto c = Hypervector::random(257, rng);
    EXPECT_EQ(unbind(bind({a, b}), a), b);
    EXPECT_EQ(bind({a, b}), bind({b, a}));
    EXPECT_EQ(bind({bind({a, b}), c}), bind({a, bind({b, c})}));
    EXPECT_EQ(bind({a, a}), Hypervector::ones(257));
  }
}

TEST(Algebra, BindWithOneVector) {
  EXPECT_EQ(bind({Hypervector{1, -1, 1}, Hypervector{-1, -1, 1}}), (Hypervector{-1, 1, 1}));
}

TEST(Algebra, BindIsQuasiOrthogonalToInputs) {
  Rng rng(2);
  const auto a = Hypervector::random(4096, rng);
  const auto b = Hypervector::random(4096, rng);
  EXPECT_LT(std::abs(similarity(bind({a, b}), a)), 4.0 / 64.0);
}

TEST(Algebra, BundleMajority) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto a = Hypervector::random(300, rng);
    const auto b = Hypervector::random(300, rng);
    const auto c = Hypervector::random(300, rng);
    const std::vector<Hypervector> xs{a, b, c};
    const auto m = bundle(xs, rng);
    for (std::size_t d = 0; d < 300; ++d) EXPECT_EQ(m[d], (a[d] + b[d] + c[d]) > 0 ? 1 : -1);
    const std::vector<Hypervector> aab{a, a, b};
    EXPECT_EQ(bundle(aab, rng), a);
  }
}

TEST(Algebra, BundleTiesTakeAnInputValue) {
  Rng rng(5);
  const auto a = Hypervector::random(512, rng);
  const auto b = Hypervector::random(512, rng);
  const std::vector<Hypervector> ab{a, b};
  const auto m = bundle(ab, rng);
  int ties_plus = 0;
  int ties = 0;
  for (std::size_t d = 0; d < 512; ++d) {
    if (a[d] == b[d]) {
      EXPECT_EQ(m[d], a[d]);
    } else {
      ++ties;
      ties_plus += m[d] > 0;
    }
  }
  EXPECT_GT(ties, 150);
  EXPECT_NEAR(static_cast<double>(ties_plus) / ties, 0.5, 0.15);
}

TEST(Algebra, SimilarityBounds) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const auto a = Hypervector::random(100, rng);
    const auto b = Hypervector::random(100, rng);
    const double s = similarity(a, b);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
    EXPECT_DOUBLE_EQ(similarity(a, a), 1.0);
    EXPECT_DOUBLE_EQ(similarity(a, -a), -1.0);
  }
  EXPECT_THROW(similarity(Hypervector{1, 1}, Hypervector{1, 1, 1}), std::invalid_argument);
}

TEST(Codebook, RegenerationIsBitIdentical) {
  EXPECT_EQ(random_codebook(16, 100, 42), random_codebook(16, 100, 42));
  EXPECT_FALSE(random_codebook(16, 100, 42) == random_codebook(16, 100, 43));
  EXPECT_THROW(random_codebook(0, 10, 1), std::invalid_argument);
}

TEST(Codebook, MvmMatchesScalarReference) {
  Rng rng(7);
  for (std::size_t d : {1U, 63U, 64U, 65U, 100U, 256U, 1500U}) {
    const auto cb = random_codebook(13, d, d);
    const auto x = Hypervector::random(d, rng);
    EXPECT_EQ(mvm(cb, x), scalar_mvm(cb, x)) << "D=" << d;
  }
}

TEST(Codebook, TransposedMvmMatchesScalarReference) {
  Rng rng(8);
  const auto cb = random_codebook(9, 77, 1);
  std::vector<double> w(9);
  for (auto& v : w) v = rng.uniform() - 0.5;
  w[3] = 0.0;
  const auto out = transposed_mvm(cb, w);
  for (std::size_t d = 0; d < 77; ++d) {
    double ref = 0.0;
    for (std::size_t i = 0; i < 9; ++i) ref += w[i] * cb.row(i)[d];
    EXPECT_NEAR(out[d], ref, 1e-12);
  }
  EXPECT_THROW(transposed_mvm(cb, std::vector<double>(8)), std::invalid_argument);
}

TEST(Codebook, MvmOfMemberIsOne) {
  const auto cb = random_codebook(8, 256, 11);
  const auto s = mvm(cb, cb.vector(5));
  EXPECT_DOUBLE_EQ(s[5], 1.0);
  EXPECT_EQ(argmax(s), 5U);
}

TEST(Permutation, CircularShiftRoundTrip) {
  const Hypervector x{1, -1, -1, 1, 1};
  EXPECT_EQ(circular_shift(x, 1), (Hypervector{1, 1, -1, -1, 1}));
  Rng rng(9);
  const auto y = Hypervector::random(256, rng);
  for (std::ptrdiff_t k : {0, 1, 2, 255, 256, 1000, -3}) {
    EXPECT_EQ(circular_shift(circular_shift(y, k), -k), y);
  }
  EXPECT_EQ(circular_shift(y, 256), y);
}

TEST(Bipolarize, SignsAndZeroTies) {
  Rng rng(10);
  const std::vector<double> v{0.3, -2.0, 0.0, 1e-300};
  const auto b = bipolarize(v, rng);
  EXPECT_EQ(b[0], 1);
  EXPECT_EQ(b[1], -1);
  EXPECT_EQ(b[3], 1);
  int plus = 0;
  const std::vector<double> zeros(2000, 0.0);
  for (auto e : bipolarize(zeros, rng).elements()) plus += e > 0;
  EXPECT_NEAR(plus, 1000, 150);
}

TEST(Argmax, LowestIndexWinsTies) {
  const std::vector<double> v{0.1, 0.5, 0.5, -1.0};
  EXPECT_EQ(argmax(v), 1U);
}

TEST(Rng, SplitSeedIsOrderIndependentAndDistinct) {
  EXPECT_EQ(split_seed(7, 3), split_seed(7, 3));
  EXPECT_NE(split_seed(7, 3), split_seed(7, 4));
  EXPECT_NE(split_seed(7, 3), split_seed(8, 3));
}

TEST(Rng, NormalMoments) {
  Rng rng(12);
  const int n = 400000;
  double s = 0.0;
  double s2 = 0.0;
  double s4 = 0.0;
  int tail = 0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    s4 += z * z * z * z;
    tail += std::abs(z) > 3.0;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  EXPECT_NEAR(s4 / n, 3.0, 0.06);
  EXPECT_NEAR(static_cast<double>(tail) / n, 0.0026998, 0.0005);
}
