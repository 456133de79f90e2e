#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "kamrg/lattice.hpp"

using namespace kamrg;

TEST(FrequencyVector, RejectsDegenerateInput) {
  EXPECT_THROW(FrequencyVector({1.0}), std::invalid_argument);
  EXPECT_THROW(FrequencyVector({1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(FrequencyVector({1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(FrequencyVector({1.0, NAN}), std::invalid_argument);
  EXPECT_NO_THROW(FrequencyVector({1.0, std::sqrt(2.0), std::sqrt(3.0)}));
}

TEST(TruncationBox, IndexingAndNegation) {
  TruncationBox box(3, 2);
  ASSERT_EQ(box.size(), 125u);
  for (std::size_t i = 0; i < box.size(); ++i) {
    EXPECT_EQ(box.index(box.mode(i)), long(i));
    Mode q = box.mode(i), nq = box.mode(box.negate(i));
    for (int k = 0; k < 3; ++k) EXPECT_EQ(nq[std::size_t(k)], -q[std::size_t(k)]);
  }
  EXPECT_EQ(box.mode(box.zero_index()), Mode({0, 0, 0}));
  EXPECT_EQ(box.index(Mode{3, 0, 0}), -1);
  EXPECT_FALSE(box.contains(Mode{0, -3, 0}));
}

TEST(TruncationBox, AddStaysInsideOrReportsOutside) {
  TruncationBox box(2, 2);
  for (std::size_t a = 0; a < box.size(); ++a)
    for (std::size_t b = 0; b < box.size(); ++b) {
      Mode s{box.mode(a)[0] + box.mode(b)[0], box.mode(a)[1] + box.mode(b)[1]};
      EXPECT_EQ(box.add(a, b), box.index(s));
    }
}

TEST(SmallDivisor, CompensatedSumMatchesLongDouble) {
  FrequencyVector w({1.0, std::numbers::phi, std::sqrt(2.0)});
  TruncationBox box(3, 8);
  for (std::size_t i = 0; i < box.size(); ++i) {
    long double ref = 0.0L;
    for (int k = 0; k < 3; ++k) ref += (long double)w.omega[std::size_t(k)] * box.coords(i)[k];
    EXPECT_NEAR(small_divisor(w, box.coords(i)), double(ref), 4e-16 * 24.0);
  }
}

// Golden-mean best approximants are Fibonacci pairs: on the box of radius
// F_{k+1} the smallest |q_1 + phi q_2| is phi^{-k}.
TEST(SmallDivisor, GoldenMinimumIsFibonacciApproximant) {
  const FrequencyVector w = FrequencyVector::golden();
  const int fib[] = {1, 1, 2, 3, 5, 8, 13};  // F_1, F_2, ...
  for (int k = 1; k <= 5; ++k) {
    TruncationBox box(2, fib[k]);  // F_{k+1}
    EXPECT_NEAR(min_abs_divisor(w, box), std::pow(std::numbers::phi, -k), 1e-14) << "k=" << k;
  }
}

TEST(Diophantine, BruteForceAgrees) {
  FrequencyVector w = FrequencyVector::golden();
  TruncationBox box(2, 8);
  auto est = estimate_diophantine(w, box, 1.0);
  double ref = INFINITY;
  for (int a = -8; a <= 8; ++a)
    for (int b = -8; b <= 8; ++b) {
      if (a == 0 && b == 0) continue;
      ref = std::min(ref, std::abs(a + std::numbers::phi * b) * std::hypot(a, b));
    }
  EXPECT_NEAR(est.a, ref, 1e-14);
  EXPECT_TRUE(est.resonances.empty());
  EXPECT_DOUBLE_EQ(w.dio_a, est.a);
}

TEST(Diophantine, ResonanceIsReported) {
  FrequencyVector w({1.0, 2.0});
  TruncationBox box(2, 2);
  auto est = estimate_diophantine(w, box, 1.0);
  EXPECT_EQ(est.a, 0.0);
  ASSERT_FALSE(est.resonances.empty());
  const int q[] = {2, -1};
  EXPECT_TRUE(is_resonant(w, q));
  EXPECT_EQ(min_abs_divisor(w, box), 0.0);
}

TEST(LambdaSet, ShrinksToZeroModeAndIsSymmetric) {
  const FrequencyVector w = FrequencyVector::golden();
  TruncationBox box(2, 2);
  EXPECT_EQ(lambda_set(w, box, 0.0).size(), box.size());
  auto big = lambda_set(w, box, 1e6);
  ASSERT_EQ(big.size(), 1u);
  EXPECT_EQ(big[0], Mode({0, 0}));
  auto mid = lambda_set_indices(w, box, 2.0);
  for (std::size_t i : mid)
    EXPECT_NE(std::find(mid.begin(), mid.end(), box.negate(i)), mid.end());
}
