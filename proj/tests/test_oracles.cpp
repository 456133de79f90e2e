#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "kamrg/oracles.hpp"

using namespace kamrg;

namespace {

const FrequencyVector kOmega = FrequencyVector::golden();

AnalyticPotential cos_first() {
  AnalyticPotential v(2);
  v.set({1, 0}, cplx(0.5, 0.0));
  return v;
}

}  // namespace

TEST(Lindstedt, FirstOrderSingleCosine) {
  TruncationBox box(2, 3);
  auto lin = lindstedt(cos_first(), kOmega, box, 1);
  const auto& x = lin.terms[0];
  for (std::size_t i = 0; i < box.size(); ++i) {
    Mode q = box.mode(i);
    cplx want = 0.0;
    if (q == Mode{1, 0}) want = cplx(0.0, 0.5);
    if (q == Mode{-1, 0}) want = cplx(0.0, -0.5);
    EXPECT_NEAR(std::abs(x.at(i)[0] - want), 0.0, 1e-15) << to_string(q);
    EXPECT_NEAR(std::abs(x.at(i)[1]), 0.0, 1e-15);
  }
}

TEST(Lindstedt, SupportRealityAndZeroMode) {
  TruncationBox box(2, 6);
  auto lin = lindstedt(AnalyticPotential::cos_sum(2), kOmega, box, 5);
  for (int k = 1; k <= 5; ++k) {
    const auto& t = lin.terms[std::size_t(k - 1)];
    EXPECT_LE(t.reality_residual(), 1e-14);
    for (std::size_t i = 0; i < box.size(); ++i) {
      Mode q = box.mode(i);
      // zero up to the roundoff of the pseudo-spectral composition
      if (std::max(std::abs(q[0]), std::abs(q[1])) > k) {
        EXPECT_LE(std::abs(t.at(i)[0]), 1e-14 * t.l1_norm());
        EXPECT_LE(std::abs(t.at(i)[1]), 1e-14 * t.l1_norm());
      }
    }
    // the mean of the force vanishes order by order
    EXPECT_LE(lin.zero_mode[std::size_t(k - 1)], 1e-13);
  }
  // the desk coupling range ends at 1e-2
  EXPECT_GT(lin.radius_estimate(), 1e-2);
}

TEST(Lindstedt, ResonantFrequencyFails) {
  EXPECT_THROW(lindstedt(AnalyticPotential::cos_sum(2), FrequencyVector({1.0, 2.0}), TruncationBox(2, 4), 3),
               std::domain_error);
}

TEST(Newton, AgreesWithHighOrderLindstedt) {
  const double lambda = 1e-3;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 8);
  auto lin = lindstedt(v, kOmega, box, 8);
  auto nr = newton_solve(v, lambda, kOmega, box, lin.sum(lambda));
  ASSERT_TRUE(nr.converged);
  EXPECT_LT(FourierSeriesRd::l1_distance(nr.x, lin.sum(lambda)), 1e-12);
  auto rep = residual(v, lambda, kOmega, nr.x, Composer::default_grid(8));
  EXPECT_LE(rep.mode_residual_max, 1e-13 * lambda);
  EXPECT_LE(rep.sup_residual, 1e-12);
}

TEST(Newton, QuadraticConvergenceFromZero) {
  const double lambda = 1e-2;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 6);
  auto nr = newton_solve(v, lambda, kOmega, box, FourierSeriesRd(box));
  ASSERT_TRUE(nr.converged);
  const auto& s = nr.step_history;
  ASSERT_GE(s.size(), 3u);
  // |dx_{k+1}| <= C |dx_k|^2 with a moderate C while both are above roundoff
  for (std::size_t k = 1; k + 1 < s.size() && s[k] > 1e-12; ++k) EXPECT_LT(s[k + 1], 50.0 * s[k] * s[k] / s[0]);
}

TEST(Newton, ZeroCoupling) {
  TruncationBox box(2, 3);
  auto nr = newton_solve(AnalyticPotential::cos_sum(2), 0.0, kOmega, box, FourierSeriesRd(box));
  EXPECT_TRUE(nr.converged);
  EXPECT_EQ(nr.x.l1_norm(), 0.0);
}

TEST(Residual, FirstOrderPartialSumHasSlopeTwo) {
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 8);
  auto first = lindstedt(v, kOmega, box, 1);
  std::vector<double> lambdas{1e-4, 2e-4, 4e-4, 8e-4};
  std::vector<double> r;
  for (double l : lambdas) r.push_back(residual(v, l, kOmega, first.sum(l), 34).sup_residual);
  for (std::size_t i = 0; i + 1 < r.size(); ++i)
    EXPECT_NEAR(std::log(r[i + 1] / r[i]) / std::log(lambdas[i + 1] / lambdas[i]), 2.0, 0.1);
}

TEST(Translation, FamilyMembersSolveTheSameEquation) {
  const double lambda = 1e-3;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 6);
  auto nr = newton_solve(v, lambda, kOmega, box, lindstedt(v, kOmega, box, 2).sum(lambda));
  for (std::vector<double> beta : {std::vector<double>{0.3, -1.2}, std::vector<double>{2.9, 0.05}}) {
    auto chk = translation_family_check(nr.x, beta, v, lambda, kOmega, 26);
    EXPECT_LE(chk.translated_residual, 2.0 * chk.base_residual + 1e-15);
  }
  auto same = translate(nr.x, {0.0, 0.0});
  EXPECT_EQ(FourierSeriesRd::l1_distance(same, nr.x), 0.0);
}

TEST(Translation, AlignmentRecoversShift) {
  const double lambda = 1e-2;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 5);
  auto nr = newton_solve(v, lambda, kOmega, box, FourierSeriesRd(box));
  const std::vector<double> beta{0.7, -2.1};
  FourierSeriesRd moved = translate(nr.x, beta);
  auto chk = translation_family_check(moved, {0.0, 0.0}, v, lambda, kOmega, 22, &nr.x);
  ASSERT_TRUE(chk.distance.has_value());
  EXPECT_LT(*chk.distance, 1e-12);
  EXPECT_NEAR(chk.best_beta[0], beta[0], 1e-9);
  EXPECT_NEAR(chk.best_beta[1], beta[1], 1e-9);
}
