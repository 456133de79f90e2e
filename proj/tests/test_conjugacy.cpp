#include <cmath>

#include <gtest/gtest.h>

#include "kamrg/conjugacy.hpp"
#include "kamrg/oracles.hpp"

using namespace kamrg;

namespace {

const FrequencyVector kOmega = FrequencyVector::golden();

}  // namespace

TEST(InitialConjugacy, IdentityOnDiagonal) {
  TruncationBox box(2, 1);
  auto f = initial_conjugacy(box, 2, 1.0);
  EXPECT_EQ(f.level(0).max_abs(), 0.0);
  EXPECT_EQ(f.level(2).max_abs(), 0.0);
  const auto& f1 = f.level(1);
  std::vector<cplx> buf(4);
  for (std::size_t q = 0; q < box.size(); ++q)
    for (int p = 0; p < int(box.size()); ++p) {
      f1.fetch(&q, std::vector<int>{p}, buf.data());
      const double diag = std::size_t(p) == q ? 1.0 : 0.0;
      EXPECT_EQ(buf[0], diag);
      EXPECT_EQ(buf[1], 0.0);
      EXPECT_EQ(buf[2], 0.0);
      EXPECT_EQ(buf[3], diag);
    }
  EXPECT_THROW(initial_conjugacy(box, 0, 1.0), std::invalid_argument);
}

TEST(ExtractTorus, RejectsNonzeroMeanAndRequiresConjugacy) {
  TruncationBox box(2, 1);
  FlowState s = make_state(KernelHierarchy(box, 1));
  EXPECT_THROW(extract_torus(s, 0.1), std::invalid_argument);
  s.f = initial_conjugacy(box, 1, 1.0);
  s.f->level(0).at(box.zero_index())[0] = 1e-3;
  EXPECT_THROW(extract_torus(s, 0.1), std::runtime_error);
}

// The RG torus on the hierarchy box against Newton on the same box; the gap
// is the truncation of the hierarchy at n_max = 2, which is O(lambda^4).
TEST(ConjugacyFlow, MatchesNewtonOnHierarchyBox) {
  const double lambda = 1e-3;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 2);
  FlowEngine e(kOmega, CutoffSchedule{}, box, 2);
  StepperConfig cfg;
  cfg.method = "collocation";
  auto run = run_conjugacy_flow(e, v, lambda, cfg);
  auto nr = newton_solve(v, lambda, kOmega, box, lindstedt(v, kOmega, box, 2).sum(lambda));
  ASSERT_TRUE(nr.converged);
  EXPECT_LT(FourierSeriesRd::l1_distance(run.torus.x, nr.x), 1e-13);
  EXPECT_EQ(run.torus.tail_certificate, 0.0);
  EXPECT_NEAR(run.t_end, e.freeze_time() + cfg.h, 1e-15);
  for (int k = 0; k < 2; ++k) EXPECT_EQ(run.torus.x.at(box.zero_index())[k], 0.0);
  // first order: x(e1) = (i lambda / 2, 0)
  auto x1 = run.torus.x.coeff({1, 0});
  EXPECT_NEAR(std::abs(x1[0] - cplx(0.0, lambda / 2)), 0.0, 1e-8);
  EXPECT_EQ(x1[1], 0.0);
}

TEST(ConjugacyFlow, ZeroCouplingGivesZeroTorus) {
  auto v = AnalyticPotential::cos_sum(2);
  FlowEngine e(kOmega, CutoffSchedule{}, TruncationBox(2, 1), 2);
  auto run = run_conjugacy_flow(e, v, 0.0, StepperConfig{});
  EXPECT_EQ(run.torus.x.l1_norm(), 0.0);
}

TEST(Continuation, SolvesTorusEquationOnSolverBox) {
  const double lambda = 1e-3;
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 8);
  ContinuationStats st;
  auto sol = continuation_solve(v, lambda, kOmega, box, CutoffSchedule{}, {}, &st);
  auto rep = residual(v, lambda, kOmega, sol.x, Composer::default_grid(8));
  EXPECT_LE(rep.mode_residual_max, 1e-10 * lambda);
  EXPECT_LE(rep.zero_mode, 1e-10 * lambda);
  EXPECT_LT(st.max_spectral_radius, 1.0);
  EXPECT_GT(st.steps, 0);
  auto nr = newton_solve(v, lambda, kOmega, box, sol.x);
  EXPECT_LT(FourierSeriesRd::l1_distance(sol.x, nr.x), 1e-15);
}

TEST(Continuation, RejectsResonance) {
  auto v = AnalyticPotential::cos_sum(2);
  EXPECT_THROW(continuation_solve(v, 1e-3, FrequencyVector({1.0, 2.0}), TruncationBox(2, 2), CutoffSchedule{}),
               std::domain_error);
}
