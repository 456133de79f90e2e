#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <gtest/gtest.h>

#include "kamrg/conjugacy.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/rg_flow.hpp"

using namespace kamrg;

namespace {

double f0_distance(const FlowState& a, const FlowState& b) {
  const auto& x = a.f->level(0).raw();
  const auto& y = b.f->level(0).raw();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
  return s;
}

FlowState run(const FlowEngine& e, double lambda, const StepperConfig& cfg, double t) {
  auto v = AnalyticPotential::cos_sum(2);
  auto s = make_state(build_initial_kernels(v, lambda, e.n_max(), e.box()), initial_conjugacy(e.box(), e.n_max(), 1.0));
  integrate(e, s, t, cfg);
  return s;
}

}  // namespace

TEST(Collocation, NodesMatchReferenceGaussLegendre) {
  auto c = detail::gauss_nodes(5);
  std::vector<double> ref;
  for (double x : boost::math::quadrature::gauss<double, 5>::abscissa()) {
    ref.push_back(0.5 * (1.0 - x));
    ref.push_back(0.5 * (1.0 + x));
  }
  std::sort(ref.begin(), ref.end());
  ref.erase(std::unique(ref.begin(), ref.end()), ref.end());
  ASSERT_EQ(ref.size(), c.size());
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-15);
}

TEST(Collocation, MatrixIntegratesPolynomialsExactly) {
  for (int m : {3, 5, 8}) {
    auto c = detail::gauss_nodes(m);
    std::vector<double> A, b;
    detail::collocation_matrix(c, A, b);
    for (int p = 0; p < m; ++p) {
      double sb = 0.0;
      for (int j = 0; j < m; ++j) sb += b[std::size_t(j)] * std::pow(c[std::size_t(j)], p);
      EXPECT_NEAR(sb, 1.0 / (p + 1), 1e-14);
      for (int i = 0; i < m; ++i) {
        double s = 0.0;
        for (int j = 0; j < m; ++j) s += A[std::size_t(i * m + j)] * std::pow(c[std::size_t(j)], p);
        EXPECT_NEAR(s, std::pow(c[std::size_t(i)], p + 1) / (p + 1), 1e-14);
      }
    }
  }
}

TEST(FlowEngine, RejectsResonantFrequencyAndBadStepper) {
  CutoffSchedule s;
  EXPECT_THROW(FlowEngine(FrequencyVector({1.0, 2.0}), s, TruncationBox(2, 2), 2), std::domain_error);
  StepperConfig cfg;
  cfg.method = "euler";
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Flow, ZeroCouplingStaysZero) {
  FlowEngine e(FrequencyVector::golden(), CutoffSchedule{}, TruncationBox(2, 1), 2);
  auto s = run(e, 0.0, StepperConfig{}, auto_t_end(e, 0.05));
  EXPECT_EQ(s.w.max_abs(), 0.0);
  EXPECT_EQ(s.f->level(0).max_abs(), 0.0);
}

// Past the freeze time every weight vanishes, so further integration is the
// identity, bit for bit.
TEST(Flow, FrozenAfterAutoEndTime) {
  FlowEngine e(FrequencyVector::golden(), CutoffSchedule{}, TruncationBox(2, 1), 2);
  StepperConfig cfg;
  auto s = run(e, 1e-2, cfg, auto_t_end(e, cfg.h));
  FlowState later = s;
  integrate(e, later, 2.0 * s.t, cfg);
  EXPECT_EQ(later.w.levels.size(), s.w.levels.size());
  for (int n = 0; n <= 2; ++n) EXPECT_EQ(later.w.level(n).raw(), s.w.level(n).raw());
  for (int n = 0; n <= 2; ++n) EXPECT_EQ(later.f->level(n).raw(), s.f->level(n).raw());
}

TEST(Flow, InvariantsAlongTrace) {
  FlowEngine e(FrequencyVector::golden(), CutoffSchedule{}, TruncationBox(2, 2), 2);
  StepperConfig cfg;
  auto s = run(e, 1e-3, cfg, auto_t_end(e, cfg.h));
  ASSERT_GT(s.trace.size(), 10u);
  for (std::size_t i = 0; i < s.trace.size(); ++i) {
    const auto& r = s.trace[i];
    if (i) {
      EXPECT_GT(r.t, s.trace[i - 1].t);
    }
    EXPECT_LE(r.w0_at_zero, 1e-12 * r.w0_l1);
    EXPECT_LE(r.reality, 1e-12);
    EXPECT_LE(r.transpose, 1e-8);
  }
  // all kernels stay finite and of order lambda
  EXPECT_LT(s.w.max_abs(), 1.0);
}

TEST(Flow, CollocationAndRk4Agree) {
  FlowEngine e(FrequencyVector::golden(), CutoffSchedule{}, TruncationBox(2, 1), 2);
  StepperConfig rk;
  rk.h = 0.0125;
  StepperConfig co;
  co.method = "collocation";
  const double t = auto_t_end(e, 0.05);
  auto a = run(e, 1e-2, rk, t), b = run(e, 1e-2, co, t);
  const double scale = b.f->level(0).max_abs();
  EXPECT_LT(f0_distance(a, b), 1e-6 * scale);
}

// Global RK4 error falls by 2^4 when h is halved.
TEST(Flow, Rk4IsFourthOrder) {
  FlowEngine e(FrequencyVector::golden(), CutoffSchedule{}, TruncationBox(2, 1), 1);
  StepperConfig co;
  co.method = "collocation";
  const double t = auto_t_end(e, 0.05);
  auto ref = run(e, 1e-1, co, t);
  std::vector<double> err;
  for (double h : {0.1, 0.05, 0.025}) {
    StepperConfig rk;
    rk.h = h;
    rk.record_trace = false;
    err.push_back(f0_distance(run(e, 1e-1, rk, t), ref));
  }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) EXPECT_NEAR(std::log2(err[i] / err[i + 1]), 4.0, 0.5);
}
