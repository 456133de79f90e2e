#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kamrg/kernels.hpp"
#include "kamrg/potential.hpp"

using namespace kamrg;

namespace {

AnalyticPotential random_potential(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  AnalyticPotential v(2);
  for (Mode r : {Mode{1, 0}, Mode{0, 1}, Mode{1, 1}, Mode{1, -1}, Mode{2, 0}})
    v.set(r, cplx(u(rng), u(rng)) * std::exp(-double(std::abs(r[0]) + std::abs(r[1]))));
  return v;
}

}  // namespace

TEST(Potential, CosSumCoefficients) {
  auto v = AnalyticPotential::cos_sum(3);
  EXPECT_EQ(v.coeffs().size(), 6u);
  EXPECT_EQ(v.coeff({0, -1, 0}), cplx(0.5, 0.0));
  EXPECT_NEAR(v.eval({0.3, 1.1, -2.0}), std::cos(0.3) + std::cos(1.1) + std::cos(-2.0), 1e-15);
}

TEST(Potential, JsonCompletesPartnersAndRejectsConflicts) {
  nlohmann::json ok = {{"d", 2}, {"modes", {{{"r", {1, 0}}, {"re", 0.5}, {"im", 0.25}}}}};
  auto v = AnalyticPotential::from_json(ok);
  EXPECT_EQ(v.coeff({-1, 0}), cplx(0.5, -0.25));
  auto round = AnalyticPotential::from_json(v.to_json());
  EXPECT_EQ(round.coeffs(), v.coeffs());

  nlohmann::json bad = {{"d", 2},
                        {"modes", {{{"r", {1, 0}}, {"re", 0.5}}, {{"r", {-1, 0}}, {"re", 0.4}}}}};
  EXPECT_THROW(AnalyticPotential::from_json(bad), std::invalid_argument);
  nlohmann::json imag0 = {{"d", 2}, {"modes", {{{"r", {0, 0}}, {"re", 1.0}, {"im", 1.0}}}}};
  EXPECT_THROW(AnalyticPotential::from_json(imag0), std::invalid_argument);
}

TEST(Potential, GradientMatchesFiniteDifference) {
  auto v = random_potential(3);
  std::vector<std::vector<double>> pts{{0.1, 0.2}, {2.0, -1.3}, {4.0, 5.5}};
  auto g = eval_grad_v(v, pts);
  const double h = 1e-6;
  for (std::size_t p = 0; p < pts.size(); ++p)
    for (int i = 0; i < 2; ++i) {
      auto a = pts[p], b = pts[p];
      a[std::size_t(i)] += h;
      b[std::size_t(i)] -= h;
      EXPECT_NEAR(g[p][std::size_t(i)], (v.eval(a) - v.eval(b)) / (2 * h), 1e-8);
    }
}

TEST(Potential, FitBoundsCoefficients) {
  auto v = random_potential(5);
  auto f = v.fit();
  EXPECT_GT(f.C, 0.0);
  EXPECT_GT(f.b, 0.0);
  EXPECT_GT(f.R, 0.0);
  for (const auto& [r, c] : v.coeffs())
    EXPECT_LE(std::abs(c), f.C * std::exp(-2.0 * f.b * euclidean_norm(r)) * std::exp(1.0) * (1 + 1e-12));
}

TEST(InitialKernels, ClosedFormEntries) {
  auto v = AnalyticPotential::cos_sum(2);
  TruncationBox box(2, 2);
  const double lambda = 0.01;
  auto h = build_initial_kernels(v, lambda, 2, box);
  // u_0(e1) = lambda v(e1) i e1
  const std::size_t e1 = std::size_t(box.index(Mode{1, 0}));
  EXPECT_EQ(h.level(0).at(e1)[0], cplx(0.0, 0.005));
  EXPECT_EQ(h.level(0).at(e1)[1], cplx(0.0, 0.0));
  // u_1(e2; -e1) has r = e1 + e2, not a potential mode
  const int m = int(box.index(Mode{-1, 0}));
  const std::size_t e2 = std::size_t(box.index(Mode{0, 1}));
  const auto& t1 = h.level(1);
  for (std::size_t c = 0; c < t1.tensor_size(); ++c) EXPECT_EQ(t1.at(t1.locate(&e2, std::vector<int>{m}))[c], 0.0);
  // u_2(e1; 0, 0) = lambda v(e1) / 2 (i e1)^{x3}: only the (0,0,0) entry, equal to -i lambda / 4
  const int z = int(box.zero_index());
  std::vector<cplx> buf(8);
  h.level(2).fetch(&e1, std::vector<int>{z, z}, buf.data());
  EXPECT_NEAR(std::abs(buf[0] - cplx(0.0, -lambda / 4.0)), 0.0, 1e-18);
  for (std::size_t c = 1; c < 8; ++c) EXPECT_EQ(buf[c], 0.0);
}

// Exact symmetries of the initial data: Ward, transpose and reality, for the
// default potential and for random real potentials.
TEST(InitialKernels, WardTransposeRealityExact) {
  TruncationBox box(2, 2);
  std::vector<AnalyticPotential> pots{AnalyticPotential::cos_sum(2), random_potential(11), random_potential(12)};
  for (const auto& v : pots) {
    auto h = build_initial_kernels(v, 1e-3, 3, box);
    EXPECT_EQ(reality_residual(h), 0.0);
    for (int n = 0; n < 3; ++n) EXPECT_LE(ward_residual_all_directions(h, n), 1e-14) << n;
    for (int n = 1; n <= 3; ++n) EXPECT_LE(transpose_residual(h, n), 1e-14) << n;
    EXPECT_EQ(w0_zero_mode(h).first, 0.0);
  }
}

TEST(InitialKernels, LinearInLambda) {
  auto v = random_potential(2);
  TruncationBox box(2, 1);
  auto a = build_initial_kernels(v, 1e-3, 2, box);
  auto b = build_initial_kernels(v, 2e-3, 2, box);
  a.axpy(-0.5, b);
  EXPECT_LE(a.max_abs(), 1e-19);
}
