#include <bit>
#include <random>

#include <gtest/gtest.h>

#include "kamrg/bilinear.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/rg_flow.hpp"

using namespace kamrg;

namespace {

// Random kernel with w(-q,-P) = conj w(q,P), symmetric in P.
KernelTable random_real_level(int d, std::size_t M, int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  DenseKernel w(d, M, n);
  for (auto& z : w.data) z = cplx(nd(rng), nd(rng));
  DenseKernel r = w;
  const std::size_t T = w.tensor_size();
  const std::size_t tuples = ipow(M, n + 1);
  for (std::size_t t = 0; t < tuples; ++t) {
    // all indices negated: digit i -> M-1-i, which is tuples-1-t
    const cplx* a = w.at(t);
    const cplx* b = w.at(tuples - 1 - t);
    for (std::size_t c = 0; c < T; ++c) r.at(t)[c] = 0.5 * (a[c] + std::conj(b[c]));
  }
  return to_table(symmetrize(r));
}

std::vector<KernelTable> random_hierarchy(const TruncationBox& box, int n_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<KernelTable> out;
  for (int n = 0; n <= n_max; ++n) out.push_back(random_real_level(box.dim(), box.size(), n, rng));
  return out;
}

// Direct evaluation over ordered tuples:
// out_n(q;P) = scale sum_k k/C(n,k-1) sum_{|S|=k-1} sum_r g(r) A_k(q; r, P_S) . B_{n+1-k}(r; P_Sc)
// where the r-slot of A is contracted with slot 0 of B and output slots follow P.
std::vector<cplx> oracle(const std::vector<KernelTable>& A, const std::vector<KernelTable>& B,
                         const std::vector<double>& g, double scale, int n, int n_max, std::size_t q,
                         const std::vector<int>& P, int d) {
  const std::size_t M = A[0].modes();
  const std::size_t D = std::size_t(d);
  const std::size_t T = ipow(D, n + 1);
  std::vector<cplx> out(T, 0.0);
  std::vector<std::size_t> digit(std::size_t(n + 1));
  for (int k = 1; k <= std::min(n + 1, n_max); ++k) {
    const int l = n + 1 - k;
    if (l > n_max) continue;
    const double coef = double(k) / binomial(n, k - 1);
    for (unsigned S = 0; S < (1u << n); ++S) {
      if (std::popcount(S) != k - 1) continue;
      std::vector<int> in, outside;
      for (int i = 0; i < n; ++i) (S >> i & 1u ? in : outside).push_back(i);
      std::vector<cplx> a(ipow(D, k + 1)), b(ipow(D, l + 1));
      for (std::size_t r = 0; r < M; ++r) {
        if (g[r] == 0.0) continue;
        std::vector<int> aa{int(r)}, bb;
        for (int i : in) aa.push_back(P[std::size_t(i)]);
        for (int i : outside) bb.push_back(P[std::size_t(i)]);
        A[std::size_t(k)].fetch(&q, aa, a.data());
        B[std::size_t(l)].fetch(&r, bb, b.data());
        for (std::size_t c = 0; c < T; ++c) {
          std::size_t rem = c;
          for (int s = n; s >= 0; --s) {
            digit[std::size_t(s)] = rem % D;
            rem /= D;
          }
          cplx acc = 0.0;
          for (std::size_t x = 0; x < D; ++x) {
            std::size_t ia = digit[0] * D + x, ib = x;
            for (int i : in) ia = ia * D + digit[std::size_t(1 + i)];
            for (int i : outside) ib = ib * D + digit[std::size_t(1 + i)];
            acc += a[ia] * b[ib];
          }
          out[c] += scale * coef * g[r] * acc;
        }
      }
    }
  }
  return out;
}

std::vector<double> even_weights(const TruncationBox& box, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> g(box.size(), 0.0);
  for (std::size_t r = 0; r < box.size(); ++r)
    if (r < box.negate(r)) g[r] = g[box.negate(r)] = u(rng);
  return g;
}

void compare_to_oracle(const std::vector<KernelTable>& A, const std::vector<KernelTable>& B,
                       const TruncationBox& box, int n_max, std::uint64_t seed) {
  BilinearPlan plan(box, n_max);
  auto g = even_weights(box, seed);
  const double scale = 0.75;
  std::vector<KernelTable> out;
  for (int n = 0; n <= n_max; ++n) out.emplace_back(box.dim(), box.size(), 1, n);
  bilinear_rhs(plan, A, B, g, scale, out);
  double worst = 0.0, size = 0.0;
  for (int n = 0; n <= n_max; ++n) {
    const std::size_t M = box.size();
    const std::size_t tuples = ipow(M, n + 1);
    std::vector<int> P(static_cast<std::size_t>(n));
    std::vector<cplx> got(ipow(std::size_t(box.dim()), n + 1));
    for (std::size_t t = 0; t < tuples; ++t) {
      std::size_t rem = t;
      for (int i = n - 1; i >= 0; --i) {
        P[std::size_t(i)] = int(rem % M);
        rem /= M;
      }
      std::size_t q = rem;
      auto want = oracle(A, B, g, scale, n, n_max, q, P, box.dim());
      out[std::size_t(n)].fetch(&q, P, got.data());
      for (std::size_t c = 0; c < want.size(); ++c) {
        worst = std::max(worst, std::abs(got[c] - want[c]));
        size = std::max(size, std::abs(want[c]));
      }
    }
  }
  ASSERT_GT(size, 0.0);
  EXPECT_LT(worst, 1e-13 * size);
}

}  // namespace

TEST(BilinearRhs, MatchesDirectSumPlainFlow) {
  TruncationBox box(2, 1);
  auto w = random_hierarchy(box, 2, 21);
  compare_to_oracle(w, w, box, 2, 5);
}

TEST(BilinearRhs, MatchesDirectSumThreeLevels) {
  TruncationBox box(2, 1);
  auto w = random_hierarchy(box, 3, 22);
  compare_to_oracle(w, w, box, 3, 6);
}

TEST(BilinearRhs, MatchesDirectSumConjugacyFlow) {
  TruncationBox box(2, 1);
  auto w = random_hierarchy(box, 2, 23);
  auto f = random_hierarchy(box, 2, 24);
  compare_to_oracle(f, w, box, 2, 7);
}

TEST(BilinearRhs, ZeroWeightsGiveZero) {
  TruncationBox box(2, 1);
  auto w = random_hierarchy(box, 2, 25);
  BilinearPlan plan(box, 2);
  std::vector<KernelTable> out;
  for (int n = 0; n <= 2; ++n) out.emplace_back(2, box.size(), 1, n);
  bilinear_rhs(plan, w, w, std::vector<double>(box.size(), 0.0), 1.0, out);
  for (const auto& t : out) EXPECT_EQ(t.max_abs(), 0.0);
}

// On the kappa = 0 slice the extended family carries the plain kernel with q'
// as first argument, and the extended flow must reproduce the plain flow there.
TEST(KappaRhs, ZeroSliceReproducesPlainFlow) {
  TruncationBox box(2, 1);
  const int n_max = 2;
  KernelHierarchy h(box, n_max);
  h.levels = random_hierarchy(box, n_max, 31);
  const FrequencyVector w = FrequencyVector::golden();
  CutoffSchedule s;
  FlowEngine engine(w, s, box, n_max, true);
  h.attach_kappa(auto_kappa_grid(w, freeze_eta(w, box), 9, true));
  h.seed_kappa_from_plain();
  const double t = s.eta_inverse(1.2);
  auto plain = engine.rhs_plain(h, t);
  auto ext = engine.rhs_kappa(h, t);
  const std::size_t M = box.size();
  const std::size_t zero = h.kappa->grid.center();
  double worst = 0.0, size = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    const KernelTable& kt = ext.kappa->level(n);
    std::vector<cplx> buf(kt.tensor_size());
    std::vector<int> args(static_cast<std::size_t>(n));
    for (std::size_t tup = 0; tup < kt.tuples(); ++tup) {
      const std::size_t lead = kt.lead_of(tup), q = lead / M;
      args[0] = int(lead % M);
      const int* p = kt.sym_members(tup);
      for (int i = 0; i < n - 1; ++i) args[std::size_t(i + 1)] = p[i];
      plain.level(n).fetch(&q, args, buf.data());
      const cplx* v = kt.at(tup, zero);
      for (std::size_t c = 0; c < buf.size(); ++c) {
        worst = std::max(worst, std::abs(v[c] - buf[c]));
        size = std::max(size, std::abs(buf[c]));
      }
    }
  }
  ASSERT_GT(size, 0.0);
  EXPECT_LT(worst, 1e-13 * size);
  // level 0 and the plain levels agree exactly
  for (int n = 0; n <= n_max; ++n)
    for (std::size_t i = 0; i < plain.level(n).raw().size(); ++i)
      EXPECT_EQ(plain.level(n).raw()[i], ext.level(n).raw()[i]);
}
