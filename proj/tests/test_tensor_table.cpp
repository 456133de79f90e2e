#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "kamrg/kernels.hpp"

using namespace kamrg;

TEST(Binomial, SmallValues) {
  EXPECT_EQ(binomial(5, 2), 10.0);
  EXPECT_EQ(binomial(7, 0), 1.0);
  EXPECT_EQ(binomial(3, 4), 0.0);
  EXPECT_EQ(subsets_of_size(6, 3).size(), 20u);
}

TEST(MultisetIndex, RankIsABijectionOntoSortedTuples) {
  for (int n : {0, 1, 2, 3}) {
    MultisetIndex ms(7, n);
    EXPECT_EQ(double(ms.count()), binomial(7 + n - 1, n));
    std::set<std::vector<int>> seen;
    for (std::size_t r = 0; r < ms.count(); ++r) {
      const int* a = ms.members(r);
      std::vector<int> v(a, a + n);
      EXPECT_TRUE(std::is_sorted(v.begin(), v.end()));
      EXPECT_EQ(ms.rank(a), r);
      seen.insert(v);
    }
    EXPECT_EQ(seen.size(), ms.count());
  }
}

TEST(SlotPermutation, IdentityAndSwap) {
  auto id = slot_permutation_map(3, {0, 1, 2});
  for (std::size_t c = 0; c < id.size(); ++c) EXPECT_EQ(id[c], c);
  auto sw = slot_permutation_map(2, {1, 0});
  // digits (a,b) -> stored (b,a)
  EXPECT_EQ(sw[0], 0u);
  EXPECT_EQ(sw[1], 2u);
  EXPECT_EQ(sw[2], 1u);
  EXPECT_EQ(sw[3], 3u);
}

TEST(KernelTable, FetchUndoesSortedStorage) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  const int d = 2;
  const std::size_t M = 5;
  for (int n = 1; n <= 3; ++n) {
    DenseKernel w(d, M, n);
    for (auto& z : w.data) z = cplx(nd(rng), nd(rng));
    DenseKernel s = symmetrize(w);
    KernelTable t = to_table(s);
    DenseKernel back = to_dense(t);
    ASSERT_EQ(back.data.size(), s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) EXPECT_LT(std::abs(back.data[i] - s.data[i]), 1e-14);
  }
}

TEST(KernelTable, LocateIgnoresArgumentOrder) {
  KernelTable t(2, 9, 1, 3);
  std::size_t q = 4;
  std::vector<int> a{7, 1, 3}, b{3, 7, 1};
  EXPECT_EQ(t.locate(&q, a), t.locate(&q, b));
  EXPECT_THROW(KernelTable(2, 9, 3, 1), std::invalid_argument);
  EXPECT_THROW(t.locate(&q, std::vector<int>{1, 2}), std::invalid_argument);
}

TEST(KernelTable, AxpyAndScale) {
  KernelTable a(2, 3, 1, 1), b(2, 3, 1, 1);
  for (auto& z : b.raw()) z = cplx(1.0, -2.0);
  a.axpy(0.5, b);
  a.axpy(cplx(0.0, 1.0), b);
  a.scale(2.0);
  for (auto& z : a.raw()) EXPECT_EQ(z, cplx(5.0, 0.0));
  EXPECT_DOUBLE_EQ(a.max_abs(), 5.0);
}
