#pragma once

// Bilinear right-hand sides of the kernel flows. All three flows (plain w,
// conjugacy f, kappa-extended w) share the pattern
//
//   out(q, P) = sum over splits and r of coef * A(.., r, ..) g(r) B(r, ..)
//
// with the r-slot of A contracted against slot 0 of B, followed by
// averaging over the ways of distributing P between the two factors.
// Slot maps are precomputed once per (level, split, subset).

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "kamrg/kernels.hpp"
#include "kamrg/lattice.hpp"
#include "kamrg/tensor_table.hpp"

namespace kamrg {

namespace detail {

// Canonical [lead L slots, r, others (s-1)] -> stored [lead L, sorted s] with
// r at sorted position j.
inline std::vector<std::uint32_t> insertion_map(int d, int L, int s, int j) {
  std::vector<int> target(static_cast<std::size_t>(L + s));
  for (int i = 0; i < L; ++i) target[std::size_t(i)] = i;
  target[std::size_t(L)] = L + j;
  for (int i = 0; i < s - 1; ++i) target[std::size_t(L + 1 + i)] = L + (i < j ? i : i + 1);
  return slot_permutation_map(d, target);
}

inline std::vector<int> positions(unsigned mask, int n, bool inside) {
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (bool(mask >> i & 1u) == inside) out.push_back(i);
  return out;
}

// acc[(o*a + ia)*b + ib] += w * sum_c A[(o*d + c)*a + ia] * B[c*b + ib]
inline void contract_into(cplx* acc, const cplx* A, const cplx* B, cplx w, std::size_t outer,
                          std::size_t d, std::size_t a, std::size_t b) {
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < d; ++c) {
      const cplx* Ar = A + (o * d + c) * a;
      const cplx* Br = B + c * b;
      for (std::size_t ia = 0; ia < a; ++ia) {
        cplx f = w * Ar[ia];
        if (f == 0.0) continue;
        cplx* dst = acc + (o * a + ia) * b;
        for (std::size_t ib = 0; ib < b; ++ib) dst[ib] += f * Br[ib];
      }
    }
}

// Zero pattern of a table: one flag per (slice, tuple), and per mode whether
// any nonzero tuple has it as the first lead / among the symmetric slots.
struct NonzeroIndex {
  std::vector<char> tuple;
  std::vector<char> lead_first;
  std::vector<char> in_sym;
};

inline NonzeroIndex nonzero_index(const KernelTable& t) {
  const std::size_t T = t.tensor_size(), M = t.modes();
  const std::size_t inner = t.lead() == 2 ? M : 1;
  NonzeroIndex z;
  z.tuple.assign(t.slices() * t.tuples(), 0);
  z.lead_first.assign(M, 0);
  z.in_sym.assign(M, 0);
  for (std::size_t sl = 0; sl < t.slices(); ++sl)
    for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
      const cplx* v = t.at(tup, sl);
      if (!std::any_of(v, v + T, [](cplx c) { return c != 0.0; })) continue;
      z.tuple[sl * t.tuples() + tup] = 1;
      z.lead_first[t.lead_of(tup) / inner] = 1;
      const int* p = t.sym_members(tup);
      for (int i = 0; i < t.sym(); ++i) z.in_sym[std::size_t(p[i])] = 1;
    }
  return z;
}

}  // namespace detail

/// Precomputed maps for the plain bilinear form on levels 0..n_max.
class BilinearPlan {
 public:
  struct Split {
    int k = 0, l = 0;
    double coef = 0.0;
    std::vector<unsigned> subsets;                       // |S| = k - 1
    std::vector<std::vector<std::uint32_t>> scatter;    // per subset
    std::vector<std::vector<std::uint32_t>> insert;     // per insertion position, 0..k-1
  };
  struct Level {
    std::vector<Split> splits;
    std::vector<std::size_t> partner;          // tuple of (-q, -P)
    std::vector<std::uint32_t> reverse_map;    // our slots -> partner slots
  };

  BilinearPlan() = default;
  BilinearPlan(const TruncationBox& box, int n_max) : box_(box), n_max_(n_max) {
    const int d = box.dim();
    const std::size_t M = box.size();
    for (int n = 0; n <= n_max; ++n) {
      Level L;
      for (int k = 1; k <= std::min(n + 1, n_max); ++k) {
        Split s;
        s.k = k;
        s.l = n + 1 - k;
        s.coef = double(k) / binomial(n, k - 1);
        s.subsets = subsets_of_size(n, k - 1);
        for (unsigned S : s.subsets) {
          auto in = detail::positions(S, n, true), out = detail::positions(S, n, false);
          std::vector<int> target(static_cast<std::size_t>(n + 1));
          target[0] = 0;
          for (std::size_t a = 0; a < in.size(); ++a) target[1 + a] = 1 + in[a];
          for (std::size_t b = 0; b < out.size(); ++b) target[std::size_t(k) + b] = 1 + out[b];
          s.scatter.push_back(slot_permutation_map(d, target));
        }
        for (int j = 0; j < k; ++j) s.insert.push_back(detail::insertion_map(d, 1, k, j));
        L.splits.push_back(std::move(s));
      }
      KernelTable probe(d, M, 1, n, 1);
      const auto& ms = probe.multiset_index();
      L.partner.resize(probe.tuples());
      std::vector<int> neg(static_cast<std::size_t>(n));
      for (std::size_t tup = 0; tup < probe.tuples(); ++tup) {
        const int* p = probe.sym_members(tup);
        for (int i = 0; i < n; ++i) neg[std::size_t(i)] = int(M - 1) - p[n - 1 - i];
        L.partner[tup] = probe.tuple_index(M - 1 - probe.lead_of(tup), ms.rank(neg.data()));
      }
      std::vector<int> target(static_cast<std::size_t>(n + 1));
      target[0] = 0;
      for (int j = 0; j < n; ++j) target[std::size_t(1 + j)] = 1 + (n - 1 - j);
      L.reverse_map = slot_permutation_map(d, target);
      levels_.push_back(std::move(L));
    }
  }

  const TruncationBox& box() const { return box_; }
  int n_max() const { return n_max_; }
  const Level& level(int n) const { return levels_.at(std::size_t(n)); }

 private:
  TruncationBox box_;
  int n_max_ = 0;
  std::vector<Level> levels_;
};

/// out_n = scale * sum_k coef_k sum_S sum_r A_k(q, r, P_S) g(r) B_{n+1-k}(r, P_Sc)
/// for n = 0..n_max, g indexed by box mode. Uses reality to compute only
/// one tuple of each (t, -t) pair; the inputs must satisfy reality.
inline void bilinear_rhs(const BilinearPlan& plan, const std::vector<KernelTable>& A,
                         const std::vector<KernelTable>& B, const std::vector<double>& g, double scale,
                         std::vector<KernelTable>& out) {
  const TruncationBox& box = plan.box();
  const std::size_t M = box.size();
  const std::size_t d = std::size_t(box.dim());
  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < M; ++r)
    if (g[r] != 0.0) active.push_back(r);
  std::vector<detail::NonzeroIndex> nzA, nzB;
  if (!active.empty()) {
    for (const auto& t : A) nzA.push_back(detail::nonzero_index(t));
    for (const auto& t : B) nzB.push_back(detail::nonzero_index(t));
  }
  for (int n = 0; n <= plan.n_max(); ++n) {
    KernelTable& O = out[std::size_t(n)];
    O.set_zero();
    if (active.empty()) continue;
    const auto& L = plan.level(n);
    // r can only contribute if B_l has a tuple led by r and A_k one holding r
    std::vector<std::vector<std::size_t>> act(L.splits.size());
    bool any_split = false;
    for (std::size_t i = 0; i < L.splits.size(); ++i) {
      const auto& s = L.splits[i];
      for (std::size_t r : active)
        if (nzB[std::size_t(s.l)].lead_first[r] && nzA[std::size_t(s.k)].in_sym[r]) act[i].push_back(r);
      any_split = any_split || !act[i].empty();
    }
    if (!any_split) continue;
    const std::size_t T = O.tensor_size();
    std::vector<cplx> acc(T), gathered, sum(T);
    int Pbuf[32], Sp[32], Sc[32], merged[33];
    for (std::size_t tup = 0; tup < O.tuples(); ++tup) {
      if (L.partner[tup] < tup) continue;
      const std::size_t q = O.lead_of(tup);
      const int* P = O.sym_members(tup);
      std::copy(P, P + n, Pbuf);
      std::fill(sum.begin(), sum.end(), cplx(0.0, 0.0));
      for (std::size_t spl = 0; spl < L.splits.size(); ++spl) {
        const auto& s = L.splits[spl];
        if (act[spl].empty() || !nzA[std::size_t(s.k)].lead_first[q]) continue;
        const KernelTable& At = A[std::size_t(s.k)];
        const KernelTable& Bt = B[std::size_t(s.l)];
        const std::size_t a = ipow(d, s.k - 1), b = ipow(d, s.l);
        gathered.resize(At.tensor_size());
        for (std::size_t si = 0; si < s.subsets.size(); ++si) {
          const unsigned S = s.subsets[si];
          int ns = 0, nc = 0;
          for (int i = 0; i < n; ++i) {
            if (S >> i & 1u)
              Sp[ns++] = Pbuf[i];
            else
              Sc[nc++] = Pbuf[i];
          }
          const std::size_t rankB = Bt.multiset_index().rank(Sc);
          const auto& fa = nzA[std::size_t(s.k)].tuple;
          const auto& fb = nzB[std::size_t(s.l)].tuple;
          bool any = false;
          for (std::size_t r : act[spl]) {
            const std::size_t tb = Bt.tuple_index(r, rankB);
            if (!fb[tb]) continue;
            int j = int(std::lower_bound(Sp, Sp + ns, int(r)) - Sp);
            std::copy(Sp, Sp + j, merged);
            merged[j] = int(r);
            std::copy(Sp + j, Sp + ns, merged + j + 1);
            const std::size_t ta = At.tuple_index(q, At.multiset_index().rank(merged));
            if (!fa[ta]) continue;
            if (!any) std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
            any = true;
            const cplx* Araw = At.at(ta);
            const auto& imap = s.insert[std::size_t(j)];
            for (std::size_t c = 0; c < gathered.size(); ++c) gathered[c] = Araw[imap[c]];
            detail::contract_into(acc.data(), gathered.data(), Bt.at(tb), cplx(g[r], 0.0), d, d, a, b);
          }
          if (!any) continue;
          const auto& smap = s.scatter[si];
          for (std::size_t c = 0; c < T; ++c) sum[smap[c]] += s.coef * acc[c];
        }
      }
      cplx* dst = O.at(tup);
      for (std::size_t c = 0; c < T; ++c) dst[c] = scale * sum[c];
      const std::size_t pt = L.partner[tup];
      if (pt != tup) {
        cplx* pd = O.at(pt);
        for (std::size_t c = 0; c < T; ++c) pd[L.reverse_map[c]] = std::conj(dst[c]);
      }
    }
  }
}

/// Maps for the kappa-extended right-hand side on levels 1..n_max.
class KappaPlan {
 public:
  struct Term {
    int k = 0, l = 0;
    double coef = 0.0;
    std::vector<unsigned> subsets;
    std::vector<std::vector<std::uint32_t>> scatter;
    std::vector<std::vector<std::uint32_t>> insert;  // first term only
  };
  struct Level {
    std::vector<Term> first;   // A = w_k^kappa(q, q', r, P_S), B = plain w_l(r, P_Sc)
    std::vector<Term> second;  // A = w_k^kappa(q, r; P_S), B = w_l^kappa(r, q'; P_Sc)
  };

  KappaPlan() = default;
  KappaPlan(const TruncationBox& box, int n_max) : box_(box), n_max_(n_max) {
    const int d = box.dim();
    for (int n = 1; n <= n_max; ++n) {
      Level L;
      const int m = n - 1;  // symmetric arguments of the output
      for (int k = 2; k <= std::min(n + 1, n_max); ++k) {
        Term t;
        t.k = k;
        t.l = n + 1 - k;
        t.coef = double(k) / n * double(k - 1) / binomial(m, k - 2);
        t.subsets = subsets_of_size(m, k - 2);
        for (unsigned S : t.subsets) {
          auto in = detail::positions(S, m, true), out = detail::positions(S, m, false);
          // canonical [o, q', P_S, P_Sc]
          std::vector<int> target(static_cast<std::size_t>(n + 1));
          target[0] = 0;
          target[1] = 1;
          for (std::size_t a = 0; a < in.size(); ++a) target[2 + a] = 2 + in[a];
          for (std::size_t b = 0; b < out.size(); ++b) target[2 + in.size() + b] = 2 + out[b];
          t.scatter.push_back(slot_permutation_map(d, target));
        }
        for (int j = 0; j < k - 1; ++j) t.insert.push_back(detail::insertion_map(d, 2, k - 1, j));
        L.first.push_back(std::move(t));
      }
      for (int k = 1; k <= std::min(n, n_max); ++k) {
        Term t;
        t.k = k;
        t.l = n + 1 - k;
        t.coef = double(k) / n * double(t.l) / binomial(m, k - 1);
        t.subsets = subsets_of_size(m, k - 1);
        for (unsigned S : t.subsets) {
          auto in = detail::positions(S, m, true), out = detail::positions(S, m, false);
          // canonical [o, P_S, q', P_Sc]
          std::vector<int> target(static_cast<std::size_t>(n + 1));
          target[0] = 0;
          for (std::size_t a = 0; a < in.size(); ++a) target[1 + a] = 2 + in[a];
          target[1 + in.size()] = 1;
          for (std::size_t b = 0; b < out.size(); ++b) target[2 + in.size() + b] = 2 + out[b];
          t.scatter.push_back(slot_permutation_map(d, target));
        }
        L.second.push_back(std::move(t));
      }
      levels_.push_back(std::move(L));
    }
  }

  const TruncationBox& box() const { return box_; }
  int n_max() const { return n_max_; }
  const Level& level(int n) const { return levels_.at(std::size_t(n - 1)); }

 private:
  TruncationBox box_;
  int n_max_ = 0;
  std::vector<Level> levels_;
};

/// Kappa-extended increment for levels 1..n_max of `kap` (one table per
/// level, K slices). g_plain[r] weights the first term; g_shift(r, s) the
/// second, for slice s.
template <class ShiftWeight>
void kappa_rhs(const KappaPlan& plan, const std::vector<KernelTable>& plain, const std::vector<KernelTable>& kap,
               const std::vector<double>& g_plain, ShiftWeight g_shift, double scale,
               std::vector<KernelTable>& out) {
  const TruncationBox& box = plan.box();
  const std::size_t M = box.size();
  const std::size_t d = std::size_t(box.dim());
  const std::size_t K = kap.empty() ? 0 : kap[0].slices();
  std::vector<std::size_t> active_plain;
  for (std::size_t r = 0; r < M; ++r)
    if (g_plain[r] != 0.0) active_plain.push_back(r);
  std::vector<double> gs(M * K);
  for (std::size_t s = 0; s < K; ++s)
    for (std::size_t r = 0; r < M; ++r) gs[s * M + r] = g_shift(r, s);
  std::vector<std::vector<char>> nzP, nzK;
  for (const auto& t : plain) nzP.push_back(detail::nonzero_index(t).tuple);
  for (const auto& t : kap) nzK.push_back(detail::nonzero_index(t).tuple);
  for (int n = 1; n <= plan.n_max(); ++n) {
    KernelTable& O = out[std::size_t(n - 1)];
    O.set_zero();
    const auto& L = plan.level(n);
    const std::size_t T = O.tensor_size();
    std::vector<cplx> acc(T), gathered, sum(T);
    int Pbuf[32], Sp[32], Sc[32], merged[33];
    for (std::size_t s = 0; s < K; ++s) {
      for (std::size_t tup = 0; tup < O.tuples(); ++tup) {
        const std::size_t lead = O.lead_of(tup);
        const std::size_t q = lead / M, qp = lead % M;
        const int* P = O.sym_members(tup);
        const int m = n - 1;
        std::copy(P, P + m, Pbuf);
        std::fill(sum.begin(), sum.end(), cplx(0.0, 0.0));
        for (const auto& t : L.first) {
          if (active_plain.empty()) break;
          const KernelTable& At = kap[std::size_t(t.k - 1)];
          const KernelTable& Bt = plain[std::size_t(t.l)];
          const std::size_t a = ipow(d, t.k - 2), b = ipow(d, t.l);
          gathered.resize(At.tensor_size());
          for (std::size_t si = 0; si < t.subsets.size(); ++si) {
            const unsigned S = t.subsets[si];
            int ns = 0, nc = 0;
            for (int i = 0; i < m; ++i) {
              if (S >> i & 1u)
                Sp[ns++] = Pbuf[i];
              else
                Sc[nc++] = Pbuf[i];
            }
            const std::size_t rankB = Bt.multiset_index().rank(Sc);
            const auto& fa = nzK[std::size_t(t.k - 1)];
            const auto& fb = nzP[std::size_t(t.l)];
            bool any = false;
            for (std::size_t r : active_plain) {
              const std::size_t tb = Bt.tuple_index(r, rankB);
              if (!fb[tb]) continue;
              int j = int(std::lower_bound(Sp, Sp + ns, int(r)) - Sp);
              std::copy(Sp, Sp + j, merged);
              merged[j] = int(r);
              std::copy(Sp + j, Sp + ns, merged + j + 1);
              const std::size_t ta = At.tuple_index(lead, At.multiset_index().rank(merged));
              if (!fa[s * At.tuples() + ta]) continue;
              if (!any) std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
              any = true;
              const cplx* Araw = At.at(ta, s);
              const auto& imap = t.insert[std::size_t(j)];
              for (std::size_t c = 0; c < gathered.size(); ++c) gathered[c] = Araw[imap[c]];
              detail::contract_into(acc.data(), gathered.data(), Bt.at(tb), cplx(g_plain[r], 0.0), d * d, d, a, b);
            }
            if (!any) continue;
            const auto& smap = t.scatter[si];
            for (std::size_t c = 0; c < T; ++c) sum[smap[c]] += t.coef * acc[c];
          }
        }
        for (const auto& t : L.second) {
          const KernelTable& At = kap[std::size_t(t.k - 1)];
          const KernelTable& Bt = kap[std::size_t(t.l - 1)];
          const std::size_t a = ipow(d, t.k - 1), b = ipow(d, t.l);
          for (std::size_t si = 0; si < t.subsets.size(); ++si) {
            const unsigned S = t.subsets[si];
            int ns = 0, nc = 0;
            for (int i = 0; i < m; ++i) {
              if (S >> i & 1u)
                Sp[ns++] = Pbuf[i];
              else
                Sc[nc++] = Pbuf[i];
            }
            const std::size_t rankA = At.multiset_index().rank(Sp);
            const std::size_t rankB = Bt.multiset_index().rank(Sc);
            const auto& fa = nzK[std::size_t(t.k - 1)];
            const auto& fb = nzK[std::size_t(t.l - 1)];
            bool any = false;
            for (std::size_t r = 0; r < M; ++r) {
              double w = gs[s * M + r];
              if (w == 0.0) continue;
              const std::size_t ta = At.tuple_index(q * M + r, rankA);
              const std::size_t tb = Bt.tuple_index(r * M + qp, rankB);
              if (!fa[s * At.tuples() + ta] || !fb[s * Bt.tuples() + tb]) continue;
              if (!any) std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
              any = true;
              const cplx* Araw = At.at(ta, s);
              const cplx* Braw = Bt.at(tb, s);
              detail::contract_into(acc.data(), Araw, Braw, cplx(w, 0.0), d, d, a, b);
            }
            if (!any) continue;
            const auto& smap = t.scatter[si];
            for (std::size_t c = 0; c < T; ++c) sum[smap[c]] += t.coef * acc[c];
          }
        }
        cplx* dst = O.at(tup, s);
        for (std::size_t c = 0; c < T; ++c) dst[c] = scale * sum[c];
      }
    }
  }
}

}  // namespace kamrg
