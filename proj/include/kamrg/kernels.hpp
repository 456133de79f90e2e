#pragma once

// Kernel hierarchy {w_n}, the kappa-extended family, symmetry residuals and
// the weighted C2 norm system used to monitor the flow.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kamrg/cutoff.hpp"
#include "kamrg/lattice.hpp"
#include "kamrg/tensor_table.hpp"

namespace kamrg {

/// Set of kappa values carried by the extended family. A uniform odd-sized
/// stencil centred at 0 (used for kappa-derivatives) plus optional probe
/// copies of the stencil shifted by omega.r, so that the Z^d action can be
/// checked on exact slices.
struct KappaGrid {
  std::vector<double> values;          // sorted ascending, unique
  std::vector<std::size_t> stencil;    // indices into values, ascending
  double spacing = 0.0;

  std::size_t size() const { return values.size(); }
  std::size_t center() const { return stencil[stencil.size() / 2]; }

  std::optional<std::size_t> find_exact(double kappa) const {
    auto it = std::lower_bound(values.begin(), values.end(), kappa);
    if (it != values.end() && *it == kappa) return std::size_t(it - values.begin());
    return std::nullopt;
  }

  /// Stencil value j*spacing for j in [-(count-1)/2, (count-1)/2].
  static double stencil_value(int j, double spacing) { return double(j) * spacing; }

  static KappaGrid make(int count, double spacing, const std::vector<double>& shifts = {}) {
    if (count < 3 || count % 2 == 0) throw std::invalid_argument("kappa stencil needs an odd count >= 3");
    if (!(spacing > 0.0)) throw std::invalid_argument("kappa spacing must be positive");
    const int half = count / 2;
    std::vector<double> all;
    for (int j = -half; j <= half; ++j) all.push_back(stencil_value(j, spacing));
    for (double s : shifts)
      for (int j = -half; j <= half; ++j) all.push_back(stencil_value(j, spacing) + s);
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    KappaGrid g;
    g.values = all;
    g.spacing = spacing;
    for (int j = -half; j <= half; ++j) g.stencil.push_back(*g.find_exact(stencil_value(j, spacing)));
    return g;
  }
};

/// Stencil of `count` points spanning [-1/eta_end, 1/eta_end]; with `probes`,
/// shifted copies by +-omega.e_i for every coordinate direction.
inline KappaGrid auto_kappa_grid(const FrequencyVector& omega, double eta_end, int count, bool probes) {
  if (!(eta_end > 0.0)) throw std::invalid_argument("auto_kappa_grid needs eta_end > 0");
  const double spacing = 1.0 / (eta_end * double(count / 2));
  std::vector<double> shifts;
  if (probes)
    for (double w : omega.omega) {
      shifts.push_back(w);
      shifts.push_back(-w);
    }
  return KappaGrid::make(count, spacing, shifts);
}

struct KappaFamily {
  KappaGrid grid;
  std::vector<KernelTable> levels;  // levels[n-1] holds w_n(q, q'; p_2..p_n; kappa), n >= 1

  KernelTable& level(int n) { return levels.at(std::size_t(n - 1)); }
  const KernelTable& level(int n) const { return levels.at(std::size_t(n - 1)); }
};

/// Taylor kernels w_n(q; p_1..p_n), n = 0..n_max, on a box, with an optional
/// kappa-extended copy of the levels n >= 1.
struct KernelHierarchy {
  TruncationBox box;
  int n_max = 0;
  std::vector<KernelTable> levels;
  std::optional<KappaFamily> kappa;

  KernelHierarchy() = default;
  KernelHierarchy(const TruncationBox& b, int nmax) : box(b), n_max(nmax) {
    if (nmax < 0) throw std::invalid_argument("n_max must be nonnegative");
    for (int n = 0; n <= nmax; ++n) levels.emplace_back(b.dim(), b.size(), 1, n);
  }

  int dim() const { return box.dim(); }
  KernelTable& level(int n) { return levels.at(std::size_t(n)); }
  const KernelTable& level(int n) const { return levels.at(std::size_t(n)); }

  void attach_kappa(const KappaGrid& grid) {
    KappaFamily fam;
    fam.grid = grid;
    for (int n = 1; n <= n_max; ++n)
      fam.levels.emplace_back(box.dim(), box.size(), 2, n - 1, grid.size());
    kappa = std::move(fam);
  }

  /// Copies the plain levels into every kappa slice (the kappa-independent
  /// initial condition).
  void seed_kappa_from_plain() {
    if (!kappa) return;
    const std::size_t M = box.size();
    for (int n = 1; n <= n_max; ++n) {
      const KernelTable& plain = level(n);
      KernelTable& kt = kappa->level(n);
      const std::size_t T = kt.tensor_size();
      std::vector<int> args(std::size_t(n), 0);
      for (std::size_t tup = 0; tup < kt.tuples(); ++tup) {
        std::size_t lead = kt.lead_of(tup);
        std::size_t q = lead / M;
        args[0] = int(lead % M);
        const int* p = kt.sym_members(tup);
        for (int i = 0; i < n - 1; ++i) args[std::size_t(i + 1)] = p[i];
        std::vector<cplx> buf(T);
        plain.fetch(&q, args, buf.data());
        for (std::size_t s = 0; s < kt.slices(); ++s) std::copy(buf.begin(), buf.end(), kt.at(tup, s));
      }
    }
  }

  void set_zero() {
    for (auto& l : levels) l.set_zero();
    if (kappa)
      for (auto& l : kappa->levels) l.set_zero();
  }

  void axpy(double a, const KernelHierarchy& x) {
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i].axpy(a, x.levels[i]);
    if (kappa && x.kappa)
      for (std::size_t i = 0; i < kappa->levels.size(); ++i) kappa->levels[i].axpy(a, x.kappa->levels[i]);
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& l : levels) m = std::max(m, l.max_abs());
    if (kappa)
      for (const auto& l : kappa->levels) m = std::max(m, l.max_abs());
    return m;
  }

  /// Same shape, all zero.
  KernelHierarchy zeros_like() const {
    KernelHierarchy z = *this;
    z.set_zero();
    return z;
  }
};

// ---------------------------------------------------------------------------
// Dense (unsymmetrized) kernels and symmetrization

/// Kernel over all ordered tuples (q, a_1..a_n); used where symmetry cannot be
/// assumed. `fixed_args` leading arguments after q are excluded from
/// symmetrization (1 for the kappa-extended layout, where q' is distinguished).
struct DenseKernel {
  int d = 0;
  std::size_t M = 0;
  int n = 0;  // number of arguments after q
  std::vector<cplx> data;

  DenseKernel() = default;
  DenseKernel(int dim, std::size_t modes, int args) : d(dim), M(modes), n(args) {
    data.assign(ipow(M, n + 1) * ipow(std::size_t(d), n + 1), cplx(0.0, 0.0));
  }
  std::size_t tensor_size() const { return ipow(std::size_t(d), n + 1); }
  std::size_t tuple_index(std::size_t q, const std::vector<int>& a) const {
    std::size_t t = q;
    for (int v : a) t = t * M + std::size_t(v);
    return t;
  }
  cplx* at(std::size_t tuple) { return data.data() + tuple * tensor_size(); }
  const cplx* at(std::size_t tuple) const { return data.data() + tuple * tensor_size(); }
};

/// Average over permutations of the symmetric arguments together with their
/// tensor slots. Idempotent.
inline DenseKernel symmetrize(const DenseKernel& w, bool kappa_extended = false) {
  const int fixed = kappa_extended ? 1 : 0;
  const int s = w.n - fixed;
  if (s < 0) throw std::invalid_argument("symmetrize: too few arguments");
  DenseKernel out(w.d, w.M, w.n);
  std::vector<int> perm(static_cast<std::size_t>(std::max(s, 0)));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  const double inv = 1.0 / double(perms.size());
  const std::size_t T = w.tensor_size();
  const std::size_t tuples = ipow(w.M, w.n + 1);
  std::vector<int> args(static_cast<std::size_t>(w.n));
  for (const auto& sigma : perms) {
    // out(q, a) += sigma . w(q, a_sigma): slot of w for argument position
    // fixed+i carries data of a[fixed+sigma[i]]
    std::vector<int> target(static_cast<std::size_t>(w.n + 1));
    target[0] = 0;
    for (int i = 0; i < fixed; ++i) target[std::size_t(1 + i)] = 1 + i;
    for (int i = 0; i < s; ++i) target[std::size_t(1 + fixed + i)] = 1 + fixed + sigma[std::size_t(i)];
    auto map = slot_permutation_map(w.d, target);
    for (std::size_t t = 0; t < tuples; ++t) {
      std::size_t rem = t;
      for (int i = w.n - 1; i >= 0; --i) {
        args[std::size_t(i)] = int(rem % w.M);
        rem /= w.M;
      }
      std::size_t q = rem;
      std::vector<int> src_args(args);
      for (int i = 0; i < s; ++i) src_args[std::size_t(fixed + i)] = args[std::size_t(fixed + sigma[std::size_t(i)])];
      const cplx* src = w.at(w.tuple_index(q, src_args));
      cplx* dst = out.at(t);
      // source slot 1+fixed+i belongs to argument a[fixed+sigma[i]], which in
      // the output occupies slot 1+fixed+sigma[i]
      for (std::size_t c = 0; c < T; ++c) dst[map[c]] += inv * src[c];
    }
  }
  return out;
}

/// Stores a symmetric dense kernel in sorted-tuple form.
inline KernelTable to_table(const DenseKernel& w) {
  KernelTable t(w.d, w.M, 1, w.n);
  std::vector<int> args(static_cast<std::size_t>(w.n));
  for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
    std::size_t q = t.lead_of(tup);
    const int* p = t.sym_members(tup);
    args.assign(p, p + w.n);
    const cplx* src = w.at(w.tuple_index(q, args));
    std::copy(src, src + t.tensor_size(), t.at(tup));
  }
  return t;
}

/// Expands a sorted-tuple table to all orderings.
inline DenseKernel to_dense(const KernelTable& t) {
  if (t.lead() != 1) throw std::invalid_argument("to_dense expects a plain level");
  DenseKernel w(t.dim(), t.modes(), t.sym());
  const std::size_t tuples = ipow(w.M, w.n + 1);
  std::vector<int> args(static_cast<std::size_t>(w.n));
  for (std::size_t tup = 0; tup < tuples; ++tup) {
    std::size_t rem = tup;
    for (int i = w.n - 1; i >= 0; --i) {
      args[std::size_t(i)] = int(rem % w.M);
      rem /= w.M;
    }
    std::size_t q = rem;
    t.fetch(&q, args, w.at(tup));
  }
  return w;
}

/// Averages each stored tensor over slot permutations among equal p's, which
/// is the only symmetry freedom left in sorted storage. Idempotent.
inline void symmetrize_in_place(KernelTable& t) {
  const int L = t.lead();
  const int s = t.sym();
  if (s < 2) return;
  const std::size_t T = t.tensor_size();
  std::vector<cplx> acc(T);
  std::map<std::vector<int>, std::vector<std::vector<std::uint32_t>>> cache;
  for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
    const int* p = t.sym_members(tup);
    // group pattern: run lengths of equal values
    std::vector<int> runs;
    for (int i = 0; i < s;) {
      int j = i;
      while (j < s && p[j] == p[i]) ++j;
      runs.push_back(j - i);
      i = j;
    }
    if (runs.size() == std::size_t(s)) continue;
    auto it = cache.find(runs);
    if (it == cache.end()) {
      std::vector<std::vector<std::uint32_t>> maps;
      std::vector<int> perm(static_cast<std::size_t>(s));
      std::iota(perm.begin(), perm.end(), 0);
      do {
        bool ok = true;
        int start = 0;
        for (int r : runs) {
          for (int i = start; i < start + r; ++i)
            if (perm[std::size_t(i)] < start || perm[std::size_t(i)] >= start + r) ok = false;
          start += r;
        }
        if (!ok) continue;
        std::vector<int> target(static_cast<std::size_t>(L + s));
        for (int i = 0; i < L; ++i) target[std::size_t(i)] = i;
        for (int i = 0; i < s; ++i) target[std::size_t(L + i)] = L + perm[std::size_t(i)];
        maps.push_back(slot_permutation_map(t.dim(), target));
      } while (std::next_permutation(perm.begin(), perm.end()));
      it = cache.emplace(runs, std::move(maps)).first;
    }
    const auto& maps = it->second;
    for (std::size_t sl = 0; sl < t.slices(); ++sl) {
      cplx* v = t.at(tup, sl);
      std::fill(acc.begin(), acc.end(), cplx(0.0, 0.0));
      for (const auto& m : maps)
        for (std::size_t c = 0; c < T; ++c) acc[m[c]] += v[c];
      const double inv = 1.0 / double(maps.size());
      for (std::size_t c = 0; c < T; ++c) v[c] = acc[c] * inv;
    }
  }
}

// ---------------------------------------------------------------------------
// Residuals

/// |w_n(-q,-p) - conj w_n(q,p)| maximised over stored tuples and levels.
inline double reality_residual(const KernelHierarchy& h) {
  double worst = 0.0;
  const std::size_t M = h.box.size();
  for (int n = 0; n <= h.n_max; ++n) {
    const KernelTable& t = h.level(n);
    const std::size_t T = t.tensor_size();
    std::vector<int> neg(static_cast<std::size_t>(n));
    std::vector<cplx> buf(T);
    for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
      std::size_t q = t.lead_of(tup);
      const int* p = t.sym_members(tup);
      for (int i = 0; i < n; ++i) neg[std::size_t(i)] = int(M - 1 - std::size_t(p[i]));
      std::size_t nq = M - 1 - q;
      const cplx* v = t.at(tup);
      const cplx* pv = t.at(t.locate(&nq, neg));
      if (std::all_of(v, v + T, [](cplx z) { return z == 0.0; }) &&
          std::all_of(pv, pv + T, [](cplx z) { return z == 0.0; }))
        continue;
      t.fetch(&nq, neg, buf.data());
      for (std::size_t c = 0; c < T; ++c) worst = std::max(worst, std::abs(buf[c] - std::conj(v[c])));
    }
  }
  return worst;
}

/// Max over stored (q,p) of |i(a.q) w_n - (n+1) w_{n+1}(q,0,p) a - i sum(a.p_i) w_n|.
inline double ward_residual(const KernelHierarchy& h, int n, const std::vector<double>& a) {
  if (n < 0 || n + 1 > h.n_max) throw std::invalid_argument("ward_residual needs n + 1 <= n_max");
  const int d = h.dim();
  if (int(a.size()) != d) throw std::invalid_argument("ward_residual: direction dimension mismatch");
  const KernelTable& wn = h.level(n);
  const KernelTable& wn1 = h.level(n + 1);
  const std::size_t T = wn.tensor_size();
  const std::size_t z = h.box.zero_index();
  const cplx I(0.0, 1.0);
  // slot-1-contraction of w_{n+1}(q, [0, p...]) with a
  std::vector<cplx> big(wn1.tensor_size());
  std::vector<int> args(static_cast<std::size_t>(n + 1));
  double worst = 0.0;
  for (std::size_t tup = 0; tup < wn.tuples(); ++tup) {
    std::size_t q = wn.lead_of(tup);
    const int* p = wn.sym_members(tup);
    double aq = 0.0;
    for (int i = 0; i < d; ++i) aq += a[std::size_t(i)] * h.box.coords(q)[i];
    double ap = 0.0;
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < d; ++i) ap += a[std::size_t(i)] * h.box.coords(std::size_t(p[k]))[i];
    args[0] = int(z);
    for (int k = 0; k < n; ++k) args[std::size_t(k + 1)] = p[k];
    wn1.fetch(&q, args, big.data());
    const cplx* v = wn.at(tup);
    double s2 = 0.0;
    const std::size_t rest = T / std::size_t(d);  // d^n
    for (std::size_t c = 0; c < T; ++c) {
      std::size_t o = c / rest, tail = c % rest;
      cplx contracted = 0.0;
      for (int j = 0; j < d; ++j) contracted += big[(o * d + std::size_t(j)) * rest + tail] * a[std::size_t(j)];
      cplx r = I * (aq - ap) * v[c] - double(n + 1) * contracted;
      s2 += std::norm(r);
    }
    worst = std::max(worst, std::sqrt(s2));
  }
  return worst;
}

/// Ward residual maximised over coordinate directions.
inline double ward_residual_all_directions(const KernelHierarchy& h, int n) {
  double worst = 0.0;
  for (int i = 0; i < h.dim(); ++i) {
    std::vector<double> a(std::size_t(h.dim()), 0.0);
    a[std::size_t(i)] = 1.0;
    worst = std::max(worst, ward_residual(h, n, a));
  }
  return worst;
}

namespace detail {
// Swaps tensor slots 0 and 1.
inline void transpose01(int d, std::size_t T, const cplx* in, cplx* out) {
  const std::size_t rest = T / std::size_t(d * d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b)
      for (std::size_t t = 0; t < rest; ++t)
        out[(std::size_t(b) * d + a) * rest + t] = in[(std::size_t(a) * d + b) * rest + t];
}
}  // namespace detail

/// Max |w_n(q,q',p) - w_n(-q',-q,p)^T| (slots 0 and 1 swapped). With the
/// kappa family present, levels are taken from it and kappa maps to -kappa
/// on every slice whose mirror exists.
inline double transpose_residual(const KernelHierarchy& h, int n) {
  if (n < 1 || n > h.n_max) throw std::invalid_argument("transpose_residual needs 1 <= n <= n_max");
  const int d = h.dim();
  const std::size_t M = h.box.size();
  double worst = 0.0;
  if (!h.kappa) {
    const KernelTable& t = h.level(n);
    const std::size_t T = t.tensor_size();
    std::vector<cplx> lhs(T), rhs(T), rt(T);
    std::vector<int> args(static_cast<std::size_t>(n));
    for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
      std::size_t q = t.lead_of(tup);
      const int* p = t.sym_members(tup);
      for (int j = 0; j < n; ++j) {
        if (j > 0 && p[j] == p[j - 1]) continue;
        std::size_t qp = std::size_t(p[j]);
        // lhs = w(q, [q', rest])
        args[0] = int(qp);
        int k = 1;
        for (int i = 0; i < n; ++i)
          if (i != j) args[std::size_t(k++)] = p[i];
        std::size_t nqp = M - 1 - qp;
        std::vector<int> neg_args = args;
        neg_args[0] = int(M - 1 - q);
        const cplx* own = t.at(tup);
        const cplx* other = t.at(t.locate(&nqp, neg_args));
        if (std::all_of(own, own + T, [](cplx z) { return z == 0.0; }) &&
            std::all_of(other, other + T, [](cplx z) { return z == 0.0; }))
          continue;
        t.fetch(&q, args, lhs.data());
        t.fetch(&nqp, neg_args, rhs.data());
        detail::transpose01(d, T, rhs.data(), rt.data());
        double s2 = 0.0;
        for (std::size_t c = 0; c < T; ++c) s2 += std::norm(lhs[c] - rt[c]);
        worst = std::max(worst, std::sqrt(s2));
      }
    }
    return worst;
  }
  const KernelTable& t = h.kappa->level(n);
  const auto& grid = h.kappa->grid;
  const std::size_t T = t.tensor_size();
  std::vector<cplx> rt(T);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    auto mirror = grid.find_exact(-grid.values[s]);
    if (!mirror) continue;
    for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
      std::size_t lead = t.lead_of(tup);
      std::size_t q = lead / M, qp = lead % M;
      std::size_t partner = t.tuple_index((M - 1 - qp) * M + (M - 1 - q), t.rank_of(tup));
      detail::transpose01(d, T, t.at(partner, *mirror), rt.data());
      const cplx* v = t.at(tup, s);
      double s2 = 0.0;
      for (std::size_t c = 0; c < T; ++c) s2 += std::norm(v[c] - rt[c]);
      worst = std::max(worst, std::sqrt(s2));
    }
  }
  return worst;
}

/// Cubic Lagrange interpolation of a kappa slice family at `kappa`. Exact
/// slice hits return the stored tensor.
inline void interpolate_kappa(const KernelTable& t, const KappaGrid& grid, std::size_t tuple,
                              double kappa, cplx* out) {
  const auto& xs = grid.values;
  const std::size_t T = t.tensor_size();
  if (auto hit = grid.find_exact(kappa)) {
    std::copy(t.at(tuple, *hit), t.at(tuple, *hit) + T, out);
    return;
  }
  if (xs.size() < 4 || kappa < xs.front() || kappa > xs.back())
    throw std::out_of_range("kappa " + std::to_string(kappa) + " outside the kappa grid");
  std::size_t hi = std::size_t(std::upper_bound(xs.begin(), xs.end(), kappa) - xs.begin());
  std::size_t start = hi >= 2 ? hi - 2 : 0;
  start = std::min(start, xs.size() - 4);
  std::fill(out, out + T, cplx(0.0, 0.0));
  for (std::size_t i = start; i < start + 4; ++i) {
    double wgt = 1.0;
    for (std::size_t j = start; j < start + 4; ++j)
      if (j != i) wgt *= (kappa - xs[j]) / (xs[i] - xs[j]);
    const cplx* v = t.at(tuple, i);
    for (std::size_t c = 0; c < T; ++c) out[c] += wgt * v[c];
  }
}

/// Max |w_n(q+r, q'+r, p, kappa) - w_n(q, q', p, kappa + omega.r)| over the
/// kappa stencil, all kappa levels, and tuples whose shifted leading pair
/// stays in the box.
inline double translation_residual(const KernelHierarchy& h, const FrequencyVector& omega,
                                   const Mode& shift) {
  if (!h.kappa) throw std::invalid_argument("translation_residual needs the kappa family");
  const TruncationBox& box = h.box;
  const std::size_t M = box.size();
  const double wr = small_divisor(omega, shift);
  const auto& grid = h.kappa->grid;
  double worst = 0.0;
  bool is_zero = std::all_of(shift.begin(), shift.end(), [](int c) { return c == 0; });
  if (is_zero) return 0.0;
  for (int n = 1; n <= h.n_max; ++n) {
    const KernelTable& t = h.kappa->level(n);
    const std::size_t T = t.tensor_size();
    std::vector<cplx> shifted(T);
    const int half = int(grid.stencil.size() / 2);
    for (std::size_t jj = 0; jj < grid.stencil.size(); ++jj) {
      const std::size_t si = grid.stencil[jj];
      const double target = KappaGrid::stencil_value(int(jj) - half, grid.spacing) + wr;
      for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
        std::size_t lead = t.lead_of(tup);
        std::size_t q = lead / M, qp = lead % M;
        std::vector<int> cq(box.coords(q), box.coords(q) + box.dim());
        std::vector<int> cqp(box.coords(qp), box.coords(qp) + box.dim());
        for (int i = 0; i < box.dim(); ++i) {
          cq[std::size_t(i)] += shift[std::size_t(i)];
          cqp[std::size_t(i)] += shift[std::size_t(i)];
        }
        long sq = box.index(cq.data()), sqp = box.index(cqp.data());
        if (sq < 0 || sqp < 0) continue;
        std::size_t moved = t.tuple_index(std::size_t(sq) * M + std::size_t(sqp), t.rank_of(tup));
        interpolate_kappa(t, grid, tup, target, shifted.data());
        const cplx* v = t.at(moved, si);
        double s2 = 0.0;
        for (std::size_t c = 0; c < T; ++c) s2 += std::norm(v[c] - shifted[c]);
        worst = std::max(worst, std::sqrt(s2));
      }
    }
  }
  return worst;
}

struct KappaEvenness {
  double evenness = 0.0;          // max_j |w_1(0,0,k_j) - w_1(0,0,-k_j)|
  double derivative_at_zero = 0.0; // |d/dkappa w_1(0,0,0)| by central differences
  double w1_scale = 0.0;          // max |w_1| over the stencil, all tuples
};

inline KappaEvenness kappa_evenness(const KernelHierarchy& h) {
  if (!h.kappa) throw std::invalid_argument("kappa_evenness needs the kappa family");
  const KernelTable& t = h.kappa->level(1);
  const auto& g = h.kappa->grid;
  const std::size_t M = h.box.size();
  const std::size_t z = h.box.zero_index();
  const std::size_t tup = t.tuple_index(z * M + z, 0);
  const std::size_t T = t.tensor_size();
  KappaEvenness out;
  const std::size_t S = g.stencil.size();
  for (std::size_t j = 0; j < S; ++j) {
    const cplx* a = t.at(tup, g.stencil[j]);
    const cplx* b = t.at(tup, g.stencil[S - 1 - j]);
    double s2 = 0.0;
    for (std::size_t c = 0; c < T; ++c) s2 += std::norm(a[c] - b[c]);
    out.evenness = std::max(out.evenness, std::sqrt(s2));
    for (std::size_t u = 0; u < t.tuples(); ++u)
      out.w1_scale = std::max(out.w1_scale, frobenius(t.at(u, g.stencil[j]), T));
  }
  const std::size_t c0 = S / 2;
  const cplx* plus = t.at(tup, g.stencil[c0 + 1]);
  const cplx* minus = t.at(tup, g.stencil[c0 - 1]);
  double s2 = 0.0;
  for (std::size_t c = 0; c < T; ++c) s2 += std::norm((plus[c] - minus[c]) / (2.0 * g.spacing));
  out.derivative_at_zero = std::sqrt(s2);
  return out;
}

/// |w_0(0)| (Frobenius) and sum_q |w_0(q)|.
inline std::pair<double, double> w0_zero_mode(const KernelHierarchy& h) {
  const KernelTable& t = h.level(0);
  const std::size_t T = t.tensor_size();
  double total = 0.0;
  for (std::size_t q = 0; q < t.tuples(); ++q) total += frobenius(t.at(q), T);
  return {frobenius(t.at(h.box.zero_index()), T), total};
}

// ---------------------------------------------------------------------------
// Norms

struct NormReport {
  double t = 0.0;
  double eta = 0.0;
  double beta_t = 0.0;
  double rho = 0.0;
  std::vector<double> per_n_norm;
  double composite = 0.0;  // the bracket of the composite norm at this t
  double weighted_w0 = 0.0;       // e^{2t} ||w_0||_t
  double higher_order_term = 0.0; // sup_{n>1} n^2 rho^n e^{(3/2-n)t} ||w_n||_t
};

inline double beta_at(double t, double beta) { return 0.5 * (1.0 + 1.0 / (1.0 + t)) * beta; }

namespace detail {

// Sum over i=0..2 of eta^{-i} |d^i f / dkappa^i| at stencil position j.
inline double c2_seminorm(const KernelTable& t, const KappaGrid& g, std::size_t tuple, std::size_t j,
                          double eta, std::vector<cplx>& d1, std::vector<cplx>& d2) {
  const std::size_t T = t.tensor_size();
  const std::size_t S = g.stencil.size();
  const double hk = g.spacing;
  const cplx* f = t.at(tuple, g.stencil[j]);
  double val = frobenius(f, T);
  if (eta <= 0.0) return val;
  const cplx *a, *b, *c;
  if (j == 0) {
    a = t.at(tuple, g.stencil[0]);
    b = t.at(tuple, g.stencil[1]);
    c = t.at(tuple, g.stencil[2]);
    for (std::size_t i = 0; i < T; ++i) {
      d1[i] = (-3.0 * a[i] + 4.0 * b[i] - c[i]) / (2.0 * hk);
      d2[i] = (a[i] - 2.0 * b[i] + c[i]) / (hk * hk);
    }
  } else if (j == S - 1) {
    a = t.at(tuple, g.stencil[S - 1]);
    b = t.at(tuple, g.stencil[S - 2]);
    c = t.at(tuple, g.stencil[S - 3]);
    for (std::size_t i = 0; i < T; ++i) {
      d1[i] = (3.0 * a[i] - 4.0 * b[i] + c[i]) / (2.0 * hk);
      d2[i] = (a[i] - 2.0 * b[i] + c[i]) / (hk * hk);
    }
  } else {
    a = t.at(tuple, g.stencil[j - 1]);
    b = f;
    c = t.at(tuple, g.stencil[j + 1]);
    for (std::size_t i = 0; i < T; ++i) {
      d1[i] = (c[i] - a[i]) / (2.0 * hk);
      d2[i] = (a[i] - 2.0 * b[i] + c[i]) / (hk * hk);
    }
  }
  return val + frobenius(d1.data(), T) / eta + frobenius(d2.data(), T) / (eta * eta);
}

}  // namespace detail

/// ||w_n||_t: sup over p in Lambda_t^n of sum_{q in Lambda_t}
/// e^{beta_t |q - sum p|} |w_n(q,p,.)|_t.
inline double norm_t(const KernelHierarchy& h, int n, double t, double beta,
                     const CutoffSchedule& schedule, const FrequencyVector& omega) {
  if (n < 0 || n > h.n_max) throw std::invalid_argument("norm_t: level out of range");
  const TruncationBox& box = h.box;
  const std::size_t M = box.size();
  const int d = box.dim();
  const double eta = schedule.eta(t);
  const double bt = beta_at(t, beta);
  std::vector<char> in_lambda(M, 0);
  for (std::size_t i : lambda_set_indices(omega, box, eta)) in_lambda[i] = 1;
  auto momentum_weight = [&](std::size_t q, const std::vector<std::size_t>& ps) {
    double s2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double c = box.coords(q)[i];
      for (std::size_t p : ps) c -= box.coords(p)[i];
      s2 += c * c;
    }
    return std::exp(bt * std::sqrt(s2));
  };
  double sup = 0.0;
  if (!h.kappa || n == 0) {
    const KernelTable& tab = h.level(n);
    const std::size_t T = tab.tensor_size();
    std::vector<std::size_t> ps(static_cast<std::size_t>(n));
    for (std::size_t r = 0; r < tab.multisets(); ++r) {
      const int* p = tab.multiset_index().members(r);
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        ps[std::size_t(i)] = std::size_t(p[i]);
        ok = ok && in_lambda[std::size_t(p[i])];
      }
      if (!ok) continue;
      double sum = 0.0;
      for (std::size_t q = 0; q < M; ++q) {
        if (!in_lambda[q]) continue;
        sum += momentum_weight(q, ps) * frobenius(tab.at(tab.tuple_index(q, r)), T);
      }
      sup = std::max(sup, sum);
    }
    return sup;
  }
  const KernelTable& tab = h.kappa->level(n);
  const auto& g = h.kappa->grid;
  const std::size_t T = tab.tensor_size();
  std::vector<cplx> d1(T), d2(T);
  std::vector<std::size_t> window;
  for (std::size_t j = 0; j < g.stencil.size(); ++j)
    if (eta * std::abs(g.values[g.stencil[j]]) <= 1.0) window.push_back(j);
  std::vector<std::size_t> ps(static_cast<std::size_t>(n));
  for (std::size_t qp = 0; qp < M; ++qp) {
    if (!in_lambda[qp]) continue;
    for (std::size_t r = 0; r < tab.multisets(); ++r) {
      const int* p = tab.multiset_index().members(r);
      bool ok = true;
      ps[0] = qp;
      for (int i = 0; i < n - 1; ++i) {
        ps[std::size_t(i + 1)] = std::size_t(p[i]);
        ok = ok && in_lambda[std::size_t(p[i])];
      }
      if (!ok) continue;
      double sum = 0.0;
      for (std::size_t q = 0; q < M; ++q) {
        if (!in_lambda[q]) continue;
        std::size_t tup = tab.tuple_index(q * M + qp, r);
        double c2 = 0.0;
        for (std::size_t j : window) c2 = std::max(c2, detail::c2_seminorm(tab, g, tup, j, eta, d1, d2));
        sum += momentum_weight(q, ps) * c2;
      }
      sup = std::max(sup, sum);
    }
  }
  return sup;
}

inline NormReport norm_report(const KernelHierarchy& h, double t, double beta, double rho,
                              const CutoffSchedule& schedule, const FrequencyVector& omega) {
  NormReport rep;
  rep.t = t;
  rep.eta = schedule.eta(t);
  rep.beta_t = beta_at(t, beta);
  rep.rho = rho;
  for (int n = 0; n <= h.n_max; ++n) rep.per_n_norm.push_back(norm_t(h, n, t, beta, schedule, omega));
  rep.weighted_w0 = std::exp(2.0 * t) * rep.per_n_norm[0];
  double w1 = h.n_max >= 1 ? rep.eta * rep.eta * rep.per_n_norm[1] : 0.0;
  for (int n = 2; n <= h.n_max; ++n)
    rep.higher_order_term = std::max(rep.higher_order_term, double(n * n) * std::pow(rho, n) *
                                                                std::exp((1.5 - n) * t) *
                                                                rep.per_n_norm[std::size_t(n)]);
  rep.composite = rep.weighted_w0 + w1 + rep.higher_order_term;
  return rep;
}

/// sup over the recorded t-grid of the composite bracket.
inline double composite_norm(const std::vector<NormReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("composite_norm needs at least one report");
  double s = 0.0;
  for (const auto& r : reports) s = std::max(s, r.composite);
  return s;
}

// ---------------------------------------------------------------------------
// Dump: one JSON object per line and stored tuple (and kappa slice).

inline void dump_kernels(const KernelHierarchy& h, std::ostream& os, double t) {
  auto mode_json = [&](std::size_t idx) { return nlohmann::json(h.box.mode(idx)); };
  auto entries_json = [](const cplx* v, std::size_t T) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t c = 0; c < T; ++c) {
      a.push_back(v[c].real());
      a.push_back(v[c].imag());
    }
    return a;
  };
  const std::size_t M = h.box.size();
  for (int n = 0; n <= h.n_max; ++n) {
    const KernelTable& tab = h.level(n);
    for (std::size_t tup = 0; tup < tab.tuples(); ++tup) {
      nlohmann::json rec;
      rec["t"] = t;
      rec["n"] = n;
      rec["q"] = mode_json(tab.lead_of(tup));
      nlohmann::json ps = nlohmann::json::array();
      const int* p = tab.sym_members(tup);
      for (int i = 0; i < n; ++i) ps.push_back(mode_json(std::size_t(p[i])));
      rec["p"] = ps;
      rec["entries"] = entries_json(tab.at(tup), tab.tensor_size());
      os << rec.dump() << '\n';
    }
  }
  if (!h.kappa) return;
  for (int n = 1; n <= h.n_max; ++n) {
    const KernelTable& tab = h.kappa->level(n);
    for (std::size_t s = 0; s < tab.slices(); ++s) {
      for (std::size_t tup = 0; tup < tab.tuples(); ++tup) {
        std::size_t lead = tab.lead_of(tup);
        nlohmann::json rec;
        rec["t"] = t;
        rec["n"] = n;
        rec["q"] = mode_json(lead / M);
        nlohmann::json ps = nlohmann::json::array();
        ps.push_back(mode_json(lead % M));
        const int* p = tab.sym_members(tup);
        for (int i = 0; i < n - 1; ++i) ps.push_back(mode_json(std::size_t(p[i])));
        rec["p"] = ps;
        rec["kappa_index"] = s;
        rec["kappa"] = h.kappa->grid.values[s];
        rec["entries"] = entries_json(tab.at(tup, s), tab.tensor_size());
        os << rec.dump() << '\n';
      }
    }
  }
}

}  // namespace kamrg
