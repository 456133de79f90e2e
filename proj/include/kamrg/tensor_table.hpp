#pragma once

// Storage for kernel families w(q_1..q_L; p_1..p_s) with values in
// (C^d)^{tensor L+s}, symmetric in the trailing p's. Only sorted p-tuples are
// stored; a tuple is addressed by its leading box indices and the colex rank of
// the sorted p multiset.
//
// Tensor slots are laid out row-major with slot 0 (the output component) most
// significant; slot L+i belongs to p_i.

#include <algorithm>
#include <bit>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace kamrg {

using cplx = std::complex<double>;

inline std::size_t ipow(std::size_t b, int e) {
  std::size_t r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// Colex ranking of sorted multisets of size n drawn from [0, M).
class MultisetIndex {
 public:
  MultisetIndex() = default;
  MultisetIndex(std::size_t M, int n) : M_(M), n_(n) {
    // binom_[i][j] = C(i, j) for i < M + n, j <= n
    rows_ = M + std::size_t(n) + 1;
    binom_.assign(rows_ * std::size_t(n + 1), 0);
    for (std::size_t i = 0; i < rows_; ++i) {
      binom_[i * (n + 1)] = 1;
      for (int j = 1; j <= n && std::size_t(j) <= i; ++j)
        binom_[i * (n + 1) + j] = binom_[(i - 1) * (n + 1) + j - 1] +
                                  (std::size_t(j) <= i - 1 ? binom_[(i - 1) * (n + 1) + j] : 0);
    }
    count_ = n == 0 ? 1 : binom_[(M + n - 1) * (n + 1) + n];
    members_.resize(count_ * std::size_t(n));
    if (n > 0) {
      std::vector<int> a(n, 0);
      while (true) {
        std::size_t r = rank(a.data());
        std::copy(a.begin(), a.end(), members_.begin() + r * n);
        // next non-decreasing tuple in lexicographic order
        int i = n - 1;
        while (i >= 0 && std::size_t(a[i]) == M - 1) --i;
        if (i < 0) break;
        ++a[i];
        for (int j = i + 1; j < n; ++j) a[j] = a[i];
      }
    }
  }

  int order() const { return n_; }
  std::size_t count() const { return count_; }

  /// Rank of a non-decreasing tuple.
  std::size_t rank(const int* a) const {
    std::size_t r = 0;
    for (int i = 0; i < n_; ++i) r += binom_[std::size_t(a[i] + i) * (n_ + 1) + (i + 1)];
    return r;
  }

  const int* members(std::size_t rank) const { return members_.data() + rank * n_; }

 private:
  std::size_t M_ = 0;
  int n_ = 0;
  std::size_t rows_ = 0;
  std::size_t count_ = 1;
  std::vector<std::size_t> binom_;
  std::vector<int> members_;
};

/// Map from a canonical digit order to a stored digit order: canonical digit i
/// lands in stored slot target[i].
inline std::vector<std::uint32_t> slot_permutation_map(int d, const std::vector<int>& target) {
  const int rank = int(target.size());
  const std::size_t size = ipow(std::size_t(d), rank);
  std::vector<std::size_t> stride(rank);
  for (int s = 0; s < rank; ++s) stride[s] = ipow(std::size_t(d), rank - 1 - s);
  std::vector<std::uint32_t> out(size);
  std::vector<int> digit(rank, 0);
  for (std::size_t c = 0; c < size; ++c) {
    std::size_t rem = c;
    for (int i = rank - 1; i >= 0; --i) {
      digit[i] = int(rem % d);
      rem /= d;
    }
    std::size_t idx = 0;
    for (int i = 0; i < rank; ++i) idx += std::size_t(digit[i]) * stride[target[i]];
    out[c] = std::uint32_t(idx);
  }
  return out;
}

class KernelTable {
 public:
  KernelTable() = default;
  KernelTable(int d, std::size_t M, int lead, int sym, std::size_t slices = 1)
      : d_(d), M_(M), lead_(lead), sym_(sym), slices_(slices), ms_(M, sym) {
    if (sym < 0 || sym > 30 || lead < 0 || lead > 2) throw std::invalid_argument("unsupported kernel table shape");
    tensor_ = ipow(std::size_t(d), lead + sym);
    lead_count_ = ipow(M, lead);
    tuples_ = lead_count_ * ms_.count();
    data_.assign(slices_ * tuples_ * tensor_, cplx(0.0, 0.0));
  }

  int dim() const { return d_; }
  std::size_t modes() const { return M_; }
  int lead() const { return lead_; }
  int sym() const { return sym_; }
  int rank() const { return lead_ + sym_; }
  std::size_t slices() const { return slices_; }
  std::size_t tensor_size() const { return tensor_; }
  std::size_t tuples() const { return tuples_; }
  std::size_t multisets() const { return ms_.count(); }
  const MultisetIndex& multiset_index() const { return ms_; }

  std::size_t tuple_index(std::size_t lead_flat, std::size_t sym_rank) const {
    return lead_flat * ms_.count() + sym_rank;
  }
  std::size_t lead_of(std::size_t tuple) const { return tuple / ms_.count(); }
  std::size_t rank_of(std::size_t tuple) const { return tuple % ms_.count(); }
  const int* sym_members(std::size_t tuple) const { return ms_.members(rank_of(tuple)); }

  cplx* at(std::size_t tuple, std::size_t slice = 0) {
    return data_.data() + (slice * tuples_ + tuple) * tensor_;
  }
  const cplx* at(std::size_t tuple, std::size_t slice = 0) const {
    return data_.data() + (slice * tuples_ + tuple) * tensor_;
  }

  std::vector<cplx>& raw() { return data_; }
  const std::vector<cplx>& raw() const { return data_; }

  void set_zero() { std::fill(data_.begin(), data_.end(), cplx(0.0, 0.0)); }

  /// Tensor for leading args `lead_idx` and arbitrary-order trailing args
  /// `args`; slot L+i of the result belongs to args[i].
  /// Stored tuple holding (lead, args) in any argument order.
  std::size_t locate(const std::size_t* lead_idx, std::span<const int> args) const {
    if (int(args.size()) != sym_) throw std::invalid_argument("locate: wrong argument count");
    int order[32], sorted[32];
    sort_args(args, order, sorted);
    return tuple_index(lead_flat(lead_idx), ms_.rank(sorted));
  }

  void fetch(const std::size_t* lead_idx, std::span<const int> args, cplx* out,
             std::size_t slice = 0) const {
    const int s = sym_;
    if (int(args.size()) != s) throw std::invalid_argument("fetch: wrong argument count");
    int order[32], sorted[32];
    sort_args(args, order, sorted);
    const cplx* src = at(tuple_index(lead_flat(lead_idx), ms_.rank(sorted)), slice);
    // stored slot L+i holds args[order[i]], i.e. result slot L+order[i]
    const int rank = lead_ + s;
    std::size_t stride[64];
    for (int i = 0; i < rank; ++i) stride[i] = ipow(std::size_t(d_), rank - 1 - i);
    std::size_t result_stride[64];
    for (int i = 0; i < lead_; ++i) result_stride[i] = stride[i];
    for (int i = 0; i < s; ++i) result_stride[lead_ + order[i]] = stride[lead_ + i];
    for (std::size_t c = 0; c < tensor_; ++c) {
      std::size_t rem = c, idx = 0;
      for (int i = rank - 1; i >= 0; --i) {
        idx += (rem % std::size_t(d_)) * result_stride[i];
        rem /= std::size_t(d_);
      }
      out[c] = src[idx];
    }
  }

  void axpy(cplx a, const KernelTable& x) {
    cplx* y = data_.data();
    const cplx* xs = x.data_.data();
    for (std::size_t i = 0, n = data_.size(); i < n; ++i) y[i] += a * xs[i];
  }
  void axpy(double a, const KernelTable& x) {
    double* y = reinterpret_cast<double*>(data_.data());
    const double* xs = reinterpret_cast<const double*>(x.data_.data());
    for (std::size_t i = 0, n = 2 * data_.size(); i < n; ++i) y[i] += a * xs[i];
  }
  void scale(double a) {
    for (auto& v : data_) v *= a;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& v : data_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  // Stable insertion sort of the symmetric arguments; order[i] is the
  // argument landing in sorted position i.
  void sort_args(std::span<const int> args, int* order, int* sorted) const {
    for (int i = 0; i < sym_; ++i) {
      int k = i;
      while (k > 0 && args[std::size_t(order[k - 1])] > args[std::size_t(i)]) {
        order[k] = order[k - 1];
        --k;
      }
      order[k] = i;
    }
    for (int i = 0; i < sym_; ++i) sorted[i] = args[std::size_t(order[i])];
  }
  std::size_t lead_flat(const std::size_t* lead_idx) const {
    std::size_t f = 0;
    for (int i = 0; i < lead_; ++i) f = f * M_ + lead_idx[i];
    return f;
  }

  int d_ = 0;
  std::size_t M_ = 0;
  int lead_ = 1;
  int sym_ = 0;
  std::size_t slices_ = 1;
  MultisetIndex ms_;
  std::size_t tensor_ = 1;
  std::size_t lead_count_ = 1;
  std::size_t tuples_ = 0;
  std::vector<cplx> data_;
};

/// Frobenius norm of a tensor.
inline double frobenius(const cplx* t, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::norm(t[i]);
  return std::sqrt(s);
}

/// All index subsets of {0..n-1} of size k, as bitmasks in increasing order.
inline std::vector<unsigned> subsets_of_size(int n, int k) {
  std::vector<unsigned> out;
  for (unsigned m = 0; m < (1u << n); ++m)
    if (std::popcount(m) == k) out.push_back(m);
  return out;
}

}  // namespace kamrg
