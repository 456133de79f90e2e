#pragma once

// Mode lattice, frequency arithmetic and small divisors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kamrg {

using Mode = std::vector<int>;

inline std::string to_string(const Mode& q) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < q.size(); ++i) os << (i ? "," : "") << q[i];
  os << ')';
  return os.str();
}

inline double euclidean_norm(const Mode& q) {
  double s = 0.0;
  for (int c : q) s += double(c) * double(c);
  return std::sqrt(s);
}

/// Frequency vector with the Diophantine constants measured on a box.
struct FrequencyVector {
  std::vector<double> omega;
  double dio_a = 0.0;
  double dio_nu = 1.0;

  FrequencyVector() = default;
  explicit FrequencyVector(std::vector<double> w) : omega(std::move(w)) {
    if (omega.size() < 2) throw std::invalid_argument("frequency vector needs d >= 2");
    for (std::size_t i = 0; i < omega.size(); ++i) {
      if (omega[i] == 0.0 || !std::isfinite(omega[i]))
        throw std::invalid_argument("frequency components must be finite and nonzero");
      for (std::size_t j = 0; j < i; ++j)
        if (omega[i] == omega[j])
          throw std::invalid_argument("frequency components must be pairwise distinct");
    }
  }

  int dim() const { return int(omega.size()); }

  static FrequencyVector golden() {
    return FrequencyVector({1.0, std::numbers::phi});
  }
};

/// Sup-norm ball {q : |q_i| <= Q} enumerated in lexicographic order.
/// Negation maps index i to size()-1-i and q = 0 sits at the centre.
class TruncationBox {
 public:
  TruncationBox() = default;
  TruncationBox(int d, int Q) : d_(d), Q_(Q) {
    if (d < 1) throw std::invalid_argument("box dimension must be positive");
    if (Q < 0) throw std::invalid_argument("box radius must be nonnegative");
    side_ = 2 * Q + 1;
    std::size_t m = 1;
    for (int i = 0; i < d; ++i) m *= std::size_t(side_);
    size_ = m;
    coords_.resize(size_ * std::size_t(d));
    for (std::size_t idx = 0; idx < size_; ++idx) {
      std::size_t rem = idx;
      for (int i = d - 1; i >= 0; --i) {
        coords_[idx * d + i] = int(rem % side_) - Q;
        rem /= side_;
      }
    }
  }

  int dim() const { return d_; }
  int radius() const { return Q_; }
  std::size_t size() const { return size_; }
  std::size_t zero_index() const { return size_ / 2; }
  std::size_t negate(std::size_t idx) const { return size_ - 1 - idx; }

  const int* coords(std::size_t idx) const { return coords_.data() + idx * d_; }
  Mode mode(std::size_t idx) const { return Mode(coords(idx), coords(idx) + d_); }

  bool contains(const int* c) const {
    for (int i = 0; i < d_; ++i)
      if (c[i] < -Q_ || c[i] > Q_) return false;
    return true;
  }
  bool contains(const Mode& q) const { return int(q.size()) == d_ && contains(q.data()); }

  /// Index of q, or -1 when q lies outside the box.
  long index(const int* c) const {
    long idx = 0;
    for (int i = 0; i < d_; ++i) {
      if (c[i] < -Q_ || c[i] > Q_) return -1;
      idx = idx * side_ + (c[i] + Q_);
    }
    return idx;
  }
  long index(const Mode& q) const {
    if (int(q.size()) != d_) throw std::invalid_argument("mode dimension mismatch");
    return index(q.data());
  }

  /// Index of mode(a) + mode(b), or -1 if outside.
  long add(std::size_t a, std::size_t b) const {
    long idx = 0;
    const int* ca = coords(a);
    const int* cb = coords(b);
    for (int i = 0; i < d_; ++i) {
      int c = ca[i] + cb[i];
      if (c < -Q_ || c > Q_) return -1;
      idx = idx * side_ + (c + Q_);
    }
    return idx;
  }

 private:
  int d_ = 0;
  int Q_ = 0;
  int side_ = 1;
  std::size_t size_ = 0;
  std::vector<int> coords_;
};

namespace detail {
// Error-free transformations for the compensated dot product (Ogita-Rump-Oishi).
inline void two_sum(double a, double b, double& s, double& e) {
  s = a + b;
  double z = s - a;
  e = (a - (s - z)) + (b - z);
}
}  // namespace detail

/// omega . q evaluated with a compensated dot product.
inline double small_divisor(const FrequencyVector& omega, const int* q) {
  double s = 0.0, c = 0.0;
  for (int i = 0; i < omega.dim(); ++i) {
    double x = omega.omega[i];
    double y = double(q[i]);
    double p = x * y;
    double pe = std::fma(x, y, -p);
    double t, te;
    detail::two_sum(s, p, t, te);
    s = t;
    c += te + pe;
  }
  return s + c;
}

inline double small_divisor(const FrequencyVector& omega, const Mode& q) {
  if (int(q.size()) != omega.dim()) throw std::invalid_argument("mode dimension mismatch");
  return small_divisor(omega, q.data());
}

inline double abs_small_divisor(const FrequencyVector& omega, const Mode& q) {
  return std::abs(small_divisor(omega, q));
}

/// Treats omega . q as an exact resonance when it is zero up to the rounding
/// of the compensated dot product.
inline bool is_resonant(const FrequencyVector& omega, const int* q) {
  double mag = 0.0;
  bool nonzero = false;
  for (int i = 0; i < omega.dim(); ++i) {
    mag += std::abs(omega.omega[i] * q[i]);
    nonzero = nonzero || q[i] != 0;
  }
  if (!nonzero) return false;
  return std::abs(small_divisor(omega, q)) <= 4.0 * std::numeric_limits<double>::epsilon() * mag;
}

/// (omega . q)^-2; q = 0 has no inverse.
inline double inverse_square_divisor(const FrequencyVector& omega, const Mode& q) {
  bool zero = std::all_of(q.begin(), q.end(), [](int c) { return c == 0; });
  if (zero) throw std::domain_error("inverse small divisor requested at q = 0");
  double s = small_divisor(omega, q);
  if (s == 0.0) throw std::domain_error("exact resonance at q = " + to_string(q));
  return 1.0 / (s * s);
}

struct DiophantineEstimate {
  double a = 0.0;
  double nu = 1.0;
  Mode minimizer;
  std::vector<Mode> resonances;  // nonempty iff a == 0
};

/// a = min over nonzero box modes of |omega.q| |q|^nu; also stored in omega.dio_a.
inline DiophantineEstimate estimate_diophantine(FrequencyVector& omega, const TruncationBox& box,
                                                double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("Diophantine exponent must be positive");
  if (box.dim() != omega.dim()) throw std::invalid_argument("box dimension mismatch");
  if (box.size() <= 1) throw std::invalid_argument("box contains only q = 0");
  DiophantineEstimate est;
  est.nu = nu;
  est.a = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (i == box.zero_index()) continue;
    const int* c = box.coords(i);
    Mode q = box.mode(i);
    if (is_resonant(omega, c)) {
      est.resonances.push_back(q);
      continue;
    }
    double val = std::abs(small_divisor(omega, c)) * std::pow(euclidean_norm(q), nu);
    if (val < est.a) {
      est.a = val;
      est.minimizer = q;
    }
  }
  if (!est.resonances.empty()) {
    est.a = 0.0;
    est.minimizer = est.resonances.front();
  }
  omega.dio_a = est.a;
  omega.dio_nu = nu;
  return est;
}

/// Smallest |omega.q| over nonzero box modes (0 if resonant).
inline double min_abs_divisor(const FrequencyVector& omega, const TruncationBox& box) {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (i == box.zero_index()) continue;
    if (is_resonant(omega, box.coords(i))) return 0.0;
    m = std::min(m, std::abs(small_divisor(omega, box.coords(i))));
  }
  return m;
}

inline double max_abs_divisor(const FrequencyVector& omega, const TruncationBox& box) {
  double m = 0.0;
  for (std::size_t i = 0; i < box.size(); ++i)
    m = std::max(m, std::abs(small_divisor(omega, box.coords(i))));
  return m;
}

/// Box indices with eta * |omega.q| <= 3, in box order.
inline std::vector<std::size_t> lambda_set_indices(const FrequencyVector& omega,
                                                   const TruncationBox& box, double eta) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < box.size(); ++i)
    if (eta * std::abs(small_divisor(omega, box.coords(i))) <= 3.0) out.push_back(i);
  return out;
}

inline std::vector<Mode> lambda_set(const FrequencyVector& omega, const TruncationBox& box,
                                    double eta) {
  std::vector<Mode> out;
  for (std::size_t i : lambda_set_indices(omega, box, eta)) out.push_back(box.mode(i));
  return out;
}

}  // namespace kamrg
