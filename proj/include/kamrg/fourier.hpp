#pragma once

// Truncated vector-valued Fourier series on T^d and the pseudo-spectral
// composition theta -> lambda grad v(theta + X(theta)).

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kamrg/lattice.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/tensor_table.hpp"

namespace kamrg {

/// x(q) in C^d for q in a box; X(theta) = sum_q x(q) e^{i q theta}.
class FourierSeriesRd {
 public:
  FourierSeriesRd() = default;
  explicit FourierSeriesRd(const TruncationBox& box)
      : box_(box), data_(box.size() * std::size_t(box.dim()), cplx(0.0, 0.0)) {}

  const TruncationBox& box() const { return box_; }
  int dim() const { return box_.dim(); }
  std::size_t modes() const { return box_.size(); }

  cplx* at(std::size_t q) { return data_.data() + q * std::size_t(dim()); }
  const cplx* at(std::size_t q) const { return data_.data() + q * std::size_t(dim()); }
  std::vector<cplx>& raw() { return data_; }
  const std::vector<cplx>& raw() const { return data_; }

  /// Coefficient at mode q, zero outside the box.
  std::vector<cplx> coeff(const Mode& q) const {
    long i = box_.index(q);
    if (i < 0) return std::vector<cplx>(std::size_t(dim()), cplx(0.0, 0.0));
    return std::vector<cplx>(at(std::size_t(i)), at(std::size_t(i)) + dim());
  }

  /// Copy onto another box; modes outside the target are dropped.
  FourierSeriesRd resized(const TruncationBox& target) const {
    FourierSeriesRd out(target);
    for (std::size_t i = 0; i < target.size(); ++i) {
      long j = box_.index(target.coords(i));
      if (j < 0) continue;
      std::copy(at(std::size_t(j)), at(std::size_t(j)) + dim(), out.at(i));
    }
    return out;
  }

  double reality_residual() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < modes(); ++i) {
      const cplx* a = at(i);
      const cplx* b = at(box_.negate(i));
      for (int k = 0; k < dim(); ++k) worst = std::max(worst, std::abs(a[k] - std::conj(b[k])));
    }
    return worst;
  }

  void enforce_reality() {
    for (std::size_t i = 0; i < modes(); ++i) {
      std::size_t j = box_.negate(i);
      if (j < i) continue;
      for (int k = 0; k < dim(); ++k) {
        cplx avg = 0.5 * (at(i)[k] + std::conj(at(j)[k]));
        at(i)[k] = avg;
        at(j)[k] = std::conj(avg);
      }
    }
  }

  double l1_norm() const {
    double s = 0.0;
    for (const auto& c : data_) s += std::abs(c);
    return s;
  }

  /// sum over modes of |x(q) - y(q)| (Euclidean in C^d), union of the boxes.
  static double l1_distance(const FourierSeriesRd& x, const FourierSeriesRd& y) {
    const TruncationBox& big = x.box().radius() >= y.box().radius() ? x.box() : y.box();
    FourierSeriesRd a = x.resized(big), b = y.resized(big);
    double s = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) {
      double e = 0.0;
      for (int k = 0; k < big.dim(); ++k) e += std::norm(a.at(i)[k] - b.at(i)[k]);
      s += std::sqrt(e);
    }
    return s;
  }

  /// Real part of X(theta) (the imaginary part vanishes under reality).
  std::vector<double> evaluate(const std::vector<double>& theta) const {
    std::vector<double> out(std::size_t(dim()), 0.0);
    for (std::size_t i = 0; i < modes(); ++i) {
      double ph = 0.0;
      for (int k = 0; k < dim(); ++k) ph += box_.coords(i)[k] * theta[std::size_t(k)];
      cplx e(std::cos(ph), std::sin(ph));
      for (int k = 0; k < dim(); ++k) out[std::size_t(k)] += (at(i)[k] * e).real();
    }
    return out;
  }

 private:
  TruncationBox box_;
  std::vector<cplx> data_;
};

/// Separable direct DFT between a box of radius Q and a uniform grid of N
/// points per dimension (theta_j = 2 pi j / N).
class GridTransform {
 public:
  GridTransform(int d, int Q, int N) : d_(d), Q_(Q), N_(N), side_(2 * Q + 1) {
    if (N < 1) throw std::invalid_argument("grid size must be positive");
    synth_.assign(std::size_t(N_) * side_, cplx(0.0, 0.0));
    analy_.assign(std::size_t(side_) * N_, cplx(0.0, 0.0));
    for (int j = 0; j < N_; ++j)
      for (int m = 0; m < side_; ++m) {
        double ph = 2.0 * std::numbers::pi * double(m - Q_) * j / N_;
        synth_[std::size_t(j) * side_ + m] = cplx(std::cos(ph), std::sin(ph));
        analy_[std::size_t(m) * N_ + j] = cplx(std::cos(ph), -std::sin(ph)) / double(N_);
      }
  }

  int grid() const { return N_; }
  int radius() const { return Q_; }
  std::size_t grid_points() const { return ipow(std::size_t(N_), d_); }
  std::size_t box_points() const { return ipow(std::size_t(side_), d_); }

  /// Values on the grid from box coefficients (one scalar component).
  std::vector<cplx> synthesize(const std::vector<cplx>& coeffs) const {
    return apply(coeffs, side_, N_, synth_);
  }
  /// Box coefficients (radius Q) from grid samples.
  std::vector<cplx> analyze(const std::vector<cplx>& values) const {
    return apply(values, N_, side_, analy_);
  }

  /// Angle of grid point flat index g along axis k.
  double angle(std::size_t g, int k) const {
    std::size_t rem = g;
    for (int i = d_ - 1; i > k; --i) rem /= std::size_t(N_);
    return 2.0 * std::numbers::pi * double(rem % std::size_t(N_)) / N_;
  }

 private:
  // Applies an (out x in) matrix along every axis in turn.
  std::vector<cplx> apply(const std::vector<cplx>& in, int n_in, int n_out,
                          const std::vector<cplx>& mat) const {
    std::vector<cplx> cur = in;
    std::vector<std::size_t> shape(static_cast<std::size_t>(d_), std::size_t(n_in));
    for (int axis = 0; axis < d_; ++axis) {
      std::size_t outer = 1, inner = 1;
      for (int i = 0; i < axis; ++i) outer *= shape[std::size_t(i)];
      for (int i = axis + 1; i < d_; ++i) inner *= shape[std::size_t(i)];
      std::vector<cplx> next(outer * std::size_t(n_out) * inner, cplx(0.0, 0.0));
      for (std::size_t o = 0; o < outer; ++o)
        for (int a = 0; a < n_out; ++a) {
          cplx* dst = next.data() + (o * n_out + a) * inner;
          for (int b = 0; b < n_in; ++b) {
            cplx m = mat[std::size_t(a) * n_in + b];
            const cplx* src = cur.data() + (o * n_in + b) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += m * src[i];
          }
        }
      cur.swap(next);
      shape[std::size_t(axis)] = std::size_t(n_out);
    }
    return cur;
  }

  int d_, Q_, N_, side_;
  std::vector<cplx> synth_, analy_;
};

/// Evaluates u(q, x) = [lambda grad v(theta + X(theta))]^(q) and its Jacobian
/// on a box, pseudo-spectrally on an N^d grid. X is kept complex so that the
/// map is holomorphic in x.
class Composer {
 public:
  Composer(const AnalyticPotential& v, double lambda, const TruncationBox& box, int N)
      : v_(v), lambda_(lambda), box_(box), N_(N), tx_(box.dim(), box.radius(), N),
        th_(box.dim(), 2 * box.radius(), N) {
    if (v.dim() != box.dim()) throw std::invalid_argument("potential and box dimensions differ");
    if (N < 2 * box.radius() + 1) throw std::invalid_argument("composition grid too coarse for the box");
    for (const auto& [r, c] : v.coeffs()) {
      if (std::all_of(r.begin(), r.end(), [](int z) { return z == 0; })) continue;
      modes_.push_back(r);
      values_.push_back(c);
    }
  }

  /// Default grid: 4Q + 2 points per dimension.
  static int default_grid(int Q) { return 4 * Q + 2; }

  const TruncationBox& box() const { return box_; }
  int grid() const { return N_; }
  double lambda() const { return lambda_; }

  /// X on the grid, component-major: out[k][g].
  std::vector<std::vector<cplx>> grid_values(const FourierSeriesRd& x) const {
    const int d = box_.dim();
    std::vector<std::vector<cplx>> out(static_cast<std::size_t>(d));
    std::vector<cplx> comp(box_.size());
    for (int k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < box_.size(); ++i) comp[i] = x.at(i)[k];
      out[std::size_t(k)] = tx_.synthesize(comp);
    }
    return out;
  }

  /// e^{i r (theta + X)} on the grid for each potential mode r.
  std::vector<std::vector<cplx>> phases(const std::vector<std::vector<cplx>>& X) const {
    const int d = box_.dim();
    const std::size_t G = tx_.grid_points();
    std::vector<std::vector<cplx>> out(modes_.size(), std::vector<cplx>(G));
    for (std::size_t m = 0; m < modes_.size(); ++m)
      for (std::size_t g = 0; g < G; ++g) {
        cplx ph = 0.0;
        for (int k = 0; k < d; ++k)
          ph += double(modes_[m][std::size_t(k)]) * (tx_.angle(g, k) + X[std::size_t(k)][g]);
        out[m][g] = std::exp(cplx(0.0, 1.0) * ph);
      }
    return out;
  }

  /// U(theta) = lambda grad v(theta + X) on the grid, component-major.
  std::vector<std::vector<cplx>> force_on_grid(const FourierSeriesRd& x) const {
    auto E = phases(grid_values(x));
    const int d = box_.dim();
    const std::size_t G = tx_.grid_points();
    std::vector<std::vector<cplx>> U(std::size_t(d), std::vector<cplx>(G, cplx(0.0, 0.0)));
    for (std::size_t m = 0; m < modes_.size(); ++m)
      for (int k = 0; k < d; ++k) {
        cplx c = lambda_ * cplx(0.0, modes_[m][std::size_t(k)]) * values_[m];
        if (c == 0.0) continue;
        for (std::size_t g = 0; g < G; ++g) U[std::size_t(k)][g] += c * E[m][g];
      }
    return U;
  }

  /// u(q, x) for all box modes.
  FourierSeriesRd u(const FourierSeriesRd& x) const {
    check(x);
    auto U = force_on_grid(x);
    FourierSeriesRd out(box_);
    for (int k = 0; k < box_.dim(); ++k) {
      auto c = tx_.analyze(U[std::size_t(k)]);
      for (std::size_t i = 0; i < box_.size(); ++i) out.at(i)[k] = c[i];
    }
    return out;
  }

  /// Du(q, q')_{ab} = h_{ab}(q - q'), h the coefficients of
  /// lambda Hess v(theta + X). Index of (q, a) is q * d + a.
  Eigen::MatrixXcd jacobian(const FourierSeriesRd& x) const {
    check(x);
    const int d = box_.dim();
    auto E = phases(grid_values(x));
    const std::size_t G = tx_.grid_points();
    const TruncationBox wide(d, 2 * box_.radius());
    std::vector<std::vector<cplx>> h(static_cast<std::size_t>(d * d));
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < d; ++b) {
        std::vector<cplx> H(G, cplx(0.0, 0.0));
        for (std::size_t m = 0; m < modes_.size(); ++m) {
          double rr = double(modes_[m][std::size_t(a)]) * modes_[m][std::size_t(b)];
          if (rr == 0.0) continue;
          cplx c = -lambda_ * rr * values_[m];
          for (std::size_t g = 0; g < G; ++g) H[g] += c * E[m][g];
        }
        h[std::size_t(a * d + b)] = th_.analyze(H);
      }
    const std::size_t M = box_.size();
    Eigen::MatrixXcd J(Eigen::Index(M * d), Eigen::Index(M * d));
    std::vector<int> diff(static_cast<std::size_t>(d));
    for (std::size_t q = 0; q < M; ++q)
      for (std::size_t qp = 0; qp < M; ++qp) {
        for (int k = 0; k < d; ++k) diff[std::size_t(k)] = box_.coords(q)[k] - box_.coords(qp)[k];
        std::size_t w = std::size_t(wide.index(diff.data()));
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) J(Eigen::Index(q * d + a), Eigen::Index(qp * d + b)) = h[std::size_t(a * d + b)][w];
      }
    return J;
  }

 private:
  void check(const FourierSeriesRd& x) const {
    if (x.box().dim() != box_.dim() || x.box().radius() != box_.radius())
      throw std::invalid_argument("series box differs from the composer box");
  }

  AnalyticPotential v_;
  double lambda_;
  TruncationBox box_;
  int N_;
  GridTransform tx_, th_;
  std::vector<Mode> modes_;
  std::vector<cplx> values_;
};

inline Eigen::VectorXcd to_vector(const FourierSeriesRd& x) {
  Eigen::VectorXcd v(Eigen::Index(x.raw().size()));
  for (std::size_t i = 0; i < x.raw().size(); ++i) v(Eigen::Index(i)) = x.raw()[i];
  return v;
}

inline void from_vector(const Eigen::VectorXcd& v, FourierSeriesRd& x) {
  for (std::size_t i = 0; i < x.raw().size(); ++i) x.raw()[i] = v(Eigen::Index(i));
}

/// Torus export: {"omega", "lambda", "modes": [{"q", "re", "im"}], "residuals"}.
inline nlohmann::json torus_to_json(const FourierSeriesRd& x, const FrequencyVector& omega, double lambda,
                                    const nlohmann::json& residuals = nlohmann::json::object()) {
  nlohmann::json modes = nlohmann::json::array();
  for (std::size_t i = 0; i < x.modes(); ++i) {
    std::vector<double> re, im;
    for (int k = 0; k < x.dim(); ++k) {
      re.push_back(x.at(i)[k].real());
      im.push_back(x.at(i)[k].imag());
    }
    modes.push_back({{"q", x.box().mode(i)}, {"re", re}, {"im", im}});
  }
  return {{"omega", omega.omega}, {"lambda", lambda}, {"modes", modes}, {"residuals", residuals}};
}

struct TorusFile {
  FourierSeriesRd x;
  std::vector<double> omega;
  double lambda = 0.0;
  nlohmann::json residuals;
};

inline TorusFile torus_from_json(const nlohmann::json& j) {
  TorusFile f;
  f.omega = j.at("omega").get<std::vector<double>>();
  f.lambda = j.at("lambda").get<double>();
  const auto& modes = j.at("modes");
  if (!modes.is_array() || modes.empty()) throw std::invalid_argument("torus JSON has no modes");
  int d = int(f.omega.size());
  int Q = 0;
  for (const auto& m : modes) {
    auto q = m.at("q").get<Mode>();
    if (int(q.size()) != d) throw std::invalid_argument("torus mode dimension mismatch");
    for (int c : q) Q = std::max(Q, std::abs(c));
  }
  f.x = FourierSeriesRd(TruncationBox(d, Q));
  for (const auto& m : modes) {
    auto q = m.at("q").get<Mode>();
    auto re = m.at("re").get<std::vector<double>>();
    auto im = m.at("im").get<std::vector<double>>();
    if (int(re.size()) != d || int(im.size()) != d) throw std::invalid_argument("torus coefficient size mismatch");
    std::size_t i = std::size_t(f.x.box().index(q));
    for (int k = 0; k < d; ++k) f.x.at(i)[k] = cplx(re[std::size_t(k)], im[std::size_t(k)]);
  }
  f.residuals = j.value("residuals", nlohmann::json::object());
  return f;
}

}  // namespace kamrg
