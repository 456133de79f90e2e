#pragma once

// Real-analytic potential given by finitely many Fourier modes, and the
// initial kernels u_n built from it.

#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kamrg/kernels.hpp"
#include "kamrg/lattice.hpp"
#include "kamrg/tensor_table.hpp"

namespace kamrg {

struct PotentialFit {
  double C = 0.0;    // max |v(r)|
  double b = 0.0;    // analyticity width proxy: |v(r)| <= C e^{-2b|r|}
  double C_u = 0.0;  // |u_n| <= C_u |lambda| R^n e^{-b|r|}
  double R = 0.0;
};

class AnalyticPotential {
 public:
  AnalyticPotential() = default;
  explicit AnalyticPotential(int d) : d_(d) {
    if (d < 1) throw std::invalid_argument("potential dimension must be positive");
  }

  int dim() const { return d_; }
  const std::map<Mode, cplx>& coeffs() const { return coeffs_; }

  /// Sets v(r) and its reality partner v(-r) = conj v(r).
  void set(const Mode& r, cplx value) {
    check_mode(r);
    Mode neg = negated(r);
    if (neg == r) {
      if (std::abs(value.imag()) > 1e-14 * std::max(1.0, std::abs(value)))
        throw std::invalid_argument("v(0) must be real");
      value = cplx(value.real(), 0.0);
    }
    coeffs_[r] = value;
    coeffs_[neg] = std::conj(value);
  }

  cplx coeff(const Mode& r) const {
    auto it = coeffs_.find(r);
    return it == coeffs_.end() ? cplx(0.0, 0.0) : it->second;
  }

  /// Largest sup-norm among the stored modes.
  int max_radius() const {
    int m = 0;
    for (const auto& [r, c] : coeffs_)
      for (int x : r) m = std::max(m, std::abs(x));
    return m;
  }

  /// sum_i cos(theta_i).
  static AnalyticPotential cos_sum(int d) {
    AnalyticPotential v(d);
    for (int i = 0; i < d; ++i) {
      Mode r(std::size_t(d), 0);
      r[std::size_t(i)] = 1;
      v.set(r, cplx(0.5, 0.0));
    }
    return v;
  }

  /// {"d": int, "modes": [{"r": [...], "re": x, "im": y}, ...]}. Missing
  /// reality partners are completed; inconsistent ones are rejected.
  static AnalyticPotential from_json(const nlohmann::json& j) {
    if (!j.contains("d") || !j.contains("modes")) throw std::invalid_argument("potential JSON needs \"d\" and \"modes\"");
    AnalyticPotential v(j.at("d").get<int>());
    std::map<Mode, cplx> given;
    for (const auto& m : j.at("modes")) {
      Mode r = m.at("r").get<Mode>();
      v.check_mode(r);
      cplx c(m.value("re", 0.0), m.value("im", 0.0));
      if (given.count(r)) throw std::invalid_argument("duplicate potential mode " + to_string(r));
      given[r] = c;
    }
    for (const auto& [r, c] : given) {
      auto it = given.find(negated(r));
      if (it != given.end()) {
        cplx partner = std::conj(it->second);
        if (std::abs(partner - c) > 1e-12 * std::max(1.0, std::abs(c)))
          throw std::invalid_argument("potential violates reality at mode " + to_string(r));
      }
      v.set(r, c);
    }
    return v;
  }

  static AnalyticPotential from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open potential file " + path);
    return from_json(nlohmann::json::parse(in));
  }

  nlohmann::json to_json() const {
    nlohmann::json modes = nlohmann::json::array();
    for (const auto& [r, c] : coeffs_) modes.push_back({{"r", r}, {"re", c.real()}, {"im", c.imag()}});
    return {{"d", d_}, {"modes", modes}};
  }

  double l1_norm() const {
    double s = 0.0;
    for (const auto& [r, c] : coeffs_) s += std::abs(c);
    return s;
  }

  /// Decay constants fitted from the coefficients; n_fit bounds the orders
  /// used for R.
  PotentialFit fit(int n_fit = 4) const {
    PotentialFit f;
    for (const auto& [r, c] : coeffs_) f.C = std::max(f.C, std::abs(c));
    if (f.C == 0.0) return f;
    f.b = std::numeric_limits<double>::infinity();
    for (const auto& [r, c] : coeffs_) {
      double nr = euclidean_norm(r);
      if (nr == 0.0 || std::abs(c) == 0.0) continue;
      f.b = std::min(f.b, (1.0 + std::log(f.C / std::abs(c))) / (2.0 * nr));
    }
    if (!std::isfinite(f.b)) f.b = 1.0;
    for (const auto& [r, c] : coeffs_) {
      double nr = euclidean_norm(r);
      f.C_u = std::max(f.C_u, std::abs(c) * nr * std::exp(f.b * nr));
    }
    if (f.C_u == 0.0) return f;
    double fact = 1.0;
    for (int n = 1; n <= n_fit; ++n) {
      fact *= n;
      for (const auto& [r, c] : coeffs_) {
        double nr = euclidean_norm(r);
        if (nr == 0.0) continue;
        double ratio = std::abs(c) * std::pow(nr, n + 1) * std::exp(f.b * nr) / (fact * f.C_u);
        f.R = std::max(f.R, std::pow(ratio, 1.0 / n));
      }
    }
    return f;
  }

  double eval(const std::vector<double>& theta) const {
    check_point(theta);
    cplx s = 0.0;
    for (const auto& [r, c] : coeffs_) s += c * std::exp(cplx(0.0, phase(r, theta)));
    return s.real();
  }

 private:
  friend std::vector<std::vector<double>> eval_grad_v(const AnalyticPotential&,
                                                      const std::vector<std::vector<double>>&);

  static Mode negated(Mode r) {
    for (int& x : r) x = -x;
    return r;
  }
  void check_mode(const Mode& r) const {
    if (int(r.size()) != d_) throw std::invalid_argument("potential mode dimension mismatch");
  }
  void check_point(const std::vector<double>& theta) const {
    if (int(theta.size()) != d_) throw std::invalid_argument("grid point dimension mismatch");
  }
  static double phase(const Mode& r, const std::vector<double>& theta) {
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * theta[i];
    return s;
  }

  int d_ = 0;
  std::map<Mode, cplx> coeffs_;
};

/// grad v at each point; a non-negligible imaginary part means the stored
/// coefficients are not real-symmetric.
inline std::vector<std::vector<double>> eval_grad_v(const AnalyticPotential& v,
                                                    const std::vector<std::vector<double>>& points) {
  const int d = v.dim();
  const double tol = 1e-12 * std::max(v.l1_norm(), std::numeric_limits<double>::min());
  std::vector<std::vector<double>> out;
  out.reserve(points.size());
  for (const auto& theta : points) {
    v.check_point(theta);
    std::vector<cplx> g(std::size_t(d), 0.0);
    for (const auto& [r, c] : v.coeffs()) {
      cplx e = c * std::exp(cplx(0.0, AnalyticPotential::phase(r, theta)));
      for (int i = 0; i < d; ++i) g[std::size_t(i)] += cplx(0.0, r[std::size_t(i)]) * e;
    }
    std::vector<double> re(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
      if (std::abs(g[std::size_t(i)].imag()) > tol)
        throw std::runtime_error("grad v has an imaginary residue; reality broken");
      re[std::size_t(i)] = g[std::size_t(i)].real();
    }
    out.push_back(std::move(re));
  }
  return out;
}

/// u_n(q; p_1..p_n) = lambda v(r) / n! (i r)^{tensor (n+1)}, r = q - sum p_i,
/// for n = 0..n_max on every box tuple whose r lies in the box.
inline KernelHierarchy build_initial_kernels(const AnalyticPotential& v, double lambda, int n_max,
                                             const TruncationBox& box) {
  if (n_max < 0) throw std::invalid_argument("n_max must be nonnegative");
  if (v.dim() != box.dim()) throw std::invalid_argument("potential and box dimensions differ");
  KernelHierarchy h(box, n_max);
  const int d = box.dim();
  std::vector<int> r(static_cast<std::size_t>(d));
  double fact = 1.0;
  for (int n = 0; n <= n_max; ++n) {
    if (n > 0) fact *= n;
    KernelTable& t = h.level(n);
    const std::size_t T = t.tensor_size();
    for (std::size_t tup = 0; tup < t.tuples(); ++tup) {
      const int* q = box.coords(t.lead_of(tup));
      const int* p = t.sym_members(tup);
      for (int i = 0; i < d; ++i) {
        int c = q[i];
        for (int k = 0; k < n; ++k) c -= box.coords(std::size_t(p[k]))[i];
        r[std::size_t(i)] = c;
      }
      if (!box.contains(r.data())) continue;
      cplx vr = v.coeff(r);
      if (vr == 0.0) continue;
      cplx pref = lambda * vr / fact;
      cplx* out = t.at(tup);
      // (i r)^{tensor (n+1)}, slot 0 most significant
      for (std::size_t c = 0; c < T; ++c) {
        cplx val = pref;
        std::size_t rem = c;
        for (int s = 0; s <= n; ++s) {
          val *= cplx(0.0, r[rem % std::size_t(d)]);
          rem /= std::size_t(d);
        }
        out[c] = val;
      }
    }
  }
  return h;
}

}  // namespace kamrg
