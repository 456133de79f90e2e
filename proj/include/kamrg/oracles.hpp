#pragma once

// Independent checks of a computed torus: Lindstedt series, Newton on the
// truncated torus equation, residuals, and the translation family.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kamrg/fourier.hpp"
#include "kamrg/lattice.hpp"
#include "kamrg/potential.hpp"

namespace kamrg {

struct LindstedtExpansion {
  int K = 0;
  std::vector<FourierSeriesRd> terms;  // terms[k-1] = x^(k)
  std::vector<double> zero_mode;       // |lambda^k coefficient of u at q = 0|

  FourierSeriesRd sum(double lambda) const {
    if (terms.empty()) throw std::logic_error("empty Lindstedt expansion");
    FourierSeriesRd out(terms.front().box());
    double p = 1.0;
    for (const auto& t : terms) {
      p *= lambda;
      for (std::size_t i = 0; i < out.raw().size(); ++i) out.raw()[i] += p * t.raw()[i];
    }
    return out;
  }

  /// Radius estimate from the last two orders, ||x^(K-1)|| / ||x^(K)||.
  double radius_estimate() const {
    if (terms.size() < 2) return std::numeric_limits<double>::infinity();
    double a = terms[terms.size() - 2].l1_norm(), b = terms.back().l1_norm();
    return b == 0.0 ? std::numeric_limits<double>::infinity() : a / b;
  }
};

/// Order-by-order Lindstedt solve with lambda carried exactly as a
/// polynomial on the grid. Terms are returned on `box`; the internal box has
/// radius K * (potential radius) so nothing is truncated before the resize.
inline LindstedtExpansion lindstedt(const AnalyticPotential& v, const FrequencyVector& omega,
                                    const TruncationBox& box, int K) {
  if (K < 1) throw std::invalid_argument("Lindstedt order must be >= 1");
  if (v.dim() != omega.dim() || box.dim() != omega.dim()) throw std::invalid_argument("dimension mismatch");
  const int d = omega.dim();
  const int R = std::max(1, v.max_radius());
  const int Qi = K * R;
  const int N = 2 * Qi + 1;
  TruncationBox inner(d, Qi);
  GridTransform tx(d, Qi, N);
  const std::size_t G = tx.grid_points();
  std::vector<Mode> modes;
  std::vector<cplx> vals;
  for (const auto& [r, c] : v.coeffs())
    if (std::any_of(r.begin(), r.end(), [](int z) { return z != 0; })) {
      modes.push_back(r);
      vals.push_back(c);
    }
  // e^{i r theta} per mode
  std::vector<std::vector<cplx>> base(modes.size(), std::vector<cplx>(G));
  for (std::size_t m = 0; m < modes.size(); ++m)
    for (std::size_t g = 0; g < G; ++g) {
      double ph = 0.0;
      for (int k = 0; k < d; ++k) ph += modes[m][std::size_t(k)] * tx.angle(g, k);
      base[m][g] = cplx(std::cos(ph), std::sin(ph));
    }
  // S[m][j] = i r . X^(j) on the grid, E[m][k] = lambda^k coefficient of e^{i r X}
  std::vector<std::vector<std::vector<cplx>>> S(modes.size()), E(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m) {
    S[m].assign(std::size_t(K + 1), std::vector<cplx>(G, cplx(0.0, 0.0)));
    E[m].assign(std::size_t(K + 1), std::vector<cplx>(G, cplx(0.0, 0.0)));
    std::fill(E[m][0].begin(), E[m][0].end(), cplx(1.0, 0.0));
  }
  LindstedtExpansion out;
  out.K = K;
  for (int k = 1; k <= K; ++k) {
    // lambda^{k-1} coefficient of grad v(theta + X)
    std::vector<std::vector<cplx>> Gk(std::size_t(d), std::vector<cplx>(G, cplx(0.0, 0.0)));
    for (std::size_t m = 0; m < modes.size(); ++m)
      for (int a = 0; a < d; ++a) {
        cplx c = cplx(0.0, modes[m][std::size_t(a)]) * vals[m];
        if (c == 0.0) continue;
        for (std::size_t g = 0; g < G; ++g) Gk[std::size_t(a)][g] += c * base[m][g] * E[m][std::size_t(k - 1)][g];
      }
    FourierSeriesRd term(inner);
    double zero = 0.0;
    for (int a = 0; a < d; ++a) {
      auto coef = tx.analyze(Gk[std::size_t(a)]);
      for (std::size_t i = 0; i < inner.size(); ++i) {
        if (i == inner.zero_index()) {
          zero = std::max(zero, std::abs(coef[i]));
          continue;
        }
        if (is_resonant(omega, inner.coords(i)))
          throw std::domain_error("Lindstedt order " + std::to_string(k) + " hits resonant mode " +
                                  to_string(inner.mode(i)));
        double s = small_divisor(omega, inner.coords(i));
        term.at(i)[a] = coef[i] / (s * s);
      }
    }
    term.enforce_reality();
    out.zero_mode.push_back(zero);
    // grid values of X^(k), then S_k and E_k
    std::vector<std::vector<cplx>> Xk(static_cast<std::size_t>(d));
    std::vector<cplx> comp(inner.size());
    for (int a = 0; a < d; ++a) {
      for (std::size_t i = 0; i < inner.size(); ++i) comp[i] = term.at(i)[a];
      Xk[std::size_t(a)] = tx.synthesize(comp);
    }
    for (std::size_t m = 0; m < modes.size(); ++m) {
      for (std::size_t g = 0; g < G; ++g) {
        cplx s = 0.0;
        for (int a = 0; a < d; ++a) s += double(modes[m][std::size_t(a)]) * Xk[std::size_t(a)][g];
        S[m][std::size_t(k)][g] = cplx(0.0, 1.0) * s;
      }
      // k E_k = sum_{j=1}^k j S_j E_{k-j}
      for (std::size_t g = 0; g < G; ++g) {
        cplx acc = 0.0;
        for (int j = 1; j <= k; ++j) acc += double(j) * S[m][std::size_t(j)][g] * E[m][std::size_t(k - j)][g];
        E[m][std::size_t(k)][g] = acc / double(k);
      }
    }
    out.terms.push_back(term.resized(box));
  }
  return out;
}

struct ResidualReport {
  double sup_residual = 0.0;
  std::vector<std::pair<Mode, double>> per_mode;
  double mode_residual_max = 0.0;
  Mode worst_mode;
  double zero_mode = 0.0;

  nlohmann::json to_json() const {
    return {{"sup_residual", sup_residual},
            {"mode_residual_max", mode_residual_max},
            {"worst_mode", worst_mode},
            {"zero_mode", zero_mode}};
  }
};

/// Real-space residual sup_theta |(omega.d)^2 X + lambda grad v(theta + X)|
/// on an N^d grid and per-mode residuals |(omega.q)^2 x(q) - u(q, x)|.
inline ResidualReport residual(const AnalyticPotential& v, double lambda, const FrequencyVector& omega,
                               const FourierSeriesRd& x, int grid_size) {
  const TruncationBox& box = x.box();
  const int d = box.dim();
  if (grid_size < 2 * box.radius() + 1) throw std::invalid_argument("residual grid too coarse for the box");
  Composer comp(v, lambda, box, grid_size);
  ResidualReport rep;
  auto U = comp.force_on_grid(x);
  GridTransform tx(d, box.radius(), grid_size);
  for (int a = 0; a < d; ++a) {
    std::vector<cplx> acc(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) {
      double s = small_divisor(omega, box.coords(i));
      acc[i] = -s * s * x.at(i)[a];
    }
    auto vals = tx.synthesize(acc);
    for (std::size_t g = 0; g < vals.size(); ++g) U[std::size_t(a)][g] += vals[g];
  }
  for (std::size_t g = 0; g < U[0].size(); ++g) {
    double s2 = 0.0;
    for (int a = 0; a < d; ++a) s2 += std::norm(U[std::size_t(a)][g]);
    rep.sup_residual = std::max(rep.sup_residual, std::sqrt(s2));
  }
  FourierSeriesRd u = comp.u(x);
  for (std::size_t i = 0; i < box.size(); ++i) {
    double s = small_divisor(omega, box.coords(i));
    double e2 = 0.0;
    for (int a = 0; a < d; ++a) e2 += std::norm(s * s * x.at(i)[a] - u.at(i)[a]);
    double e = std::sqrt(e2);
    if (i == box.zero_index()) {
      rep.zero_mode = e;
      continue;
    }
    rep.per_mode.emplace_back(box.mode(i), e);
    if (e > rep.mode_residual_max || rep.worst_mode.empty()) {
      rep.mode_residual_max = e;
      rep.worst_mode = box.mode(i);
    }
  }
  return rep;
}

struct NewtonResult {
  FourierSeriesRd x;
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // ||F||_1 per iterate
  std::vector<double> step_history;      // ||dx||_1 per step
};

struct NewtonOptions {
  double tol = 1e-13;
  int max_iter = 25;
  int grid = 0;  // 0: 4Q + 2
};

/// Newton on F(x) = x - Gamma u(x), Gamma = diag (omega.q)^-2 off q = 0,
/// with the q = 0 row pinning x(0) = 0. One extra step is taken after the
/// tolerance is met.
inline NewtonResult newton_solve(const AnalyticPotential& v, double lambda, const FrequencyVector& omega,
                                 const TruncationBox& box, const FourierSeriesRd& x0,
                                 const NewtonOptions& opt = {}) {
  if (min_abs_divisor(omega, box) <= 0.0) throw std::domain_error("resonant frequency inside the box");
  const int N = opt.grid > 0 ? opt.grid : Composer::default_grid(box.radius());
  Composer comp(v, lambda, box, N);
  const int d = box.dim();
  const Eigen::Index D = Eigen::Index(box.size() * d);
  Eigen::VectorXd gam(D);
  for (std::size_t q = 0; q < box.size(); ++q) {
    double s = small_divisor(omega, box.coords(q));
    for (int a = 0; a < d; ++a) gam(Eigen::Index(q * d + a)) = q == box.zero_index() ? 0.0 : 1.0 / (s * s);
  }
  const Eigen::Index z0 = Eigen::Index(box.zero_index() * d);
  NewtonResult res;
  res.x = x0.box().radius() == box.radius() ? x0 : x0.resized(box);
  auto F_of = [&](const FourierSeriesRd& x) {
    Eigen::VectorXcd F = to_vector(x) - gam.asDiagonal() * to_vector(comp.u(x));
    for (int a = 0; a < d; ++a) F(z0 + a) = x.at(box.zero_index())[a];
    return F;
  };
  Eigen::VectorXcd F = F_of(res.x);
  int growth = 0;
  bool polish = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    double nf = F.cwiseAbs().sum();
    res.residual_history.push_back(nf);
    if (nf < opt.tol && (polish || nf == 0.0)) {
      res.converged = true;
      break;
    }
    if (nf < opt.tol) polish = true;
    if (res.residual_history.size() >= 2 && nf > res.residual_history[res.residual_history.size() - 2]) {
      if (++growth >= 2)
        throw std::runtime_error("Newton diverged (residual grew twice in a row); lambda likely beyond the radius");
    } else {
      growth = 0;
    }
    Eigen::MatrixXcd J = -(gam.asDiagonal() * comp.jacobian(res.x));
    J += Eigen::MatrixXcd::Identity(D, D);
    for (int a = 0; a < d; ++a) {
      J.row(z0 + a).setZero();
      J(z0 + a, z0 + a) = 1.0;
    }
    Eigen::VectorXcd dx = J.partialPivLu().solve(-F);
    Eigen::VectorXcd xv = to_vector(res.x) + dx;
    from_vector(xv, res.x);
    res.x.enforce_reality();
    res.step_history.push_back(dx.cwiseAbs().sum());
    ++res.iterations;
    F = F_of(res.x);
  }
  if (!res.converged) {
    double nf = F.cwiseAbs().sum();
    res.residual_history.push_back(nf);
    res.converged = nf < opt.tol;
  }
  return res;
}

struct TranslationCheck {
  double translated_residual = 0.0;  // sup residual of X_beta
  double base_residual = 0.0;        // sup residual of X
  std::optional<double> distance;    // min over beta of ||x_ref - (x_other)_beta||_1
  std::vector<double> best_beta;
};

/// x_beta(q) = e^{i q beta} x(q) + beta delta_{q0}.
inline FourierSeriesRd translate(const FourierSeriesRd& x, const std::vector<double>& beta) {
  FourierSeriesRd out = x;
  const TruncationBox& box = x.box();
  for (std::size_t i = 0; i < box.size(); ++i) {
    double ph = 0.0;
    for (int k = 0; k < box.dim(); ++k) ph += box.coords(i)[k] * beta[std::size_t(k)];
    cplx e(std::cos(ph), std::sin(ph));
    for (int k = 0; k < box.dim(); ++k) out.at(i)[k] *= e;
  }
  for (int k = 0; k < box.dim(); ++k) out.at(box.zero_index())[k] += beta[std::size_t(k)];
  return out;
}

inline double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, 2.0 * std::numbers::pi);
  if (a < 0) a += 2.0 * std::numbers::pi;
  return a - std::numbers::pi;
}

/// Residual of the beta-translate, and (if `other` is given) the distance
/// from x to the closest translate of `other`: coarse grid over T^d, then
/// compass search.
inline TranslationCheck translation_family_check(const FourierSeriesRd& x, const std::vector<double>& beta,
                                                 const AnalyticPotential& v, double lambda,
                                                 const FrequencyVector& omega, int grid_size,
                                                 const FourierSeriesRd* other = nullptr, int coarse = 16) {
  const int d = x.dim();
  if (int(beta.size()) != d) throw std::invalid_argument("beta dimension mismatch");
  TranslationCheck out;
  out.base_residual = residual(v, lambda, omega, x, grid_size).sup_residual;
  out.translated_residual = residual(v, lambda, omega, translate(x, beta), grid_size).sup_residual;
  if (!other) return out;
  const TruncationBox& big = x.box().radius() >= other->box().radius() ? x.box() : other->box();
  FourierSeriesRd ref = x.resized(big), oth = other->resized(big);
  auto dist = [&](const std::vector<double>& b) {
    std::vector<double> w(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) w[i] = wrap_angle(b[i]);
    return FourierSeriesRd::l1_distance(ref, translate(oth, w));
  };
  std::vector<double> best(static_cast<std::size_t>(d), 0.0), cur(static_cast<std::size_t>(d));
  double best_val = dist(best);
  std::size_t total = ipow(std::size_t(coarse), d);
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (int k = 0; k < d; ++k) {
      cur[std::size_t(k)] = -std::numbers::pi + 2.0 * std::numbers::pi * double(rem % coarse) / coarse;
      rem /= std::size_t(coarse);
    }
    double val = dist(cur);
    if (val < best_val) {
      best_val = val;
      best = cur;
    }
  }
  double step = 2.0 * std::numbers::pi / coarse;
  while (step > 1e-13) {
    bool improved = false;
    for (int k = 0; k < d; ++k)
      for (double sgn : {1.0, -1.0}) {
        cur = best;
        cur[std::size_t(k)] += sgn * step;
        double val = dist(cur);
        if (val < best_val) {
          best_val = val;
          best = cur;
          improved = true;
        }
      }
    if (!improved) step *= 0.5;
  }
  for (double& b : best) b = wrap_angle(b);
  out.distance = best_val;
  out.best_beta = best;
  return out;
}

}  // namespace kamrg
