#pragma once

// Conjugacy hierarchy f, torus extraction, and the direct continuation
// solver for the cutoff fixed point x = gamma_t u(x).

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "kamrg/fourier.hpp"
#include "kamrg/kernels.hpp"
#include "kamrg/potential.hpp"
#include "kamrg/rg_flow.hpp"

namespace kamrg {

/// f_n = a delta_{n,1} delta_{q,p} Identity.
inline KernelHierarchy initial_conjugacy(const TruncationBox& box, int n_max, double a) {
  if (n_max < 1) throw std::invalid_argument("conjugacy hierarchy needs n_max >= 1");
  KernelHierarchy f(box, n_max);
  const int d = box.dim();
  KernelTable& f1 = f.level(1);
  for (std::size_t q = 0; q < box.size(); ++q) {
    const int qq = int(q);
    cplx* t = f1.at(f1.tuple_index(q, f1.multiset_index().rank(&qq)));
    for (int i = 0; i < d; ++i) t[std::size_t(i * d + i)] = a;
  }
  return f;
}

struct TorusSolution {
  FourierSeriesRd x;
  double t_end = 0.0;
  double lambda = 0.0;
  double tail_certificate = 0.0;
  nlohmann::json residual_report = nlohmann::json::object();
};

/// x(q) = f_0(t_end, q). The tail certificate is the largest l1 distance
/// between f_0(t_end) and f_0(s) over recorded steps s in the last quarter
/// of the run.
inline TorusSolution extract_torus(const FlowState& s, double lambda, double x0_tol = 1e-12) {
  if (!s.f) throw std::invalid_argument("extract_torus needs the conjugacy hierarchy");
  const KernelHierarchy& f = *s.f;
  const TruncationBox& box = f.box;
  const int d = box.dim();
  TorusSolution sol;
  sol.x = FourierSeriesRd(box);
  sol.t_end = s.t;
  sol.lambda = lambda;
  const KernelTable& f0 = f.level(0);
  for (std::size_t q = 0; q < box.size(); ++q)
    for (int k = 0; k < d; ++k) sol.x.at(q)[k] = f0.at(q)[k];
  double scale = std::max(sol.x.l1_norm(), std::numeric_limits<double>::min());
  double x0 = 0.0;
  for (int k = 0; k < d; ++k) x0 = std::max(x0, std::abs(sol.x.at(box.zero_index())[k]));
  if (x0 > x0_tol * std::max(scale, 1e-300) && x0 > 1e-300)
    throw std::runtime_error("torus has x(0) = " + std::to_string(x0) + "; Ward conservation broken upstream");
  if (sol.x.reality_residual() > 1e-12 * scale) throw std::runtime_error("torus violates reality");
  if (!s.f0_history.empty()) {
    const double t0 = s.f0_history.front().first;
    const double from = t0 + 0.75 * (s.t - t0);
    const auto& last = f0.raw();
    for (const auto& [t, snap] : s.f0_history) {
      if (t < from) continue;
      double dist = 0.0;
      for (std::size_t q = 0; q < box.size(); ++q) {
        double e = 0.0;
        for (int k = 0; k < d; ++k) e += std::norm(last[q * d + k] - snap[q * d + k]);
        dist += std::sqrt(e);
      }
      sol.tail_certificate = std::max(sol.tail_certificate, dist);
    }
  }
  return sol;
}

struct ConjugacyRun {
  FlowState state;
  TorusSolution torus;
  double t_end = 0.0;    // auto end time (freeze plus one step)
  double t_final = 0.0;  // end of the recorded tail
};

/// Integrates w and f (a = 1) from the initial kernels to t_end, then over a
/// frozen tail of length tail_fraction * t_end, and extracts the torus.
/// With `kappa`, the extended family is carried along on that grid.
inline ConjugacyRun run_conjugacy_flow(const FlowEngine& engine, const AnalyticPotential& v, double lambda,
                                       const StepperConfig& stepper, double tail_fraction = 1.0 / 3.0,
                                       const KappaGrid* kappa = nullptr) {
  const int n_max = engine.n_max();
  ConjugacyRun run;
  KernelHierarchy w = build_initial_kernels(v, lambda, n_max, engine.box());
  if (kappa) {
    w.attach_kappa(*kappa);
    w.seed_kappa_from_plain();
  }
  run.state = make_state(std::move(w), initial_conjugacy(engine.box(), n_max, 1.0));
  run.t_end = engine.schedule().t_end ? *engine.schedule().t_end : auto_t_end(engine, stepper.h);
  run.t_final = run.t_end * (1.0 + tail_fraction);
  integrate(engine, run.state, run.t_final, stepper);
  run.torus = extract_torus(run.state, lambda);
  run.torus.t_end = run.t_end;
  return run;
}

struct ContinuationOptions {
  double d_eta = 0.25;
  std::string predictor = "tangent";  // "tangent" or "rk4"
  double corrector_tol = 1e-15;       // relative l1 size of x - Gamma u(x)
  int corrector_max = 30;
  double solve_tol = 1e-10;
  int power_iterations = 30;
  int grid = 0;                       // 0: 4Q + 2
};

struct ContinuationStats {
  int steps = 0;
  int rejected = 0;
  double max_fixed_point_defect = 0.0;  // max over accepted steps of ||x - Gamma u(x)||_1
  double max_spectral_radius = 0.0;
};

namespace detail {

inline double l1(const Eigen::VectorXcd& v) { return v.cwiseAbs().sum(); }

inline Eigen::VectorXd gamma_diag(const FrequencyVector& omega, const TruncationBox& box, const CutoffSchedule& s,
                                  double eta, bool derivative) {
  const int d = box.dim();
  Eigen::VectorXd g(Eigen::Index(box.size() * d));
  for (std::size_t q = 0; q < box.size(); ++q) {
    double k = small_divisor(omega, box.coords(q));
    double val = derivative ? s.gamma_eta_derivative(eta, k) : s.gamma_at_eta(eta, k);
    for (int a = 0; a < d; ++a) g(Eigen::Index(q * d + a)) = val;
  }
  return g;
}

}  // namespace detail

/// Follows x(eta) = Gamma_eta u(x(eta)) from eta = 1/max|omega.q| (where
/// Gamma vanishes and x = 0) to the freeze point 2/min|omega.q|, by
/// predictor-corrector continuation. At the end Gamma is (omega.q)^-2 on all
/// nonzero box modes, so x solves the truncated torus equation.
inline TorusSolution continuation_solve(const AnalyticPotential& v, double lambda, const FrequencyVector& omega,
                                        const TruncationBox& box, const CutoffSchedule& schedule,
                                        const ContinuationOptions& opt = {}, ContinuationStats* stats = nullptr) {
  schedule.validate();
  if (min_abs_divisor(omega, box) <= 0.0) throw std::domain_error("resonant frequency inside the box");
  const int N = opt.grid > 0 ? opt.grid : Composer::default_grid(box.radius());
  Composer comp(v, lambda, box, N);
  const Eigen::Index D = Eigen::Index(box.size() * box.dim());
  const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(D, D);
  ContinuationStats st;
  FourierSeriesRd x(box);
  Eigen::VectorXcd xv = to_vector(x);
  const double eta_start = 1.0 / max_abs_divisor(omega, box);
  const double eta_end = freeze_eta(omega, box);

  auto u_of = [&](const Eigen::VectorXcd& vec) {
    from_vector(vec, x);
    return to_vector(comp.u(x));
  };
  auto jac_of = [&](const Eigen::VectorXcd& vec) {
    from_vector(vec, x);
    return comp.jacobian(x);
  };
  auto tangent = [&](const Eigen::VectorXcd& vec, double eta) -> std::optional<Eigen::VectorXcd> {
    Eigen::VectorXd G = detail::gamma_diag(omega, box, schedule, eta, false);
    Eigen::VectorXd dG = detail::gamma_diag(omega, box, schedule, eta, true);
    Eigen::MatrixXcd J = I - G.asDiagonal() * jac_of(vec);
    Eigen::VectorXcd rhs = dG.asDiagonal() * u_of(vec);
    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(J);
    Eigen::VectorXcd sol = lu.solve(rhs);
    if (detail::l1(J * sol - rhs) > opt.solve_tol * std::max(detail::l1(rhs), 1e-300)) return std::nullopt;
    return sol;
  };
  auto spectral_radius = [&](const Eigen::VectorXcd& vec, double eta) {
    Eigen::VectorXd G = detail::gamma_diag(omega, box, schedule, eta, false);
    Eigen::MatrixXcd K = G.asDiagonal() * jac_of(vec);
    Eigen::VectorXcd z = Eigen::VectorXcd::Ones(D);
    double est = 0.0;
    for (int i = 0; i < opt.power_iterations; ++i) {
      Eigen::VectorXcd y = K * z;
      double ny = y.norm();
      if (ny == 0.0) return 0.0;
      est = ny / z.norm();
      z = y / ny;
    }
    return est;
  };

  double eta = eta_start;
  double step = opt.d_eta;
  while (eta < eta_end) {
    double next = std::min(eta + step, eta_end);
    double h = next - eta;
    std::optional<Eigen::VectorXcd> pred;
    if (opt.predictor == "rk4") {
      auto k1 = tangent(xv, eta);
      std::optional<Eigen::VectorXcd> k2, k3, k4;
      if (k1) k2 = tangent(xv + 0.5 * h * *k1, eta + 0.5 * h);
      if (k2) k3 = tangent(xv + 0.5 * h * *k2, eta + 0.5 * h);
      if (k3) k4 = tangent(xv + h * *k3, next);
      if (k4) pred = xv + h / 6.0 * (*k1 + 2.0 * *k2 + 2.0 * *k3 + *k4);
    } else {
      auto k1 = tangent(xv, eta);
      if (k1) pred = xv + h * *k1;
    }
    bool ok = pred.has_value();
    Eigen::VectorXcd y = ok ? *pred : xv;
    if (ok) {
      Eigen::VectorXd G = detail::gamma_diag(omega, box, schedule, next, false);
      ok = false;
      double prev = std::numeric_limits<double>::infinity();
      for (int it = 0; it < opt.corrector_max; ++it) {
        Eigen::VectorXcd F = y - G.asDiagonal() * u_of(y);
        const double nf = detail::l1(F);
        const double scale = detail::l1(y);
        // converged, or stalled at roundoff after quadratic convergence
        if (nf <= opt.corrector_tol * scale || nf == 0.0 || (prev <= 1e-8 * scale && nf >= 0.5 * prev)) {
          ok = true;
          break;
        }
        Eigen::MatrixXcd J = I - G.asDiagonal() * jac_of(y);
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(J);
        Eigen::VectorXcd delta = lu.solve(-F);
        if (detail::l1(J * delta + F) > opt.solve_tol * nf) break;
        y += delta;
        prev = nf;
      }
    }
    if (!ok) {
      ++st.rejected;
      step *= 0.5;
      if (step < 1e-6) throw FlowAbort("continuation step size collapsed at eta = " + std::to_string(eta));
      continue;
    }
    double rho = spectral_radius(y, next);
    st.max_spectral_radius = std::max(st.max_spectral_radius, rho);
    if (rho >= 1.0)
      throw FlowAbort("cutoff map is not a contraction (spectral radius " + std::to_string(rho) +
                      "); lambda is too large");
    from_vector(y, x);
    x.enforce_reality();
    xv = to_vector(x);
    Eigen::VectorXd G = detail::gamma_diag(omega, box, schedule, next, false);
    st.max_fixed_point_defect = std::max(st.max_fixed_point_defect, detail::l1(xv - G.asDiagonal() * u_of(xv)));
    eta = next;
    ++st.steps;
    step = opt.d_eta;
  }
  from_vector(xv, x);
  TorusSolution sol;
  sol.x = x;
  sol.lambda = lambda;
  sol.t_end = schedule.eta_inverse(eta_end);
  if (stats) *stats = st;
  return sol;
}

}  // namespace kamrg
