#pragma once

// Time integration of the kernel flow (plain and kappa-extended), optionally
// together with the conjugacy hierarchy f.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kamrg/bilinear.hpp"
#include "kamrg/cutoff.hpp"
#include "kamrg/kernels.hpp"
#include "kamrg/lattice.hpp"

namespace kamrg {

class FlowAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StepperConfig {
  std::string method = "rk4";  // "rk4" or "collocation"
  double h = 0.05;
  int nodes = 5;               // collocation nodes per segment
  double picard_tol = 1e-14;   // relative change between Picard sweeps
  int picard_max = 60;
  double max_segment_eta = 0.5;
  bool record_trace = true;
  double invariant_tol = 1e-9;

  void validate() const {
    if (method != "rk4" && method != "collocation") throw std::invalid_argument("unknown stepper " + method);
    if (!(h > 0.0)) throw std::invalid_argument("step h must be positive");
    if (nodes < 1 || nodes > 30) throw std::invalid_argument("collocation nodes must lie in [1, 30]");
  }
};

struct TraceRow {
  double t = 0.0;
  double norm_w0 = 0.0;
  double norm_w1 = 0.0;
  double higher = 0.0;
  double ward = 0.0;
  double transpose = 0.0;
  double w0_at_zero = 0.0;
  double reality = 0.0;
  double w0_l1 = 0.0;
};

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& rows) {
  os << "t,norm_w0,norm_w1,higher_order,ward_residual,transpose_residual,w0_at_zero_norm\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t, r.norm_w0, r.norm_w1,
                  r.higher, r.ward, r.transpose, r.w0_at_zero);
    os << buf;
  }
}

struct FlowState {
  double t = 0.0;
  KernelHierarchy w;
  std::optional<KernelHierarchy> f;
  std::vector<TraceRow> trace;
  std::vector<NormReport> norms;
  std::vector<std::pair<double, std::vector<cplx>>> f0_history;  // (t, f_0) per step
};

/// Collects everything the right-hand sides need.
class FlowEngine {
 public:
  FlowEngine(const FrequencyVector& omega, const CutoffSchedule& schedule, const TruncationBox& box, int n_max,
             bool with_kappa = false)
      : omega_(omega), schedule_(schedule), box_(box), n_max_(n_max), plan_(box, n_max) {
    schedule_.validate();
    if (omega.dim() != box.dim()) throw std::invalid_argument("frequency and box dimensions differ");
    if (min_abs_divisor(omega, box) <= 0.0)
      throw std::domain_error("resonant frequency inside the box; the flow is undefined");
    for (std::size_t i = 0; i < box.size(); ++i) divisor_.push_back(small_divisor(omega, box.coords(i)));
    if (with_kappa) kplan_.emplace(box, n_max);
  }

  const FrequencyVector& omega() const { return omega_; }
  const CutoffSchedule& schedule() const { return schedule_; }
  const TruncationBox& box() const { return box_; }
  int n_max() const { return n_max_; }
  double divisor(std::size_t i) const { return divisor_[i]; }
  double beta = 0.25;
  double rho = 0.5;

  /// d gamma / d eta at omega.r for every box mode.
  std::vector<double> weights_eta(double eta) const {
    std::vector<double> g(box_.size());
    for (std::size_t i = 0; i < box_.size(); ++i) g[i] = schedule_.gamma_eta_derivative(eta, divisor_[i]);
    return g;
  }

  /// Plain increment dw/dt.
  KernelHierarchy rhs_plain(const KernelHierarchy& h, double t) const {
    KernelHierarchy out(box_, n_max_);
    bilinear_rhs(plan_, h.levels, h.levels, weights_eta(schedule_.eta(t)), schedule_.eta_prime(t), out.levels);
    return out;
  }

  /// Kappa-extended increment; level 0 and the plain levels follow rhs_plain.
  KernelHierarchy rhs_kappa(const KernelHierarchy& h, double t) const {
    KernelHierarchy out = h.zeros_like();
    rhs_eta(h, nullptr, schedule_.eta(t), schedule_.eta_prime(t), out, nullptr);
    return out;
  }

  /// Conjugacy increment df/dt given w at the same t.
  KernelHierarchy f_rhs(const KernelHierarchy& f, const KernelHierarchy& w, double t) const {
    KernelHierarchy out(box_, n_max_);
    bilinear_rhs(plan_, f.levels, w.levels, weights_eta(schedule_.eta(t)), schedule_.eta_prime(t), out.levels);
    return out;
  }

  /// Full increment with respect to eta, times `scale`.
  void rhs_eta(const KernelHierarchy& w, const KernelHierarchy* f, double eta, double scale, KernelHierarchy& dw,
               KernelHierarchy* df) const {
    auto g = weights_eta(eta);
    bilinear_rhs(plan_, w.levels, w.levels, g, scale, dw.levels);
    if (f && df) bilinear_rhs(plan_, f->levels, w.levels, g, scale, df->levels);
    if (w.kappa) {
      if (!kplan_) throw std::logic_error("engine built without kappa support");
      const auto& kv = w.kappa->grid.values;
      auto shift = [&](std::size_t r, std::size_t s) {
        return schedule_.gamma_eta_derivative(eta, divisor_[r] + kv[s]);
      };
      kappa_rhs(*kplan_, w.levels, w.kappa->levels, g, shift, scale, dw.kappa->levels);
    }
  }

  /// True if some weight is nonzero somewhere in the open eta interval
  /// (checked at its midpoint, valid between consecutive breakpoints).
  bool active_between(const KernelHierarchy& w, double e0, double e1) const {
    double mid = 0.5 * (e0 + e1);
    for (double dv : divisor_)
      if (schedule_.gamma_eta_derivative(mid, dv) != 0.0) return true;
    if (w.kappa)
      for (double k : w.kappa->grid.values)
        for (double dv : divisor_)
          if (schedule_.gamma_eta_derivative(mid, dv + k) != 0.0) return true;
    return false;
  }

  /// Sorted eta breakpoints of every weight in use.
  std::vector<double> breakpoints(const KernelHierarchy& w) const {
    std::vector<double> abs;
    for (double dv : divisor_) abs.push_back(std::abs(dv));
    if (w.kappa)
      for (double k : w.kappa->grid.values)
        for (double dv : divisor_) abs.push_back(std::abs(dv + k));
    return eta_breakpoints(abs);
  }

  /// Smallest t with eta(t) min|omega.q| >= 2, i.e. the freeze time.
  double freeze_time() const { return schedule_.eta_inverse(freeze_eta(omega_, box_)); }

 private:
  FrequencyVector omega_;
  CutoffSchedule schedule_;
  TruncationBox box_;
  int n_max_;
  BilinearPlan plan_;
  std::optional<KappaPlan> kplan_;
  std::vector<double> divisor_;
};

/// Auto end time: freeze time plus one step.
inline double auto_t_end(const FlowEngine& engine, double h) { return engine.freeze_time() + h; }

namespace detail {

struct Vars {
  KernelHierarchy w;
  std::optional<KernelHierarchy> f;

  void axpy(double a, const Vars& x) {
    w.axpy(a, x.w);
    if (f) f->axpy(a, *x.f);
  }
  double max_abs() const { return std::max(w.max_abs(), f ? f->max_abs() : 0.0); }

  // Every table, in a fixed order.
  template <class Fn>
  void each_table(Fn fn) {
    for (auto& t : w.levels) fn(t);
    if (w.kappa)
      for (auto& t : w.kappa->levels) fn(t);
    if (f)
      for (auto& t : f->levels) fn(t);
  }
  template <class Fn>
  void each_table(Fn fn) const {
    for (const auto& t : w.levels) fn(t);
    if (w.kappa)
      for (const auto& t : w.kappa->levels) fn(t);
    if (f)
      for (const auto& t : f->levels) fn(t);
  }
};

// W[i] = x + sum_j c[i m + j] F[j] for all i in one pass over the storage;
// returns max |W_new - W_old|.
inline double collocation_update(const Vars& x, const std::vector<Vars>& F, const std::vector<double>& c,
                                 std::vector<Vars>& W) {
  const std::size_t m = F.size();
  std::vector<const double*> xs, fs;
  std::vector<double*> ws;
  std::vector<std::size_t> len;
  x.each_table([&](const KernelTable& t) {
    xs.push_back(reinterpret_cast<const double*>(t.raw().data()));
    len.push_back(2 * t.raw().size());
  });
  for (const auto& v : F)
    v.each_table([&](const KernelTable& t) { fs.push_back(reinterpret_cast<const double*>(t.raw().data())); });
  for (auto& v : W) v.each_table([&](KernelTable& t) { ws.push_back(reinterpret_cast<double*>(t.raw().data())); });
  const std::size_t nt = xs.size();
  double change = 0.0;
  std::vector<double> acc(m);
  for (std::size_t k = 0; k < nt; ++k)
    for (std::size_t e = 0; e < len[k]; ++e) {
      const double base = xs[k][e];
      for (std::size_t i = 0; i < m; ++i) acc[i] = base;
      for (std::size_t j = 0; j < m; ++j) {
        const double fj = fs[j * nt + k][e];
        if (fj == 0.0) continue;
        for (std::size_t i = 0; i < m; ++i) acc[i] += c[i * m + j] * fj;
      }
      for (std::size_t i = 0; i < m; ++i) {
        double& dst = ws[i * nt + k][e];
        change = std::max(change, std::abs(acc[i] - dst));
        dst = acc[i];
      }
    }
  return change;
}

inline void eval(const FlowEngine& e, const Vars& x, double eta, double scale, Vars& out) {
  e.rhs_eta(x.w, x.f ? &*x.f : nullptr, eta, scale, out.w, out.f ? &*out.f : nullptr);
}

// Gauss-Legendre nodes on [0, 1] by Newton iteration on P_m.
inline std::vector<double> gauss_nodes(int m) {
  std::vector<double> x(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (m + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p = std::legendre(unsigned(m), z);
      double pm1 = std::legendre(unsigned(m - 1), z);
      double dp = m * (z * p - pm1) / (z * z - 1.0);
      double dz = p / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[std::size_t(m - 1 - i)] = 0.5 * (1.0 + z);
  }
  return x;
}

inline double lagrange(const std::vector<double>& c, std::size_t j, double s) {
  double v = 1.0;
  for (std::size_t k = 0; k < c.size(); ++k)
    if (k != j) v *= (s - c[k]) / (c[j] - c[k]);
  return v;
}

// A_ij = int_0^{c_i} l_j, b_j = int_0^1 l_j, exact by m-point Gauss.
inline void collocation_matrix(const std::vector<double>& c, std::vector<double>& A, std::vector<double>& b) {
  const std::size_t m = c.size();
  A.assign(m * m, 0.0);
  b.assign(m, 0.0);
  std::vector<double> wq(m);
  for (std::size_t i = 0; i < m; ++i) {
    double z = 2.0 * c[i] - 1.0;
    double dp = int(m) * (z * std::legendre(unsigned(m), z) - std::legendre(unsigned(m - 1), z)) / (z * z - 1.0);
    wq[i] = 1.0 / ((1.0 - z * z) * dp * dp);  // weight on [0,1]
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += wq[k] * lagrange(c, j, c[i] * c[k]);
      A[i * m + j] = c[i] * s;
    }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t k = 0; k < m; ++k) s += wq[k] * lagrange(c, j, c[k]);
    b[j] = s;
  }
}

}  // namespace detail

/// Records norms, residuals and invariant checks for the current state and
/// aborts if reality or w_0(0) = 0 has drifted.
inline void record(const FlowEngine& e, FlowState& s, const StepperConfig& cfg) {
  const KernelHierarchy& w = s.w;
  auto [w00, w0l1] = w0_zero_mode(w);
  double rel = reality_residual(w);
  double scale = std::max(w.max_abs(), std::numeric_limits<double>::min());
  if (rel > cfg.invariant_tol * scale || w00 > cfg.invariant_tol * scale)
    throw FlowAbort("flow invariant drift at t=" + std::to_string(s.t) + ": reality " + std::to_string(rel) +
                    ", |w_0(0)| " + std::to_string(w00));
  if (s.f) s.f0_history.emplace_back(s.t, s.f->level(0).raw());
  if (!cfg.record_trace) return;
  TraceRow row;
  row.t = s.t;
  row.w0_at_zero = w00;
  row.w0_l1 = w0l1;
  row.reality = rel;
  NormReport rep = norm_report(w, s.t, e.beta, e.rho, e.schedule(), e.omega());
  row.norm_w0 = rep.per_n_norm[0];
  row.norm_w1 = w.n_max >= 1 ? rep.per_n_norm[1] : 0.0;
  row.higher = rep.higher_order_term;
  for (int n = 0; n + 2 <= w.n_max; ++n) row.ward = std::max(row.ward, ward_residual_all_directions(w, n));
  for (int n = 1; n <= w.n_max; ++n) row.transpose = std::max(row.transpose, transpose_residual(w, n));
  s.trace.push_back(row);
  s.norms.push_back(rep);
}

/// Advances `s` from s.t to t_target. Segments between consecutive
/// breakpoints of the weights are integrated separately; segments with no
/// active weight are skipped, which leaves the state bitwise unchanged.
inline void integrate(const FlowEngine& e, FlowState& s, double t_target, const StepperConfig& cfg) {
  cfg.validate();
  if (t_target < s.t) throw std::invalid_argument("integrate cannot go backwards in t");
  if (s.trace.empty() && cfg.record_trace) record(e, s, cfg);
  const auto& sch = e.schedule();
  const double eta0 = sch.eta(s.t), eta1 = sch.eta(t_target);
  std::vector<double> cuts{eta0};
  for (double b : e.breakpoints(s.w))
    if (b > eta0 && b < eta1) cuts.push_back(b);
  cuts.push_back(eta1);

  detail::Vars x{std::move(s.w), std::move(s.f)};
  auto put_back = [&] {
    s.w = std::move(x.w);
    s.f = std::move(x.f);
  };
  auto get_back = [&] {
    x.w = std::move(s.w);
    x.f = std::move(s.f);
  };

  std::vector<double> nodes, A, b;
  if (cfg.method == "collocation") {
    nodes = detail::gauss_nodes(cfg.nodes);
    detail::collocation_matrix(nodes, A, b);
  }

  for (std::size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
    const double ea = cuts[seg], eb = cuts[seg + 1];
    if (!(eb > ea)) continue;
    const double ta = seg == 0 ? s.t : sch.eta_inverse(ea);
    const double tb = seg + 2 == cuts.size() ? t_target : sch.eta_inverse(eb);
    if (!e.active_between(x.w, ea, eb)) {
      put_back();
      s.t = tb;
      record(e, s, cfg);
      get_back();
      continue;
    }
    if (cfg.method == "rk4") {
      const int steps = std::max(1, int(std::ceil((tb - ta) / cfg.h - 1e-9)));
      const double dt = (tb - ta) / steps;
      detail::Vars k = x, tmp = x;
      for (int i = 0; i < steps; ++i) {
        const double t0 = ta + i * dt;
        detail::Vars acc = x;
        auto stage = [&](double tt, const detail::Vars& in, detail::Vars& out) {
          detail::eval(e, in, sch.eta(tt), sch.eta_prime(tt), out);
        };
        stage(t0, x, k);
        acc.axpy(dt / 6.0, k);
        tmp = x;
        tmp.axpy(dt / 2.0, k);
        stage(t0 + dt / 2.0, tmp, k);
        acc.axpy(dt / 3.0, k);
        tmp = x;
        tmp.axpy(dt / 2.0, k);
        stage(t0 + dt / 2.0, tmp, k);
        acc.axpy(dt / 3.0, k);
        tmp = x;
        tmp.axpy(dt, k);
        stage(t0 + dt, tmp, k);
        acc.axpy(dt / 6.0, k);
        x = std::move(acc);
        put_back();
        s.t = (i + 1 == steps) ? tb : t0 + dt;
        record(e, s, cfg);
        get_back();
      }
    } else {
      const int pieces = std::max(1, int(std::ceil((eb - ea) / cfg.max_segment_eta - 1e-9)));
      const double H = (eb - ea) / pieces;
      const std::size_t m = nodes.size();
      std::vector<detail::Vars> W(m, x), F(m, x);
      std::vector<double> HA(A.size());
      for (std::size_t i = 0; i < A.size(); ++i) HA[i] = H * A[i];
      for (int p = 0; p < pieces; ++p) {
        const double e0 = ea + p * H;
        for (auto& wi : W) wi = x;
        for (std::size_t i = 0; i < m; ++i) detail::eval(e, W[i], e0 + nodes[i] * H, 1.0, F[i]);
        bool converged = false;
        for (int it = 0; it < cfg.picard_max; ++it) {
          const double size = x.max_abs();
          const double change = detail::collocation_update(x, F, HA, W);
          for (std::size_t i = 0; i < m; ++i) detail::eval(e, W[i], e0 + nodes[i] * H, 1.0, F[i]);
          if (change <= cfg.picard_tol * std::max(size, std::numeric_limits<double>::min())) {
            converged = true;
            break;
          }
        }
        if (!converged) {
          put_back();
          throw FlowAbort("Picard iteration did not converge on eta segment [" + std::to_string(e0) + ", " +
                          std::to_string(e0 + H) + "]");
        }
        for (std::size_t j = 0; j < m; ++j) x.axpy(H * b[j], F[j]);
        put_back();
        s.t = (p + 1 == pieces) ? tb : sch.eta_inverse(e0 + H);
        record(e, s, cfg);
        get_back();
      }
    }
  }
  put_back();
  s.t = t_target;
}

/// Initial state from kernels (and optionally the conjugacy hierarchy).
inline FlowState make_state(KernelHierarchy w, std::optional<KernelHierarchy> f = std::nullopt) {
  FlowState s;
  s.t = 0.0;
  s.w = std::move(w);
  s.f = std::move(f);
  return s;
}

}  // namespace kamrg
