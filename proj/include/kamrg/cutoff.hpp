#pragma once

// Smooth small-divisor cutoff: chi, eta(t) = t e^{alpha t}, gamma_t and its
// time derivative.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/lambert_w.hpp>

#include "kamrg/lattice.hpp"

namespace kamrg {

/// Quintic smoothstep: 0 on [0,1], 1 on [2,inf), C2 at the junctions.
inline double chi(double s) {
  if (s <= 1.0) return 0.0;
  if (s >= 2.0) return 1.0;
  double u = s - 1.0;
  return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

inline double chi_prime(double s) {
  if (s <= 1.0 || s >= 2.0) return 0.0;
  double u = s - 1.0;
  double v = 1.0 - u;
  return 30.0 * u * u * v * v;
}

struct CutoffSchedule {
  double alpha = 0.2;
  std::string chi_kind = "quintic";
  std::optional<double> t_end;  // empty means "auto"

  void validate() const {
    if (!(alpha > 0.0 && alpha < 0.25))
      throw std::invalid_argument("cutoff alpha must lie in (0, 1/4), got " + std::to_string(alpha));
    if (chi_kind != "quintic") throw std::invalid_argument("unknown chi profile: " + chi_kind);
    if (t_end && !(*t_end >= 0.0)) throw std::invalid_argument("t_end must be nonnegative");
  }

  double eta(double t) const { return t * std::exp(alpha * t); }
  double eta_prime(double t) const { return (1.0 + alpha * t) * std::exp(alpha * t); }

  /// Inverse of eta on [0, inf): t = W0(alpha eta) / alpha.
  double eta_inverse(double eta_value) const {
    if (eta_value <= 0.0) return 0.0;
    return boost::math::lambert_w0(alpha * eta_value) / alpha;
  }

  /// gamma_t(kappa) = chi(eta(t)|kappa|) kappa^-2, zero at kappa = 0.
  double gamma(double t, double kappa) const { return gamma_at_eta(eta(t), kappa); }

  double gamma_at_eta(double eta_value, double kappa) const {
    double c = chi(eta_value * std::abs(kappa));
    return c == 0.0 ? 0.0 : c / (kappa * kappa);
  }

  /// d/dt gamma_t(kappa) = kappa^-2 chi'(eta|kappa|) eta'(t) |kappa|.
  double gamma_dot(double t, double kappa) const {
    return gamma_eta_derivative(eta(t), kappa) * eta_prime(t);
  }

  /// d/d eta of gamma at fixed kappa.
  double gamma_eta_derivative(double eta_value, double kappa) const {
    double ak = std::abs(kappa);
    double c = chi_prime(eta_value * ak);
    return c == 0.0 ? 0.0 : c / ak;
  }
};

/// Eta values where gamma-dot of some divisor switches on or off, sorted and
/// deduplicated.
inline std::vector<double> eta_breakpoints(const std::vector<double>& abs_divisors) {
  std::vector<double> out;
  for (double k : abs_divisors) {
    if (k <= 0.0) continue;
    out.push_back(1.0 / k);
    out.push_back(2.0 / k);
  }
  std::sort(out.begin(), out.end());
  std::vector<double> uniq;
  for (double e : out)
    if (uniq.empty() || e - uniq.back() > 1e-13 * std::max(1.0, e)) uniq.push_back(e);
  return uniq;
}

inline std::vector<double> box_abs_divisors(const FrequencyVector& omega, const TruncationBox& box) {
  std::vector<double> out;
  for (std::size_t i = 0; i < box.size(); ++i) {
    if (i == box.zero_index()) continue;
    out.push_back(std::abs(small_divisor(omega, box.coords(i))));
  }
  return out;
}

/// Eta at which gamma-dot vanishes on every nonzero box mode for good.
inline double freeze_eta(const FrequencyVector& omega, const TruncationBox& box) {
  double m = min_abs_divisor(omega, box);
  if (m <= 0.0) throw std::domain_error("resonant frequency inside the box");
  return 2.0 / m;
}

inline std::vector<Mode> lambda_set(const FrequencyVector& omega, const TruncationBox& box,
                                    double t, const CutoffSchedule& schedule) {
  if (t < 0.0) throw std::invalid_argument("lambda_set needs t >= 0");
  return lambda_set(omega, box, schedule.eta(t));
}

}  // namespace kamrg
