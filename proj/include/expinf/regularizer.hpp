#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include "expinf/types.hpp"

namespace expinf {

enum class PenaltyKind { lasso, scad };

/// Amenable scalar regularizer: Lasso (mu = 0) or SCAD with parameter a > 2
/// (mu = 1/(a-1), gamma = a).
struct RegularizerSpec {
  PenaltyKind kind = PenaltyKind::lasso;
  double lambda = 0.0;
  double a = 3.7;

  static RegularizerSpec make_lasso(double lambda) {
    RegularizerSpec r{PenaltyKind::lasso, lambda, 3.7};
    r.validate();
    return r;
  }
  static RegularizerSpec make_scad(double lambda, double a = 3.7) {
    RegularizerSpec r{PenaltyKind::scad, lambda, a};
    r.validate();
    return r;
  }

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("RegularizerSpec: lambda must be >= 0");
    if (kind == PenaltyKind::scad && !(a > 2.0)) {
      throw std::invalid_argument("RegularizerSpec: scad requires a > 2");
    }
  }

  /// Weak-convexity constant: p_lambda(t) + (mu/2) t^2 is convex.
  double mu() const noexcept { return kind == PenaltyKind::scad ? 1.0 / (a - 1.0) : 0.0; }

  /// Oracle constant gamma: p'_lambda vanishes beyond gamma*lambda (SCAD only).
  std::optional<double> gamma_factor() const noexcept {
    if (kind == PenaltyKind::scad) return a;
    return std::nullopt;
  }

  RegularizerSpec with_lambda(double new_lambda) const {
    RegularizerSpec r = *this;
    r.lambda = new_lambda;
    return r;
  }
};

/// Scalar penalty p_lambda(t).
inline double penalty_scalar(const RegularizerSpec& reg, double t) {
  const double u = std::abs(t);
  if (reg.kind == PenaltyKind::lasso) return reg.lambda * u;
  const double l = reg.lambda, a = reg.a;
  if (u <= l) return l * u;
  if (u <= a * l) return (2.0 * a * l * u - u * u - l * l) / (2.0 * (a - 1.0));
  return 0.5 * (a + 1.0) * l * l;
}

/// Separable penalty P_lambda(beta) = sum_j p_lambda(beta_j).
inline double penalty_value(const RegularizerSpec& reg, const Vector& beta) {
  double acc = 0.0;
  for (Index j = 0; j < beta.size(); ++j) acc += penalty_scalar(reg, beta(j));
  return acc;
}

/// Classical derivative of p_lambda at t != 0; returns 0 at t = 0. The only
/// consumer at zero coordinates multiplies by the coordinate itself, so any
/// subgradient choice gives the same product and 0 keeps the map total.
inline double penalty_derivative(const RegularizerSpec& reg, double t) {
  if (t == 0.0) return 0.0;
  const double s = t > 0.0 ? 1.0 : -1.0;
  const double u = std::abs(t);
  const double l = reg.lambda;
  if (reg.kind == PenaltyKind::lasso) return l * s;
  const double a = reg.a;
  if (u <= l) return l * s;
  if (u <= a * l) return (a * l - u) / (a - 1.0) * s;
  return 0.0;
}

/// Derivative of q_lambda(t) = lambda*|t| - p_lambda(t), the everywhere
/// differentiable remainder of the l1 decomposition of an amenable penalty.
inline double q_derivative(const RegularizerSpec& reg, double t) {
  if (reg.kind == PenaltyKind::lasso) return 0.0;
  const double u = std::abs(t);
  const double l = reg.lambda, a = reg.a;
  if (u <= l) return 0.0;
  const double s = t > 0.0 ? 1.0 : -1.0;
  if (u <= a * l) return (u - l) / (a - 1.0) * s;
  return l * s;
}

/// Second derivative of p_lambda away from the branch boundaries (0 on the
/// lasso and outer scad branches, -1/(a-1) on the middle scad branch).
inline double penalty_second_derivative(const RegularizerSpec& reg, double t) {
  if (reg.kind == PenaltyKind::lasso) return 0.0;
  const double u = std::abs(t);
  const double l = reg.lambda, a = reg.a;
  if (u <= l || u > a * l) return 0.0;
  return -1.0 / (a - 1.0);
}

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Scalar proximal map argmin_t (t-z)^2/(2*step) + p_lambda(t). For SCAD all
/// admissible branch candidates are evaluated and the objective minimizer is
/// returned, ties broken toward the smaller magnitude, which is robust to
/// floating-point jitter at the region boundaries.
inline double prox_scalar(const RegularizerSpec& reg, double z, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("prox_scalar: step must be positive");
  const double l = reg.lambda;
  if (reg.kind == PenaltyKind::lasso) return soft_threshold(z, step * l);
  const double a = reg.a;
  if (!(step * reg.mu() < 1.0)) {
    throw std::invalid_argument("prox_scalar: scad requires step/(a-1) < 1");
  }
  const double s = z >= 0.0 ? 1.0 : -1.0;
  const double az = std::abs(z);
  auto objective = [&](double t) {
    const double d = t - z;
    return d * d / (2.0 * step) + penalty_scalar(reg, t);
  };
  std::array<double, 3> cands{};
  // Inner branch |t| <= lambda: soft threshold, clipped to the region.
  cands[0] = s * std::min(std::abs(soft_threshold(z, step * l)), l);
  // Middle branch lambda < |t| <= a*lambda.
  const double denom = a - 1.0 - step;
  double mid = denom > 0.0 ? (az * (a - 1.0) - step * a * l) / denom : a * l;
  mid = std::clamp(mid, l, a * l);
  cands[1] = s * mid;
  // Outer branch |t| > a*lambda: penalty flat, so t = z clipped from below.
  cands[2] = s * std::max(az, a * l);
  double best = cands[0];
  double best_obj = objective(best);
  for (double t : cands) {
    const double o = objective(t);
    if (o < best_obj || (o == best_obj && std::abs(t) < std::abs(best))) {
      best = t;
      best_obj = o;
    }
  }
  return best;
}

}  // namespace expinf
