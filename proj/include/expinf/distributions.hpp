#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "expinf/errors.hpp"
#include "expinf/rng.hpp"
#include "expinf/types.hpp"

namespace expinf {

enum class ErrorDist { std_normal, student_t4 };

inline double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }

/// Inverse standard normal cdf. Abramowitz-Stegun 26.2.22 start, then Newton.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  const double q = p < 0.5 ? p : 1.0 - p;
  const double t = std::sqrt(-2.0 * std::log(q));
  double x = t - (2.30753 + 0.27061 * t) / (1.0 + 0.99229 * t + 0.04481 * t * t);
  if (p < 0.5) x = -x;
  for (int i = 0; i < 4; ++i) {
    const double d = normal_pdf(x);
    if (d <= 0.0) break;
    x -= (normal_cdf(x) - p) / d;
  }
  return x;
}

namespace detail {

/// Regularized lower incomplete gamma P(a, x); series for x < a+1, Lentz
/// continued fraction for the complement otherwise.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

}  // namespace detail

inline double chi2_pdf(double x, int df) {
  if (x <= 0.0) return 0.0;
  const double a = 0.5 * df;
  return std::exp((a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a));
}

struct Chi2Tail {
  double cdf;
  double survival;
};

inline Chi2Tail chi2_tail(double x, int df) {
  if (x < 0.0) throw std::invalid_argument("chi2_tail: x must be nonnegative");
  if (df < 1) throw std::invalid_argument("chi2_tail: df must be positive");
  const double p = detail::gamma_p(0.5 * df, 0.5 * x);
  return {p, 1.0 - p};
}

inline double chi2_cdf(double x, int df) { return chi2_tail(x, df).cdf; }
inline double chi2_survival(double x, int df) { return chi2_tail(x, df).survival; }

/// Quantile of chi-square(df): bracketed Newton with bisection fallback,
/// converged to |cdf(q) - p| <= 1e-9.
inline double chi2_quantile(double p, int df) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p must be in (0,1)");
  if (df < 1) throw std::invalid_argument("chi2_quantile: df must be positive");
  double lo = 0.0;
  double hi = static_cast<double>(df);
  while (chi2_cdf(hi, df) < p) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    const double f = chi2_cdf(x, df) - p;
    if (std::abs(f) <= 1e-12) break;
    if (f > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double d = chi2_pdf(x, df);
    double next = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-14 * (1.0 + x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

/// Upper partial moment E[(Y-m)_+] for Y ~ N(0,1).
inline double normal_upper_partial(double m) {
  return normal_pdf(m) - m * (1.0 - normal_cdf(m));
}

/// Student-t(4) density, cdf, and upper partial moment in closed form.
inline double t4_pdf(double x) {
  const double u = 1.0 + 0.25 * x * x;
  return 0.375 / (u * u * std::sqrt(u));
}

inline double t4_cdf(double x) {
  const double s = x / std::sqrt(4.0 + x * x);
  return 0.5 + 0.75 * (s - s * s * s / 3.0);
}

inline double t4_upper_partial(double m) {
  return t4_pdf(m) * (4.0 + m * m) / 3.0 - m * (1.0 - t4_cdf(m));
}

/// Draw one multivariate normal vector from a precomputed factor.
/// With direct=true the factor L satisfies Sigma = L L^T and the draw is L z;
/// with direct=false it satisfies Sigma^{-1} = L L^T and the draw solves
/// L^T x = z, so Cov(x) = (L L^T)^{-1} = Sigma.
inline Vector mvn_draw(const Matrix& chol, bool direct, RngStream& rng) {
  Vector z(chol.rows());
  rng.fill_normal(z);
  if (direct) return chol.triangularView<Eigen::Lower>() * z;
  return chol.transpose().triangularView<Eigen::Upper>().solve(z);
}

}  // namespace expinf
