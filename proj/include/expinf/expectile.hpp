#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "expinf/distributions.hpp"
#include "expinf/types.hpp"

namespace expinf {

/// Asymmetric square loss rho_tau(u): tau*u^2 for u >= 0, (1-tau)*u^2 for u < 0.
inline double expectile_loss_scalar(double u, ExpectileLevel tau) {
  const double t = tau.value();
  return (u >= 0.0 ? t : 1.0 - t) * u * u;
}

/// Squared weights w^2_{beta,i}: tau where the residual y_i - x_i'beta is
/// nonnegative, 1-tau where it is negative. A residual of exactly zero takes
/// the tau side (the indicator I(u<0) is false at zero).
inline WeightVector squared_weights(const Dataset& data, const Vector& beta, ExpectileLevel tau) {
  require(beta.size() == data.p(), "squared_weights: beta length does not match p");
  const double t = tau.value();
  Vector r = data.y - data.x * beta;
  WeightVector w;
  w.w2 = (r.array() >= 0.0).select(Vector::Constant(r.size(), t),
                                   Vector::Constant(r.size(), 1.0 - t));
  return w;
}

/// Expectile loss L_n(beta) = (1/2n) sum_i rho_tau(y_i - x_i'beta).
inline double expectile_loss(const Dataset& data, const Vector& beta, ExpectileLevel tau) {
  require(beta.size() == data.p(), "expectile_loss: beta length does not match p");
  const double t = tau.value();
  const Vector r = data.y - data.x * beta;
  double acc = 0.0;
  for (Index i = 0; i < r.size(); ++i) {
    acc += (r(i) >= 0.0 ? t : 1.0 - t) * r(i) * r(i);
  }
  return acc / (2.0 * static_cast<double>(data.n()));
}

/// Loss together with its gradient -X' W^2_beta (y - X beta) / n. The loss is
/// C^1 everywhere, so the formula applies without subgradient handling.
inline std::pair<double, Vector> loss_and_gradient(const Dataset& data, const Vector& beta,
                                                   ExpectileLevel tau) {
  require(beta.size() == data.p(), "loss_and_gradient: beta length does not match p");
  const double t = tau.value();
  const double n = static_cast<double>(data.n());
  Vector r = data.y - data.x * beta;
  Vector w2r(r.size());
  double acc = 0.0;
  for (Index i = 0; i < r.size(); ++i) {
    const double w2 = r(i) >= 0.0 ? t : 1.0 - t;
    w2r(i) = w2 * r(i);
    acc += w2r(i) * r(i);
  }
  Vector grad = -(data.x.transpose() * w2r) / n;
  return {acc / (2.0 * n), std::move(grad)};
}

namespace detail {

/// tau * E[(Y-m)_+] - (1-tau) * E[(m-Y)_+] over the empirical measure of the
/// sample; strictly decreasing in m.
inline double sample_expectile_balance(const Vector& sample, double m, double tau) {
  double up = 0.0, down = 0.0;
  for (Index i = 0; i < sample.size(); ++i) {
    const double d = sample(i) - m;
    if (d > 0.0) {
      up += d;
    } else {
      down -= d;
    }
  }
  return tau * up - (1.0 - tau) * down;
}

}  // namespace detail

/// Empirical tau-expectile of a sample: the root of the first-order condition
/// tau E[(Y-m)_+] = (1-tau) E[(m-Y)_+], solved by bisection to 1e-10.
inline double scalar_expectile(const Vector& sample, ExpectileLevel tau) {
  require(sample.size() > 0, "scalar_expectile: empty sample");
  const double t = tau.value();
  double lo = sample.minCoeff();
  double hi = sample.maxCoeff();
  if (lo == hi) return lo;
  // balance(lo) >= 0 and balance(hi) <= 0, so [lo, hi] brackets the root.
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (detail::sample_expectile_balance(sample, mid, t) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-10 * (1.0 + std::abs(lo))) break;
  }
  return 0.5 * (lo + hi);
}

/// tau-expectile of a zero-mean reference distribution, from closed-form
/// partial moments and bisection. Both supported distributions have mean 0,
/// so E[(m-Y)_+] = U(m) + m where U is the upper partial moment.
inline double scalar_expectile(ErrorDist dist, ExpectileLevel tau) {
  const double t = tau.value();
  auto upper = [dist](double m) {
    return dist == ErrorDist::std_normal ? normal_upper_partial(m) : t4_upper_partial(m);
  };
  auto balance = [&](double m) { return t * upper(m) - (1.0 - t) * (upper(m) + m); };
  double lo = -64.0, hi = 64.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (balance(mid) >= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= 1e-12) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace expinf
