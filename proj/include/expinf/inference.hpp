#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "expinf/distributions.hpp"
#include "expinf/nodewise.hpp"
#include "expinf/solver.hpp"

namespace expinf {

/// De-biased estimator and its sandwich covariance. se_j = sqrt(omega_jj / n).
struct DebiasResult {
  Vector beta_de;
  Matrix omega;
  Vector se;
  Index n = 0;
  ExpectileFit fit;           // step-1 input, kept for reporting
  bool degenerate = false;    // some omega_jj <= 1e-14 (e.g. a perfect fit)
};

struct WaldTest {
  Matrix r_matrix;
  Vector c_vector;
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::map<double, bool> reject_at;  // alpha in {0.01, 0.05, 0.10}
};

/// Step 3: beta_de = beta_hat + Theta_hat X'W^2 eps_hat / n, with the sandwich
/// Omega_hat = Theta_hat (X' diag(w^4 eps^2) X / n) Theta_hat'.
inline DebiasResult debias(const Dataset& data, const ExpectileFit& fit,
                           const PrecisionEstimate& pe) {
  const Index p = data.p();
  const double n = static_cast<double>(data.n());
  require(fit.beta_hat.size() == p, "debias: fit does not match data");
  require(pe.theta.rows() == p && pe.theta.cols() == p, "debias: precision does not match data");

  const Vector eps = data.y - data.x * fit.beta_hat;
  const Vector w2 = squared_weights(data, fit.beta_hat, fit.tau).w2;

  // Guard against a precision estimate built from a different fit: the
  // diagonal first-order-condition identity must hold.
  {
    const Matrix xw = w2.array().sqrt().matrix().asDiagonal() * data.x;
    const Matrix sigma = (xw.transpose() * xw) / n;
    for (Index j = 0; j < p; ++j) {
      const double d = pe.theta.row(j).dot(sigma.col(j));
      if (std::abs(d - 1.0) > 1e-6) {
        throw NumericError("debias: precision estimate fails the diagonal identity at column " +
                           std::to_string(j));
      }
    }
  }

  DebiasResult out{Vector(), Matrix(), Vector(), data.n(), fit, false};
  const Vector score = data.x.transpose() * (w2.cwiseProduct(eps)) / n;
  out.beta_de = fit.beta_hat + pe.theta * score;

  const Vector w4e2 = w2.array().square() * eps.array().square();
  const Matrix meat = data.x.transpose() * w4e2.asDiagonal() * data.x / n;
  out.omega = pe.theta * meat * pe.theta.transpose();
  if (!out.beta_de.allFinite() || !out.omega.allFinite()) {
    throw NumericError("debias: non-finite intermediate");
  }
  out.se = (out.omega.diagonal() / n).cwiseMax(0.0).cwiseSqrt();
  out.degenerate = out.omega.diagonal().minCoeff() <= 1e-14;
  return out;
}

/// Step 4: Wald statistic n (R beta_de - c)' (R Omega R')^{-1} (R beta_de - c),
/// chi-square with p0 = rows(R) degrees of freedom under the null.
inline WaldTest wald_test(const DebiasResult& dr, const Matrix& r_matrix, const Vector& c_vector) {
  const Index p0 = r_matrix.rows();
  require(p0 >= 1 && p0 <= r_matrix.cols(), "wald_test: need 1 <= p0 <= p");
  require(r_matrix.cols() == dr.beta_de.size(), "wald_test: R has wrong column count");
  require(c_vector.size() == p0, "wald_test: c has wrong length");

  Eigen::ColPivHouseholderQR<Matrix> qr(r_matrix.transpose());
  qr.setThreshold(1e-10);
  if (qr.rank() < p0) throw std::invalid_argument("wald_test: R is not of full row rank");

  Matrix omega_r = r_matrix * dr.omega * r_matrix.transpose();
  omega_r = 0.5 * (omega_r + omega_r.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(omega_r);
  const double lam_min = eig.eigenvalues().minCoeff();
  const double lam_max = eig.eigenvalues().maxCoeff();
  if (!(lam_min > 0.0) || lam_max / lam_min > 1e12) {
    throw NumericError("wald_test: R Omega R' is numerically singular");
  }

  const Vector d = r_matrix * dr.beta_de - c_vector;
  const Vector sol = Eigen::LLT<Matrix>(omega_r).solve(d);
  WaldTest t;
  t.r_matrix = r_matrix;
  t.c_vector = c_vector;
  t.df = static_cast<int>(p0);
  t.statistic = std::max(0.0, static_cast<double>(dr.n) * d.dot(sol));
  t.p_value = chi2_survival(t.statistic, t.df);
  for (double alpha : {0.01, 0.05, 0.10}) t.reject_at[alpha] = t.p_value < alpha;
  return t;
}

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool degenerate = false;
};

/// Marginal normal intervals beta_de_j +- z_{1-alpha/2} se_j.
inline std::vector<ConfidenceInterval> confidence_intervals(const DebiasResult& dr, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "confidence_intervals: alpha must be in (0,1)");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  std::vector<ConfidenceInterval> out(static_cast<std::size_t>(dr.beta_de.size()));
  for (Index j = 0; j < dr.beta_de.size(); ++j) {
    const double se = dr.se(j);
    out[j].degenerate = se <= 0.0 || dr.omega(j, j) <= 1e-14;
    out[j].lower = dr.beta_de(j) - z * se;
    out[j].upper = dr.beta_de(j) + z * se;
  }
  return out;
}

/// Simulation-only decomposition monitor: Delta1 = Theta X'(W*^2 - W_hat^2) eps / n
/// and Delta2 = (Theta Sigma_hat - I)(beta_hat - beta*), both sqrt(n)-scaled
/// sup-norms. Requires the true coefficients.
inline std::pair<double, double> delta_diagnostics(const Dataset& data, const ExpectileFit& fit,
                                                   const PrecisionEstimate& pe,
                                                   const Vector& beta_ref) {
  require(beta_ref.size() == data.p(),
          "delta_diagnostics: beta_ref required (simulation use only)");
  const double n = static_cast<double>(data.n());
  const Vector eps = data.y - data.x * beta_ref;
  const Vector w2_star = squared_weights(data, beta_ref, fit.tau).w2;
  const Vector w2_hat = squared_weights(data, fit.beta_hat, fit.tau).w2;

  const Vector delta1 =
      pe.theta * (data.x.transpose() * ((w2_star - w2_hat).cwiseProduct(eps)) / n);

  const Matrix xw = w2_hat.array().sqrt().matrix().asDiagonal() * data.x;
  const Matrix sigma = (xw.transpose() * xw) / n;
  const Vector delta2 =
      pe.theta * (sigma * (fit.beta_hat - beta_ref)) - (fit.beta_hat - beta_ref);

  const double root_n = std::sqrt(n);
  return {root_n * delta1.lpNorm<Eigen::Infinity>(), root_n * delta2.lpNorm<Eigen::Infinity>()};
}

}  // namespace expinf
