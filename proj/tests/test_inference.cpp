#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "expinf/inference.hpp"
#include "expinf/simulation.hpp"
#include "oracles.hpp"

using namespace expinf;

namespace {

ExpectileFit fixed_fit(ExpectileLevel tau, Vector beta) {
  return ExpectileFit{tau, RegularizerSpec::make_lasso(0.0), std::move(beta),
                      0.0, 0, true, 0.0, std::numeric_limits<double>::infinity()};
}

DebiasResult manual_debias_result(Vector beta_de, Matrix omega, Index n) {
  DebiasResult dr{std::move(beta_de), std::move(omega), Vector(), n,
                  fixed_fit(ExpectileLevel(0.5), Vector()), false};
  dr.se = (dr.omega.diagonal() / static_cast<double>(n)).cwiseMax(0.0).cwiseSqrt();
  return dr;
}

struct PipelineOut {
  ExpectileFit fit;
  PrecisionEstimate pe;
  DebiasResult dr;
};

PipelineOut run_fixed_lambda_pipeline(const Dataset& data, double tau_v, double lambda,
                                      double lambda_node) {
  const ExpectileLevel tau(tau_v);
  ExpectileFit fit =
      fit_penalized_als(data, tau, RegularizerSpec::make_lasso(lambda), SolverOptions{});
  PrecisionEstimate pe = nodewise_precision(data, fit, PenaltyKind::lasso,
                                            Vector::Constant(data.p(), lambda_node), {},
                                            NodewiseOptions{});
  DebiasResult dr = debias(data, fit, pe);
  return PipelineOut{std::move(fit), std::move(pe), std::move(dr)};
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("perfect fit gives a degenerate zero correction") {
    Vector truth = Vector::Zero(6);
    truth(1) = 1.0;
    const Dataset data = oracle::random_dataset(60, 6, 301, 0.0, truth);
    const auto out = run_fixed_lambda_pipeline(data, 0.3, 1e-9, 0.05);
    CHECK((out.dr.beta_de - out.fit.beta_hat).lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(out.dr.degenerate);
    CHECK(out.dr.omega.cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("p=1 unpenalized fit has vanishing correction") {
    RngStream rng(303, 0);
    Matrix x(50, 1);
    Vector y(50);
    for (Index i = 0; i < 50; ++i) {
      x(i, 0) = rng.normal();
      y(i) = 0.7 * x(i, 0) + rng.normal();
    }
    const Dataset data(x, y);
    const ExpectileFit fit =
        fit_penalized_als(data, ExpectileLevel(0.2), RegularizerSpec::make_lasso(0.0),
                          SolverOptions{});
    // p = 1 has no node-wise regression; build the 1x1 precision directly
    PrecisionEstimate pe;
    const Vector w2 = squared_weights(data, fit.beta_hat, ExpectileLevel(0.2)).w2;
    const double sigma = (w2.array() * x.col(0).array().square()).sum() / data.n();
    pe.theta = Matrix::Constant(1, 1, 1.0 / sigma);
    pe.phi2 = Vector::Constant(1, sigma);
    pe.varphi = Matrix::Zero(1, 1);
    pe.lambdas = Vector::Zero(1);
    pe.relax_bound = Vector::Zero(1);
    const DebiasResult dr = debias(data, fit, pe);
    CHECK(std::abs(dr.beta_de(0) - fit.beta_hat(0)) <= 1e-10);
  }

  TEST_CASE("tau=0.5 pipeline equals the de-biased least-squares reference") {
    Vector truth = Vector::Zero(20);
    truth(2) = 1.0;
    truth(11) = -0.8;
    const Dataset data = oracle::random_dataset(120, 20, 307, 1.0, truth);
    const double lambda = 0.04, lambda_node = 0.06;
    const auto out = run_fixed_lambda_pipeline(data, 0.5, lambda, lambda_node);
    const auto ref = oracle::debiased_ls_reference(data.x, data.y, 2.0 * lambda,
                                                   2.0 * lambda_node);
    CHECK((out.fit.beta_hat - ref.beta_hat).lpNorm<Eigen::Infinity>() <= 1e-8);
    CHECK((out.dr.beta_de - ref.beta_de).lpNorm<Eigen::Infinity>() <= 1e-8);
  }

  TEST_CASE("debias rejects a precision estimate from a different fit") {
    const Dataset data = oracle::random_dataset(60, 8, 311);
    const auto out = run_fixed_lambda_pipeline(data, 0.3, 0.05, 0.05);
    PrecisionEstimate wrong = out.pe;
    wrong.theta *= 3.0;
    CHECK_THROWS_AS(debias(data, out.fit, wrong), NumericError);
  }

  TEST_CASE("wald statistic basics") {
    Vector beta_de(3);
    beta_de << 0.5, -0.25, 0.0;
    Matrix omega = Matrix::Identity(3, 3);
    omega(0, 0) = 2.0;
    const DebiasResult dr = manual_debias_result(beta_de, omega, 100);

    SUBCASE("null point gives zero statistic") {
      Matrix r(1, 3);
      r << 1.0, 0.0, 0.0;
      Vector c(1);
      c << 0.5;
      const WaldTest t = wald_test(dr, r, c);
      CHECK(t.statistic == 0.0);
      CHECK(t.p_value == 1.0);
      CHECK_FALSE(t.reject_at.at(0.05));
    }

    SUBCASE("single constraint equals the squared z-score") {
      Matrix r(1, 3);
      r << 0.0, 1.0, 0.0;
      Vector c = Vector::Zero(1);
      const WaldTest t = wald_test(dr, r, c);
      const double z = beta_de(1) / dr.se(1);
      CHECK(t.statistic == doctest::Approx(z * z).epsilon(1e-12));
      CHECK(t.df == 1);
    }

    SUBCASE("identity omega with n=1 gives the squared norm") {
      const DebiasResult unit = manual_debias_result(beta_de, Matrix::Identity(3, 3), 1);
      Matrix r = Matrix::Identity(3, 3);
      Vector c = Vector::Zero(3);
      const WaldTest t = wald_test(unit, r, c);
      CHECK(t.statistic == doctest::Approx(beta_de.squaredNorm()).epsilon(1e-12));
      CHECK(t.df == 3);
    }

    SUBCASE("rank-deficient R throws") {
      Matrix r(2, 3);
      r << 1.0, 0.0, 0.0, 2.0, 0.0, 0.0;
      CHECK_THROWS_AS(wald_test(dr, r, Vector::Zero(2)), std::invalid_argument);
    }

    SUBCASE("singular R Omega R' throws") {
      Matrix degenerate = Matrix::Zero(3, 3);
      const DebiasResult bad = manual_debias_result(beta_de, degenerate, 50);
      Matrix r(1, 3);
      r << 1.0, 0.0, 0.0;
      CHECK_THROWS_AS(wald_test(bad, r, Vector::Zero(1)), NumericError);
    }
  }

  TEST_CASE("wald statistic is invariant to invertible recombination of constraints") {
    RngStream rng(313, 0);
    Vector beta_de(5);
    Matrix a(5, 5);
    for (Index i = 0; i < 5; ++i) {
      beta_de(i) = rng.normal();
      for (Index j = 0; j < 5; ++j) a(i, j) = rng.normal();
    }
    const Matrix omega = a * a.transpose() + 0.5 * Matrix::Identity(5, 5);
    const DebiasResult dr = manual_debias_result(beta_de, omega, 64);
    Matrix r(2, 5);
    r << 1, 0, 0, -1, 0, 0, 2, 0, 0, 1;
    Vector c(2);
    c << 0.1, -0.2;
    const WaldTest base = wald_test(dr, r, c);
    Matrix t(2, 2);
    t << 2.0, 1.0, -1.0, 1.5;  // invertible
    const WaldTest mixed = wald_test(dr, t * r, t * c);
    CHECK(mixed.statistic == doctest::Approx(base.statistic).epsilon(1e-8));
    CHECK(mixed.p_value == doctest::Approx(base.p_value).epsilon(1e-8));
  }

  TEST_CASE("chi-square calibration round trip") {
    for (double p : {0.9, 0.95, 0.99}) {
      for (int d = 1; d <= 10; ++d) {
        CHECK(std::abs(chi2_survival(chi2_quantile(p, d), d) - (1.0 - p)) <= 1e-9);
      }
    }
  }

  TEST_CASE("confidence intervals") {
    Vector beta_de(2);
    beta_de << 0.1, 1.0;
    Matrix omega = Matrix::Zero(2, 2);
    omega(0, 0) = 0.05 * 0.05;  // se = 0.05 at n = 1
    const DebiasResult dr = manual_debias_result(beta_de, omega, 1);

    const auto ci = confidence_intervals(dr, 0.05);
    const double z = oracle::normal_quantile_bisect(0.975);
    CHECK(ci[0].lower == doctest::Approx(0.1 - z * 0.05).epsilon(1e-9));
    CHECK(ci[0].upper == doctest::Approx(0.1 + z * 0.05).epsilon(1e-9));
    CHECK_FALSE(ci[0].degenerate);
    CHECK(ci[1].degenerate);  // zero variance entry
    CHECK(ci[1].lower == ci[1].upper);

    // width strictly decreasing in alpha
    const auto wide = confidence_intervals(dr, 0.01);
    const auto narrow = confidence_intervals(dr, 0.20);
    CHECK(wide[0].upper - wide[0].lower > narrow[0].upper - narrow[0].lower);
    CHECK_THROWS_AS(confidence_intervals(dr, 0.0), std::invalid_argument);
  }

  TEST_CASE("delta diagnostics") {
    Vector truth = Vector::Zero(10);
    truth(3) = 1.0;
    const Dataset data = oracle::random_dataset(150, 10, 317, 1.0, truth);
    const auto out = run_fixed_lambda_pipeline(data, 0.3, 0.03, 0.04);

    SUBCASE("requires the true coefficients") {
      CHECK_THROWS_AS(delta_diagnostics(data, out.fit, out.pe, Vector()),
                      std::invalid_argument);
    }

    SUBCASE("beta_hat equal to truth zeroes both terms") {
      auto fit = out.fit;
      fit.beta_hat = truth;
      const auto [d1, d2] = delta_diagnostics(data, fit, out.pe, truth);
      CHECK(d1 == 0.0);
      CHECK(d2 <= 1e-12);
    }

    SUBCASE("exact inverse kills delta2") {
      const PrecisionEstimate exact = nodewise_precision(
          data, out.fit, PenaltyKind::lasso, Vector::Zero(10), {}, NodewiseOptions{});
      const auto [d1, d2] = delta_diagnostics(data, out.fit, exact, truth);
      (void)d1;
      const double n = static_cast<double>(data.n());
      CHECK(d2 <= 1e-8 * std::sqrt(n) * (out.fit.beta_hat - truth).lpNorm<1>() + 1e-12);
    }
  }

  TEST_CASE("delta sup-norms trend downward in n") {
    const Index p = 30;
    Vector truth = Vector::Zero(p);
    for (Index j : {5, 11, 14, 19}) truth(j) = 1.0;
    auto median_sup = [&](Index n) {
      std::vector<double> d1s, d2s;
      for (int rep = 0; rep < 5; ++rep) {
        const Dataset data = oracle::random_dataset(n, p, 5000 + rep, 1.0, truth);
        const double lambda = 0.8 * std::sqrt(std::log(static_cast<double>(p)) / n);
        const auto out = run_fixed_lambda_pipeline(data, 0.1, lambda, lambda);
        const auto [d1, d2] = delta_diagnostics(data, out.fit, out.pe, truth);
        d1s.push_back(d1);
        d2s.push_back(d2);
      }
      std::sort(d1s.begin(), d1s.end());
      std::sort(d2s.begin(), d2s.end());
      return std::pair<double, double>(d1s[2], d2s[2]);
    };
    const auto small = median_sup(200);
    const auto large = median_sup(800);
    CHECK(large.first < small.first + 0.05);
    CHECK(large.second < small.second + 0.05);
  }

  TEST_CASE("null calibration smoke study") {
    StudyConfig cfg;
    cfg.n = 100;
    cfg.p = 24;
    cfg.tau = 0.1;
    cfg.cov = CovarianceDesign::toeplitz(0.5, 24);
    cfg.pattern.kind = CoefficientPattern::Kind::dirac4;
    cfg.pattern.k = 0.0;
    cfg.error = ErrorDist::std_normal;
    cfg.dgp = Dgp::homoscedastic;
    cfg.hypothesis = Hypothesis::on_coordinates({0}, 24);
    cfg.method = StudyMethod::la_la;
    cfg.replicates = 40;
    cfg.alpha = 0.05;
    cfg.seed = 99;
    const StudyResult res = run_study(cfg, 2);
    CHECK(res.failures == 0);
    CHECK(res.rejection_rate <= 0.25);  // loose smoke band at this tiny scale
  }
}
