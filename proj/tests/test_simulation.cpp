#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "expinf/simulation.hpp"
#include "oracles.hpp"

using namespace expinf;

namespace {

StudyConfig base_config(Index n = 80, Index p = 24) {
  StudyConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.tau = 0.1;
  cfg.cov = CovarianceDesign::toeplitz(0.5, static_cast<int>(p));
  cfg.pattern.kind = CoefficientPattern::Kind::dirac4;
  cfg.pattern.k = 0.0;
  cfg.error = ErrorDist::std_normal;
  cfg.dgp = Dgp::homoscedastic;
  cfg.hypothesis = Hypothesis::on_coordinates({0}, p);
  cfg.method = StudyMethod::la_la;
  cfg.replicates = 2;
  cfg.alpha = 0.05;
  cfg.seed = 7;
  return cfg;
}

}  // namespace

TEST_SUITE("simulation") {
  TEST_CASE("toeplitz sigma") {
    const SigmaModel m = make_sigma(CovarianceDesign::toeplitz(0.5, 3));
    Matrix want(3, 3);
    want << 1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0;
    CHECK((m.sigma - want).cwiseAbs().maxCoeff() == 0.0);
    const SigmaModel id = make_sigma(CovarianceDesign::toeplitz(0.0, 4));
    CHECK((id.sigma - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("toeplitz inverse is tridiagonal") {
    const SigmaModel m = make_sigma(CovarianceDesign::toeplitz(0.6, 50));
    const Matrix inv = m.sigma.inverse();
    for (Index j = 0; j < 50; ++j) {
      for (Index k = 0; k < 50; ++k) {
        if (std::abs(j - k) > 1) CHECK(std::abs(inv(j, k)) <= 1e-10);
      }
    }
  }

  TEST_CASE("scalefree construction matches the formula at p=4") {
    const SigmaModel m = make_sigma(CovarianceDesign::scalefree(1, 4));
    Matrix a = Matrix::Zero(4, 4);
    for (Index j = 0; j < 4; ++j) {
      for (Index k = 0; k < 4; ++k) {
        if (k != j && std::abs(j - k) <= 1) a(j, k) = 0.3;
      }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
    Vector d(4);
    d << 1.0, 1.0, 3.0, 3.0;
    const Matrix mm = d.asDiagonal() *
                      (a + (std::abs(eig.eigenvalues().minCoeff()) + 0.2) *
                               Matrix::Identity(4, 4)) *
                      d.asDiagonal();
    const Matrix sigma = m.dense_sigma();
    CHECK((mm * sigma - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((m.chol * m.chol.transpose() - mm).cwiseAbs().maxCoeff() <= 1e-12);
  }

  TEST_CASE("scalefree identity check at p=200") {
    const SigmaModel m = make_sigma(CovarianceDesign::scalefree(10, 200));
    const Matrix sigma = m.dense_sigma();
    const Matrix mm = m.chol * m.chol.transpose();
    CHECK((mm * sigma - Matrix::Identity(200, 200)).cwiseAbs().maxCoeff() <= 1e-8);
  }

  TEST_CASE("sampled covariance approaches sigma") {
    const SigmaModel m = make_sigma(CovarianceDesign::toeplitz(0.5, 5));
    RngStream rng(11, 0);
    const int draws = 40000;
    Matrix acc = Matrix::Zero(5, 5);
    for (int i = 0; i < draws; ++i) {
      const Vector z = m.draw(rng);
      acc += z * z.transpose();
    }
    acc /= draws;
    CHECK((acc - m.sigma).cwiseAbs().maxCoeff() <= 3.0 / std::sqrt(draws) * 10.0);

    const SigmaModel sf = make_sigma(CovarianceDesign::scalefree(2, 6));
    const Matrix sf_sigma = sf.dense_sigma();
    Matrix acc2 = Matrix::Zero(6, 6);
    RngStream rng2(13, 0);
    for (int i = 0; i < draws; ++i) {
      const Vector z = sf.draw(rng2);
      acc2 += z * z.transpose();
    }
    acc2 /= draws;
    CHECK((acc2 - sf_sigma).cwiseAbs().maxCoeff() <=
          3.0 / std::sqrt(draws) * 10.0 * sf_sigma.diagonal().maxCoeff());
  }

  TEST_CASE("coefficient patterns") {
    RngStream rng(17, 0);
    CoefficientPattern dirac{CoefficientPattern::Kind::dirac10, 2.0};
    const Vector beta = dirac.build(24, 100, rng);
    CHECK(beta(0) == doctest::Approx(0.2).epsilon(1e-15));  // 2/sqrt(100)
    for (Index j : {4, 5, 6, 7, 8, 9, 10, 11, 14, 19}) CHECK(beta(j) == 1.0);
    CHECK(beta.cwiseAbs().sum() == doctest::Approx(10.0 + 0.2));

    CoefficientPattern unif{CoefficientPattern::Kind::unif4, 0.0};
    RngStream r1(21, 0), r2(21, 1);
    const Vector u1 = unif.build(24, 100, r1);
    const Vector u2 = unif.build(24, 100, r2);
    bool differs = false;
    for (Index j : {5, 11, 14, 19}) {
      CHECK(u1(j) >= 0.0);
      CHECK(u1(j) <= 2.0);
      if (u1(j) != u2(j)) differs = true;
    }
    CHECK(differs);  // redrawn per replicate stream
    CHECK_THROWS_AS(unif.build(19, 100, r1), std::invalid_argument);
  }

  TEST_CASE("homoscedastic centering is the distributional expectile") {
    CHECK(scalar_expectile(ErrorDist::std_normal, ExpectileLevel(0.5)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // tau = 0.1: one million centered draws have empirical 0.1-expectile near 0
    const double center = scalar_expectile(ErrorDist::std_normal, ExpectileLevel(0.1));
    RngStream rng(23, 0);
    Vector sample(1000000);
    for (Index i = 0; i < sample.size(); ++i) sample(i) = rng.normal() - center;
    CHECK(std::abs(scalar_expectile(sample, ExpectileLevel(0.1))) <= 0.01);
  }

  TEST_CASE("gen_replicate determinism") {
    StudyConfig cfg = base_config();
    const Replicate a = gen_replicate(cfg, 3);
    const Replicate b = gen_replicate(cfg, 3);
    CHECK((a.data.x - b.data.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.data.y - b.data.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.beta_true - b.beta_true).cwiseAbs().maxCoeff() == 0.0);
    const Replicate c = gen_replicate(cfg, 4);
    CHECK((a.data.y - c.data.y).cwiseAbs().maxCoeff() > 0.0);
    CHECK(a.truth_exact);
  }

  TEST_CASE("heteroscedastic mean function is literal") {
    StudyConfig cfg = base_config();
    cfg.dgp = Dgp::heteroscedastic;
    cfg.noise_scale = 0.0;
    cfg.pattern.k = 2.0;
    const Replicate rep = gen_replicate(cfg, 0);
    const double b2 = 2.0 / std::sqrt(static_cast<double>(cfg.n));
    for (Index i = 0; i < cfg.n; ++i) {
      const double want = rep.data.x(i, 5) + rep.data.x(i, 11) + rep.data.x(i, 14) +
                          rep.data.x(i, 19) + b2 * rep.data.x(i, 1);
      CHECK(rep.data.y(i) == doctest::Approx(want).epsilon(1e-12));
    }
    CHECK_FALSE(rep.truth_exact);
    CHECK(rep.beta_true(1) == doctest::Approx(b2));
    cfg.pattern.kind = CoefficientPattern::Kind::unif4;
    CHECK_THROWS_AS(gen_replicate(cfg, 0), std::invalid_argument);
  }

  TEST_CASE("degenerate-noise study rejects nothing") {
    StudyConfig cfg = base_config();
    cfg.noise_scale = 0.0;
    cfg.hypothesis = Hypothesis::on_coordinates({2}, cfg.p);  // outside the active set
    cfg.replicates = 4;
    const StudyResult res = run_study(cfg, 1);
    CHECK(res.rejection_rate == 0.0);
    CHECK(res.failures == 0);
    for (const auto& rec : res.per_replicate) CHECK(rec.degenerate);
  }

  TEST_CASE("run_study is deterministic across thread counts") {
    StudyConfig cfg = base_config();
    cfg.replicates = 6;
    const StudyResult a = run_study(cfg, 1);
    const StudyResult b = run_study(cfg, 2);
    CHECK(a.rejection_rate == b.rejection_rate);
    REQUIRE(a.per_replicate.size() == b.per_replicate.size());
    for (std::size_t i = 0; i < a.per_replicate.size(); ++i) {
      CHECK(a.per_replicate[i].statistic == b.per_replicate[i].statistic);
      CHECK(a.per_replicate[i].p_value == b.per_replicate[i].p_value);
      CHECK(a.per_replicate[i].reject == b.per_replicate[i].reject);
    }
  }

  TEST_CASE("config validation") {
    StudyConfig cfg = base_config();
    cfg.p = 19;
    cfg.cov = CovarianceDesign::toeplitz(0.5, 19);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = base_config();
    cfg.hypothesis = Hypothesis::on_coordinates({0}, 23);
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK_THROWS_AS(Hypothesis::on_coordinates({30}, 24), std::invalid_argument);
    CHECK_THROWS_AS(CovarianceDesign::toeplitz(1.0, 10), std::invalid_argument);
  }
}
