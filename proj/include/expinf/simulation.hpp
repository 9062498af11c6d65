#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "expinf/inference.hpp"
#include "expinf/nodewise.hpp"
#include "expinf/parallel.hpp"
#include "expinf/solver.hpp"

namespace expinf {

/// Covariance designs: Toeplitz Sigma_jk = xi^|j-k|, or the banded-graph
/// construction Sigma = [D(A + (|lambda_min(A)| + 0.2) I) D]^{-1} with
/// A_jk = 0.3 for 0 < |j-k| <= varsigma and D_jj = 1 on the first half,
/// 3 on the second.
struct CovarianceDesign {
  enum class Kind { toeplitz, scalefree };
  Kind kind = Kind::toeplitz;
  double xi = 0.5;
  int varsigma = 10;
  int p = 2;

  static CovarianceDesign toeplitz(double xi, int p) {
    CovarianceDesign d{Kind::toeplitz, xi, 0, p};
    d.validate();
    return d;
  }
  static CovarianceDesign scalefree(int varsigma, int p) {
    CovarianceDesign d{Kind::scalefree, 0.0, varsigma, p};
    d.validate();
    return d;
  }
  void validate() const {
    require(p >= 2, "CovarianceDesign: p >= 2 required");
    if (kind == Kind::toeplitz) {
      require(std::abs(xi) < 1.0, "CovarianceDesign: toeplitz needs |xi| < 1");
    } else {
      require(varsigma >= 1, "CovarianceDesign: scalefree needs varsigma >= 1");
    }
  }
};

/// Sampling factor for N(0, Sigma). With direct=true, Sigma = L L' and a draw
/// is L z; otherwise Sigma^{-1} = L L' and a draw solves L' x = z, avoiding an
/// explicit inverse at large p.
struct SigmaModel {
  CovarianceDesign design;
  Matrix chol;
  bool direct = true;
  Matrix sigma;  // dense Sigma; filled for toeplitz, empty for scalefree

  Vector draw(RngStream& rng) const { return mvn_draw(chol, direct, rng); }

  Matrix dense_sigma() const {
    if (sigma.size() > 0) return sigma;
    // Sigma = (L L')^{-1} = L^{-T} L^{-1}
    const Index p = chol.rows();
    const Matrix linv = chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(p, p));
    return linv.transpose() * linv;
  }
};

inline SigmaModel make_sigma(const CovarianceDesign& design) {
  design.validate();
  const Index p = design.p;
  SigmaModel model;
  model.design = design;
  if (design.kind == CovarianceDesign::Kind::toeplitz) {
    Matrix sigma(p, p);
    for (Index j = 0; j < p; ++j) {
      for (Index k = 0; k < p; ++k) sigma(j, k) = std::pow(design.xi, std::abs(j - k));
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NumericError("make_sigma: Toeplitz matrix not positive definite");
    }
    model.sigma = std::move(sigma);
    model.chol = llt.matrixL();
    model.direct = true;
    return model;
  }
  Matrix a = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = std::max<Index>(0, j - design.varsigma);
         k <= std::min<Index>(p - 1, j + design.varsigma); ++k) {
      if (k != j) a(j, k) = 0.3;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  const double lam_min = eig.eigenvalues().minCoeff();
  Vector d(p);
  for (Index j = 0; j < p; ++j) d(j) = j < p / 2 ? 1.0 : 3.0;
  Matrix m = d.asDiagonal() * (a + (std::abs(lam_min) + 0.2) * Matrix::Identity(p, p)) *
             d.asDiagonal();
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError("make_sigma: scale-free matrix not positive definite");
  }
  model.chol = llt.matrixL();
  model.direct = false;
  return model;
}

/// Sparse truth designs: beta*_1 = k/sqrt(n), actives on K4 = {6,12,15,20} or
/// K10 = {5,...,12,15,20} (1-based), Dirac ones or Uniform(0,2) draws.
struct CoefficientPattern {
  enum class Kind { dirac4, dirac10, unif4, unif10 };
  Kind kind = Kind::dirac4;
  double k = 0.0;

  bool uniform() const { return kind == Kind::unif4 || kind == Kind::unif10; }

  std::vector<Index> active_set() const {
    if (kind == Kind::dirac4 || kind == Kind::unif4) return {5, 11, 14, 19};
    return {4, 5, 6, 7, 8, 9, 10, 11, 14, 19};
  }

  /// Draws (for Unif kinds) and assembles beta*; consumes the stream only for
  /// the uniform values.
  Vector build(Index p, Index n, RngStream& rng) const {
    require(p >= 20, "CoefficientPattern: need p >= 20 to hold the active set");
    Vector beta = Vector::Zero(p);
    beta(0) = k / std::sqrt(static_cast<double>(n));
    for (Index j : active_set()) beta(j) = uniform() ? 2.0 * rng.uniform01() : 1.0;
    return beta;
  }
};

/// Linear hypothesis R beta = c; the common case is a coordinate group
/// H0: beta_G = 0.
struct Hypothesis {
  Matrix r_matrix;
  Vector c_vector;
  std::vector<Index> coords;  // nonempty when built from a coordinate group

  static Hypothesis on_coordinates(const std::vector<Index>& zero_based, Index p,
                                   Vector c = Vector()) {
    require(!zero_based.empty(), "Hypothesis: empty coordinate group");
    Hypothesis h;
    h.coords = zero_based;
    h.r_matrix = Matrix::Zero(static_cast<Index>(zero_based.size()), p);
    for (std::size_t i = 0; i < zero_based.size(); ++i) {
      require(zero_based[i] >= 0 && zero_based[i] < p, "Hypothesis: coordinate out of range");
      h.r_matrix(static_cast<Index>(i), zero_based[i]) = 1.0;
    }
    h.c_vector = c.size() > 0 ? std::move(c)
                              : Vector::Zero(static_cast<Index>(zero_based.size()));
    require(h.c_vector.size() == h.r_matrix.rows(), "Hypothesis: c has wrong length");
    return h;
  }

  static Hypothesis explicit_rc(Matrix r, Vector c) {
    Hypothesis h;
    h.r_matrix = std::move(r);
    h.c_vector = std::move(c);
    require(h.r_matrix.rows() >= 1 && h.c_vector.size() == h.r_matrix.rows(),
            "Hypothesis: inconsistent R and c");
    return h;
  }
};

enum class Dgp { homoscedastic, heteroscedastic };
enum class StudyMethod { la_la, sc_sc };

struct StudyConfig {
  Index n = 200;
  Index p = 100;
  double tau = 0.1;
  CovarianceDesign cov = CovarianceDesign::toeplitz(0.5, 100);
  CoefficientPattern pattern;
  ErrorDist error = ErrorDist::std_normal;
  Dgp dgp = Dgp::homoscedastic;
  Hypothesis hypothesis;
  StudyMethod method = StudyMethod::la_la;
  int replicates = 1;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;  // 0 gives the exact-fit degenerate-noise variant
  int cv_folds = 10;
  int nodewise_max_columns = 50;

  void validate() const {
    require(n >= 2 && p >= 20, "StudyConfig: need n >= 2 and p >= 20");
    cov.validate();
    require(cov.p == p, "StudyConfig: covariance design dimension must equal p");
    require(replicates >= 1, "StudyConfig: replicates >= 1");
    require(alpha > 0.0 && alpha < 1.0, "StudyConfig: alpha in (0,1)");
    require(noise_scale >= 0.0, "StudyConfig: noise_scale >= 0");
    require(hypothesis.r_matrix.rows() >= 1 && hypothesis.r_matrix.cols() == p,
            "StudyConfig: hypothesis shape does not match p");
    if (dgp == Dgp::heteroscedastic) {
      require(pattern.kind == CoefficientPattern::Kind::dirac4,
              "StudyConfig: the heteroscedastic model uses the Dirac 4 mean function");
    }
    ExpectileLevel check(tau);
    (void)check;
  }
};

struct Replicate {
  Dataset data;
  Vector beta_true;   // exact truth for homoscedastic; tau=0.5 pseudo-truth otherwise
  bool truth_exact = false;
};

struct ReplicateRecord {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  bool degenerate = false;
  bool failed = false;
};

struct StudyResult {
  double rejection_rate = 0.0;
  std::vector<ReplicateRecord> per_replicate;
  double wall_time_seconds = 0.0;  // execution detail; never written to result files
  int failures = 0;
  StudyConfig config;
};

namespace detail {

inline Replicate gen_replicate_impl(const StudyConfig& cfg, int replicate_index,
                                    const SigmaModel& sigma, double tau_center) {
  RngStream rng(cfg.seed, static_cast<std::uint64_t>(replicate_index));
  Vector beta = cfg.pattern.build(cfg.p, cfg.n, rng);

  Matrix x(cfg.n, cfg.p);
  for (Index i = 0; i < cfg.n; ++i) x.row(i) = sigma.draw(rng).transpose();
  Vector eps(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    eps(i) = cfg.error == ErrorDist::std_normal ? rng.normal() : rng.student_t4();
  }

  if (cfg.dgp == Dgp::homoscedastic) {
    Vector y = x * beta + cfg.noise_scale * (eps.array() - tau_center).matrix();
    return Replicate{Dataset(std::move(x), std::move(y)), std::move(beta), true};
  }
  // Heteroscedastic: y = x6 + x12 + x15 + x20 + (k/sqrt(n)) x2 + 0.7 Phi(x1) eps.
  const double b2 = cfg.pattern.k / std::sqrt(static_cast<double>(cfg.n));
  Vector y(cfg.n);
  for (Index i = 0; i < cfg.n; ++i) {
    y(i) = x(i, 5) + x(i, 11) + x(i, 14) + x(i, 19) + b2 * x(i, 1) +
           0.7 * normal_cdf(x(i, 0)) * cfg.noise_scale * eps(i);
  }
  Vector pseudo = Vector::Zero(cfg.p);
  pseudo(1) = b2;
  for (Index j : {Index{5}, Index{11}, Index{14}, Index{19}}) pseudo(j) = 1.0;
  return Replicate{Dataset(std::move(x), std::move(y)), std::move(pseudo), false};
}

}  // namespace detail

/// One simulated dataset for the study design; deterministic in
/// (cfg.seed, replicate_index). Homoscedastic responses are centered with the
/// distributional tau-expectile so that m_tau of the error is exactly zero.
inline Replicate gen_replicate(const StudyConfig& cfg, int replicate_index) {
  cfg.validate();
  const SigmaModel sigma = make_sigma(cfg.cov);
  const double center = cfg.dgp == Dgp::homoscedastic
                            ? scalar_expectile(cfg.error, ExpectileLevel(cfg.tau))
                            : 0.0;
  return detail::gen_replicate_impl(cfg, replicate_index, sigma, center);
}

/// One full pipeline pass on a dataset: CV-tuned step 1, node-wise step 2,
/// de-bias, Wald test against the hypothesis.
inline ReplicateRecord run_pipeline(const Dataset& data, const StudyConfig& cfg,
                                    int replicate_index) {
  const ExpectileLevel tau(cfg.tau);
  const PenaltyKind kind =
      cfg.method == StudyMethod::la_la ? PenaltyKind::lasso : PenaltyKind::scad;
  SolverOptions sopts;
  if (kind == PenaltyKind::scad) sopts.lla_stages = 3;

  const CvResult cv = cross_validate(data, tau, kind, {}, cfg.cv_folds,
                                     derive_seed(cfg.seed, replicate_index, 1), sopts);

  NodewiseOptions nopts;
  nopts.solver = sopts;
  nopts.cv_folds = cfg.cv_folds;
  nopts.cv_max_columns = cfg.nodewise_max_columns;
  nopts.seed = derive_seed(cfg.seed, replicate_index, 2);
  const PrecisionEstimate pe = nodewise_precision(data, cv.fit, kind, {}, {}, nopts);

  const DebiasResult dr = debias(data, cv.fit, pe);

  ReplicateRecord rec;
  const Matrix omega_r =
      cfg.hypothesis.r_matrix * dr.omega * cfg.hypothesis.r_matrix.transpose();
  if (omega_r.cwiseAbs().maxCoeff() <= 1e-14) {
    // Degenerate-noise guard: a perfect fit gives a vanishing sandwich; report
    // a null result rather than a spurious rejection.
    rec.degenerate = true;
    rec.statistic = 0.0;
    rec.p_value = 1.0;
    rec.reject = false;
    return rec;
  }
  const WaldTest test = wald_test(dr, cfg.hypothesis.r_matrix, cfg.hypothesis.c_vector);
  rec.statistic = test.statistic;
  rec.p_value = test.p_value;
  rec.reject = test.p_value < cfg.alpha;
  rec.degenerate = dr.degenerate;
  return rec;
}

/// Monte Carlo driver: replicates fan out over a worker pool, each owning its
/// stream; the tally is order-independent, so results are identical for any
/// thread count.
inline StudyResult run_study(const StudyConfig& cfg, int threads = 1,
                             int failure_budget = 0) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const SigmaModel sigma = make_sigma(cfg.cov);
  const double center = cfg.dgp == Dgp::homoscedastic
                            ? scalar_expectile(cfg.error, ExpectileLevel(cfg.tau))
                            : 0.0;

  StudyResult out;
  out.config = cfg;
  out.per_replicate.assign(static_cast<std::size_t>(cfg.replicates), ReplicateRecord{});
  std::vector<std::string> failure_msgs(static_cast<std::size_t>(cfg.replicates));

  parallel_for(static_cast<std::size_t>(cfg.replicates), threads, [&](std::size_t i) {
    const int idx = static_cast<int>(i);
    try {
      const Replicate rep = detail::gen_replicate_impl(cfg, idx, sigma, center);
      out.per_replicate[i] = run_pipeline(rep.data, cfg, idx);
    } catch (const std::exception& e) {
      out.per_replicate[i].failed = true;
      failure_msgs[i] = e.what();
    }
  });

  int rejects = 0;
  for (std::size_t i = 0; i < out.per_replicate.size(); ++i) {
    if (out.per_replicate[i].failed) {
      ++out.failures;
    } else if (out.per_replicate[i].reject) {
      ++rejects;
    }
  }
  if (out.failures > failure_budget) {
    for (std::size_t i = 0; i < out.per_replicate.size(); ++i) {
      if (out.per_replicate[i].failed) {
        throw NumericError("run_study: replicate " + std::to_string(i) +
                           " failed: " + failure_msgs[i]);
      }
    }
  }
  out.rejection_rate = static_cast<double>(rejects) / static_cast<double>(cfg.replicates);
  out.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Runs the study across a grid of signal strengths k (the paper's table
/// columns), reusing the design.
inline std::vector<StudyResult> run_study_grid(StudyConfig cfg, const std::vector<double>& ks,
                                               int threads = 1, int failure_budget = 0) {
  require(!ks.empty(), "run_study_grid: empty k grid");
  std::vector<StudyResult> out;
  out.reserve(ks.size());
  for (double k : ks) {
    cfg.pattern.k = k;
    out.push_back(run_study(cfg, threads, failure_budget));
  }
  return out;
}

}  // namespace expinf
