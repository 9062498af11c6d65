#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "expinf/parallel.hpp"
#include "expinf/solver.hpp"

namespace expinf {

/// Node-wise pseudo-inverse of the generalized Hessian Sigma_hat = X_w'X_w/n:
/// theta row j is Phi row j (diagonal 1, off entries -varphi_jl) divided by
/// phi2_j. Not symmetric in general, and not asserted to be.
struct PrecisionEstimate {
  Matrix theta;        // p x p, row j = Theta_j'
  Vector phi2;         // p, phi2_j > 0
  Matrix varphi;       // p x p, row j holds varphi_j with a structural 0 at (j,j)
  Vector lambdas;      // per-column lambda_j actually used
  Vector relax_bound;  // per column: ||grad Q_{lambda_j}(varphi_j)||_inf / phi2_j
  std::vector<Index> jittered_columns;  // columns rescued by ridge jitter, if allowed
};

struct NodewiseOptions {
  SolverOptions solver;
  int cv_folds = 10;
  int cv_grid_size = 50;
  int cv_max_columns = 50;  // per-column CV cost is quadratic, so a subset is used
  std::uint64_t seed = 0;
  bool allow_ridge_jitter = false;
  int threads = 1;
  double scad_a = 3.7;
};

struct RelaxationDiagnostic {
  double sup_offdiag = 0.0;
  Vector per_row;
};

namespace detail {

/// Expectile-weighted design W_{beta_hat} X.
inline Matrix weighted_design(const Dataset& data, const ExpectileFit& fit) {
  const WeightVector w = squared_weights(data, fit.beta_hat, fit.tau);
  return w.w2.array().sqrt().matrix().asDiagonal() * data.x;
}

/// Shared node-wise lambda by 10-fold CV on a random subset of columns with
/// an averaged held-out curve; ties pick the largest lambda.
inline double nodewise_cv_lambda(const Matrix& xw, PenaltyKind kind, const NodewiseOptions& opts) {
  const Index n = xw.rows();
  const Index p = xw.cols();
  std::vector<Index> cols(p);
  std::iota(cols.begin(), cols.end(), Index{0});
  Index m = std::min<Index>(p, opts.cv_max_columns);
  if (m < p) {
    RngStream rng(derive_seed(opts.seed, 0, 12), 0);
    for (Index i = 0; i < m; ++i) {
      const Index j = i + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(p - i)));
      std::swap(cols[i], cols[j]);
    }
    cols.resize(m);
  }

  const Matrix s_full = xw.transpose() * xw;  // unnormalized
  double lambda_max = 0.0;
  for (Index j : cols) {
    for (Index l = 0; l < p; ++l) {
      if (l != j) lambda_max = std::max(lambda_max, std::abs(s_full(l, j)) / n);
    }
  }
  if (!(lambda_max > 0.0)) return 0.0;
  std::vector<double> grid(opts.cv_grid_size);
  for (int i = 0; i < opts.cv_grid_size; ++i) {
    grid[i] = lambda_max * std::pow(1e-3, static_cast<double>(i) / (opts.cv_grid_size - 1));
  }

  const auto folds = make_folds(n, opts.cv_folds, derive_seed(opts.seed, 0, 11));
  struct FoldGram {
    Matrix train;   // (S_full - S_held)/n_train
    Matrix held;    // S_held/n_held
    double lam_max;
  };
  std::vector<FoldGram> fg(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    Matrix xh(static_cast<Index>(folds[f].size()), p);
    for (Index i = 0; i < static_cast<Index>(folds[f].size()); ++i) {
      xh.row(i) = xw.row(folds[f][i]);
    }
    const Matrix s_held = xh.transpose() * xh;
    const double n_train = static_cast<double>(n - static_cast<Index>(folds[f].size()));
    fg[f].train = (s_full - s_held) / n_train;
    fg[f].held = s_held / static_cast<double>(folds[f].size());
    fg[f].lam_max = power_lambda_max(p, [&](const Vector& v) { return Vector(fg[f].train * v); });
  }

  auto make_reg = [&](double lambda) {
    return kind == PenaltyKind::lasso ? RegularizerSpec::make_lasso(lambda)
                                      : RegularizerSpec::make_scad(lambda, opts.scad_a);
  };

  std::vector<std::vector<double>> curves(cols.size(),
                                          std::vector<double>(grid.size(), 0.0));
  parallel_for(cols.size(), opts.threads, [&](std::size_t ci) {
    const Index j = cols[ci];
    for (std::size_t f = 0; f < fg.size(); ++f) {
      QuadraticLossModel loss(fg[f].train, fg[f].train.col(j), fg[f].train(j, j),
                              fg[f].lam_max);
      SolverOptions path_opts = opts.solver;
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto kr = solve_penalized(loss, make_reg(grid[i]), path_opts, j);
        path_opts.init = kr.beta;
        const Vector& phi = kr.beta;
        const double rss = fg[f].held(j, j) - 2.0 * fg[f].held.col(j).dot(phi) +
                           phi.dot(sparse_product(fg[f].held, phi));
        curves[ci][i] += 0.5 * std::max(rss, 0.0);
      }
    }
  });

  std::vector<double> curve(grid.size(), 0.0);
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < grid.size(); ++i) curve[i] += c[i];
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (curve[i] < curve[best]) best = i;
  }
  return grid[best];
}

}  // namespace detail

/// Step 2: node-wise penalized least squares on the expectile-weighted design,
/// one column regressed on the rest through the shared composite kernel, then
/// phi2_j assembled with the penalty-gradient inner product.
inline PrecisionEstimate nodewise_precision(const Dataset& data, const ExpectileFit& fit,
                                            PenaltyKind kind, const Vector& lambdas,
                                            const Vector& r_bounds,
                                            const NodewiseOptions& opts) {
  const Index p = data.p();
  const double n = static_cast<double>(data.n());
  require(fit.beta_hat.size() == p, "nodewise_precision: fit does not match data");
  require(p >= 2, "nodewise_precision: need p >= 2");
  require(lambdas.size() == 0 || lambdas.size() == p,
          "nodewise_precision: lambdas must be empty (auto) or length p");
  require(r_bounds.size() == 0 || r_bounds.size() == p,
          "nodewise_precision: r_bounds must be empty or length p");
  opts.solver.validate();

  const Matrix xw = detail::weighted_design(data, fit);
  Vector lam(p);
  if (lambdas.size() == p) {
    lam = lambdas;
  } else {
    lam.setConstant(detail::nodewise_cv_lambda(xw, kind, opts));
  }

  const Matrix gram = (xw.transpose() * xw) / n;
  const double gram_lam_max =
      detail::power_lambda_max(p, [&](const Vector& v) { return Vector(gram * v); });

  auto make_reg = [&](double lambda) {
    return kind == PenaltyKind::lasso ? RegularizerSpec::make_lasso(lambda)
                                      : RegularizerSpec::make_scad(lambda, opts.scad_a);
  };

  PrecisionEstimate pe;
  pe.theta = Matrix::Zero(p, p);
  pe.varphi = Matrix::Zero(p, p);
  pe.phi2 = Vector::Zero(p);
  pe.lambdas = lam;
  pe.relax_bound = Vector::Zero(p);
  std::vector<char> degenerate(p, 0);

  parallel_for(static_cast<std::size_t>(p), opts.threads, [&](std::size_t uj) {
    const Index j = static_cast<Index>(uj);
    QuadraticLossModel loss(gram, gram.col(j), gram(j, j), gram_lam_max);
    SolverOptions col_opts = opts.solver;
    if (r_bounds.size() == p) col_opts.r_bound = r_bounds(j);
    const auto kr = detail::solve_penalized(loss, make_reg(lam(j)), col_opts, j);
    const Vector& phi = kr.beta;

    const Vector gram_phi = detail::sparse_product(gram, phi);
    const double rss_over_n =
        std::max(0.0, gram(j, j) - 2.0 * gram.col(j).dot(phi) + phi.dot(gram_phi));
    const RegularizerSpec reg = make_reg(lam(j));
    double pgrad_ip = 0.0;
    for (Index l = 0; l < p; ++l) {
      if (l != j) pgrad_ip += phi(l) * penalty_derivative(reg, phi(l));
    }
    double phi2 = rss_over_n + pgrad_ip;
    if (phi2 <= 1e-12) {
      degenerate[uj] = 1;
      phi2 += 1e-8;  // applied only if jitter is permitted; checked below
    }
    const Vector score = gram_phi - gram.col(j);  // = -grad Q at the solution
    double relax_num = 0.0;
    for (Index l = 0; l < p; ++l) {
      if (l != j) relax_num = std::max(relax_num, std::abs(score(l)));
    }

    pe.varphi.row(j) = phi.transpose();
    pe.varphi(j, j) = 0.0;
    pe.phi2(j) = phi2;
    pe.relax_bound(j) = relax_num / phi2;
    pe.theta.row(j) = -phi.transpose() / phi2;
    pe.theta(j, j) = 1.0 / phi2;
  });

  std::vector<Index> bad;
  for (Index j = 0; j < p; ++j) {
    if (degenerate[j]) bad.push_back(j);
  }
  if (!bad.empty()) {
    if (!opts.allow_ridge_jitter) {
      std::string cols;
      for (Index j : bad) cols += (cols.empty() ? "" : ", ") + std::to_string(j);
      throw NumericError("nodewise_precision: degenerate phi2 (<= 1e-12) in columns " + cols +
                         "; the weighted column is perfectly explained by the others");
    }
    pe.jittered_columns = std::move(bad);
  }
  return pe;
}

/// Sup-norm of Theta_hat Sigma_hat - I, whose off-diagonal rows are bounded by
/// ||grad Q_{lambda_j}||_inf / phi2_j; the diagonal must vanish by the
/// first-order condition of the column problems.
inline RelaxationDiagnostic relaxation_diagnostic(const PrecisionEstimate& pe,
                                                  const Dataset& data, const ExpectileFit& fit) {
  const Index p = data.p();
  require(pe.theta.rows() == p && pe.theta.cols() == p,
          "relaxation_diagnostic: precision estimate does not match data");
  const Matrix xw = detail::weighted_design(data, fit);
  const Matrix sigma = (xw.transpose() * xw) / static_cast<double>(data.n());
  const Matrix m = pe.theta * sigma - Matrix::Identity(p, p);
  RelaxationDiagnostic diag;
  diag.per_row = Vector::Zero(p);
  for (Index j = 0; j < p; ++j) {
    if (std::abs(m(j, j)) > 1e-8) {
      throw NumericError("relaxation_diagnostic: diagonal identity violated at column " +
                         std::to_string(j) + " (" + std::to_string(m(j, j)) + ")");
    }
    double row_sup = 0.0;
    for (Index l = 0; l < p; ++l) {
      if (l != j) row_sup = std::max(row_sup, std::abs(m(j, l)));
    }
    diag.per_row(j) = row_sup;
  }
  diag.sup_offdiag = diag.per_row.size() > 0 ? diag.per_row.maxCoeff() : 0.0;
  return diag;
}

}  // namespace expinf
