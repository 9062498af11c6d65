#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "expinf/errors.hpp"
#include "expinf/expectile.hpp"
#include "expinf/regularizer.hpp"
#include "expinf/rng.hpp"
#include "expinf/types.hpp"

namespace expinf {

struct SolverOptions {
  int max_iters = 10000;
  double tol = 1e-8;                 // relative objective decrease and step norm
  double initial_step = 1.0;
  double backtrack_factor = 0.5;
  double r_bound = std::numeric_limits<double>::infinity();  // l1 radius R
  int lla_stages = 0;                // > 0 enables LLA restarts for scad
  Vector init;                       // empty = zeros
  bool polish = true;                // active-set Newton refinement at the end

  void validate() const {
    require(max_iters > 0, "SolverOptions: max_iters must be positive");
    require(tol > 0.0 && tol < 1.0, "SolverOptions: tol must lie in (0,1)");
    require(initial_step > 0.0, "SolverOptions: initial_step must be positive");
    require(backtrack_factor > 0.0 && backtrack_factor < 1.0,
            "SolverOptions: backtrack_factor must lie in (0,1)");
    require(r_bound > 0.0, "SolverOptions: r_bound must be positive");
    require(lla_stages >= 0, "SolverOptions: lla_stages must be >= 0");
  }
};

/// Result of the penalized ALS problem (est01-style): stationary point of
/// L_n + P_lambda over the l1 ball of radius R.
struct ExpectileFit {
  ExpectileLevel tau;
  RegularizerSpec reg;
  Vector beta_hat;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
  double r_bound = std::numeric_limits<double>::infinity();
  // SCAD curvature diagnostic: min(tau,1-tau)*lambda_min(support Gram) - 3mu/4.
  double curvature_margin = std::numeric_limits<double>::quiet_NaN();
  bool curvature_warning = false;
};

/// Euclidean projection onto the l1 ball of radius r, exact via
/// sorting-based thresholding.
inline Vector project_l1_ball(const Vector& v, double r) {
  require(r > 0.0, "project_l1_ball: radius must be positive");
  if (v.lpNorm<1>() <= r) return v;
  const Index p = v.size();
  std::vector<double> u(p);
  for (Index j = 0; j < p; ++j) u[j] = std::abs(v(j));
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  for (Index j = 0; j < p; ++j) {
    css += u[j];
    const double cand = (css - r) / static_cast<double>(j + 1);
    if (u[j] > cand) theta = cand;
  }
  Vector out(p);
  for (Index j = 0; j < p; ++j) out(j) = soft_threshold(v(j), theta);
  return out;
}

namespace detail {

/// Largest eigenvalue of a symmetric PSD operator by power iteration,
/// with a small safety factor. apply(v) must return M v.
template <class Apply>
double power_lambda_max(Index dim, const Apply& apply) {
  Vector v = Vector::Constant(dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  double lam = 0.0;
  for (int it = 0; it < 60; ++it) {
    Vector w = apply(v);
    const double nw = w.norm();
    if (nw <= 0.0) return 0.0;
    w /= nw;
    const double lam_new = w.dot(apply(w));
    if (std::abs(lam_new - lam) <= 1e-7 * (1.0 + std::abs(lam_new)) && it > 3) {
      lam = lam_new;
      break;
    }
    lam = lam_new;
    v = w;
  }
  return lam * 1.05;
}

/// Per-coordinate penalty used by the composite kernel: either the uniform
/// amenable regularizer, or absolute per-coordinate l1 weights (LLA stages,
/// penalty-free coordinates). A frozen coordinate is pinned to zero.
struct PenaltyOperator {
  RegularizerSpec reg;
  Vector per_coord;  // empty = uniform reg; else absolute l1 weight per coordinate
  Index frozen = -1;

  bool weighted() const { return per_coord.size() > 0; }

  double value(const Vector& beta) const {
    if (!weighted()) {
      double acc = penalty_value(reg, beta);
      if (frozen >= 0) acc -= penalty_scalar(reg, beta(frozen));
      return acc;
    }
    double acc = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
      if (j == frozen) continue;
      acc += per_coord(j) * std::abs(beta(j));
    }
    return acc;
  }

  double threshold(Index j) const { return weighted() ? per_coord(j) : reg.lambda; }

  double dq(double t) const { return weighted() ? 0.0 : q_derivative(reg, t); }

  double dp(Index j, double t) const {
    if (weighted()) return t == 0.0 ? 0.0 : (t > 0.0 ? per_coord(j) : -per_coord(j));
    return penalty_derivative(reg, t);
  }

  double d2p(double t) const { return weighted() ? 0.0 : penalty_second_derivative(reg, t); }

  double mu() const { return weighted() ? 0.0 : reg.mu(); }
};

struct KernelResult {
  Vector beta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// X * beta exploiting sparsity of beta; falls back to the dense product for
/// mostly-dense inputs.
inline Vector sparse_product(const Matrix& x, const Vector& beta) {
  const Index p = beta.size();
  Index nnz = 0;
  for (Index j = 0; j < p; ++j) {
    if (beta(j) != 0.0) ++nnz;
  }
  if (4 * nnz >= p) return x * beta;
  Vector out = Vector::Zero(x.rows());
  for (Index j = 0; j < p; ++j) {
    if (beta(j) != 0.0) out += x.col(j) * beta(j);
  }
  return out;
}

inline Vector composite_step(const PenaltyOperator& pen, const Vector& beta,
                             const Vector& g, double eta, double r_bound) {
  Vector cand(beta.size());
  for (Index j = 0; j < beta.size(); ++j) {
    if (j == pen.frozen) {
      cand(j) = 0.0;
      continue;
    }
    cand(j) = soft_threshold(beta(j) - eta * g(j), eta * pen.threshold(j));
  }
  if (std::isfinite(r_bound) && cand.lpNorm<1>() > r_bound) {
    cand = project_l1_ball(cand, r_bound);
  }
  return cand;
}

template <class Loss>
double fixed_point_residual(const Loss& loss, const PenaltyOperator& pen, const Vector& beta,
                            double r_bound) {
  Vector grad(beta.size());
  loss.value_and_gradient(beta, grad);
  for (Index j = 0; j < beta.size(); ++j) grad(j) -= pen.dq(beta(j));
  const Vector cand = composite_step(pen, beta, grad, 1.0, r_bound);
  return (beta - cand).lpNorm<Eigen::Infinity>();
}

/// Newton refinement of the nonzero coordinates, keeping the composite
/// objective nonincreasing and the support and signs fixed. Skipped when the
/// l1-ball constraint is (near) active since the stationarity system changes.
template <class Loss>
void polish_active_set(const Loss& loss, const PenaltyOperator& pen, const SolverOptions& opts,
                       Vector& beta, double& objective) {
  if (std::isfinite(opts.r_bound) && beta.lpNorm<1>() >= opts.r_bound * (1.0 - 1e-9)) return;
  std::vector<Index> active;
  for (Index j = 0; j < beta.size(); ++j) {
    if (j == pen.frozen) continue;
    if (beta(j) != 0.0 || pen.threshold(j) == 0.0) active.push_back(j);
  }
  if (active.empty()) return;
  Vector grad(beta.size());

  for (int newton = 0; newton < 30; ++newton) {
    const Index k = static_cast<Index>(active.size());
    loss.value_and_gradient(beta, grad);
    Vector g_active(k);
    for (Index i = 0; i < k; ++i) {
      const Index j = active[i];
      g_active(i) = grad(j) + pen.dp(j, beta(j));
    }
    if (g_active.lpNorm<Eigen::Infinity>() <= 1e-12) break;
    Matrix h = loss.hessian(beta, active);
    for (Index i = 0; i < k; ++i) h(i, i) += pen.d2p(beta(active[i]));
    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success) return;
    Vector delta = ldlt.solve(-g_active);
    if (!delta.allFinite()) return;

    double alpha = 1.0;
    bool accepted = false;
    for (int bt = 0; bt < 25; ++bt) {
      Vector cand = beta;
      for (Index i = 0; i < k; ++i) {
        const Index j = active[i];
        cand(j) = beta(j) + alpha * delta(i);
        // A coordinate crossing zero leaves the penalized active set: clamp it
        // rather than rejecting the whole step.
        if (pen.threshold(j) > 0.0 && beta(j) != 0.0 && cand(j) * beta(j) < 0.0) {
          cand(j) = 0.0;
        }
      }
      const double cand_obj = loss.value(cand) + pen.value(cand);
      if (cand_obj <= objective + 1e-15 * (1.0 + std::abs(objective))) {
        if (!(std::isfinite(opts.r_bound) && cand.lpNorm<1>() > opts.r_bound)) {
          beta = std::move(cand);
          objective = std::min(objective, cand_obj);
          accepted = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!accepted) return;
    // Coordinates clamped to zero leave the system; rebuild the active set.
    std::vector<Index> still;
    still.reserve(active.size());
    for (Index j : active) {
      if (beta(j) != 0.0 || pen.threshold(j) == 0.0) still.push_back(j);
    }
    if (still.size() != active.size()) {
      active.swap(still);
      if (active.empty()) return;
    }
  }
}

/// Projected composite proximal gradient on (f - q_lambda) + lambda*||.||_1
/// over the l1 ball, with backtracking that keeps the composite objective
/// nonincreasing across accepted steps. Once the support has stabilized the
/// nonzero block is refined by the active-set Newton polish, which cuts the
/// slow tail of first-order iterations on correlated designs.
template <class Loss>
KernelResult composite_prox_gradient(const Loss& loss, const PenaltyOperator& pen,
                                     const SolverOptions& opts) {
  const Index p = loss.dim();
  Vector beta;
  if (opts.init.size() > 0) {
    require(opts.init.size() == p, "solver init has wrong length");
    beta = opts.init;
    if (pen.frozen >= 0) beta(pen.frozen) = 0.0;
    if (std::isfinite(opts.r_bound) && beta.lpNorm<1>() > opts.r_bound) {
      beta = project_l1_ball(beta, opts.r_bound);
    }
  } else {
    beta = Vector::Zero(p);
  }

  Vector grad(p);
  double objective = loss.value(beta) + pen.value(beta);
  double eta = opts.initial_step;
  KernelResult res;
  res.converged = false;

  std::vector<Index> support;
  std::vector<Index> cur_support;
  int stable = 0;
  bool polished_here = false;

  int it = 0;
  for (; it < opts.max_iters; ++it) {
    loss.value_and_gradient(beta, grad);
    for (Index j = 0; j < p; ++j) grad(j) -= pen.dq(beta(j));

    Vector cand;
    double cand_obj = objective;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      cand = composite_step(pen, beta, grad, eta, opts.r_bound);
      cand_obj = loss.value(cand) + pen.value(cand);
      if (cand_obj <= objective) {
        accepted = true;
        break;
      }
      eta *= opts.backtrack_factor;
    }
    if (!accepted) {
      // No descent representable in floating point: numerical stationarity.
      res.converged = true;
      break;
    }
    assert(cand_obj <= objective);
    const double step_norm = (cand - beta).lpNorm<Eigen::Infinity>();
    const double decrease = objective - cand_obj;
    const double beta_scale = beta.lpNorm<Eigen::Infinity>();
    beta = std::move(cand);
    objective = cand_obj;
    eta = std::min(eta * 2.0, opts.initial_step);
    if (decrease < opts.tol * (1.0 + std::abs(objective)) &&
        step_norm < opts.tol * (1.0 + beta_scale)) {
      res.converged = true;
      ++it;
      break;
    }

    if (opts.polish) {
      cur_support.clear();
      for (Index j = 0; j < p; ++j) {
        if (beta(j) != 0.0) cur_support.push_back(j);
      }
      if (cur_support == support) {
        ++stable;
      } else {
        support.swap(cur_support);
        stable = 0;
        polished_here = false;
      }
      if ((stable >= 1 && !polished_here) || (it % 25) == 24) {
        polish_active_set(loss, pen, opts, beta, objective);
        polished_here = true;
      }
    }
  }

  if (opts.polish) polish_active_set(loss, pen, opts, beta, objective);

  res.beta = std::move(beta);
  res.objective = loss.value(res.beta) + pen.value(res.beta);
  res.iterations = it;
  return res;
}

}  // namespace detail

/// Smooth expectile loss L_n over a dataset, for the composite kernel.
class ExpectileLossModel {
 public:
  ExpectileLossModel(const Dataset& data, ExpectileLevel tau)
      : data_(&data), tau_(tau.value()) {
    const Matrix& x = data.x;
    const double n = static_cast<double>(data.n());
    curvature_ = std::max(tau_, 1.0 - tau_) *
                 detail::power_lambda_max(data.p(), [&](const Vector& v) {
                   return Vector((x.transpose() * (x * v)) / n);
                 });
  }

  Index dim() const { return data_->p(); }
  double curvature_bound() const { return curvature_; }

  double value(const Vector& beta) const {
    const Vector r = data_->y - detail::sparse_product(data_->x, beta);
    double acc = 0.0;
    for (Index i = 0; i < r.size(); ++i) {
      acc += (r(i) >= 0.0 ? tau_ : 1.0 - tau_) * r(i) * r(i);
    }
    return acc / (2.0 * static_cast<double>(data_->n()));
  }

  double value_and_gradient(const Vector& beta, Vector& grad) const {
    const double n = static_cast<double>(data_->n());
    Vector r = data_->y - detail::sparse_product(data_->x, beta);
    double acc = 0.0;
    for (Index i = 0; i < r.size(); ++i) {
      const double w2 = r(i) >= 0.0 ? tau_ : 1.0 - tau_;
      acc += w2 * r(i) * r(i);
      r(i) *= w2;  // reuse as w2 .* r
    }
    grad = -(data_->x.transpose() * r) / n;
    return acc / (2.0 * n);
  }

  Matrix hessian(const Vector& beta, const std::vector<Index>& idx) const {
    const Index k = static_cast<Index>(idx.size());
    const Index n = data_->n();
    Matrix xa(n, k);
    for (Index i = 0; i < k; ++i) xa.col(i) = data_->x.col(idx[i]);
    Vector r = data_->y - data_->x * beta;
    Vector w2(n);
    for (Index i = 0; i < n; ++i) w2(i) = r(i) >= 0.0 ? tau_ : 1.0 - tau_;
    return (xa.transpose() * w2.asDiagonal() * xa) / static_cast<double>(n);
  }

 private:
  const Dataset* data_;
  double tau_;
  double curvature_ = 0.0;
};

/// Quadratic loss 0.5 phi'G phi - b'phi + 0.5 c over a precomputed Gram
/// matrix; equals ||x_col - X phi||^2 / (2n) for G = X'X/n, b = X'x_col/n,
/// c = x_col'x_col/n. Used by the node-wise column solves.
class QuadraticLossModel {
 public:
  QuadraticLossModel(const Matrix& gram, Vector b, double c, double lambda_max)
      : gram_(&gram), b_(std::move(b)), c_(c), curvature_(lambda_max) {}

  Index dim() const { return b_.size(); }
  double curvature_bound() const { return curvature_; }

  double value(const Vector& phi) const {
    const Vector gp = detail::sparse_product(*gram_, phi);
    return 0.5 * phi.dot(gp) - b_.dot(phi) + 0.5 * c_;
  }

  double value_and_gradient(const Vector& phi, Vector& grad) const {
    Vector gp = detail::sparse_product(*gram_, phi);
    grad = gp - b_;
    return 0.5 * phi.dot(gp) - b_.dot(phi) + 0.5 * c_;
  }

  Matrix hessian(const Vector& /*phi*/, const std::vector<Index>& idx) const {
    const Index k = static_cast<Index>(idx.size());
    Matrix h(k, k);
    for (Index i = 0; i < k; ++i) {
      for (Index j = 0; j < k; ++j) h(i, j) = (*gram_)(idx[i], idx[j]);
    }
    return h;
  }

 private:
  const Matrix* gram_;
  Vector b_;
  double c_;
  double curvature_;
};

namespace detail {

/// Shared driver: composite solve with optional LLA restarts for scad.
template <class Loss>
KernelResult solve_penalized(const Loss& loss, const RegularizerSpec& reg,
                             const SolverOptions& opts, Index frozen = -1) {
  PenaltyOperator pen{reg, Vector(), frozen};
  if (reg.kind == PenaltyKind::scad && opts.lla_stages > 0) {
    SolverOptions stage_opts = opts;
    Vector beta = opts.init.size() > 0 ? opts.init : Vector::Zero(loss.dim());
    int lla_iters = 0;
    for (int s = 0; s < opts.lla_stages; ++s) {
      PenaltyOperator wpen;
      wpen.reg = RegularizerSpec::make_lasso(reg.lambda);
      wpen.frozen = frozen;
      wpen.per_coord = Vector(loss.dim());
      for (Index j = 0; j < loss.dim(); ++j) {
        // One-sided limit p'(0+) = lambda at zero coordinates, per LLA.
        wpen.per_coord(j) =
            beta(j) == 0.0 ? reg.lambda : std::abs(penalty_derivative(reg, std::abs(beta(j))));
      }
      stage_opts.init = beta;
      KernelResult stage = composite_prox_gradient(loss, wpen, stage_opts);
      beta = stage.beta;
      lla_iters += stage.iterations;
    }
    // Final refinement against the scad composite objective itself.
    stage_opts.init = beta;
    KernelResult out = composite_prox_gradient(loss, pen, stage_opts);
    out.iterations += lla_iters;
    return out;
  }
  return composite_prox_gradient(loss, pen, opts);
}

}  // namespace detail

/// Step 1: the l1-ball-constrained penalized ALS problem, solved by projected
/// composite proximal gradient (with optional LLA restarts for scad).
inline ExpectileFit fit_penalized_als(const Dataset& data, ExpectileLevel tau,
                                      const RegularizerSpec& reg, const SolverOptions& opts) {
  opts.validate();
  reg.validate();
  ExpectileLossModel loss(data, tau);
  detail::KernelResult kr = detail::solve_penalized(loss, reg, opts);
  const double kkt = detail::fixed_point_residual(
      loss, detail::PenaltyOperator{reg, Vector(), -1}, kr.beta, opts.r_bound);

  ExpectileFit fit{tau, reg, std::move(kr.beta), kr.objective, kr.iterations,
                   kr.converged, kkt, opts.r_bound};
  if (reg.kind == PenaltyKind::scad) {
    std::vector<Index> support;
    for (Index j = 0; j < fit.beta_hat.size(); ++j) {
      if (fit.beta_hat(j) != 0.0) support.push_back(j);
    }
    if (!support.empty()) {
      const Index k = static_cast<Index>(support.size());
      Matrix xa(data.n(), k);
      for (Index i = 0; i < k; ++i) xa.col(i) = data.x.col(support[i]);
      Matrix gram = xa.transpose() * xa / static_cast<double>(data.n());
      Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
      const double lam_min = eig.eigenvalues().minCoeff();
      const double t = tau.value();
      fit.curvature_margin = std::min(t, 1.0 - t) * lam_min - 0.75 * reg.mu();
      fit.curvature_warning = fit.curvature_margin <= 0.0;
    }
  }
  return fit;
}

/// Exact minimizer of the smooth convex L_n for p < n, by iteratively
/// reweighted least squares: beta <- (X'W^2 X)^{-1} X'W^2 y until the iterates
/// stop moving and the gradient vanishes.
inline Vector irls_unpenalized(const Dataset& data, ExpectileLevel tau, double tol = 1e-10) {
  require(data.n() > data.p(), "irls_unpenalized: requires n > p");
  const double t = tau.value();
  const double n = static_cast<double>(data.n());
  Vector beta = Vector::Zero(data.p());
  for (int it = 0; it < 500; ++it) {
    Vector r = data.y - data.x * beta;
    Vector w2(r.size());
    for (Index i = 0; i < r.size(); ++i) w2(i) = r(i) >= 0.0 ? t : 1.0 - t;
    Matrix a = data.x.transpose() * w2.asDiagonal() * data.x;
    Vector b = data.x.transpose() * (w2.asDiagonal() * data.y);
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) {
      throw NumericError("irls_unpenalized: singular weighted Gram matrix");
    }
    Vector next = llt.solve(b);
    const bool settled = (next - beta).lpNorm<Eigen::Infinity>() <= tol;
    beta = std::move(next);
    if (settled) {
      const Vector grad = loss_and_gradient(data, beta, tau).second;
      if (grad.lpNorm<Eigen::Infinity>() <= 1e-8) return beta;
    }
  }
  throw NumericError("irls_unpenalized: no convergence within 500 iterations");
}

/// Deterministic fold assignment: Fisher-Yates shuffle of the row indices
/// from the seed, then contiguous blocks, remainder spread one per fold.
inline std::vector<std::vector<Index>> make_folds(Index n, int folds, std::uint64_t seed) {
  require(folds >= 2, "make_folds: need at least 2 folds");
  require(n >= folds, "make_folds: degenerate folds (n < folds)");
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  RngStream rng(seed, 0);
  for (Index i = n - 1; i > 0; --i) {
    const Index j = static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::vector<Index>> out(folds);
  const Index base = n / folds;
  const Index rem = n % folds;
  Index pos = 0;
  for (int f = 0; f < folds; ++f) {
    const Index size = base + (f < rem ? 1 : 0);
    out[f].assign(idx.begin() + pos, idx.begin() + pos + size);
    pos += size;
  }
  return out;
}

inline Dataset subset_rows(const Dataset& data, const std::vector<Index>& rows) {
  Matrix x(static_cast<Index>(rows.size()), data.p());
  Vector y(static_cast<Index>(rows.size()));
  for (Index i = 0; i < static_cast<Index>(rows.size()); ++i) {
    x.row(i) = data.x.row(rows[i]);
    y(i) = data.y(rows[i]);
  }
  return Dataset(std::move(x), std::move(y));
}

/// Auto lambda grid: 50 log-spaced values from lambda_max = ||grad L_n(0)||_inf
/// down to 0.001 * lambda_max.
inline std::vector<double> auto_lambda_grid(const Dataset& data, ExpectileLevel tau,
                                            int size = 50, double min_ratio = 1e-3) {
  const Vector grad0 = loss_and_gradient(data, Vector::Zero(data.p()), tau).second;
  const double lambda_max = grad0.lpNorm<Eigen::Infinity>();
  if (!(lambda_max > 0.0)) return {0.0};
  std::vector<double> grid(size);
  for (int i = 0; i < size; ++i) {
    grid[i] = lambda_max * std::pow(min_ratio, static_cast<double>(i) / (size - 1));
  }
  return grid;
}

struct CvResult {
  double lambda_star = 0.0;
  ExpectileFit fit;
  std::vector<std::pair<double, double>> cv_table;  // (lambda, mean held-out loss)
};

/// 10-fold cross validation over a decreasing lambda grid with warm starts;
/// the final fit refits on all data at the minimizing lambda. Ties pick the
/// largest lambda (first in grid order).
inline CvResult cross_validate(const Dataset& data, ExpectileLevel tau, PenaltyKind kind,
                               std::vector<double> grid, int folds, std::uint64_t seed,
                               const SolverOptions& opts = SolverOptions{},
                               double scad_a = 3.7) {
  opts.validate();
  if (grid.empty()) grid = auto_lambda_grid(data, tau);
  require(!grid.empty(), "cross_validate: grid empty");
  std::sort(grid.begin(), grid.end(), std::greater<double>());
  const auto fold_rows = make_folds(data.n(), folds, seed);

  auto make_reg = [&](double lambda) {
    return kind == PenaltyKind::lasso ? RegularizerSpec::make_lasso(lambda)
                                      : RegularizerSpec::make_scad(lambda, scad_a);
  };

  std::vector<double> mean_loss(grid.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<char> held(data.n(), 0);
    for (Index i : fold_rows[f]) held[i] = 1;
    std::vector<Index> train_rows;
    train_rows.reserve(data.n() - static_cast<Index>(fold_rows[f].size()));
    for (Index i = 0; i < data.n(); ++i) {
      if (!held[i]) train_rows.push_back(i);
    }
    const Dataset train = subset_rows(data, train_rows);
    const Dataset test = subset_rows(data, fold_rows[f]);
    ExpectileLossModel loss(train, tau);
    SolverOptions path_opts = opts;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto kr = detail::solve_penalized(loss, make_reg(grid[i]), path_opts);
      path_opts.init = kr.beta;
      mean_loss[i] += expectile_loss(test, kr.beta, tau) / folds;
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (mean_loss[i] < mean_loss[best]) best = i;
  }

  SolverOptions path_opts = opts;
  ExpectileFit final_fit{tau, make_reg(grid[0]), Vector(), 0.0, 0, false, 0.0, opts.r_bound};
  for (std::size_t i = 0; i <= best; ++i) {
    final_fit = fit_penalized_als(data, tau, make_reg(grid[i]), path_opts);
    path_opts.init = final_fit.beta_hat;
  }

  CvResult out{grid[best], std::move(final_fit), {}};
  out.cv_table.reserve(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) out.cv_table.emplace_back(grid[i], mean_loss[i]);
  return out;
}

}  // namespace expinf
