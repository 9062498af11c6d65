#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

namespace expinf {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Expectile level tau, restricted to the open interval (0, 1).
class ExpectileLevel {
 public:
  explicit ExpectileLevel(double tau) : tau_(tau) {
    if (!(tau > 0.0 && tau < 1.0)) {
      throw std::invalid_argument("ExpectileLevel: tau must lie strictly in (0,1), got " +
                                  std::to_string(tau));
    }
  }
  double value() const noexcept { return tau_; }

 private:
  double tau_;
};

/// Observed sample: design matrix x (n rows, p columns) and response y (length n).
struct Dataset {
  Matrix x;
  Vector y;

  Dataset(Matrix x_in, Vector y_in) : x(std::move(x_in)), y(std::move(y_in)) {
    if (x.rows() < 1 || x.cols() < 1) {
      throw std::invalid_argument("Dataset: need at least one row and one column");
    }
    if (x.rows() != y.size()) {
      throw std::invalid_argument("Dataset: x has " + std::to_string(x.rows()) +
                                  " rows but y has length " + std::to_string(y.size()));
    }
    if (!x.allFinite() || !y.allFinite()) {
      throw std::invalid_argument("Dataset: non-finite entries");
    }
  }

  Index n() const noexcept { return x.rows(); }
  Index p() const noexcept { return x.cols(); }
};

/// Squared expectile weights w^2_{beta,i}; every entry is exactly tau or 1-tau.
struct WeightVector {
  Vector w2;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace expinf
