#pragma once

// The fitted max-affine function
//   psi(x) = max_j { theta_j + <xi_j, x - X_j> }
// and the conversion of a solver iterate into one.

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include "shapereg/constraints.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

struct FittedModel {
  Vector theta_hat;
  Matrix xi_hat;   // d x n, column j is the slope of piece j
  Matrix anchors;  // d x n, copies of X_j (standardized units when a record is present)
  std::optional<StandardizationRecord> standardization;
  std::string constraint;                       // grammar form of the constraint set
  std::map<std::string, std::string> metadata;  // solver name, iterations, residuals

  Index dim() const { return anchors.rows(); }
  Index size() const { return anchors.cols(); }

  /// Value of piece j at x (model units).
  double piece(Index j, const Eigen::Ref<const Vector>& x) const {
    return theta_hat[j] + xi_hat.col(j).dot(x - anchors.col(j));
  }

  /// max_i |max_j piece_j(X_i) - theta_i|
  double interpolation_gap() const {
    double gap = 0.0;
    for (Index i = 0; i < size(); ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (Index j = 0; j < size(); ++j) best = std::max(best, piece(j, anchors.col(i)));
      gap = std::max(gap, std::abs(best - theta_hat[i]));
    }
    return gap;
  }
};

namespace detail {

/// Largest value of max_j theta_j + <xi_j, X_i - X_j> - theta_i over i.
inline double max_violation(const Matrix& x, const Vector& theta, const Matrix& xi) {
  const Index n = x.cols();
  // M(j, i) = <xi_j, X_i>
  const Matrix m = xi.transpose() * x;
  double worst = 0.0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      worst = std::max(worst, theta[j] + m(j, i) - m(j, j) - theta[i]);
  return worst;
}

}  // namespace detail

/// Turns an approximate solver solution into an exactly consistent max-affine
/// model. Slopes are projected onto D; heights are raised by label-correcting
/// sweeps theta_i <- max_j theta_j + <xi_j, X_i - X_j>. If tiny positive
/// cycles left over from the inexact solve keep the sweeps from settling and D
/// is the same for every point, each anchor takes the slope of its active
/// piece instead, which is consistent by construction.
inline void polish_solution(const Matrix& x, const ConstraintSet& c, Vector& theta, Matrix& xi,
                            int max_sweeps = 50, double tol = 1e-12) {
  xi = blockwise_prox(c, xi);
  const Index n = x.cols();
  const Matrix m = xi.transpose() * x;
  const double scale = 1.0 + theta.cwiseAbs().maxCoeff();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double raised = 0.0;
    for (Index i = 0; i < n; ++i) {
      double best = theta[i];
      for (Index j = 0; j < n; ++j) best = std::max(best, theta[j] + m(j, i) - m(j, j));
      raised = std::max(raised, best - theta[i]);
      theta[i] = best;
    }
    if (raised <= tol * scale) return;
  }
  if (c.is_per_point()) return;

  Vector new_theta(n);
  Matrix new_xi(x.rows(), n);
  for (Index i = 0; i < n; ++i) {
    Index arg = i;
    double best = theta[i];
    for (Index j = 0; j < n; ++j) {
      const double v = theta[j] + m(j, i) - m(j, j);
      if (v > best) {
        best = v;
        arg = j;
      }
    }
    new_theta[i] = best;
    new_xi.col(i) = xi.col(arg);
  }
  theta = std::move(new_theta);
  xi = std::move(new_xi);
}

inline FittedModel make_model(const Matrix& x, Vector theta, Matrix xi, const ConstraintSet& c) {
  polish_solution(x, c, theta, xi);
  FittedModel m;
  m.theta_hat = std::move(theta);
  m.xi_hat = std::move(xi);
  m.anchors = x;
  return m;
}

}  // namespace shapereg
