#pragma once

// Objective values and KKT residuals of
//   min 1/2||theta - Y||^2 + p(xi)  s.t.  A theta + B xi >= 0
// and of its dual
//   max -1/2||A^*u||^2 - <Y, A^*u> - p^*(-v)  s.t.  B^*u + v = 0, u >= 0.

#include <Eigen/Core>

#include <cmath>

#include "shapereg/constraints.hpp"
#include "shapereg/operators.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

/// Default relative tolerance for indicator evaluation.
inline constexpr double kFeasibilityTol = 1e-9;

inline ObjectiveValue primal_objective(const ProblemData& p, const OperatorContext& ctx,
                                       const Eigen::Ref<const Vector>& theta,
                                       const Eigen::Ref<const Matrix>& xi,
                                       const ConstraintSet& c, double tol = kFeasibilityTol) {
  detail::require_dims(theta.size() == p.size(), "primal_objective: theta has wrong length");
  detail::require_dims(xi.rows() == p.dim() && xi.cols() == p.size(),
                       "primal_objective: xi must be d x n");
  c.validate(p.dim(), p.size());
  ObjectiveValue out{0.5 * (theta - p.y()).squaredNorm(), true};
  Vector proj(p.dim());
  for (Index i = 0; i < p.size(); ++i) {
    project_to(c.block(i), xi.col(i), proj);
    if ((xi.col(i) - proj).norm() > tol * (1.0 + xi.col(i).norm())) {
      out.finite = false;
      return out;
    }
  }
  const Matrix s = apply_a(theta) + ctx.apply_b(xi);
  const double scale = 1.0 + s.cwiseAbs().maxCoeff();
  if (s.minCoeff() < -tol * scale) out.finite = false;
  return out;
}

inline ObjectiveValue primal_objective(const ProblemData& p, const PrimalState& s,
                                       const ConstraintSet& c, double tol = kFeasibilityTol) {
  const OperatorContext ctx(p.x());
  return primal_objective(p, ctx, s.theta, s.xi, c, tol);
}

/// Dual value; `finite == false` when u has negative entries beyond `tol`
/// (relative to max|u|) or when p^*(-v) is infinite.
inline ObjectiveValue dual_objective(const ProblemData& p, const DualState& dual,
                                     const ConstraintSet& c, double tol = kFeasibilityTol) {
  detail::require_dims(dual.u.rows() == p.size() && dual.u.cols() == p.size(),
                       "dual_objective: u must be n x n");
  detail::require_dims(dual.v.rows() == p.dim() && dual.v.cols() == p.size(),
                       "dual_objective: v must be d x n");
  c.validate(p.dim(), p.size());
  ObjectiveValue out;
  const Vector atu = apply_a_adjoint(dual.u);
  out.value = -0.5 * atu.squaredNorm() - p.y().dot(atu);
  const double umax = dual.u.size() ? dual.u.cwiseAbs().maxCoeff() : 0.0;
  if (dual.u.size() && dual.u.minCoeff() < -tol * (1.0 + umax)) out.finite = false;
  const double vmax = dual.v.size() ? dual.v.cwiseAbs().maxCoeff() : 0.0;
  const double conj = blockwise_support(c, -dual.v, tol * (1.0 + vmax));
  if (std::isinf(conj))
    out.finite = false;
  else
    out.value -= conj;
  return out;
}

/// Normalized residuals from precomputed products a_theta = A theta and
/// b_xi = B xi.
inline KktResiduals kkt_residuals_from_products(const ProblemData& p, const OperatorContext& ctx,
                                                const Eigen::Ref<const Vector>& theta,
                                                const Eigen::Ref<const Matrix>& xi,
                                                const Eigen::Ref<const Matrix>& a_theta,
                                                const Eigen::Ref<const Matrix>& b_xi,
                                                const Eigen::Ref<const Matrix>& u,
                                                const Eigen::Ref<const Matrix>& v,
                                                const ConstraintSet& c) {
  const double na = a_theta.norm();
  const double nb = b_xi.norm();
  const double nxi = xi.norm();
  const double nu = u.norm();
  const double nv = v.norm();

  double xi_infeas = 0.0;
  double xi_compl = 0.0;
  Vector proj(p.dim());
  for (Index i = 0; i < p.size(); ++i) {
    const ConstraintSet& ci = c.block(i);
    project_to(ci, xi.col(i), proj);
    xi_infeas += (xi.col(i) - proj).squaredNorm();
    project_to(ci, xi.col(i) - v.col(i), proj);
    xi_compl += (xi.col(i) - proj).squaredNorm();
  }

  double cone_infeas = 0.0;
  double cone_compl = 0.0;
  const Index n = p.size();
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double s = a_theta(i, j) + b_xi(i, j);
      const double neg = std::min(s, 0.0);
      cone_infeas += neg * neg;
      const double r = s - std::max(s - u(i, j), 0.0);
      cone_compl += r * r;
    }
  }

  KktResiduals out;
  out.primal = std::max(std::sqrt(xi_infeas) / (1.0 + nxi), std::sqrt(cone_infeas) / (1.0 + na + nb));
  const double r_theta = (theta - p.y() - apply_a_adjoint(u)).norm();
  const double r_xi = (ctx.apply_b_adjoint(u) + v).norm();
  out.dual = std::max(r_theta / (1.0 + p.y().norm() + theta.norm() + nu), r_xi / (1.0 + nu + nv));
  out.complementarity = std::max(std::sqrt(xi_compl) / (1.0 + nxi + nv),
                                 std::sqrt(cone_compl) / (1.0 + na + nb + nu));
  return out;
}

inline KktResiduals kkt_residuals(const ProblemData& p, const OperatorContext& ctx,
                                  const Eigen::Ref<const Vector>& theta,
                                  const Eigen::Ref<const Matrix>& xi,
                                  const Eigen::Ref<const Matrix>& u,
                                  const Eigen::Ref<const Matrix>& v, const ConstraintSet& c) {
  detail::require_dims(theta.size() == p.size(), "kkt_residuals: theta has wrong length");
  detail::require_dims(xi.rows() == p.dim() && xi.cols() == p.size(),
                       "kkt_residuals: xi must be d x n");
  detail::require_dims(u.rows() == p.size() && u.cols() == p.size(),
                       "kkt_residuals: u must be n x n");
  detail::require_dims(v.rows() == p.dim() && v.cols() == p.size(),
                       "kkt_residuals: v must be d x n");
  c.validate(p.dim(), p.size());
  const Matrix a_theta = apply_a(theta);
  const Matrix b_xi = ctx.apply_b(xi);
  return kkt_residuals_from_products(p, ctx, theta, xi, a_theta, b_xi, u, v, c);
}

inline KktResiduals kkt_residuals(const ProblemData& p, const PrimalState& primal,
                                  const DualState& dual, const ConstraintSet& c) {
  const OperatorContext ctx(p.x());
  return kkt_residuals(p, ctx, primal.theta, primal.xi, dual.u, dual.v, c);
}

}  // namespace shapereg
