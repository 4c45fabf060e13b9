#pragma once

// Evaluation of a fitted max-affine function: values, subgradients and the
// Moreau envelope
//   psi_tau(x) = min_y psi(y) + tau/2 ||y - x||^2.
// All inputs and outputs are in raw units; a stored standardization record is
// applied internally.

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "shapereg/model.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

/// The model written as max_j { intercept_j + <slope_j, x> } in raw units.
struct AffinePieces {
  Vector intercepts;
  Matrix slopes;  // d x n
};

inline AffinePieces raw_pieces(const FittedModel& m) {
  AffinePieces out;
  const Index n = m.size();
  out.slopes = m.xi_hat;
  Matrix anchors = m.anchors;
  Vector theta = m.theta_hat;
  if (m.standardization) {
    const StandardizationRecord& s = *m.standardization;
    // x' = (x - mean) / scale and y = y_mean + y_scale * y'
    for (Index k = 0; k < m.dim(); ++k) out.slopes.row(k) *= s.y_scale / s.x_scale[k];
    for (Index j = 0; j < n; ++j)
      anchors.col(j) = s.x_mean + s.x_scale.cwiseProduct(m.anchors.col(j));
    theta = (s.y_scale * m.theta_hat.array() + s.y_mean).matrix();
  }
  out.intercepts.resize(n);
  for (Index j = 0; j < n; ++j) out.intercepts[j] = theta[j] - out.slopes.col(j).dot(anchors.col(j));
  return out;
}

namespace detail {

inline void check_query(const FittedModel& m, Index rows) {
  require_dims(rows == m.dim(), "query has " + std::to_string(rows) + " coordinates, model expects " +
                                    std::to_string(m.dim()));
  require_dims(m.size() >= 1, "model has no pieces");
}

inline Vector to_model_units(const FittedModel& m, const Eigen::Ref<const Vector>& x) {
  if (!m.standardization) return x;
  return (x - m.standardization->x_mean).cwiseQuotient(m.standardization->x_scale);
}

inline double to_raw_value(const FittedModel& m, double v) {
  return m.standardization ? m.standardization->y_mean + m.standardization->y_scale * v : v;
}

}  // namespace detail

inline double predict(const FittedModel& m, const Eigen::Ref<const Vector>& x) {
  detail::check_query(m, x.size());
  const Vector z = detail::to_model_units(m, x);
  double best = -std::numeric_limits<double>::infinity();
  for (Index j = 0; j < m.size(); ++j) best = std::max(best, m.piece(j, z));
  return detail::to_raw_value(m, best);
}

/// Column-wise predict.
inline Vector predict_batch(const FittedModel& m, const Eigen::Ref<const Matrix>& xq) {
  detail::check_query(m, xq.rows());
  Vector out(xq.cols());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index i = 0; i < xq.cols(); ++i) out[i] = predict(m, xq.col(i));
  return out;
}

struct Subgradient {
  Vector gradient;            // slope of the first active piece, raw units
  std::vector<Index> active;  // every piece within the tie tolerance
};

inline Subgradient subgradient(const FittedModel& m, const Eigen::Ref<const Vector>& x,
                               double tie_tol = 1e-10) {
  detail::check_query(m, x.size());
  const Vector z = detail::to_model_units(m, x);
  Vector vals(m.size());
  for (Index j = 0; j < m.size(); ++j) vals[j] = m.piece(j, z);
  const double best = vals.maxCoeff();
  const double slack = tie_tol * std::max(1.0, std::abs(best));
  Subgradient out;
  for (Index j = 0; j < m.size(); ++j)
    if (vals[j] >= best - slack) out.active.push_back(j);
  out.gradient = m.xi_hat.col(out.active.front());
  if (m.standardization)
    out.gradient = out.gradient.cwiseQuotient(m.standardization->x_scale) * m.standardization->y_scale;
  return out;
}

/// max_j ||slope_j||_2 in raw units; the Lipschitz constant of the model.
inline double lipschitz_constant(const FittedModel& m) {
  return raw_pieces(m).slopes.colwise().norm().maxCoeff();
}

struct MoreauOptions {
  int max_iters = 0;  // active-set changes; 0 means 10 (n + d)
};

struct MoreauValue {
  double value = 0.0;
  Vector gradient;  // tau (x - prox)
  Vector prox;
  double gap = 0.0;  // primal - dual of the prox problem
  int iterations = 0;
};

namespace detail {

/// Objective of the prox problem at y and its dual at lambda (on the simplex).
struct ProxEval {
  const AffinePieces& pieces;
  Vector x;
  double tau;
  Vector c;  // intercepts + slopes^T x

  double primal(const Vector& y) const {
    const double psi = (pieces.intercepts + pieces.slopes.transpose() * y).maxCoeff();
    return psi + 0.5 * tau * (y - x).squaredNorm();
  }
  double dual(const Vector& lambda) const {
    return c.dot(lambda) - (pieces.slopes * lambda).squaredNorm() / (2.0 * tau);
  }
  Vector prox_from(const Vector& lambda) const { return x - pieces.slopes * lambda / tau; }
};

}  // namespace detail

/// Moreau envelope value and gradient at raw-unit x. The prox point solves a
/// QP whose dual is min over the simplex of ||G lambda||^2/(2 tau) - c^T lambda.
/// That dual is solved exactly by a primal active-set method started at the
/// vertex of the largest piece; the working set rarely exceeds d + 1 pieces.
inline MoreauValue moreau_smooth(const FittedModel& m, const Eigen::Ref<const Vector>& x, double tau,
                                 const MoreauOptions& opt = {}) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidArgument("moreau_smooth: tau must be positive");
  detail::check_query(m, x.size());
  const AffinePieces pieces = raw_pieces(m);
  const Index n = m.size();
  const Index d = x.size();
  detail::ProxEval ev{pieces, x, tau, pieces.intercepts + pieces.slopes.transpose() * x};
  const Matrix& g = pieces.slopes;

  // A tiny ridge keeps every working-set system nonsingular when slopes are
  // affinely dependent; its effect on the objective is far below the gap check.
  const double ridge = 1e-13 * std::max(1.0, g.colwise().squaredNorm().maxCoeff() / tau);
  const double cscale = 1.0 + ev.c.cwiseAbs().maxCoeff();
  const int cap = opt.max_iters > 0 ? opt.max_iters : static_cast<int>(10 * (n + d));

  Index top = 0;
  ev.c.maxCoeff(&top);
  Vector lambda = Vector::Zero(n);
  lambda[top] = 1.0;
  std::vector<Index> work{top};

  MoreauValue out;
  bool optimal = false;
  for (int it = 1; it <= cap && !optimal; ++it) {
    out.iterations = it;
    // [Q_WW, e; e^T, 0] [lambda_W; mu] = [c_W; 1] with Q = G^T G / tau + ridge I.
    const Index k = static_cast<Index>(work.size());
    Matrix gw(d, k);
    Vector cw(k);
    for (Index a = 0; a < k; ++a) {
      gw.col(a) = g.col(work[static_cast<std::size_t>(a)]);
      cw[a] = ev.c[work[static_cast<std::size_t>(a)]];
    }
    Matrix kkt = Matrix::Zero(k + 1, k + 1);
    kkt.topLeftCorner(k, k) = gw.transpose() * gw / tau;
    kkt.topLeftCorner(k, k).diagonal().array() += ridge;
    kkt.topRightCorner(k, 1).setOnes();
    kkt.bottomLeftCorner(1, k).setOnes();
    Vector rhs(k + 1);
    rhs.head(k) = cw;
    rhs[k] = 1.0;
    const Vector sol = kkt.colPivHouseholderQr().solve(rhs);
    if (!sol.allFinite()) break;

    if (sol.head(k).minCoeff() >= 0.0) {
      for (Index a = 0; a < k; ++a) lambda[work[static_cast<std::size_t>(a)]] = sol[a];
      // Reduced gradient (Q lambda - c)_j + mu must be nonnegative off the working set.
      const Vector red = (g.transpose() * (g * lambda) / tau + ridge * lambda - ev.c).array() + sol[k];
      Index enter = -1;
      double most = -1e-14 * cscale;
      for (Index j = 0; j < n; ++j)
        if (red[j] < most && std::find(work.begin(), work.end(), j) == work.end()) {
          most = red[j];
          enter = j;
        }
      if (enter < 0)
        optimal = true;
      else
        work.push_back(enter);
      continue;
    }
    // Step toward the working-set minimizer until a weight hits zero.
    double alpha = 1.0;
    std::size_t block = 0;
    for (Index a = 0; a < k; ++a) {
      const double cur = lambda[work[static_cast<std::size_t>(a)]];
      if (sol[a] < 0.0 && cur / (cur - sol[a]) < alpha) {
        alpha = cur / (cur - sol[a]);
        block = static_cast<std::size_t>(a);
      }
    }
    for (Index a = 0; a < k; ++a) {
      double& l = lambda[work[static_cast<std::size_t>(a)]];
      l += alpha * (sol[a] - l);
    }
    lambda[work[block]] = 0.0;
    work.erase(work.begin() + static_cast<std::ptrdiff_t>(block));
  }
  lambda = lambda.cwiseMax(0.0);
  lambda /= lambda.sum();

  out.prox = ev.prox_from(lambda);
  const double primal = ev.primal(out.prox);
  out.gap = primal - ev.dual(lambda);
  out.value = primal;
  out.gradient = g * lambda;
  if (!(out.gap <= 1e-8 * (1.0 + std::abs(primal)))) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e after %d iterations", out.gap, out.iterations);
    throw NumericalError(std::string("moreau_smooth: prox solve stopped with duality gap ") + buf);
  }
  return out;
}

}  // namespace shapereg
