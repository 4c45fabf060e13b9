#pragma once

// Reference implementations used only by the tests. Nothing here calls into
// the solver code; operators are materialized densely and constrained QPs are
// solved by a log-barrier Newton method.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/types.hpp"

namespace oracle {

using shapereg::Index;
using shapereg::Matrix;
using shapereg::Vector;

// ---------------------------------------------------------------------------
// Dense operators. Matrices act on vec(Z) in column-major order and on the
// stacked xi = (xi_1; ...; xi_n).

inline Matrix dense_a(Index n) {
  Matrix a = Matrix::Zero(n * n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      a(i + j * n, i) += 1.0;
      a(i + j * n, j) -= 1.0;
    }
  return a;
}

/// Row (i, j) holds (X_j - X_i)^T in block j.
inline Matrix dense_b(const Matrix& x) {
  const Index d = x.rows(), n = x.cols();
  Matrix b = Matrix::Zero(n * n, d * n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) b.block(i + j * n, j * d, 1, d) = (x.col(j) - x.col(i)).transpose();
  return b;
}

inline Vector vec(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

inline Matrix unvec(const Vector& v, Index rows, Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Log-barrier QP:  min 1/2 z^T H z + f^T z
//   s.t. a_k^T z <= b_k              (linear rows)
//        ||z[offset:offset+len]||^2 <= r^2   (Euclidean balls)

struct Ball {
  Index offset;
  Index len;
  double radius;
};

struct Qp {
  Matrix h;
  Vector f;
  Matrix a;  // rows are constraints
  Vector b;
  std::vector<Ball> balls;
};

struct QpResult {
  Vector z;
  double objective = 0.0;
  double gap_bound = 0.0;  // m / t at exit
  int newton_steps = 0;
};

inline double qp_objective(const Qp& qp, const Vector& z) { return 0.5 * z.dot(qp.h * z) + qp.f.dot(z); }

/// `z0` must be strictly feasible.
inline QpResult solve_qp(const Qp& qp, Vector z0, double gap_tol = 1e-12) {
  const Index m = qp.a.rows() + static_cast<Index>(qp.balls.size());
  auto slacks = [&](const Vector& z, Vector& s_lin, Vector& s_ball) {
    s_lin = qp.b - qp.a * z;
    s_ball.resize(static_cast<Index>(qp.balls.size()));
    for (std::size_t k = 0; k < qp.balls.size(); ++k) {
      const Ball& bl = qp.balls[k];
      s_ball[static_cast<Index>(k)] = bl.radius * bl.radius - z.segment(bl.offset, bl.len).squaredNorm();
    }
  };
  auto strictly = [&](const Vector& z) {
    Vector sl, sb;
    slacks(z, sl, sb);
    return (sl.size() == 0 || sl.minCoeff() > 0.0) && (sb.size() == 0 || sb.minCoeff() > 0.0);
  };
  if (!strictly(z0)) throw std::logic_error("solve_qp: start point is not strictly feasible");
  auto barrier_value = [&](const Vector& z, double t) {
    Vector sl, sb;
    slacks(z, sl, sb);
    double v = t * qp_objective(qp, z);
    for (Index k = 0; k < sl.size(); ++k) v -= std::log(sl[k]);
    for (Index k = 0; k < sb.size(); ++k) v -= std::log(sb[k]);
    return v;
  };

  QpResult out;
  Vector z = std::move(z0);
  double t = 1.0;
  if (m == 0) {
    Eigen::LDLT<Matrix> ldlt(qp.h);
    z = ldlt.solve(-qp.f);
    out.z = z;
    out.objective = qp_objective(qp, z);
    return out;
  }
  while (true) {
    for (int it = 0; it < 200; ++it) {
      Vector sl, sb;
      slacks(z, sl, sb);
      Vector g = t * (qp.h * z + qp.f);
      Matrix hess = t * qp.h;
      const Vector inv = sl.cwiseInverse();
      g += qp.a.transpose() * inv;
      hess += qp.a.transpose() * inv.cwiseAbs2().asDiagonal() * qp.a;
      for (std::size_t k = 0; k < qp.balls.size(); ++k) {
        const Ball& bl = qp.balls[k];
        const double s = sb[static_cast<Index>(k)];
        const Vector gz = 2.0 * z.segment(bl.offset, bl.len);
        g.segment(bl.offset, bl.len) += gz / s;
        hess.block(bl.offset, bl.offset, bl.len, bl.len) += gz * gz.transpose() / (s * s);
        hess.block(bl.offset, bl.offset, bl.len, bl.len).diagonal().array() += 2.0 / s;
      }
      hess.diagonal().array() += 1e-14 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff());
      const Vector dz = -Eigen::LDLT<Matrix>(hess).solve(g);
      const double decrement = -g.dot(dz);
      ++out.newton_steps;
      if (!(decrement > 1e-14)) break;
      double step = 1.0;
      const double f0 = barrier_value(z, t);
      while (step > 1e-20) {
        const Vector cand = z + step * dz;
        if (strictly(cand) && barrier_value(cand, t) <= f0 - 0.25 * step * decrement) break;
        step *= 0.5;
      }
      if (step <= 1e-20) break;
      z += step * dz;
      if (decrement < 1e-12) break;
    }
    if (static_cast<double>(m) / t < gap_tol) break;
    t *= 20.0;
  }
  out.z = z;
  out.objective = qp_objective(qp, z);
  out.gap_bound = static_cast<double>(m) / t;
  return out;
}

// ---------------------------------------------------------------------------
// Constraint sets as barrier rows

/// Appends rows describing D for the block at `offset` (length d).
inline void add_set_rows(const shapereg::ConstraintSet& c, Index offset, Index d, Index nz,
                         std::vector<Vector>& rows, std::vector<double>& rhs, std::vector<Ball>& balls) {
  using namespace shapereg;
  auto row = [&](Index k, double coef, double bound) {
    Vector r = Vector::Zero(nz);
    r[offset + k] = coef;
    rows.push_back(std::move(r));
    rhs.push_back(bound);
  };
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Monotone>) {
          for (Index k : s.nondecreasing) row(k, -1.0, 0.0);
          for (Index k : s.nonincreasing) row(k, 1.0, 0.0);
        } else if constexpr (std::is_same_v<T, Box>) {
          for (Index k = 0; k < d; ++k) {
            if (std::isfinite(s.lower[k])) row(k, -1.0, -s.lower[k]);
            if (std::isfinite(s.upper[k])) row(k, 1.0, s.upper[k]);
          }
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          if (s.q == Norm::Inf) {
            for (Index k = 0; k < d; ++k) {
              row(k, 1.0, s.radius);
              row(k, -1.0, s.radius);
            }
          } else if (s.q == Norm::One) {
            for (Index mask = 0; mask < (Index(1) << d); ++mask) {
              Vector r = Vector::Zero(nz);
              for (Index k = 0; k < d; ++k) r[offset + k] = (mask >> k) & 1 ? 1.0 : -1.0;
              rows.push_back(std::move(r));
              rhs.push_back(s.radius);
            }
          } else {
            balls.push_back({offset, d, s.radius});
          }
        }
      },
      c.variant());
}

/// A point strictly inside D with an l_inf margin `margin`.
inline Vector interior_point(const shapereg::ConstraintSet& c, Index d, double& margin) {
  using namespace shapereg;
  Vector center = Vector::Zero(d);
  margin = 1.0;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Monotone>) {
          for (Index k : s.nondecreasing) center[k] = 1.0;
          for (Index k : s.nonincreasing) center[k] = -1.0;
        } else if constexpr (std::is_same_v<T, Box>) {
          for (Index k = 0; k < d; ++k) {
            const bool lo = std::isfinite(s.lower[k]), hi = std::isfinite(s.upper[k]);
            if (lo && hi) {
              center[k] = 0.5 * (s.lower[k] + s.upper[k]);
              margin = std::min(margin, 0.5 * (s.upper[k] - s.lower[k]));
            } else if (lo) {
              center[k] = s.lower[k] + 1.0;
            } else if (hi) {
              center[k] = s.upper[k] - 1.0;
            }
          }
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          margin = s.radius / static_cast<double>(d);
        }
      },
      c.variant());
  return center;
}

// ---------------------------------------------------------------------------
// Reference regression solver

struct RegressionResult {
  double objective = 0.0;
  Vector theta;
  Matrix xi;
};

/// min 1/2||theta - Y||^2 s.t. theta_i >= theta_j + <xi_j, X_i - X_j>, xi_j in D_j.
inline RegressionResult solve_regression(const Matrix& x, const Vector& y, const shapereg::ConstraintSet& c,
                                         double gap_tol = 1e-12) {
  const Index d = x.rows(), n = x.cols(), nz = n + d * n;
  Qp qp;
  qp.h = Matrix::Zero(nz, nz);
  qp.h.topLeftCorner(n, n).setIdentity();
  qp.f = Vector::Zero(nz);
  qp.f.head(n) = -y;
  std::vector<Vector> rows;
  std::vector<double> rhs;
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      if (i == j) continue;
      Vector r = Vector::Zero(nz);
      r[i] = -1.0;
      r[j] = 1.0;
      r.segment(n + j * d, d) = x.col(i) - x.col(j);
      rows.push_back(std::move(r));
      rhs.push_back(0.0);
    }
  for (Index j = 0; j < n; ++j) add_set_rows(c.block(j), n + j * d, d, nz, rows, rhs, qp.balls);
  qp.a.resize(static_cast<Index>(rows.size()), nz);
  qp.b.resize(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    qp.a.row(static_cast<Index>(k)) = rows[k].transpose();
    qp.b[static_cast<Index>(k)] = rhs[k];
  }

  // Strictly feasible start: values and slopes of <c, x> + eps ||x||^2 with c
  // an interior point of D, so every pairwise gap equals eps ||X_i - X_j||^2.
  const double xmax = std::max(1e-12, x.cwiseAbs().maxCoeff());
  Vector z0 = Vector::Zero(nz);
  for (Index j = 0; j < n; ++j) {
    double margin = 1.0;
    const Vector center = interior_point(c.block(j), d, margin);
    z0.segment(n + j * d, d) = center;
  }
  double eps = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < n; ++j) {
    double margin = 1.0;
    interior_point(c.block(j), d, margin);
    eps = std::min(eps, 0.25 * margin / xmax);
  }
  for (Index j = 1; j < n; ++j)
    if ((z0.segment(n + j * d, d) - z0.segment(n, d)).norm() > 0.0)
      throw std::logic_error("solve_regression: per-point sets need a common interior center");
  const Vector center = z0.segment(n, d);
  for (Index i = 0; i < n; ++i) {
    z0[i] = center.dot(x.col(i)) + eps * x.col(i).squaredNorm();
    z0.segment(n + i * d, d) = center + 2.0 * eps * x.col(i);
  }
  QpResult r = solve_qp(qp, z0, gap_tol);
  RegressionResult out;
  out.theta = r.z.head(n);
  out.xi = unvec(r.z.tail(d * n), d, n);
  out.objective = r.objective + 0.5 * y.squaredNorm();
  return out;
}

/// Euclidean projection onto D by the barrier method.
inline Vector project_brute(const shapereg::ConstraintSet& c, const Vector& x, double gap_tol = 1e-15) {
  const Index d = x.size();
  Qp qp;
  qp.h = Matrix::Identity(d, d);
  qp.f = -x;
  std::vector<Vector> rows;
  std::vector<double> rhs;
  add_set_rows(c, 0, d, d, rows, rhs, qp.balls);
  qp.a.resize(static_cast<Index>(rows.size()), d);
  qp.b.resize(static_cast<Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    qp.a.row(static_cast<Index>(k)) = rows[k].transpose();
    qp.b[static_cast<Index>(k)] = rhs[k];
  }
  double margin = 1.0;
  const Vector z0 = interior_point(c, d, margin);
  return solve_qp(qp, z0, gap_tol).z;
}

/// Projection onto the l1 ball by bisection on the soft threshold.
inline Vector project_l1_bisection(const Vector& x, double radius) {
  if (x.lpNorm<1>() <= radius) return x;
  double lo = 0.0, hi = x.cwiseAbs().maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = (x.cwiseAbs().array() - mid).max(0.0).sum();
    (s > radius ? lo : hi) = mid;
  }
  const double lam = 0.5 * (lo + hi);
  return (x.array().sign() * (x.cwiseAbs().array() - lam).max(0.0)).matrix();
}

/// Projection onto the unit simplex by bisection on the shift.
inline Vector project_simplex_bisection(const Vector& x) {
  double lo = x.minCoeff() - 1.0, hi = x.maxCoeff();
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = (x.array() - mid).max(0.0).sum();
    (s > 1.0 ? lo : hi) = mid;
  }
  return (x.array() - 0.5 * (lo + hi)).max(0.0).matrix();
}

// ---------------------------------------------------------------------------
// Random generators

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  double uniform(double a = -1.0, double b = 1.0) { return std::uniform_real_distribution<double>(a, b)(rng); }
  double normal() { return std::normal_distribution<double>()(rng); }
  Index integer(Index a, Index b) { return std::uniform_int_distribution<Index>(a, b)(rng); }
  Vector vector(Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = scale * normal();
    return v;
  }
  Matrix matrix(Index r, Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = scale * normal();
    return m;
  }
  Matrix binary(Index n, double p = 0.5) {
    Matrix w(n, n);
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i) w(i, j) = uniform(0.0, 1.0) < p ? 1.0 : 0.0;
    return w;
  }
};

}  // namespace oracle
