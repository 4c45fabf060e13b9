#pragma once

// Proximal augmented Lagrangian method with a semismooth Newton inner solver.
//
// Subproblem at anchor (theta~, xi~, u~, v~) and penalty sigma, with
// z = u~/sigma - A theta - B xi and w = xi - v~/sigma:
//   Phi(theta, xi) = 1/2||theta - Y||^2 + sigma/2 ||Pi_+(z)||^2
//                  + sigma/2 dist(w, D)^2
//                  + h1/(2 sigma)||theta - theta~||^2 + h2/(2 sigma)||xi - xi~||^2

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/model.hpp"
#include "shapereg/operators.hpp"
#include "shapereg/problem.hpp"
#include "shapereg/trace.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

enum class Preconditioner { Diagonal, BlockDiagonal };

struct PcgConfig {
  int max_iters = 1000;
  Preconditioner preconditioner = Preconditioner::BlockDiagonal;
};

struct SsnConfig {
  double gamma_bar = 0.01;
  double tau_exp = 1.0;
  double delta_ls = 0.5;
  double mu_ls = 0.1;
  int max_iters = 1000;
  int max_backtracks = 50;
  Index direct_limit = 2000;  // dense factorization when n + dn is at most this
  bool exact_restart = true;
  double reg_scale = 0.0;
  double reg_exp = 1.0;
  PcgConfig pcg;

  void validate() const {
    if (!(gamma_bar > 0.0 && gamma_bar < 1.0)) throw InvalidArgument("SsnConfig: gamma_bar must lie in (0, 1)");
    if (!(tau_exp > 0.0 && tau_exp <= 1.0)) throw InvalidArgument("SsnConfig: tau_exp must lie in (0, 1]");
    if (!(delta_ls > 0.0 && delta_ls < 1.0)) throw InvalidArgument("SsnConfig: delta_ls must lie in (0, 1)");
    if (!(mu_ls > 0.0 && mu_ls < 0.5)) throw InvalidArgument("SsnConfig: mu_ls must lie in (0, 1/2)");
    if (max_iters < 1 || max_backtracks < 1 || pcg.max_iters < 1)
      throw InvalidArgument("SsnConfig: iteration limits must be positive");
  }
};

struct PalmConfig {
  double h1 = 1e-3;
  double h2 = 1e-3;
  double sigma0 = 1.0;
  double sigma_growth = 3.0;
  double sigma_max = 1e6;
  double eps0 = 0.1;  // eps_k = eps0 * eps_rate^k
  double eps_rate = 0.5;
  double delta0 = 0.5;  // delta_k = delta0 * delta_rate^k
  double delta_rate = 0.5;
  bool use_criterion_b = true;
  double tol = 1e-6;
  int max_outer = 200;
  double max_time_secs = 7200.0;
  // Inner gradient targets are never pushed below gradient_floor * tol * (1 + ||Y||);
  // the nominal targets shrink like 1/sigma_k and eventually fall under the
  // rounding level of the gradient itself.
  double gradient_floor = 1e-2;

  double lambda_min() const { return std::min({h1, h2, 1.0}); }

  void validate() const {
    if (!(h1 > 0.0) || !(h2 > 0.0)) throw InvalidArgument("PalmConfig: proximal scales must be positive");
    if (!(sigma0 > 0.0) || !(sigma_max >= sigma0)) throw InvalidArgument("PalmConfig: invalid sigma range");
    if (!(sigma_growth > 1.0)) throw InvalidArgument("PalmConfig: sigma_growth must exceed 1");
    if (!(eps0 >= 0.0) || !(eps_rate >= 0.0 && eps_rate < 1.0))
      throw InvalidArgument("PalmConfig: eps sequence must be summable");
    if (!(delta0 >= 0.0 && delta0 < 1.0) || !(delta_rate >= 0.0 && delta_rate < 1.0))
      throw InvalidArgument("PalmConfig: delta sequence must be summable and below 1");
    if (!(tol > 0.0)) throw InvalidArgument("PalmConfig: tol must be positive");
    if (max_outer < 1) throw InvalidArgument("PalmConfig: max_outer must be positive");
    if (!(max_time_secs > 0.0)) throw InvalidArgument("PalmConfig: max_time_secs must be positive");
    if (!(gradient_floor >= 0.0)) throw InvalidArgument("PalmConfig: gradient_floor must be nonnegative");
  }
};

/// Outer iterate the subproblem is centred at.
struct PalmAnchor {
  Vector theta;
  Matrix xi;
  Matrix u;
  Matrix v;
};

/// (theta; vec(xi)) with xi stored column-major d x n.
inline Vector stack(const Eigen::Ref<const Vector>& theta, const Eigen::Ref<const Matrix>& xi) {
  Vector out(theta.size() + xi.size());
  out.head(theta.size()) = theta;
  out.tail(xi.size()) = Eigen::Map<const Vector>(xi.data(), xi.size());
  return out;
}

inline std::pair<Vector, Matrix> unstack(const Eigen::Ref<const Vector>& x, Index d, Index n) {
  detail::require_dims(x.size() == n + d * n, "unstack: wrong length");
  return {x.head(n), Eigen::Map<const Matrix>(x.data() + n, d, n)};
}

// ---------------------------------------------------------------------------
// Generalized Hessian

/// sigma [A B]^* Diag(W) [A B] + blockdiag((1 + h1/sigma) I, sigma (I - J_j) + h2/sigma I)
/// acting on stacked vectors. W is the pattern of z > 0 and J_j an element
/// of the generalized Jacobian of Pi_D at w_j.
class SubproblemHessian {
 public:
  SubproblemHessian(const OperatorContext& ctx, MaskPattern mask, std::vector<JacobianElement> jac,
                    double sigma, double h1, double h2)
      : ctx_(&ctx), mask_(std::move(mask)), jac_(std::move(jac)), sigma_(sigma), h1_(h1), h2_(h2) {
    detail::require_dims(mask_.size() == ctx.size(), "SubproblemHessian: mask size mismatch");
    detail::require_dims(static_cast<Index>(jac_.size()) == ctx.size(),
                         "SubproblemHessian: need one Jacobian element per block");
  }

  Index rows() const { return ctx_->size() * (1 + ctx_->dim()); }
  const MaskPattern& mask() const { return mask_; }

  /// Adds mu * I to the xi block (regularized Newton systems).
  void set_shift(double mu) { shift_ = mu; }
  double shift() const { return shift_; }

  void apply(const Eigen::Ref<const Vector>& in, Eigen::Ref<Vector> out) const {
    const Index n = ctx_->size();
    const Index d = ctx_->dim();
    detail::require_dims(in.size() == rows() && out.size() == rows(), "SubproblemHessian: wrong length");
    const double* x = ctx_->x().data();
    const double* dtheta = in.data();
    const double* dxi = in.data() + n;
    double* otheta = out.data();
    double* oxi = out.data() + n;

    out.head(n) = (1.0 + h1_ / sigma_) * in.head(n);
    Vector tmp(d);
    for (Index j = 0; j < n; ++j) {
      Eigen::Map<const Vector> dj(dxi + j * d, d);
      Eigen::Map<Vector> oj(oxi + j * d, d);
      apply_jacobian(jac_[static_cast<std::size_t>(j)], dj, tmp);
      oj = (sigma_ + h2_ / sigma_ + shift_) * dj - sigma_ * tmp;
    }
    for (Index j = 0; j < n; ++j) {
      const double* xj = x + j * d;
      const double* dj = dxi + j * d;
      double* oj = oxi + j * d;
      for (Index i : mask_.rows(j)) {
        const double* xi = x + i * d;
        double m = dtheta[i] - dtheta[j];
        for (Index k = 0; k < d; ++k) m += dj[k] * (xj[k] - xi[k]);
        m *= sigma_;
        otheta[i] += m;
        otheta[j] -= m;
        for (Index k = 0; k < d; ++k) oj[k] += m * (xj[k] - xi[k]);
      }
    }
  }

  Vector apply(const Eigen::Ref<const Vector>& in) const {
    Vector out(in.size());
    apply(in, out);
    return out;
  }

  /// Explicit matrix, assembled from the structured Gram products.
  Matrix dense() const {
    const Index n = ctx_->size();
    const Index d = ctx_->dim();
    const GramProducts g(*ctx_, mask_);
    Matrix h = Matrix::Zero(rows(), rows());
    h.topLeftCorner(n, n) = sigma_ * g.aa();
    h.topLeftCorner(n, n).diagonal().array() += 1.0 + h1_ / sigma_;
    const Matrix ab = sigma_ * g.ab_dense();
    h.topRightCorner(n, d * n) = ab;
    h.bottomLeftCorner(d * n, n) = ab.transpose();
    for (Index j = 0; j < n; ++j) {
      Matrix block = sigma_ * g.bb_block(j);
      block -= sigma_ * dense_jacobian(jac_[static_cast<std::size_t>(j)], d);
      block.diagonal().array() += sigma_ + h2_ / sigma_ + shift_;
      h.block(n + j * d, n + j * d, d, d) = block;
    }
    return h;
  }

  /// Block-Jacobi (or plain Jacobi) preconditioner.
  class Preconditioner_ {
   public:
    void apply(const Eigen::Ref<const Vector>& r, Eigen::Ref<Vector> out) const {
      const Index n = theta_diag.size();
      out.head(n) = r.head(n).cwiseQuotient(theta_diag);
      if (!blocks.empty()) {
        const Index d = blocks.front().matrixLLT().rows();
        for (Index j = 0; j < n; ++j)
          out.segment(n + j * d, d) = blocks[static_cast<std::size_t>(j)].solve(r.segment(n + j * d, d));
      } else {
        out.tail(r.size() - n) = r.tail(r.size() - n).cwiseQuotient(xi_diag);
      }
    }

    Vector theta_diag;
    Vector xi_diag;
    std::vector<Eigen::LLT<Matrix>> blocks;
  };

  Preconditioner_ preconditioner(Preconditioner kind) const {
    const Index n = ctx_->size();
    const Index d = ctx_->dim();
    const Matrix& x = ctx_->x();
    Preconditioner_ p;
    Vector degree = Vector::Zero(n);
    for (Index j = 0; j < n; ++j)
      for (Index i : mask_.rows(j)) {
        degree[i] += 1.0;
        degree[j] += 1.0;
      }
    p.theta_diag = (1.0 + h1_ / sigma_) + sigma_ * degree.array();
    const GramProducts g(*ctx_, mask_);
    if (kind == Preconditioner::BlockDiagonal) {
      p.blocks.resize(static_cast<std::size_t>(n));
      for (Index j = 0; j < n; ++j) {
        Matrix block = sigma_ * g.bb_block(j);
        block -= sigma_ * dense_jacobian(jac_[static_cast<std::size_t>(j)], d);
        block.diagonal().array() += sigma_ + h2_ / sigma_ + shift_;
        p.blocks[static_cast<std::size_t>(j)].compute(block);
      }
    } else {
      p.xi_diag.resize(d * n);
      for (Index j = 0; j < n; ++j) {
        Vector diag = (sigma_ + h2_ / sigma_ + shift_) * Vector::Ones(d) -
                      sigma_ * jacobian_diagonal(jac_[static_cast<std::size_t>(j)], d);
        for (Index i : mask_.rows(j)) diag += sigma_ * (x.col(j) - x.col(i)).cwiseAbs2();
        p.xi_diag.segment(j * d, d) = diag;
      }
    }
    return p;
  }

 private:
  const OperatorContext* ctx_;
  MaskPattern mask_;
  std::vector<JacobianElement> jac_;
  double sigma_;
  double h1_;
  double h2_;
  double shift_ = 0.0;
};

struct PcgResult {
  Vector x;
  int iterations = 0;
  double residual = 0.0;
};

/// Preconditioned conjugate gradients for H x = b, stopping at ||H x - b|| <= tol.
inline PcgResult pcg_solve(const SubproblemHessian& h, const Eigen::Ref<const Vector>& b, double tol,
                           const PcgConfig& cfg) {
  const auto pre = h.preconditioner(cfg.preconditioner);
  PcgResult res;
  res.x = Vector::Zero(b.size());
  Vector r = b;
  Vector z(b.size());
  Vector q(b.size());
  pre.apply(r, z);
  Vector p = z;
  double rz = r.dot(z);
  res.residual = r.norm();
  while (res.residual > tol && res.iterations < cfg.max_iters) {
    h.apply(p, q);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;
    const double alpha = rz / pq;
    res.x += alpha * p;
    r -= alpha * q;
    ++res.iterations;
    res.residual = r.norm();
    if (res.residual <= tol) break;
    pre.apply(r, z);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Subproblem

class PalmSubproblem {
 public:
  /// Quantities cached at one (theta, xi).
  struct Point {
    Vector theta;
    Matrix xi;
    Matrix z;       // u~/sigma - A theta - B xi
    Matrix pos;     // Pi_+(z) with zero diagonal
    Matrix w;       // xi - v~/sigma
    Matrix proj_w;  // Pi_D(w) blockwise
  };

  PalmSubproblem(const ProblemData& p, const OperatorContext& ctx, const ConstraintSet& c,
                 PalmAnchor anchor, double sigma, double h1, double h2)
      : p_(&p), ctx_(&ctx), c_(&c), anchor_(std::move(anchor)), sigma_(sigma), h1_(h1), h2_(h2) {
    if (!(sigma > 0.0)) throw InvalidArgument("PalmSubproblem: sigma must be positive");
    detail::require_dims(anchor_.theta.size() == p.size() && anchor_.xi.rows() == p.dim() &&
                             anchor_.xi.cols() == p.size() && anchor_.u.rows() == p.size() &&
                             anchor_.u.cols() == p.size() && anchor_.v.rows() == p.dim() &&
                             anchor_.v.cols() == p.size(),
                         "PalmSubproblem: anchor dimensions do not match the problem");
  }

  double sigma() const { return sigma_; }
  const PalmAnchor& anchor() const { return anchor_; }
  const ProblemData& problem() const { return *p_; }
  const OperatorContext& context() const { return *ctx_; }
  const ConstraintSet& constraint() const { return *c_; }

  Point evaluate(const Eigen::Ref<const Vector>& theta, const Eigen::Ref<const Matrix>& xi) const {
    Point pt;
    pt.theta = theta;
    pt.xi = xi;
    pt.z = anchor_.u / sigma_ - apply_a(theta) - ctx_->apply_b(xi);
    pt.pos = pt.z.cwiseMax(0.0);
    pt.pos.diagonal().setZero();
    pt.w = xi - anchor_.v / sigma_;
    pt.proj_w = blockwise_prox(*c_, pt.w);
    return pt;
  }

  double value(const Point& pt) const {
    return 0.5 * (pt.theta - p_->y()).squaredNorm() + 0.5 * sigma_ * pt.pos.squaredNorm() +
           0.5 * sigma_ * (pt.w - pt.proj_w).squaredNorm() +
           0.5 * h1_ / sigma_ * (pt.theta - anchor_.theta).squaredNorm() +
           0.5 * h2_ / sigma_ * (pt.xi - anchor_.xi).squaredNorm();
  }

  Vector gradient(const Point& pt) const {
    const Matrix u_new = sigma_ * pt.pos;
    const Vector g_theta = pt.theta - p_->y() - apply_a_adjoint(u_new) +
                           (h1_ / sigma_) * (pt.theta - anchor_.theta);
    const Matrix g_xi = -ctx_->apply_b_adjoint(u_new) + sigma_ * (pt.w - pt.proj_w) +
                        (h2_ / sigma_) * (pt.xi - anchor_.xi);
    return stack(g_theta, g_xi);
  }

  SubproblemHessian hessian(const Point& pt) const {
    return SubproblemHessian(*ctx_, MaskPattern::positive_part(pt.z), blockwise_jacobian(*c_, pt.w),
                             sigma_, h1_, h2_);
  }

  /// d/dalpha Phi(at + alpha (dtheta, dxi)) without forming the trial point.
  double ray_slope(const Point& at, const Eigen::Ref<const Vector>& dtheta,
                   const Eigen::Ref<const Matrix>& dxi, const Eigen::Ref<const Matrix>& dz,
                   double alpha) const {
    double out = (at.theta - p_->y() + (h1_ / sigma_) * (at.theta - anchor_.theta)).dot(dtheta) +
                 alpha * (1.0 + h1_ / sigma_) * dtheta.squaredNorm() +
                 (h2_ / sigma_) * ((at.xi - anchor_.xi).cwiseProduct(dxi).sum() + alpha * dxi.squaredNorm());
    const Index n = at.z.cols();
    double cone = 0.0;
    for (Index j = 0; j < n; ++j)
      for (Index i = 0; i < n; ++i)
        if (i != j) cone += std::max(at.z(i, j) - alpha * dz(i, j), 0.0) * dz(i, j);
    out -= sigma_ * cone;
    if (!c_->is_free()) {
      const Matrix w = at.w + alpha * dxi;
      out += sigma_ * (w - blockwise_prox(*c_, w)).cwiseProduct(dxi).sum();
    }
    return out;
  }

  /// Approximate minimizer over (0, 1] of Phi along a descent direction, by
  /// bisection on the monotone ray derivative.
  double ray_minimizer(const Point& at, const Eigen::Ref<const Vector>& dtheta,
                       const Eigen::Ref<const Matrix>& dxi, const Eigen::Ref<const Matrix>& dz,
                       int steps = 40) const {
    double lo = 0.0;
    double hi = 1.0;
    if (ray_slope(at, dtheta, dxi, dz, hi) <= 0.0) return hi;
    for (int k = 0; k < steps; ++k) {
      const double mid = 0.5 * (lo + hi);
      if (ray_slope(at, dtheta, dxi, dz, mid) <= 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return lo > 0.0 ? lo : hi;
  }

  /// Phi(trial) - Phi(at) for trial = at + alpha * (dtheta, dxi), evaluated
  /// term by term so the difference keeps its relative accuracy when both
  /// values are large and close.
  double difference(const Point& at, const Point& trial, const Eigen::Ref<const Vector>& dtheta,
                    const Eigen::Ref<const Matrix>& dxi, const Eigen::Ref<const Matrix>& dz,
                    double alpha) const {
    const double dt2 = dtheta.squaredNorm();
    const double dx2 = dxi.squaredNorm();
    double diff = alpha * (at.theta - p_->y()).dot(dtheta) + 0.5 * alpha * alpha * dt2;
    diff += h1_ / sigma_ * (alpha * (at.theta - anchor_.theta).dot(dtheta) + 0.5 * alpha * alpha * dt2);
    diff += h2_ / sigma_ * (alpha * (at.xi - anchor_.xi).cwiseProduct(dxi).sum() + 0.5 * alpha * alpha * dx2);

    // z(trial) = z(at) - alpha * dz
    double cone = 0.0;
    const Index n = at.z.cols();
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        if (i == j) continue;
        const double a = at.pos(i, j);
        const double b = trial.pos(i, j);
        if (a == 0.0 && b == 0.0) continue;
        const double delta = (a > 0.0 && b > 0.0) ? -alpha * dz(i, j) : b - a;
        cone += delta * (a + b);
      }
    }
    diff += 0.5 * sigma_ * cone;

    if (!c_->is_free()) {
      // r = w - Pi(w); r(trial) - r(at) = alpha dxi - (Pi(w') - Pi(w))
      const Matrix r_at = at.w - at.proj_w;
      const Matrix r_trial = trial.w - trial.proj_w;
      const Matrix dr = alpha * dxi - (trial.proj_w - at.proj_w);
      diff += 0.5 * sigma_ * dr.cwiseProduct(r_at + r_trial).sum();
    }
    return diff;
  }

 private:
  const ProblemData* p_;
  const OperatorContext* ctx_;
  const ConstraintSet* c_;
  PalmAnchor anchor_;
  double sigma_;
  double h1_;
  double h2_;
};

/// Gradient of the subproblem objective, stacked as (theta; vec(xi)).
inline Vector palm_subproblem_gradient(const PalmSubproblem& sub, const Eigen::Ref<const Vector>& theta,
                                       const Eigen::Ref<const Matrix>& xi) {
  return sub.gradient(sub.evaluate(theta, xi));
}

inline SubproblemHessian assemble_hessian_action(const PalmSubproblem& sub,
                                                 const Eigen::Ref<const Vector>& theta,
                                                 const Eigen::Ref<const Matrix>& xi) {
  return sub.hessian(sub.evaluate(theta, xi));
}

/// u = sigma Pi_+(u~/sigma - A theta - B xi), v = -sigma (w - Pi_D(w)).
inline std::pair<Matrix, Matrix> multiplier_update(const PalmSubproblem& sub,
                                                   const PalmSubproblem::Point& pt) {
  return {sub.sigma() * pt.pos, -sub.sigma() * (pt.w - pt.proj_w)};
}

inline std::pair<Matrix, Matrix> multiplier_update(const ProblemData& p, const OperatorContext& ctx,
                                                   const ConstraintSet& c,
                                                   const Eigen::Ref<const Vector>& theta,
                                                   const Eigen::Ref<const Matrix>& xi,
                                                   const Eigen::Ref<const Matrix>& u_prev,
                                                   const Eigen::Ref<const Matrix>& v_prev, double sigma) {
  PalmAnchor anchor{theta, xi, u_prev, v_prev};
  const PalmSubproblem sub(p, ctx, c, std::move(anchor), sigma, 1.0, 1.0);
  return multiplier_update(sub, sub.evaluate(theta, xi));
}

// ---------------------------------------------------------------------------
// Semismooth Newton

struct SsnStats {
  int iterations = 0;
  int cg_iterations = 0;
  int backtracks = 0;
  bool converged = false;
  std::vector<double> grad_norms;
  std::vector<int> step_exponents;  // m_j of the accepted step delta^m
};

/// Stop test on the current point and its gradient norm.
using SsnStopRule = std::function<bool(const PalmSubproblem::Point&, double)>;

/// Minimizes the subproblem from (theta, xi), which are overwritten with the
/// final point. Throws NumericalError when the line search fails.
inline SsnStats ssn_solve(const PalmSubproblem& sub, Vector& theta, Matrix& xi, const SsnConfig& cfg,
                          const SsnStopRule& stop) {
  const Index n = theta.size();
  const Index d = xi.rows();
  SsnStats stats;
  PalmSubproblem::Point pt = sub.evaluate(theta, xi);
  while (true) {
    const Vector g = sub.gradient(pt);
    const double gnorm = g.norm();
    stats.grad_norms.push_back(gnorm);
    if (!std::isfinite(gnorm)) throw NumericalError("ssn_solve: non-finite gradient");
    if (stop(pt, gnorm)) {
      stats.converged = true;
      break;
    }
    if (stats.iterations >= cfg.max_iters) break;

    SubproblemHessian h = sub.hessian(pt);
    h.set_shift(cfg.reg_scale * std::pow(gnorm, cfg.reg_exp));
    Vector dir;
    if (h.rows() <= cfg.direct_limit) {
      const Matrix hd = h.dense();
      Eigen::LLT<Matrix> llt(hd);
      if (llt.info() != Eigen::Success) throw NumericalError("ssn_solve: Hessian factorization failed");
      dir = llt.solve(-g);
    } else {
      const double tol = std::min(cfg.gamma_bar, std::pow(gnorm, 1.0 + cfg.tau_exp));
      PcgResult r = pcg_solve(h, -g, tol, cfg.pcg);
      stats.cg_iterations += r.iterations;
      dir = std::move(r.x);
    }
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      dir = -g;
      slope = -gnorm * gnorm;
    }
    const auto [dtheta, dxi] = unstack(dir, d, n);
    const Matrix dz = apply_a(dtheta) + sub.context().apply_b(dxi);

    double alpha = 1.0;
    int m = 0;
    bool accepted = false;
    PalmSubproblem::Point trial;
    for (; m <= cfg.max_backtracks; ++m) {
      trial = sub.evaluate(pt.theta + alpha * dtheta, pt.xi + alpha * dxi);
      const double diff = sub.difference(pt, trial, dtheta, dxi, dz, alpha);
      // Convexity gives Phi(alpha) - Phi(0) <= alpha * slope(alpha), so the slope
      // test implies the decrease test; it stays exact once the decrease itself
      // drops under the rounding level of the function difference.
      if (diff <= cfg.mu_ls * alpha * slope ||
          sub.ray_slope(pt, dtheta, dxi, dz, alpha) <= cfg.mu_ls * slope) {
        accepted = true;
        break;
      }
      if (m == 0 && cfg.exact_restart) {
        // Restart the backtracking from the minimizer along the ray.
        const double star = sub.ray_minimizer(pt, dtheta, dxi, dz);
        while (alpha * cfg.delta_ls > star && m < cfg.max_backtracks) {
          alpha *= cfg.delta_ls;
          ++m;
        }
        alpha = std::max(star, alpha * cfg.delta_ls);
        continue;
      }
      alpha *= cfg.delta_ls;
    }
    if (!accepted)
      throw NumericalError("ssn_solve: line search failed after " + std::to_string(cfg.max_backtracks) +
                           " backtracks (gradient norm " + std::to_string(gnorm) + ")");
    stats.backtracks += m;
    stats.step_exponents.push_back(m);
    pt = std::move(trial);
    ++stats.iterations;
  }
  theta = pt.theta;
  xi = pt.xi;
  return stats;
}

// ---------------------------------------------------------------------------
// Outer loop

struct PalmState {
  Vector theta;
  Matrix xi;
  Matrix u;
  Matrix v;
  double sigma = 1.0;
};

struct PalmResult {
  FittedModel model;
  SolverReport report;
  PalmState state;
  std::vector<SsnStats> inner;  // one entry per outer iteration
  std::string diagnostic;       // set when the inner solver gave up
};

inline PalmState palm_initial_state(const ProblemData& p, double sigma) {
  return {p.y(), Matrix::Zero(p.dim(), p.size()), Matrix::Zero(p.size(), p.size()),
          Matrix::Zero(p.dim(), p.size()), sigma};
}

inline PalmResult palm_fit(const ProblemData& p, const ConstraintSet& c, const PalmConfig& cfg = {},
                           const SsnConfig& ssn = {}, std::optional<PalmState> init = std::nullopt,
                           const TraceSink& trace = nullptr) {
  cfg.validate();
  ssn.validate();
  c.validate(p.dim(), p.size());
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  const OperatorContext ctx(p.x());
  PalmState state = init ? std::move(*init) : palm_initial_state(p, cfg.sigma0);
  if (!(state.sigma > 0.0)) state.sigma = cfg.sigma0;
  const double lambda = cfg.lambda_min();
  const double floor = cfg.gradient_floor * cfg.tol * (1.0 + p.y().norm());

  PalmResult out;
  SolverReport& report = out.report;
  report.solver = "palm";
  report.termination = Termination::MaxIterations;

  for (int k = 0; k < cfg.max_outer; ++k) {
    const double sigma = state.sigma;
    const double eps_k = cfg.eps0 * std::pow(cfg.eps_rate, k);
    const double delta_k = cfg.delta0 * std::pow(cfg.delta_rate, k);
    const double target_a = std::max(lambda / sigma * eps_k, floor);

    PalmAnchor anchor{state.theta, state.xi, state.u, state.v};
    const PalmSubproblem sub(p, ctx, c, anchor, sigma, cfg.h1, cfg.h2);

    SsnStopRule stop = [&](const PalmSubproblem::Point& pt, double gnorm) {
      if (gnorm > target_a) return false;
      if (!cfg.use_criterion_b) return true;
      const auto [u_new, v_new] = multiplier_update(sub, pt);
      const double change = std::sqrt(cfg.h1 * (pt.theta - state.theta).squaredNorm() +
                                      cfg.h2 * (pt.xi - state.xi).squaredNorm() +
                                      (u_new - state.u).squaredNorm() + (v_new - state.v).squaredNorm());
      return gnorm <= std::max(delta_k * lambda / sigma * change, floor);
    };

    Vector theta = state.theta;
    Matrix xi = state.xi;
    SsnStats stats;
    try {
      stats = ssn_solve(sub, theta, xi, ssn, stop);
    } catch (const NumericalError& e) {
      out.diagnostic = e.what();
      report.termination = Termination::InnerFailure;
      break;
    }
    report.inner_iterations += stats.iterations;
    report.cg_iterations += stats.cg_iterations;
    const double gnorm = stats.grad_norms.back();
    const bool inner_ok = stats.converged;
    out.inner.push_back(std::move(stats));

    const PalmSubproblem::Point pt = sub.evaluate(theta, xi);
    auto [u_new, v_new] = multiplier_update(sub, pt);
    state.theta = std::move(theta);
    state.xi = std::move(xi);
    state.u = std::move(u_new);
    state.v = std::move(v_new);
    report.iterations = k + 1;

    const KktResiduals res = kkt_residuals(p, ctx, state.theta, state.xi, state.u, state.v, c);
    report.residuals = res;
    if (trace) {
      TraceRecord r;
      r.iteration = k + 1;
      r.inner_iterations = out.inner.back().iterations;
      r.cg_iterations = out.inner.back().cg_iterations;
      r.grad_norm = gnorm;
      r.primal_residual = res.primal;
      r.dual_residual = res.dual;
      r.complementarity = res.complementarity;
      r.objective = 0.5 * (state.theta - p.y()).squaredNorm();
      r.sigma = sigma;
      r.elapsed = elapsed();
      trace(r);
    }
    if (res.max() <= cfg.tol) {
      report.termination = Termination::Converged;
      break;
    }
    if (!inner_ok) {
      out.diagnostic = "inner solver reached its iteration limit with gradient norm " +
                       std::to_string(gnorm) + " above target " + std::to_string(target_a);
      report.termination = Termination::InnerFailure;
      break;
    }
    if (elapsed() >= cfg.max_time_secs) {
      report.termination = Termination::MaxTime;
      break;
    }
    state.sigma = std::min(cfg.sigma_max, cfg.sigma_growth * sigma);
  }

  report.primal_objective = 0.5 * (state.theta - p.y()).squaredNorm();
  const ObjectiveValue dual = dual_objective(p, DualState{state.u, state.v}, c, cfg.tol);
  report.dual_objective = dual.finite ? dual.value : -std::numeric_limits<double>::infinity();
  report.final_sigma = state.sigma;
  report.seconds = elapsed();
  out.model = make_model(p.x(), state.theta, state.xi, c);
  out.state = std::move(state);
  return out;
}

}  // namespace shapereg
