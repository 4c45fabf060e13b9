#pragma once

// Implicit linear operators of the convexity constraints:
//   (A theta)_{ij} = theta_i - theta_j
//   (B xi)_{ij}    = <xi_j, X_j - X_i>      (column j is B_j xi_j)
// Neither operator is ever stored as a matrix.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <vector>

#include "shapereg/error.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

inline Matrix apply_a(const Eigen::Ref<const Vector>& theta) {
  const Index n = theta.size();
  return theta * Vector::Ones(n).transpose() - Vector::Ones(n) * theta.transpose();
}

/// A^* Z = (Z - Z^T) e
inline Vector apply_a_adjoint(const Eigen::Ref<const Matrix>& z) {
  detail::require_dims(z.rows() == z.cols(), "apply_a_adjoint: Z must be square");
  return z.rowwise().sum() - z.colwise().sum().transpose();
}

/// (I + sigma A^* A)^{-1} rhs via A^*A = 2n I - 2 e e^T.
inline Vector solve_theta_system(const Eigen::Ref<const Vector>& rhs, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("solve_theta_system: sigma must be positive");
  const double n = static_cast<double>(rhs.size());
  return (rhs.array() + 2.0 * sigma * rhs.sum()).matrix() / (1.0 + 2.0 * sigma * n);
}

/// Column lists of a 0-1 mask: rows(j) holds every i != j with mask(i, j) = 1.
class MaskPattern {
 public:
  MaskPattern() = default;
  explicit MaskPattern(Index n) : rows_(static_cast<std::size_t>(n)) {}

  /// Pattern of entries z_ij > 0 (off-diagonal).
  static MaskPattern positive_part(const Eigen::Ref<const Matrix>& z) {
    MaskPattern p(z.cols());
    for (Index j = 0; j < z.cols(); ++j) {
      auto& r = p.rows_[static_cast<std::size_t>(j)];
      for (Index i = 0; i < z.rows(); ++i)
        if (i != j && z(i, j) > 0.0) r.push_back(i);
    }
    return p;
  }

  /// Pattern of a 0-1 matrix; throws on non-binary entries.
  static MaskPattern from_binary(const Eigen::Ref<const Matrix>& w) {
    detail::require_dims(w.rows() == w.cols(), "mask must be square");
    MaskPattern p(w.cols());
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) {
        const double v = w(i, j);
        if (v != 0.0 && v != 1.0) throw InvalidArgument("mask entries must be 0 or 1");
        if (i != j && v == 1.0) p.rows_[static_cast<std::size_t>(j)].push_back(i);
      }
    }
    return p;
  }

  Index size() const { return static_cast<Index>(rows_.size()); }
  const std::vector<Index>& rows(Index j) const { return rows_[static_cast<std::size_t>(j)]; }

  std::size_t nonzeros() const {
    std::size_t total = 0;
    for (const auto& r : rows_) total += r.size();
    return total;
  }

 private:
  std::vector<std::vector<Index>> rows_;
};

/// Operators built on a fixed predictor matrix X (d x n) with the per-block
/// Gram matrices G_i = B_i^T B_i and Cholesky factors of I + G_i cached.
class OperatorContext {
 public:
  explicit OperatorContext(Matrix x) : x_(std::move(x)) {
    const Index n = x_.cols();
    if (!x_.allFinite()) throw NumericalError("OperatorContext: non-finite predictors");
    // G_i = sum_k (X_i - X_k)(X_i - X_k)^T = n X_i X_i^T - X_i s^T - s X_i^T + X X^T
    const Vector s = x_.rowwise().sum();
    const Matrix xxt = x_ * x_.transpose();
    gram_.resize(static_cast<std::size_t>(n));
    factors_.resize(static_cast<std::size_t>(n));
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Index i = 0; i < n; ++i) {
      const Vector xi = x_.col(i);
      Matrix g = static_cast<double>(n) * xi * xi.transpose() - xi * s.transpose() -
                 s * xi.transpose() + xxt;
      g = 0.5 * (g + g.transpose());
      Matrix m = g;
      m.diagonal().array() += 1.0;
      factors_[static_cast<std::size_t>(i)].compute(m);
      gram_[static_cast<std::size_t>(i)] = std::move(g);
    }
    for (Index i = 0; i < n; ++i)
      if (factors_[static_cast<std::size_t>(i)].info() != Eigen::Success)
        throw NumericalError("OperatorContext: Cholesky of I + G_i failed");
  }

  const Matrix& x() const { return x_; }
  Index dim() const { return x_.rows(); }
  Index size() const { return x_.cols(); }
  const Matrix& gram(Index i) const { return gram_[static_cast<std::size_t>(i)]; }

  /// B xi, xi stored d x n.
  Matrix apply_b(const Eigen::Ref<const Matrix>& xi) const {
    check_xi(xi, "apply_b");
    const Vector c = x_.cwiseProduct(xi).colwise().sum().transpose();
    Matrix out = -(x_.transpose() * xi);
    out.rowwise() += c.transpose();
    return out;
  }

  /// B^* Z = X Diag(Z^T e) - X Z, returned d x n.
  Matrix apply_b_adjoint(const Eigen::Ref<const Matrix>& z) const {
    detail::require_dims(z.rows() == size() && z.cols() == size(),
                         "apply_b_adjoint: Z must be n x n");
    Matrix out = x_ * z;
    const Vector colsum = z.colwise().sum().transpose();
    out = x_ * colsum.asDiagonal() - out;
    return out;
  }

  /// Blockwise solve of (I + B^* B) xi = rhs.
  Matrix solve_xi_system(const Eigen::Ref<const Matrix>& rhs) const {
    check_xi(rhs, "solve_xi_system");
    Matrix out(rhs.rows(), rhs.cols());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (Index i = 0; i < rhs.cols(); ++i)
      out.col(i) = factors_[static_cast<std::size_t>(i)].solve(rhs.col(i));
    return out;
  }

  /// B_i as an explicit n x d matrix (row k is X_i - X_k).
  Matrix block_b(Index i) const {
    Matrix out = -x_.transpose();
    out.rowwise() += x_.col(i).transpose();
    return out;
  }

 private:
  void check_xi(const Eigen::Ref<const Matrix>& xi, const char* who) const {
    detail::require_dims(xi.rows() == dim() && xi.cols() == size(),
                         std::string(who) + ": xi must be d x n");
  }

  Matrix x_;
  std::vector<Matrix> gram_;
  std::vector<Eigen::LLT<Matrix>> factors_;
};

/// Products of [A B]^* Diag(W) [A B] for a 0-1 mask W, computed by restricting
/// B_j to the rows selected by column j of the mask.
class GramProducts {
 public:
  GramProducts(const OperatorContext& ctx, MaskPattern mask)
      : ctx_(&ctx), mask_(std::move(mask)) {
    detail::require_dims(mask_.size() == ctx.size(), "GramProducts: mask size mismatch");
  }

  GramProducts(const OperatorContext& ctx, const Eigen::Ref<const Matrix>& w)
      : GramProducts(ctx, MaskPattern::from_binary(w)) {}

  const MaskPattern& mask() const { return mask_; }

  /// A^* W A = Diag(W e) + Diag(W^T e) - W - W^T
  Matrix aa() const {
    const Index n = ctx_->size();
    Matrix out = Matrix::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
      for (Index i : mask_.rows(j)) {
        out(i, i) += 1.0;
        out(j, j) += 1.0;
        out(i, j) -= 1.0;
        out(j, i) -= 1.0;
      }
    }
    return out;
  }

  /// (A^* W B) xi
  Vector apply_ab(const Eigen::Ref<const Matrix>& xi) const {
    const Matrix& x = ctx_->x();
    Vector out = Vector::Zero(ctx_->size());
    for (Index j = 0; j < ctx_->size(); ++j) {
      const double xj = x.col(j).dot(xi.col(j));
      for (Index i : mask_.rows(j)) {
        const double val = xj - x.col(i).dot(xi.col(j));
        out[i] += val;
        out[j] -= val;
      }
    }
    return out;
  }

  /// (B^* W A) theta, d x n
  Matrix apply_ba(const Eigen::Ref<const Vector>& theta) const {
    const Matrix& x = ctx_->x();
    Matrix out = Matrix::Zero(ctx_->dim(), ctx_->size());
    for (Index j = 0; j < ctx_->size(); ++j)
      for (Index i : mask_.rows(j)) out.col(j) += (theta[i] - theta[j]) * (x.col(j) - x.col(i));
    return out;
  }

  /// B_j^T Diag(W_j) B_j
  Matrix bb_block(Index j) const {
    const Matrix& x = ctx_->x();
    const Index d = ctx_->dim();
    const auto& rows = mask_.rows(j);
    Matrix diff(d, static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k)
      diff.col(static_cast<Index>(k)) = x.col(j) - x.col(rows[k]);
    Matrix out = Matrix::Zero(d, d);
    out.selfadjointView<Eigen::Lower>().rankUpdate(diff);
    return out.selfadjointView<Eigen::Lower>();
  }

  std::vector<Matrix> bb_blocks() const {
    std::vector<Matrix> out(static_cast<std::size_t>(ctx_->size()));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 16)
#endif
    for (Index j = 0; j < ctx_->size(); ++j) out[static_cast<std::size_t>(j)] = bb_block(j);
    return out;
  }

  /// (B^* W B) xi, d x n
  Matrix apply_bb(const Eigen::Ref<const Matrix>& xi) const {
    const Matrix& x = ctx_->x();
    Matrix out = Matrix::Zero(ctx_->dim(), ctx_->size());
    for (Index j = 0; j < ctx_->size(); ++j) {
      for (Index i : mask_.rows(j)) {
        const auto diff = x.col(j) - x.col(i);
        out.col(j) += diff.dot(xi.col(j)) * diff;
      }
    }
    return out;
  }

  /// A^* W B as an explicit n x dn matrix; for dense assembly and tests.
  Matrix ab_dense() const {
    const Matrix& x = ctx_->x();
    const Index n = ctx_->size();
    const Index d = ctx_->dim();
    Matrix out = Matrix::Zero(n, d * n);
    for (Index j = 0; j < n; ++j) {
      for (Index i : mask_.rows(j)) {
        const Vector diff = x.col(j) - x.col(i);
        out.block(i, j * d, 1, d) += diff.transpose();
        out.block(j, j * d, 1, d) -= diff.transpose();
      }
    }
    return out;
  }

 private:
  const OperatorContext* ctx_;
  MaskPattern mask_;
};

/// Entry point matching the operator-bundle view: products for mask W.
inline GramProducts structured_gram_products(const OperatorContext& ctx,
                                             const Eigen::Ref<const Matrix>& w) {
  return GramProducts(ctx, w);
}

}  // namespace shapereg
