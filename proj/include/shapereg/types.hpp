#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "shapereg/error.hpp"

namespace shapereg {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Observations of a regression problem. Column i of `x()` is the predictor
/// X_i, entry i of `y()` the response Y_i.
class ProblemData {
 public:
  ProblemData() = default;

  ProblemData(Matrix x, Vector y) : x_(std::move(x)), y_(std::move(y)) {
    if (x_.cols() != y_.size())
      throw DimensionError("ProblemData: X has " + std::to_string(x_.cols()) +
                           " columns but Y has " + std::to_string(y_.size()) +
                           " entries");
    if (x_.rows() < 1) throw DimensionError("ProblemData: d must be positive");
    if (y_.size() < 2)
      throw InvalidArgument("ProblemData: at least two observations are required");
    if (!x_.allFinite() || !y_.allFinite())
      throw InvalidArgument("ProblemData: non-finite predictor or response");
  }

  const Matrix& x() const { return x_; }
  const Vector& y() const { return y_; }
  Index dim() const { return x_.rows(); }
  Index size() const { return x_.cols(); }

 private:
  Matrix x_;
  Vector y_;
};

/// Primal iterate (theta, xi, y, eta). xi and y are stored d x n with block i
/// in column i, which is the same memory layout as the stacked vector.
struct PrimalState {
  Vector theta;
  Matrix xi;
  Matrix y;
  Matrix eta;

  static PrimalState zeros(Index d, Index n) {
    return {Vector::Zero(n), Matrix::Zero(d, n), Matrix::Zero(d, n), Matrix::Zero(n, n)};
  }
};

/// Dual iterate (u, v) with u in R^{n x n} and v stored d x n.
struct DualState {
  Matrix u;
  Matrix v;

  static DualState zeros(Index d, Index n) { return {Matrix::Zero(n, n), Matrix::Zero(d, n)}; }
};

/// Value of an extended-real objective. `finite == false` stands for +inf
/// (primal) or -inf (dual); `value` then holds the finite part only.
struct ObjectiveValue {
  double value = 0.0;
  bool finite = true;
};

/// Centering and scaling applied to the rows of X and to Y.
struct StandardizationRecord {
  Vector x_mean;
  Vector x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
};

enum class Termination { Converged, MaxIterations, MaxTime, InnerFailure };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "converged";
    case Termination::MaxIterations: return "max_iterations";
    case Termination::MaxTime: return "max_time";
    case Termination::InnerFailure: return "inner_failure";
  }
  return "unknown";
}

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;

  double max() const { return std::max({primal, dual, complementarity}); }
};

struct SolverReport {
  std::string solver;
  Termination termination = Termination::MaxIterations;
  int iterations = 0;
  int inner_iterations = 0;  // SSN steps (pALM only)
  int cg_iterations = 0;     // PCG steps (pALM only)
  KktResiduals residuals;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
  double seconds = 0.0;
  double final_sigma = 0.0;

  bool converged() const { return termination == Termination::Converged; }

  /// Iteration count in the "outer(inner)" form used for pALM tables.
  std::string iteration_summary() const {
    if (inner_iterations > 0 || solver == "palm")
      return std::to_string(iterations) + "(" + std::to_string(inner_iterations) + ")";
    return std::to_string(iterations);
  }
};

}  // namespace shapereg
