#pragma once

// Constraint sets D for the subgradients of the fitted function: projections,
// generalized Jacobians of the projections and support functions.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "shapereg/error.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

enum class Norm { One, Two, Inf };

/// Conjugate exponent: 1/p + 1/q = 1.
constexpr Norm dual_norm(Norm q) {
  switch (q) {
    case Norm::One: return Norm::Inf;
    case Norm::Two: return Norm::Two;
    case Norm::Inf: return Norm::One;
  }
  return Norm::Two;
}

inline const char* to_string(Norm q) {
  switch (q) {
    case Norm::One: return "1";
    case Norm::Two: return "2";
    case Norm::Inf: return "inf";
  }
  return "?";
}

template <class Derived>
double norm(const Eigen::MatrixBase<Derived>& x, Norm q) {
  switch (q) {
    case Norm::One: return x.template lpNorm<1>();
    case Norm::Two: return x.norm();
    case Norm::Inf: return x.size() == 0 ? 0.0 : x.template lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

class ConstraintSet;

/// D = R^d.
struct Free {};

/// Nondecreasing in the coordinates of `nondecreasing` (K1), nonincreasing in
/// `nonincreasing` (K2). Indices are zero-based.
struct Monotone {
  std::vector<Index> nondecreasing;
  std::vector<Index> nonincreasing;
};

/// lower <= x <= upper, infinite entries allowed for one-sided bounds.
struct Box {
  Vector lower;
  Vector upper;
};

/// ||x||_q <= radius.
struct LipschitzBall {
  Norm q = Norm::Two;
  double radius = 1.0;
};

/// One set per observation (D_i for block i).
struct PerPoint {
  std::vector<ConstraintSet> sets;
};

class ConstraintSet {
 public:
  using Variant = std::variant<Free, Monotone, Box, LipschitzBall, PerPoint>;

  ConstraintSet() = default;
  ConstraintSet(Free f) : v_(f) {}
  ConstraintSet(Monotone m) : v_(std::move(m)) { check_monotone(std::get<Monotone>(v_)); }
  ConstraintSet(Box b) : v_(std::move(b)) { check_box(std::get<Box>(v_)); }
  ConstraintSet(LipschitzBall l) : v_(l) {
    if (!(l.radius > 0.0) || !std::isfinite(l.radius))
      throw InvalidArgument("LipschitzBall: radius must be positive and finite");
  }
  ConstraintSet(PerPoint p) : v_(std::move(p)) {
    for (const auto& s : std::get<PerPoint>(v_).sets)
      if (s.is_per_point()) throw InvalidArgument("PerPoint: nested per-point sets");
  }

  static ConstraintSet free() { return ConstraintSet(Free{}); }
  static ConstraintSet monotone(std::vector<Index> k1, std::vector<Index> k2) {
    return ConstraintSet(Monotone{std::move(k1), std::move(k2)});
  }
  static ConstraintSet box(Vector lower, Vector upper) {
    return ConstraintSet(Box{std::move(lower), std::move(upper)});
  }
  static ConstraintSet lipschitz(Norm q, double radius) {
    return ConstraintSet(LipschitzBall{q, radius});
  }
  static ConstraintSet per_point(std::vector<ConstraintSet> sets) {
    return ConstraintSet(PerPoint{std::move(sets)});
  }

  const Variant& variant() const { return v_; }
  bool is_per_point() const { return std::holds_alternative<PerPoint>(v_); }
  bool is_free() const { return std::holds_alternative<Free>(v_); }

  /// The set that applies to block i.
  const ConstraintSet& block(Index i) const {
    if (const auto* p = std::get_if<PerPoint>(&v_)) return p->sets[static_cast<std::size_t>(i)];
    return *this;
  }

  /// Throws unless the set is usable with d-dimensional blocks and n blocks.
  void validate(Index d, Index n) const {
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Monotone>) {
            for (Index k : s.nondecreasing)
              if (k < 0 || k >= d) throw InvalidArgument("Monotone: coordinate out of range");
            for (Index k : s.nonincreasing)
              if (k < 0 || k >= d) throw InvalidArgument("Monotone: coordinate out of range");
          } else if constexpr (std::is_same_v<T, Box>) {
            if (s.lower.size() != d || s.upper.size() != d)
              throw DimensionError("Box: bounds must have length d");
          } else if constexpr (std::is_same_v<T, PerPoint>) {
            if (static_cast<Index>(s.sets.size()) != n)
              throw DimensionError("PerPoint: expected " + std::to_string(n) + " sets, got " +
                                   std::to_string(s.sets.size()));
            for (const auto& b : s.sets) b.validate(d, n);
          }
        },
        v_);
  }

  /// True if the set is a convex cone (support function is an indicator).
  bool is_cone() const {
    return std::holds_alternative<Free>(v_) || std::holds_alternative<Monotone>(v_);
  }

 private:
  static void check_monotone(const Monotone& m) {
    for (Index a : m.nondecreasing)
      for (Index b : m.nonincreasing)
        if (a == b) throw InvalidArgument("Monotone: K1 and K2 must be disjoint");
  }
  static void check_box(const Box& b) {
    if (b.lower.size() != b.upper.size()) throw DimensionError("Box: bound lengths differ");
    for (Index k = 0; k < b.lower.size(); ++k) {
      if (std::isnan(b.lower[k]) || std::isnan(b.upper[k]))
        throw InvalidArgument("Box: NaN bound");
      if (b.lower[k] > b.upper[k]) throw InvalidArgument("Box: lower bound exceeds upper bound");
      if (b.lower[k] == std::numeric_limits<double>::infinity() ||
          b.upper[k] == -std::numeric_limits<double>::infinity())
        throw InvalidArgument("Box: empty coordinate range");
    }
  }

  Variant v_;
};

// ---------------------------------------------------------------------------
// Projections

/// Euclidean projection onto the unit simplex {x >= 0, sum x = 1}; sort based,
/// O(d log d).
inline Vector project_simplex(const Eigen::Ref<const Vector>& x) {
  const Index d = x.size();
  if (d == 0) throw DimensionError("project_simplex: empty vector");
  std::vector<double> sorted(x.data(), x.data() + d);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumsum = 0.0;
  double threshold = 0.0;
  for (Index j = 0; j < d; ++j) {
    cumsum += sorted[static_cast<std::size_t>(j)];
    const double t = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (sorted[static_cast<std::size_t>(j)] - t > 0.0) threshold = t;
  }
  return (x.array() - threshold).max(0.0).matrix();
}

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void project_l1(const Eigen::Ref<const Vector>& x, double radius, Eigen::Ref<Vector> out) {
  if (x.lpNorm<1>() <= radius) {
    out = x;
    return;
  }
  const Vector p = project_simplex(x.cwiseAbs() / radius);
  for (Index k = 0; k < x.size(); ++k) out[k] = radius * sign(x[k]) * p[k];
}

}  // namespace detail

/// Writes Pi_D(x) into out. `c` must not be a PerPoint set.
inline void project_to(const ConstraintSet& c, const Eigen::Ref<const Vector>& x,
                       Eigen::Ref<Vector> out) {
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Free>) {
          out = x;
        } else if constexpr (std::is_same_v<T, Monotone>) {
          out = x;
          for (Index k : s.nondecreasing) out[k] = std::max(x[k], 0.0);
          for (Index k : s.nonincreasing) out[k] = std::min(x[k], 0.0);
        } else if constexpr (std::is_same_v<T, Box>) {
          detail::require_dims(s.lower.size() == x.size(), "project: box dimension mismatch");
          for (Index k = 0; k < x.size(); ++k) out[k] = std::clamp(x[k], s.lower[k], s.upper[k]);
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          const double r = s.radius;
          switch (s.q) {
            case Norm::Inf:
              for (Index k = 0; k < x.size(); ++k) out[k] = std::clamp(x[k], -r, r);
              break;
            case Norm::Two: {
              const double nx = x.norm();
              if (nx <= r)
                out = x;
              else
                out = (r / nx) * x;
              break;
            }
            case Norm::One:
              detail::project_l1(x, r, out);
              break;
          }
        } else {
          throw InvalidArgument("project: per-point sets must be projected block by block");
        }
      },
      c.variant());
}

inline Vector project(const ConstraintSet& c, const Eigen::Ref<const Vector>& x) {
  if (!x.allFinite()) throw InvalidArgument("project: non-finite input");
  Vector out(x.size());
  project_to(c, x, out);
  return out;
}

// ---------------------------------------------------------------------------
// Generalized Jacobians

struct IdentityJacobian {};

/// Diag(mask) with 0/1 entries.
struct DiagonalJacobian {
  Vector mask;
};

/// scale * (I - x x^T / ||x||^2)
struct ScaledProjectorJacobian {
  double scale = 1.0;
  Vector direction;  // x / ||x||
};

/// P_x (Diag(r) - r r^T / nnz(r)) P_x, stored as Diag(|s|) - s s^T / nnz with
/// s = P_x r.
struct SignedSimplexJacobian {
  Vector signed_support;
  double count = 1.0;
};

using JacobianElement =
    std::variant<IdentityJacobian, DiagonalJacobian, ScaledProjectorJacobian, SignedSimplexJacobian>;

/// out = J * v
inline void apply_jacobian(const JacobianElement& j, const Eigen::Ref<const Vector>& v,
                           Eigen::Ref<Vector> out) {
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityJacobian>) {
          out = v;
        } else if constexpr (std::is_same_v<T, DiagonalJacobian>) {
          out = e.mask.cwiseProduct(v);
        } else if constexpr (std::is_same_v<T, ScaledProjectorJacobian>) {
          out = e.scale * (v - e.direction * e.direction.dot(v));
        } else {
          const Vector& s = e.signed_support;
          out = s.cwiseAbs().cwiseProduct(v) - s * (s.dot(v) / e.count);
        }
      },
      j);
}

inline Matrix dense_jacobian(const JacobianElement& j, Index d) {
  return std::visit(
      [&](const auto& e) -> Matrix {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityJacobian>) {
          return Matrix::Identity(d, d);
        } else if constexpr (std::is_same_v<T, DiagonalJacobian>) {
          return e.mask.asDiagonal();
        } else if constexpr (std::is_same_v<T, ScaledProjectorJacobian>) {
          return e.scale * (Matrix::Identity(d, d) - e.direction * e.direction.transpose());
        } else {
          const Vector& s = e.signed_support;
          Matrix m = s.cwiseAbs().asDiagonal();
          m -= s * s.transpose() / e.count;
          return m;
        }
      },
      j);
}

/// Diagonal of J.
inline Vector jacobian_diagonal(const JacobianElement& j, Index d) {
  return std::visit(
      [&](const auto& e) -> Vector {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, IdentityJacobian>) {
          return Vector::Ones(d);
        } else if constexpr (std::is_same_v<T, DiagonalJacobian>) {
          return e.mask;
        } else if constexpr (std::is_same_v<T, ScaledProjectorJacobian>) {
          return e.scale * (Vector::Ones(d) - e.direction.cwiseAbs2());
        } else {
          return e.signed_support.cwiseAbs() - e.signed_support.cwiseAbs2() / e.count;
        }
      },
      j);
}

/// A deterministic element of the generalized Jacobian of Pi_D at x. At kinks
/// the inactive branch (value 1, identity) is selected.
inline JacobianElement jacobian_element(const ConstraintSet& c, const Eigen::Ref<const Vector>& x) {
  return std::visit(
      [&](const auto& s) -> JacobianElement {
        using T = std::decay_t<decltype(s)>;
        const Index d = x.size();
        if constexpr (std::is_same_v<T, Free>) {
          return IdentityJacobian{};
        } else if constexpr (std::is_same_v<T, Monotone>) {
          Vector m = Vector::Ones(d);
          for (Index k : s.nondecreasing)
            if (x[k] < 0.0) m[k] = 0.0;
          for (Index k : s.nonincreasing)
            if (x[k] > 0.0) m[k] = 0.0;
          return DiagonalJacobian{std::move(m)};
        } else if constexpr (std::is_same_v<T, Box>) {
          Vector m(d);
          for (Index k = 0; k < d; ++k)
            m[k] = (x[k] >= s.lower[k] && x[k] <= s.upper[k]) ? 1.0 : 0.0;
          return DiagonalJacobian{std::move(m)};
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          const double r = s.radius;
          switch (s.q) {
            case Norm::Inf: {
              Vector m(d);
              for (Index k = 0; k < d; ++k) m[k] = std::abs(x[k]) <= r ? 1.0 : 0.0;
              return DiagonalJacobian{std::move(m)};
            }
            case Norm::Two: {
              const double nx = x.norm();
              if (nx <= r) return IdentityJacobian{};
              return ScaledProjectorJacobian{r / nx, x / nx};
            }
            case Norm::One: {
              if (x.lpNorm<1>() <= r) return IdentityJacobian{};
              const Vector p = project_simplex(x.cwiseAbs() / r);
              Vector sr = Vector::Zero(d);
              double count = 0.0;
              for (Index k = 0; k < d; ++k) {
                if (p[k] != 0.0) {
                  sr[k] = detail::sign(x[k]);
                  count += 1.0;
                }
              }
              return SignedSimplexJacobian{std::move(sr), count};
            }
          }
          return IdentityJacobian{};
        } else {
          throw InvalidArgument("jacobian_element: per-point sets are handled block by block");
        }
      },
      c.variant());
}

// ---------------------------------------------------------------------------
// Support function

/// sup_{z in D} <x, z>. Returns +inf when x lies outside the barrier cone of
/// D; for cones, coordinates within `tol` of the feasible sign pattern count
/// as feasible.
inline double conjugate_support(const ConstraintSet& c, const Eigen::Ref<const Vector>& x,
                                double tol = 0.0) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Free>) {
          return x.size() == 0 || x.lpNorm<Eigen::Infinity>() <= tol ? 0.0 : inf;
        } else if constexpr (std::is_same_v<T, Monotone>) {
          std::vector<int> role(static_cast<std::size_t>(x.size()), 0);
          for (Index k : s.nondecreasing) role[static_cast<std::size_t>(k)] = 1;
          for (Index k : s.nonincreasing) role[static_cast<std::size_t>(k)] = -1;
          for (Index k = 0; k < x.size(); ++k) {
            const int r = role[static_cast<std::size_t>(k)];
            if (r == 1 && x[k] > tol) return inf;
            if (r == -1 && x[k] < -tol) return inf;
            if (r == 0 && std::abs(x[k]) > tol) return inf;
          }
          return 0.0;
        } else if constexpr (std::is_same_v<T, Box>) {
          double total = 0.0;
          for (Index k = 0; k < x.size(); ++k) {
            if (x[k] > 0.0) {
              if (std::isinf(s.upper[k])) {
                if (x[k] > tol) return inf;
              } else {
                total += s.upper[k] * x[k];
              }
            } else if (x[k] < 0.0) {
              if (std::isinf(s.lower[k])) {
                if (x[k] < -tol) return inf;
              } else {
                total += s.lower[k] * x[k];
              }
            }
          }
          return total;
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          return s.radius * norm(x, dual_norm(s.q));
        } else {
          throw InvalidArgument("conjugate_support: per-point sets are handled block by block");
        }
      },
      c.variant());
}

// ---------------------------------------------------------------------------
// Blockwise maps on xi stored d x n

/// Prox_p(xi): block i is projected onto D (or D_i).
inline Matrix blockwise_prox(const ConstraintSet& c, const Matrix& xi) {
  c.validate(xi.rows(), xi.cols());
  Matrix out(xi.rows(), xi.cols());
  for (Index i = 0; i < xi.cols(); ++i) project_to(c.block(i), xi.col(i), out.col(i));
  return out;
}

inline std::vector<JacobianElement> blockwise_jacobian(const ConstraintSet& c, const Matrix& xi) {
  c.validate(xi.rows(), xi.cols());
  std::vector<JacobianElement> out;
  out.reserve(static_cast<std::size_t>(xi.cols()));
  for (Index i = 0; i < xi.cols(); ++i) out.push_back(jacobian_element(c.block(i), xi.col(i)));
  return out;
}

/// p*(x) = sum_i sigma_{D_i}(x_i).
inline double blockwise_support(const ConstraintSet& c, const Matrix& x, double tol = 0.0) {
  double total = 0.0;
  for (Index i = 0; i < x.cols(); ++i) {
    total += conjugate_support(c.block(i), x.col(i), tol);
    if (std::isinf(total)) return total;
  }
  return total;
}

}  // namespace shapereg
