#pragma once

// Per-point Lipschitz bounds estimated from the data,
//   L_i = median { |Y_i - Y_j| / ||X_i - X_j||_p : j among the k nearest neighbors of X_i },
// and the per-point constraint sets {x : ||x||_q <= L_i} with 1/p + 1/q = 1.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/types.hpp"

namespace shapereg {

struct LipschitzDiagnostics {
  std::vector<std::string> warnings;
  std::vector<Index> zero_bounds;  // points whose estimate is exactly 0
};

namespace detail {

inline double median(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Neighbors are ranked by Euclidean distance and every point tied with the
/// k-th distance is kept. Neighbors at distance zero are skipped with a warning.
inline Vector estimate_lipschitz(const ProblemData& p, int k, Norm ratio_norm,
                                 LipschitzDiagnostics* diag = nullptr) {
  const Index n = p.size();
  if (k < 1 || k >= n) throw InvalidArgument("estimate_lipschitz: k must lie in [1, n-1]");
  const Matrix& x = p.x();
  const Vector& y = p.y();
  Vector out(n);
  std::vector<std::string> warnings(static_cast<std::size_t>(n));
  std::vector<char> failed(static_cast<std::size_t>(n), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Index>> dist;
    dist.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j)
      if (j != i) dist.emplace_back((x.col(i) - x.col(j)).squaredNorm(), j);
    std::sort(dist.begin(), dist.end());
    const double kth = dist[static_cast<std::size_t>(k - 1)].first;
    std::vector<double> ratios;
    int skipped = 0;
    for (const auto& [d2, j] : dist) {
      if (d2 > kth) break;
      const double denom = norm(x.col(i) - x.col(j), ratio_norm);
      if (denom == 0.0) {
        ++skipped;
        continue;
      }
      ratios.push_back(std::abs(y[i] - y[j]) / denom);
    }
    if (skipped > 0)
      warnings[static_cast<std::size_t>(i)] = "point " + std::to_string(i) + ": skipped " +
                                              std::to_string(skipped) + " duplicate neighbor(s)";
    if (ratios.empty()) {
      failed[static_cast<std::size_t>(i)] = 1;
      out[i] = 0.0;
    } else {
      out[i] = detail::median(std::move(ratios));
    }
  }

  for (Index i = 0; i < n; ++i)
    if (failed[static_cast<std::size_t>(i)])
      throw InvalidArgument("estimate_lipschitz: every neighbor of point " + std::to_string(i) +
                            " duplicates it");
  if (diag) {
    for (auto& w : warnings)
      if (!w.empty()) diag->warnings.push_back(std::move(w));
    for (Index i = 0; i < n; ++i)
      if (out[i] == 0.0) diag->zero_bounds.push_back(i);
  }
  return out;
}

/// Relative floor applied to zero or tiny bounds.
inline constexpr double kLipschitzFloor = 1e-8;

/// Per-point balls {x : ||x||_q <= L_i} where q is the dual exponent of
/// `ratio_norm`. Bounds below kLipschitzFloor * max_i L_i are raised to it.
inline ConstraintSet build_perpoint_problem(const ProblemData& p, const Eigen::Ref<const Vector>& bounds,
                                            Norm ratio_norm) {
  detail::require_dims(bounds.size() == p.size(), "build_perpoint_problem: need one bound per point");
  if (!bounds.allFinite() || bounds.minCoeff() < 0.0)
    throw InvalidArgument("build_perpoint_problem: bounds must be finite and nonnegative");
  const double top = bounds.maxCoeff();
  const double floor = top > 0.0 ? kLipschitzFloor * top : kLipschitzFloor;
  const Norm q = dual_norm(ratio_norm);
  std::vector<ConstraintSet> sets;
  sets.reserve(static_cast<std::size_t>(p.size()));
  for (Index i = 0; i < p.size(); ++i) sets.push_back(ConstraintSet::lipschitz(q, std::max(bounds[i], floor)));
  return ConstraintSet::per_point(std::move(sets));
}

}  // namespace shapereg
