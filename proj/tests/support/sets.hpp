#pragma once

// Random constraint sets and distance-to-kink margins for the projection tests.

#include <cmath>
#include <string>
#include <vector>

#include "shapereg/constraints.hpp"
#include "support/oracles.hpp"

namespace oracle {

enum class SetKind { Free, Monotone, Box, BallOne, BallTwo, BallInf };

inline const std::vector<SetKind>& all_set_kinds() {
  static const std::vector<SetKind> kinds = {SetKind::Free,    SetKind::Monotone, SetKind::Box,
                                             SetKind::BallOne, SetKind::BallTwo,  SetKind::BallInf};
  return kinds;
}

inline std::string name(SetKind k) {
  switch (k) {
    case SetKind::Free: return "free";
    case SetKind::Monotone: return "monotone";
    case SetKind::Box: return "box";
    case SetKind::BallOne: return "l1";
    case SetKind::BallTwo: return "l2";
    case SetKind::BallInf: return "linf";
  }
  return "?";
}

/// A random set of the given kind in dimension d. Boxes mix finite and
/// one-sided bounds and always have interior.
inline shapereg::ConstraintSet random_set(SetKind kind, Index d, Gen& g) {
  using shapereg::ConstraintSet;
  using shapereg::Norm;
  switch (kind) {
    case SetKind::Free: return ConstraintSet::free();
    case SetKind::Monotone: {
      std::vector<Index> up, down;
      for (Index k = 0; k < d; ++k) {
        const double u = g.uniform(0.0, 1.0);
        if (u < 0.4)
          up.push_back(k);
        else if (u < 0.8)
          down.push_back(k);
      }
      if (up.empty() && down.empty()) up.push_back(0);
      return ConstraintSet::monotone(up, down);
    }
    case SetKind::Box: {
      Vector lo(d), hi(d);
      const double inf = std::numeric_limits<double>::infinity();
      for (Index k = 0; k < d; ++k) {
        const double a = g.uniform(-1.0, 0.5);
        const double w = g.uniform(0.2, 1.5);
        const double u = g.uniform(0.0, 1.0);
        lo[k] = u < 0.15 ? -inf : a;
        hi[k] = (u > 0.85) ? inf : a + w;
      }
      return ConstraintSet::box(lo, hi);
    }
    case SetKind::BallOne: return ConstraintSet::lipschitz(Norm::One, g.uniform(0.3, 2.0));
    case SetKind::BallTwo: return ConstraintSet::lipschitz(Norm::Two, g.uniform(0.3, 2.0));
    case SetKind::BallInf: return ConstraintSet::lipschitz(Norm::Inf, g.uniform(0.3, 2.0));
  }
  return ConstraintSet::free();
}

/// Distance from x to the nearest point where the projection is not
/// differentiable (a lower bound, good enough to filter finite differences).
inline double kink_margin(const shapereg::ConstraintSet& c, const Vector& x) {
  using namespace shapereg;
  double m = std::numeric_limits<double>::infinity();
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Monotone>) {
          for (Index k : s.nondecreasing) m = std::min(m, std::abs(x[k]));
          for (Index k : s.nonincreasing) m = std::min(m, std::abs(x[k]));
        } else if constexpr (std::is_same_v<T, Box>) {
          for (Index k = 0; k < x.size(); ++k) {
            if (std::isfinite(s.lower[k])) m = std::min(m, std::abs(x[k] - s.lower[k]));
            if (std::isfinite(s.upper[k])) m = std::min(m, std::abs(x[k] - s.upper[k]));
          }
        } else if constexpr (std::is_same_v<T, LipschitzBall>) {
          const double r = s.radius;
          if (s.q == Norm::Inf) {
            for (Index k = 0; k < x.size(); ++k) m = std::min(m, std::abs(std::abs(x[k]) - r));
          } else if (s.q == Norm::Two) {
            m = std::abs(x.norm() - r);
          } else {
            m = std::abs(x.lpNorm<1>() - r) / static_cast<double>(x.size());
            for (Index k = 0; k < x.size(); ++k) m = std::min(m, std::abs(x[k]));
            if (x.lpNorm<1>() > r) {
              const Vector p = project_l1_bisection(x, r);
              // soft threshold lambda = |x_k| - |p_k| on the support
              double lam = 0.0;
              for (Index k = 0; k < x.size(); ++k)
                if (p[k] != 0.0) lam = std::abs(x[k]) - std::abs(p[k]);
              for (Index k = 0; k < x.size(); ++k)
                m = std::min(m, std::abs(std::abs(x[k]) - lam) / static_cast<double>(x.size()));
            }
          }
        }
      },
      c.variant());
  return m;
}

}  // namespace oracle
