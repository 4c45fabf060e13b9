#pragma once

// Small random regression instances for solver-versus-oracle checks.

#include <cmath>
#include <string>
#include <vector>

#include "shapereg/constraints.hpp"
#include "shapereg/types.hpp"
#include "support/oracles.hpp"
#include "support/sets.hpp"

namespace oracle {

enum class Variant { Free, Monotone, Box, BallOne, BallTwo, BallInf, PerPoint };

inline const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::Free,    Variant::Monotone, Variant::Box,     Variant::BallOne,
                                         Variant::BallTwo, Variant::BallInf,  Variant::PerPoint};
  return v;
}

inline std::string name(Variant v) {
  switch (v) {
    case Variant::Free: return "free";
    case Variant::Monotone: return "monotone";
    case Variant::Box: return "box";
    case Variant::BallOne: return "l1";
    case Variant::BallTwo: return "l2";
    case Variant::BallInf: return "linf";
    case Variant::PerPoint: return "perpoint";
  }
  return "?";
}

struct Instance {
  shapereg::ProblemData data;
  shapereg::ConstraintSet constraint;
};

/// Responses from a random convex quadratic plus a linear term and noise.
/// Box and monotone sets get a shared interior center so the oracle can
/// start strictly feasible.
inline Instance random_instance(Variant v, Gen& g, Index n_min = 5, Index n_max = 12, Index d_max = 3) {
  using namespace shapereg;
  const Index n = g.integer(n_min, n_max);
  const Index d = g.integer(1, d_max);
  const Matrix x = g.matrix(d, n);
  const Vector lin = g.vector(d);
  Vector y(n);
  for (Index i = 0; i < n; ++i) y[i] = 0.5 * x.col(i).squaredNorm() + lin.dot(x.col(i)) + 0.3 * g.normal();

  ConstraintSet c;
  switch (v) {
    case Variant::Free: c = ConstraintSet::free(); break;
    case Variant::Monotone: c = random_set(SetKind::Monotone, d, g); break;
    case Variant::Box: c = random_set(SetKind::Box, d, g); break;
    case Variant::BallOne: c = random_set(SetKind::BallOne, d, g); break;
    case Variant::BallTwo: c = random_set(SetKind::BallTwo, d, g); break;
    case Variant::BallInf: c = random_set(SetKind::BallInf, d, g); break;
    case Variant::PerPoint: {
      std::vector<ConstraintSet> sets;
      const Norm norms[] = {Norm::One, Norm::Two, Norm::Inf};
      for (Index i = 0; i < n; ++i)
        sets.push_back(ConstraintSet::lipschitz(norms[g.integer(0, 2)], g.uniform(0.2, 2.0)));
      c = ConstraintSet::per_point(std::move(sets));
      break;
    }
  }
  return {ProblemData(x, y), c};
}

}  // namespace oracle
