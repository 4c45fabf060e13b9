#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "shapereg/constraints.hpp"
#include "support/oracles.hpp"
#include "support/sets.hpp"

using namespace shapereg;
using oracle::Gen;
using oracle::SetKind;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vector vec2(double a, double b) { return (Vector(2) << a, b).finished(); }

Matrix fd_jacobian(const ConstraintSet& c, const Vector& x, double h) {
  const Index d = x.size();
  Matrix j(d, d);
  for (Index k = 0; k < d; ++k) {
    Vector xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    j.col(k) = (project(c, xp) - project(c, xm)) / (2.0 * h);
  }
  return j;
}

}  // namespace

TEST(Projection, BoxClipsEachCoordinate) {
  const auto c = ConstraintSet::box(Vector::Zero(3), Vector::Ones(3));
  const Vector p = project(c, (Vector(3) << -0.5, 0.3, 2.0).finished());
  EXPECT_DOUBLE_EQ(p[0], 0.0);
  EXPECT_DOUBLE_EQ(p[1], 0.3);
  EXPECT_DOUBLE_EQ(p[2], 1.0);
}

TEST(Projection, TwoBallScalesRadially) {
  const Vector p = project(ConstraintSet::lipschitz(Norm::Two, 5.0), vec2(6.0, 8.0));
  EXPECT_NEAR(p[0], 3.0, 1e-14);
  EXPECT_NEAR(p[1], 4.0, 1e-14);
}

TEST(Projection, OneBallSoftThresholds) {
  const Vector p = project(ConstraintSet::lipschitz(Norm::One, 2.0), vec2(3.0, -1.0));
  EXPECT_NEAR(p[0], 2.0, 1e-14);
  EXPECT_NEAR(p[1], 0.0, 1e-14);
}

TEST(Projection, InfBallClips) {
  const Vector p = project(ConstraintSet::lipschitz(Norm::Inf, 1.0), vec2(0.5, -2.0));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], -1.0);
}

TEST(Projection, MonotoneClampsSigns) {
  const auto c = ConstraintSet::monotone({0}, {2});
  const Vector p = project(c, (Vector(3) << -1.0, -2.0, 3.0).finished());
  EXPECT_EQ(p[0], 0.0);
  EXPECT_EQ(p[1], -2.0);
  EXPECT_EQ(p[2], 0.0);
}

TEST(Projection, SimplexExamples) {
  const Vector a = project_simplex(vec2(0.8, 0.6));
  EXPECT_NEAR(a[0], 0.6, 1e-15);
  EXPECT_NEAR(a[1], 0.4, 1e-15);
  const Vector b = project_simplex(vec2(-1.0, -1.0));
  EXPECT_NEAR(b[0], 0.5, 1e-15);
  EXPECT_NEAR(b[1], 0.5, 1e-15);
}

TEST(Projection, RejectsNonFiniteInput) {
  const auto c = ConstraintSet::lipschitz(Norm::Two, 1.0);
  EXPECT_THROW(project(c, vec2(std::nan(""), 0.0)), InvalidArgument);
}

TEST(Projection, ValidateRejectsBadSets) {
  EXPECT_THROW(ConstraintSet::box(Vector::Ones(2), Vector::Zero(2)).validate(2, 3), InvalidArgument);
  EXPECT_THROW(ConstraintSet::box(Vector::Zero(2), Vector::Ones(2)).validate(3, 3), DimensionError);
  EXPECT_THROW(ConstraintSet::lipschitz(Norm::Two, -1.0).validate(2, 3), InvalidArgument);
  EXPECT_THROW(ConstraintSet::monotone({5}, {}).validate(2, 3), InvalidArgument);
}

TEST(Jacobian, InfBallExample) {
  const auto j = jacobian_element(ConstraintSet::lipschitz(Norm::Inf, 1.0), vec2(0.5, -2.0));
  const Matrix m = dense_jacobian(j, 2);
  EXPECT_EQ(m, (Matrix(2, 2) << 1, 0, 0, 0).finished());
}

TEST(Jacobian, TwoBallExample) {
  const Vector x = vec2(6.0, 8.0);
  const Matrix m = dense_jacobian(jacobian_element(ConstraintSet::lipschitz(Norm::Two, 5.0), x), 2);
  const Matrix expected = 0.5 * (Matrix::Identity(2, 2) - x * x.transpose() / 100.0);
  EXPECT_LT((m - expected).norm(), 1e-14);
}

TEST(Jacobian, OneBallExampleIsZero) {
  const Matrix m = dense_jacobian(jacobian_element(ConstraintSet::lipschitz(Norm::One, 2.0), vec2(3.0, -1.0)), 2);
  EXPECT_LT(m.norm(), 1e-15);
}

TEST(Jacobian, InsideBallIsIdentity) {
  for (Norm q : {Norm::One, Norm::Two, Norm::Inf}) {
    const Matrix m = dense_jacobian(jacobian_element(ConstraintSet::lipschitz(q, 5.0), vec2(0.1, -0.2)), 2);
    EXPECT_EQ(m, Matrix::Identity(2, 2));
  }
}

TEST(Support, Examples) {
  EXPECT_NEAR(conjugate_support(ConstraintSet::lipschitz(Norm::Two, 3.0), vec2(1.0, 0.0)), 3.0, 1e-15);
  EXPECT_NEAR(conjugate_support(ConstraintSet::box(Vector::Zero(2), Vector::Ones(2)), vec2(-2.0, 5.0)), 5.0,
              1e-15);
  EXPECT_EQ(conjugate_support(ConstraintSet::monotone({0}, {}), vec2(1.0, 0.0)), kInf);
  EXPECT_EQ(conjugate_support(ConstraintSet::monotone({0}, {}), vec2(-1.0, 0.0)), 0.0);
  EXPECT_EQ(conjugate_support(ConstraintSet::free(), vec2(0.0, 0.0)), 0.0);
  EXPECT_EQ(conjugate_support(ConstraintSet::free(), vec2(1e-3, 0.0)), kInf);
}

TEST(Support, OneAndInfBallsUseDualNorms) {
  const Vector x = vec2(1.0, -2.0);
  EXPECT_NEAR(conjugate_support(ConstraintSet::lipschitz(Norm::One, 2.0), x), 4.0, 1e-15);
  EXPECT_NEAR(conjugate_support(ConstraintSet::lipschitz(Norm::Inf, 2.0), x), 6.0, 1e-15);
}

// Property checks over random sets and points.

class ProjectionProperties : public ::testing::TestWithParam<SetKind> {};

TEST_P(ProjectionProperties, NonexpansiveAndIdempotent) {
  Gen g(11 + static_cast<int>(GetParam()));
  for (int trial = 0; trial < 2000; ++trial) {
    const Index d = g.integer(1, 3);
    const auto c = oracle::random_set(GetParam(), d, g);
    const Vector x = g.vector(d, 2.0), y = g.vector(d, 2.0);
    const Vector px = project(c, x), py = project(c, y);
    ASSERT_LE((px - py).norm(), (x - y).norm() * (1.0 + 1e-12) + 1e-14);
    ASSERT_LE((project(c, px) - px).norm(), 1e-12 * (1.0 + px.norm()));
  }
}

TEST_P(ProjectionProperties, MatchesBruteForce) {
  Gen g(101 + static_cast<int>(GetParam()));
  for (int trial = 0; trial < 500; ++trial) {
    const Index d = g.integer(1, 3);
    const auto c = oracle::random_set(GetParam(), d, g);
    const Vector x = g.vector(d, 2.0);
    const Vector p = project(c, x);
    const Vector ref = oracle::project_brute(c, x);
    ASSERT_LE((p - ref).norm(), 1e-8 * (1.0 + x.norm())) << "trial " << trial;
  }
}

TEST_P(ProjectionProperties, JacobianMatchesFiniteDifferences) {
  Gen g(211 + static_cast<int>(GetParam()));
  int checked = 0;
  for (int trial = 0; checked < 500 && trial < 20000; ++trial) {
    const Index d = g.integer(1, 3);
    const auto c = oracle::random_set(GetParam(), d, g);
    const Vector x = g.vector(d, 2.0);
    if (oracle::kink_margin(c, x) < 1e-3) continue;
    ++checked;
    const Matrix j = dense_jacobian(jacobian_element(c, x), d);
    const Matrix fd = fd_jacobian(c, x, 1e-6);
    ASSERT_LE((j - fd).norm() / std::max(1.0, j.norm()), 1e-6) << "trial " << trial;
  }
  EXPECT_EQ(checked, 500);
}

TEST_P(ProjectionProperties, SupportDominatesInnerProducts) {
  Gen g(307 + static_cast<int>(GetParam()));
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = g.integer(1, 3);
    const auto c = oracle::random_set(GetParam(), d, g);
    const Vector x = g.vector(d, 2.0);
    const double s = conjugate_support(c, x, 1e-12);
    for (int k = 0; k < 5; ++k) {
      const Vector z = project(c, g.vector(d, 3.0));
      ASSERT_GE(s, x.dot(z) - 1e-12 * (1.0 + std::abs(x.dot(z))));
    }
    // for sets with a finite support value the maximizer is the projection
    // of a far-out point along x
    if (std::isfinite(s) && x.norm() > 0.0) {
      const Vector far = project(c, 1e8 * x);
      EXPECT_LE(s - x.dot(far), 1e-6 * (1.0 + std::abs(s)));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllSets, ProjectionProperties, ::testing::ValuesIn(oracle::all_set_kinds()),
                         [](const auto& info) { return oracle::name(info.param); });

TEST(Blockwise, PerPointAppliesEachSet) {
  const auto c = ConstraintSet::per_point({ConstraintSet::lipschitz(Norm::Two, 1.0),
                                           ConstraintSet::lipschitz(Norm::Two, 2.0),
                                           ConstraintSet::box(Vector::Zero(2), Vector::Ones(2))});
  Matrix xi(2, 3);
  xi << 3, 3, -1, 4, 4, 2;
  const Matrix p = blockwise_prox(c, xi);
  EXPECT_NEAR(p.col(0).norm(), 1.0, 1e-14);
  EXPECT_NEAR(p.col(1).norm(), 2.0, 1e-14);
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_EQ(p(1, 2), 1.0);
}

TEST(Blockwise, SharedSetMatchesColumnProjection) {
  Gen g(5);
  const auto c = ConstraintSet::lipschitz(Norm::One, 0.7);
  const Matrix xi = g.matrix(3, 9, 2.0);
  const Matrix p = blockwise_prox(c, xi);
  for (Index j = 0; j < xi.cols(); ++j) EXPECT_EQ(p.col(j), project(c, Vector(xi.col(j))));
}

TEST(Blockwise, SupportSumsOverBlocks) {
  const auto c = ConstraintSet::per_point({ConstraintSet::lipschitz(Norm::Two, 1.0),
                                           ConstraintSet::lipschitz(Norm::Two, 2.0)});
  Matrix x(2, 2);
  x << 3, 0, 4, 1;
  EXPECT_NEAR(blockwise_support(c, x, 0.0), 5.0 + 2.0, 1e-14);
}

TEST(Blockwise, PerPointSizeIsChecked) {
  const auto c = ConstraintSet::per_point({ConstraintSet::free(), ConstraintSet::free()});
  EXPECT_THROW(c.validate(2, 3), DimensionError);
}

TEST(Simplex, MatchesBisection) {
  Gen g(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const Vector x = g.vector(g.integer(1, 6), 2.0);
    const Vector p = project_simplex(x);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    ASSERT_LE((p - oracle::project_simplex_bisection(x)).norm(), 1e-12);
  }
}
