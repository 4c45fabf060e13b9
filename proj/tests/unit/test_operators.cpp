#include <gtest/gtest.h>

#include "shapereg/operators.hpp"
#include "support/oracles.hpp"

using namespace shapereg;

TEST(Operators, ApplyAOnConstantIsZero) {
  EXPECT_EQ(apply_a(Vector::Ones(4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Operators, ApplyAHandExample) {
  Vector theta(2);
  theta << 1, 0;
  Matrix expected(2, 2);
  expected << 0, 1, -1, 0;
  EXPECT_EQ(apply_a(theta), expected);
}

TEST(Operators, AStarAMatchesClosedFormAndDense) {
  oracle::Gen g(1);
  for (Index n = 2; n <= 20; ++n) {
    const Vector theta = g.vector(n);
    const Vector got = apply_a_adjoint(apply_a(theta));
    const Vector closed = 2.0 * n * theta - 2.0 * theta.sum() * Vector::Ones(n);
    const Matrix a = oracle::dense_a(n);
    EXPECT_LE((got - closed).norm(), 1e-12 * (1 + closed.norm()));
    EXPECT_LE((got - a.transpose() * a * theta).norm(), 1e-12 * (1 + closed.norm()));
    EXPECT_LE((oracle::vec(apply_a(theta)) - a * theta).norm(), 1e-12);
  }
}

TEST(Operators, AStarOnSymmetricIsZero) {
  oracle::Gen g(2);
  Matrix z = g.matrix(5, 5);
  z = z + z.transpose().eval();
  EXPECT_LE(apply_a_adjoint(z).norm(), 1e-14);
}

TEST(Operators, AStarHandExample) {
  Matrix z = Matrix::Zero(2, 2);
  z(0, 1) = 1.0;
  Vector expected(2);
  expected << 1, -1;
  EXPECT_EQ(apply_a_adjoint(z), expected);
}

TEST(Operators, AdjointIdentities) {
  oracle::Gen g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = g.integer(2, 15), d = g.integer(1, 4);
    const OperatorContext ctx(g.matrix(d, n));
    const Vector theta = g.vector(n);
    const Matrix xi = g.matrix(d, n);
    const Matrix z = g.matrix(n, n);
    const double lhs_a = (apply_a(theta).array() * z.array()).sum();
    EXPECT_NEAR(lhs_a, theta.dot(apply_a_adjoint(z)), 1e-12 * (1 + std::abs(lhs_a)));
    const double lhs_b = (ctx.apply_b(xi).array() * z.array()).sum();
    const double rhs_b = (xi.array() * ctx.apply_b_adjoint(z).array()).sum();
    EXPECT_NEAR(lhs_b, rhs_b, 1e-12 * (1 + std::abs(lhs_b)));
  }
}

TEST(Operators, ApplyBMatchesDense) {
  oracle::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.integer(2, 12), d = g.integer(1, 3);
    const Matrix x = g.matrix(d, n);
    const OperatorContext ctx(x);
    const Matrix xi = g.matrix(d, n);
    const Matrix b = oracle::dense_b(x);
    EXPECT_LE((oracle::vec(ctx.apply_b(xi)) - b * oracle::vec(xi)).norm(), 1e-12 * (1 + xi.norm()));
    const Matrix z = g.matrix(n, n);
    EXPECT_LE((oracle::vec(ctx.apply_b_adjoint(z)) - b.transpose() * oracle::vec(z)).norm(),
              1e-12 * (1 + z.norm()));
  }
}

TEST(Operators, ApplyBHandExample) {
  Matrix x(1, 2);
  x << 0, 1;
  const OperatorContext ctx(x);
  EXPECT_EQ(ctx.block_b(0), (Matrix(2, 1) << 0, -1).finished());
  EXPECT_EQ(ctx.apply_b(Matrix::Zero(1, 2)).cwiseAbs().maxCoeff(), 0.0);
  Matrix xi(1, 2);
  xi << 2.0, 3.0;  // a = 2, b = 3
  Matrix expected(2, 2);
  expected << 0, 3, -2, 0;
  EXPECT_EQ(ctx.apply_b(xi), expected);
}

TEST(Operators, SolveThetaSystem) {
  EXPECT_LE((solve_theta_system(Vector::Ones(5), 0.7) - Vector::Ones(5)).norm(), 1e-15);
  // n = 2, sigma = 1: A^*A = 2nI - 2ee^T = [[2, -2], [-2, 2]].
  Vector rhs(2);
  rhs << 1, 0;
  Matrix m(2, 2);
  m << 3, -2, -2, 3;
  const Vector expected = m.inverse() * rhs;  // (3/5, 2/5)
  EXPECT_NEAR(expected[0], 0.6, 1e-15);
  EXPECT_LE((solve_theta_system(rhs, 1.0) - expected).norm(), 1e-15);
  EXPECT_THROW(solve_theta_system(rhs, 0.0), InvalidArgument);

  oracle::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.integer(2, 30);
    const double sigma = std::exp(g.uniform(-3, 3));
    const Vector r = g.vector(n);
    const Vector sol = solve_theta_system(r, sigma);
    const Vector back = sol + sigma * apply_a_adjoint(apply_a(sol));
    EXPECT_LE((back - r).norm(), 1e-10 * (1 + r.norm()));
  }
}

TEST(Operators, SolveXiSystem) {
  {
    const OperatorContext ctx(Matrix::Zero(2, 4));
    oracle::Gen g(6);
    const Matrix r = g.matrix(2, 4);
    EXPECT_LE((ctx.solve_xi_system(r) - r).norm(), 1e-15);
  }
  {
    Matrix x(1, 2);
    x << 0, 1;
    const OperatorContext ctx(x);
    EXPECT_NEAR(ctx.gram(0)(0, 0), 1.0, 1e-15);
    Matrix r(1, 2);
    r << 4, 6;
    const Matrix sol = ctx.solve_xi_system(r);
    EXPECT_NEAR(sol(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(sol(0, 1), 3.0, 1e-15);
  }
  oracle::Gen g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.integer(2, 20), d = g.integer(1, 5);
    const OperatorContext ctx(g.matrix(d, n));
    const Matrix r = g.matrix(d, n);
    const Matrix sol = ctx.solve_xi_system(r);
    const Matrix back = sol + ctx.apply_b_adjoint(ctx.apply_b(sol));
    EXPECT_LE((back - r).norm(), 1e-10 * (1 + r.norm()));
  }
}

TEST(Operators, NonFinitePredictorsRejected) {
  Matrix x = Matrix::Zero(1, 3);
  x(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(OperatorContext{x}, NumericalError);
}

TEST(Operators, GramBlocksArePsd) {
  oracle::Gen g(8);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.integer(2, 15), d = g.integer(1, 3);
    const OperatorContext ctx(g.matrix(d, n));
    const GramProducts gp(ctx, g.binary(n, g.uniform(0.0, 1.0)));
    for (Index j = 0; j < n; ++j) {
      const Matrix b = gp.bb_block(j);
      EXPECT_LE((b - b.transpose()).norm(), 1e-14);
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(b).eigenvalues().minCoeff(), -1e-12);
    }
  }
}

TEST(Operators, StructuredProductsAllOnesAndZero) {
  oracle::Gen g(9);
  const Index n = 6, d = 2;
  const OperatorContext ctx(g.matrix(d, n));
  const GramProducts ones(ctx, Matrix::Ones(n, n));
  const Matrix expected = 2.0 * n * Matrix::Identity(n, n) - 2.0 * Matrix::Ones(n, n);
  EXPECT_LE((ones.aa() - expected).norm(), 1e-13);
  const GramProducts zero(ctx, Matrix::Zero(n, n));
  EXPECT_EQ(zero.aa().norm(), 0.0);
  EXPECT_EQ(zero.apply_ab(g.matrix(d, n)).norm(), 0.0);
  EXPECT_EQ(zero.apply_bb(g.matrix(d, n)).norm(), 0.0);
}

TEST(Operators, NonBinaryMaskRejected) {
  const OperatorContext ctx(Matrix::Zero(1, 3));
  Matrix w = Matrix::Zero(3, 3);
  w(0, 1) = 0.5;
  EXPECT_THROW(GramProducts(ctx, w), InvalidArgument);
}

TEST(Operators, StructuredProductsMatchDense) {
  oracle::Gen g(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = g.integer(2, 15), d = g.integer(1, 3);
    const Matrix x = g.matrix(d, n);
    const OperatorContext ctx(x);
    const Matrix w = g.binary(n, g.uniform(0.0, 1.0));
    const GramProducts gp(ctx, w);
    const Matrix a = oracle::dense_a(n);
    const Matrix b = oracle::dense_b(x);
    const Eigen::DiagonalMatrix<double, Eigen::Dynamic> wd(oracle::vec(w));
    const Matrix aa = a.transpose() * wd * a;
    const Matrix ab = a.transpose() * wd * b;
    const Matrix bb = b.transpose() * wd * b;
    EXPECT_LE((gp.aa() - aa).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((gp.ab_dense() - ab).cwiseAbs().maxCoeff(), 1e-10);
    const Matrix xi = g.matrix(d, n);
    const Vector theta = g.vector(n);
    EXPECT_LE((gp.apply_ab(xi) - ab * oracle::vec(xi)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::vec(gp.apply_ba(theta)) - ab.transpose() * theta).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((oracle::vec(gp.apply_bb(xi)) - bb * oracle::vec(xi)).cwiseAbs().maxCoeff(), 1e-10);
    for (Index j = 0; j < n; ++j)
      EXPECT_LE((gp.bb_block(j) - bb.block(j * d, j * d, d, d)).cwiseAbs().maxCoeff(), 1e-10);
  }
}
