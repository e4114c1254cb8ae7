#include "support.hpp"

#include "tpa/krylov.hpp"

#include <gtest/gtest.h>

using namespace tpa;
using namespace tpa::testing;

namespace {

LinearOperator dense_op(const Matrix& A) {
  return {A.rows(), [A](const Vector& v) -> Vector { return A * v; }};
}

}  // namespace

TEST(Gmres, IdentityOneIteration) {
  Vector b(3);
  b << 1, -2, 5;
  auto r = gmres(dense_op(Matrix::Identity(3, 3)), b, Vector::Zero(3), {});
  EXPECT_TRUE(r.report.converged);
  EXPECT_EQ(r.report.iterations, 1);
  EXPECT_LE((r.x - b).norm(), 1e-14);
}

TEST(Gmres, DiagonalTwoIterations) {
  Matrix A = Matrix::Zero(2, 2);
  A.diagonal() << 1, 2;
  Vector b(2);
  b << 1, 2;
  GmresOptions o;
  o.rel_tol = 1e-14;
  auto r = gmres(dense_op(A), b, Vector::Zero(2), o);
  EXPECT_TRUE(r.report.converged);
  EXPECT_LE(r.report.iterations, 2);
  EXPECT_LE((r.x - Vector::Ones(2)).norm(), 1e-13);
}

TEST(Gmres, ZeroRightHandSide) {
  auto r = gmres(dense_op(Matrix::Identity(4, 4)), Vector::Zero(4), Vector::Zero(4), {});
  EXPECT_TRUE(r.report.converged);
  EXPECT_EQ(r.report.iterations, 0);
  EXPECT_EQ(r.x.norm(), 0.0);
}

TEST(Gmres, ShiftedMonodromyMatchesDenseSolve) {
  std::mt19937_64 rng(31);
  auto m = random_linear(rng, 12, 1.0);
  const Matrix Phi = kron_monodromy(m->A(), tableau_library("dirk3"), 1.0, 20);
  const Matrix A = Matrix::Identity(12, 12) - Phi;
  const Vector b = random_vector(rng, 12);
  GmresOptions o;
  o.rel_tol = 1e-13;
  auto r = gmres(dense_op(A), b, Vector::Zero(12), o);
  EXPECT_TRUE(r.report.converged);
  const Vector x = A.partialPivLu().solve(b);
  EXPECT_LE((r.x - x).norm(), 1e-11 * x.norm());
  EXPECT_EQ(r.report.matvecs, r.report.iterations);
  EXPECT_EQ(r.report.residual_history.size(), static_cast<std::size_t>(r.report.iterations + 1));
}

TEST(Gmres, RestartedStillConverges) {
  std::mt19937_64 rng(32);
  const Index n = 30;
  const Matrix A = 4.0 * Matrix::Identity(n, n) + random_matrix(rng, n, n) / std::sqrt(double(n));
  const Vector b = random_vector(rng, n);
  GmresOptions o;
  o.rel_tol = 1e-10;
  o.restart = 5;
  o.max_iter = 300;
  auto r = gmres(dense_op(A), b, Vector::Zero(n), o);
  EXPECT_TRUE(r.report.converged);
  EXPECT_LE((A * r.x - b).norm(), 2e-10 * b.norm());
}

TEST(Gmres, IterationCapGivesBestIterate) {
  std::mt19937_64 rng(33);
  const Index n = 20;
  const Matrix A = Matrix::Identity(n, n) + random_matrix(rng, n, n);
  const Vector b = random_vector(rng, n);
  GmresOptions o;
  o.rel_tol = 1e-14;
  o.max_iter = 3;
  auto r = gmres(dense_op(A), b, Vector::Zero(n), o);
  EXPECT_FALSE(r.report.converged);
  EXPECT_EQ(r.report.iterations, 3);
  EXPECT_LT((A * r.x - b).norm(), b.norm());
  // history is non-increasing
  for (std::size_t k = 1; k < r.report.residual_history.size(); ++k)
    EXPECT_LE(r.report.residual_history[k], r.report.residual_history[k - 1] * (1 + 1e-12));
}

TEST(Gmres, WarmStartUsesInitialGuess) {
  Matrix A = Matrix::Identity(3, 3);
  A(0, 1) = 0.5;
  const Vector x = Vector::LinSpaced(3, 1, 3);
  const Vector b = A * x;
  auto r = gmres(dense_op(A), b, x, {});
  EXPECT_EQ(r.report.iterations, 0);
  EXPECT_EQ(r.x, x);
}

TEST(Arnoldi, DiagonalOperator) {
  Matrix A = Matrix::Zero(3, 3);
  A.diagonal() << 3, 2, 1;
  ArnoldiOptions o;
  o.k = 2;
  auto r = arnoldi_eigs(dense_op(A), o);
  EXPECT_TRUE(r.converged);
  ASSERT_GE(r.values.size(), 2u);
  EXPECT_NEAR(r.values[0].value.real(), 3.0, 1e-10);
  EXPECT_NEAR(r.values[1].value.real(), 2.0, 1e-10);
  EXPECT_NEAR(r.values[0].value.imag(), 0.0, 1e-12);
}

TEST(Arnoldi, ScaledRotationKeepsConjugatePair) {
  Matrix A(2, 2);
  A << 0, -0.5, 0.5, 0;
  ArnoldiOptions o;
  o.k = 1;
  auto r = arnoldi_eigs(dense_op(A), o);
  ASSERT_EQ(r.values.size(), 2u);
  EXPECT_NEAR(std::abs(r.values[0].value.imag()), 0.5, 1e-12);
  EXPECT_NEAR(r.values[0].value.real(), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(r.values[0].value - std::conj(r.values[1].value)), 0.0, 1e-12);
}

TEST(Arnoldi, RestartsOnLargerOperator) {
  // Known spectrum through a similarity transform.
  std::mt19937_64 rng(34);
  const Index n = 120;
  Vector d(n);
  for (Index i = 0; i < n; ++i) d(i) = 0.95 * std::pow(0.9, double(i));
  const Matrix S = Matrix::Identity(n, n) + 0.1 * random_matrix(rng, n, n) / std::sqrt(double(n));
  const Matrix A = S * d.asDiagonal() * S.inverse();
  ArnoldiOptions o;
  o.k = 4;
  o.m = 12;
  o.tol = 1e-10;
  auto r = arnoldi_eigs(dense_op(A), o);
  EXPECT_TRUE(r.converged);
  EXPECT_GT(r.restarts, 0);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_NEAR(r.values[static_cast<std::size_t>(i)].value.real(), d(i), 1e-8);
    EXPECT_TRUE(r.values[static_cast<std::size_t>(i)].converged);
  }
}

TEST(Arnoldi, MatchesDenseEigenSolverOnMonodromy) {
  // decay rates spread over [0.3, 3] so the leading moduli are separated
  std::mt19937_64 rng(35);
  const Index n = 40;
  const Matrix S = random_matrix(rng, n, n);
  Matrix A = 0.3 * (S - S.transpose()) / std::sqrt(double(n));
  A.diagonal() -= Vector::LinSpaced(n, 0.3, 3.0);
  const Matrix Phi = kron_monodromy(A, tableau_library("dirk3"), 1.0, 20);
  ArnoldiOptions o;
  o.k = 3;
  auto r = arnoldi_eigs(dense_op(Phi), o);
  const ComplexVector ev = Eigen::EigenSolver<Matrix>(Phi, false).eigenvalues();
  std::vector<double> mods;
  for (Index i = 0; i < ev.size(); ++i) mods.push_back(std::abs(ev(i)));
  std::sort(mods.rbegin(), mods.rend());
  EXPECT_NEAR(std::abs(r.values[0].value), mods[0], 1e-8);
  for (const auto& v : r.values) {
    double best = INFINITY;
    for (Index i = 0; i < ev.size(); ++i) best = std::min(best, std::abs(ev(i) - v.value));
    EXPECT_LE(best, 1e-8);
  }
}

TEST(Arnoldi, DeterministicForFixedSeed) {
  std::mt19937_64 rng(36);
  const Matrix A = random_matrix(rng, 50, 50);
  ArnoldiOptions o;
  o.k = 3;
  auto a = arnoldi_eigs(dense_op(A), o), b = arnoldi_eigs(dense_op(A), o);
  ASSERT_EQ(a.values.size(), b.values.size());
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_EQ(a.values[i].value, b.values[i].value);
}

TEST(Arnoldi, RejectsBadSizes) {
  ArnoldiOptions o;
  o.k = 3;
  EXPECT_THROW(arnoldi_eigs(dense_op(Matrix::Identity(3, 3)), o), Error);
}
