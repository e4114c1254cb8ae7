#include "support.hpp"

#include "tpa/floquet.hpp"

#include <gtest/gtest.h>

using namespace tpa;
using namespace tpa::testing;

namespace {

Vector one(double x) { return Vector::Constant(1, x); }

std::shared_ptr<const LinearPeriodicModel> diagonal_model(const Vector& rates, double T) {
  return make_linear_periodic(Matrix((-rates).asDiagonal()), {ForcingTerm{0, 0, ForcingTerm::Kind::constant}}, T);
}

}  // namespace

TEST(Floquet, DiagonalMultipliersThirdOrder) {
  Vector rates(2);
  rates << 1.0, 2.0;
  auto m = diagonal_model(rates, 1.0);
  std::vector<double> err;
  for (Index N : {25, 50, 100}) {
    Propagator prop(m, tableau_library("dirk3"), TimeGrid::uniform(1.0, N));
    const auto tr = prop.evolve(one(0.0), StateVector::Zero(2));
    FloquetOptions o;
    o.k = 2;
    const auto r = analyze_stability(prop, tr, one(0.0), o);
    ASSERT_EQ(r.eigenvalues.size(), 2u);
    ASSERT_TRUE(r.stable.has_value());
    EXPECT_TRUE(*r.stable);
    EXPECT_NEAR(r.eigenvalues[0].value.imag(), 0.0, 1e-14);
    const double e = std::max(std::abs(r.eigenvalues[0].value.real() - std::exp(-1.0)),
                              std::abs(r.eigenvalues[1].value.real() - std::exp(-2.0)));
    err.push_back(e);
    EXPECT_LE(e, 5.0 * std::pow(1.0 / N, 3) * 8.0);
  }
  EXPECT_GE(std::log2(err[0] / err[1]), 2.7);
  EXPECT_GE(std::log2(err[1] / err[2]), 2.7);
}

TEST(Floquet, ArnoldiPathMatchesStabilityFunction) {
  const Vector rates = Vector::LinSpaced(30, 0.5, 15.0);
  auto m = diagonal_model(rates, 1.0);
  const Index N = 40;
  const auto tab = tableau_library("dirk3");
  Propagator prop(m, tab, TimeGrid::uniform(1.0, N));
  const auto tr = prop.evolve(one(0.0), StateVector::Zero(30));
  FloquetOptions o;
  o.k = 3;
  const auto r = analyze_stability(prop, tr, one(0.0), o);
  EXPECT_FALSE(r.dense);
  ASSERT_TRUE(r.stable.has_value());
  EXPECT_TRUE(*r.stable);
  for (Index i = 0; i < 3; ++i) {
    const double exact = std::pow(stability_function(tab, -rates(i) / N), static_cast<double>(N));
    EXPECT_NEAR(r.eigenvalues[static_cast<std::size_t>(i)].value.real(), exact, 1e-10);
  }
  EXPECT_GT(r.matvecs, 0);
}

TEST(Floquet, ZeroDynamicsIsNeutral) {
  Propagator prop(zero_model(3), tableau_library("dirk3"), TimeGrid::uniform(1.0, 4));
  const auto tr = prop.evolve(one(0.0), StateVector::Zero(3));
  FloquetOptions o;
  o.k = 3;
  const auto r = analyze_stability(prop, tr, one(0.0), o);
  for (const auto& e : r.eigenvalues) EXPECT_NEAR(std::abs(e.value - 1.0), 0.0, 1e-14);
  ASSERT_TRUE(r.stable.has_value());
  EXPECT_FALSE(*r.stable);
}

TEST(Floquet, VanDerPolAgainstFiniteDifferenceMonodromy) {
  auto [m, q] = make_forced_vdp(5.0);
  Propagator prop(m, tableau_library("dirk3"), TimeGrid::uniform(5.0, 100));
  NewtonOptions no;
  no.tol = 1e-12;
  const auto sol = newton_krylov_solve(prop, vdp_mu(), StateVector::Zero(2), no);
  ASSERT_TRUE(sol.report.converged());
  FloquetOptions o;
  o.k = 2;
  const auto r = analyze_stability(prop, sol.trajectory, vdp_mu(), o);
  Matrix Phi(2, 2);
  const double eps = 1e-6;
  for (Index j = 0; j < 2; ++j) {
    const StateVector e = StateVector::Unit(2, j);
    Phi.col(j) = (prop.evolve(vdp_mu(), sol.u0 + eps * e).final_state() -
                  prop.evolve(vdp_mu(), sol.u0 - eps * e).final_state()) /
                 (2 * eps);
  }
  const ComplexVector ev = Eigen::EigenSolver<Matrix>(Phi, false).eigenvalues();
  EXPECT_NEAR(r.spectral_radius_estimate, ev.cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LT(r.spectral_radius_estimate, 1.0);
  EXPECT_TRUE(r.stable.value_or(false));
}

TEST(Floquet, UnstableOrbitFlagged) {
  auto [m, q] = make_forced_vdp(5.0);
  Propagator prop(m, tableau_library("dirk3"), TimeGrid::uniform(5.0, 100));
  ParamVector mu(3);
  mu << 0.5, 0.3, 0.3;
  NewtonOptions no;
  no.tol = 1e-12;
  const auto sol = newton_krylov_solve(prop, mu, StateVector::Zero(2), no);
  ASSERT_TRUE(sol.report.converged());
  FloquetOptions o;
  o.k = 2;
  const auto r = analyze_stability(prop, sol.trajectory, mu, o);
  EXPECT_GT(r.spectral_radius_estimate, 1.0);
  EXPECT_FALSE(r.stable.value_or(true));
}

TEST(Floquet, BurgersMeanModeDecay) {
  // Summing the discrete equations cancels the flux and diffusion terms, so the
  // mean obeys the scalar decay u' = -gamma u + mean(s) and e^T is a left
  // eigenvector of the monodromy with eigenvalue R(-gamma dt)^N.
  BurgersOptions bo;
  bo.n_cells = 64;
  auto [m, q] = make_burgers_1d(bo);
  const Index N = 40;
  const auto tab = tableau_library("dirk3");
  Propagator prop(m, tab, TimeGrid::uniform(1.0, N));
  NewtonOptions no;
  no.tol = 1e-11;
  const auto sol = newton_krylov_solve(prop, burgers_mu(), StateVector::Zero(64), no);
  ASSERT_TRUE(sol.report.converged());
  FloquetOptions o;
  o.k = 4;
  const auto r = analyze_stability(prop, sol.trajectory, burgers_mu(), o);
  const double mean_mode = std::pow(stability_function(tab, -1.0 / N), static_cast<double>(N));
  double best = INFINITY;
  for (const auto& e : r.eigenvalues) best = std::min(best, std::abs(e.value - mean_mode));
  EXPECT_LE(best, 1e-9);
  EXPECT_TRUE(r.stable.value_or(false));
}

TEST(Floquet, RejectsBadOptions) {
  Propagator prop(zero_model(3), tableau_library("dirk3"), TimeGrid::uniform(1.0, 4));
  const auto tr = prop.evolve(one(0.0), StateVector::Zero(3));
  FloquetOptions o;
  o.k = 0;
  EXPECT_THROW(analyze_stability(prop, tr, one(0.0), o), Error);
}
