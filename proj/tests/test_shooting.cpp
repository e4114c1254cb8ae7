#include "support.hpp"

#include <gtest/gtest.h>

#include <atomic>

using namespace tpa;
using namespace tpa::testing;

namespace {

Vector one(double x) { return Vector::Constant(1, x); }

/// Counts every propagation independently of the solver's own report.
class CountingPropagator : public Propagator {
 public:
  using Propagator::Propagator;
  mutable std::atomic<Index> evolves{0}, forwards{0}, adjoints{0};

  Trajectory evolve(const ParamVector& mu, const StateVector& u0) const override {
    ++evolves;
    return Propagator::evolve(mu, u0);
  }
  StateVector forward_sensitivity(const Trajectory& tr, const ParamVector& mu, const StateVector& v) const override {
    ++forwards;
    return Propagator::forward_sensitivity(tr, mu, v);
  }
  DualTrajectory adjoint(const Trajectory& tr, const ParamVector& mu, const StateVector& lam, const QoiValue* p,
                         Index q) const override {
    ++adjoints;
    return Propagator::adjoint(tr, mu, lam, p, q);
  }
};

CountingPropagator vdp_prop(Index steps = 100) {
  return CountingPropagator(make_forced_vdp(5.0).first, tableau_library("dirk3"), TimeGrid::uniform(5.0, steps));
}

}  // namespace

TEST(FixedPoint, ZeroDynamicsNeedsNoIteration) {
  Propagator prop(zero_model(2), tableau_library("dirk3"), TimeGrid::uniform(1.0, 4));
  auto s = fixed_point_solve(prop, one(0.0), StateVector::Constant(2, 3.0), {});
  EXPECT_TRUE(s.report.converged());
  EXPECT_EQ(s.report.iterations, 0);
  EXPECT_EQ(s.u0, StateVector::Constant(2, 3.0));
}

TEST(FixedPoint, ScalarDecayConvergesToAffineFixedPoint) {
  auto m = scalar_decay(5.0);
  Propagator prop(m, tableau_library("dirk3"), TimeGrid::uniform(5.0, 20));
  const auto o = dense_oracle_linear(prop, one(1.0));
  FixedPointOptions fo;
  fo.tol = 1e-13;
  auto s = fixed_point_solve(prop, one(1.0), one(0.0), fo);
  ASSERT_TRUE(s.report.converged());
  // the 1e-12 stage tolerance, not the defect, limits the attainable accuracy
  EXPECT_NEAR(s.u0(0), o.u0_star(0), 1e-11);
  EXPECT_NEAR(o.u0_star(0), 1.0, 1e-12);
  const auto& h = s.report.history;
  ASSERT_GE(h.size(), 3u);
  EXPECT_NEAR(h[2].defect / h[1].defect, std::abs(o.Phi(0, 0)), 1e-6);
}

TEST(FixedPoint, DefectRatioApproachesSpectralRadius) {
  // A with eigenvalues chosen so the discrete monodromy has radius 0.5
  const auto tab = tableau_library("dirk3");
  const double T = 1.0;
  Matrix A(2, 2);
  A << -std::log(2.0), 0.0, 0.0, -3.0;
  auto m = make_linear_periodic(A, {ForcingTerm{0, 1, ForcingTerm::Kind::sine}, ForcingTerm{1, 0, ForcingTerm::Kind::constant}}, T);
  Propagator prop(m, tab, TimeGrid::uniform(T, 40));
  Vector mu(2);
  mu << 1.0, 2.0;
  const auto o = dense_oracle_linear(prop, mu);
  const double rho = o.eigenvalues.cwiseAbs().maxCoeff();
  EXPECT_NEAR(rho, 0.5, 1e-6);
  FixedPointOptions fo;
  fo.tol = 1e-12;
  auto s = fixed_point_solve(prop, mu, StateVector::Zero(2), fo);
  ASSERT_TRUE(s.report.converged());
  const auto& h = s.report.history;
  ASSERT_GE(h.size(), 8u);
  EXPECT_NEAR(h[6].defect / h[5].defect, rho, 1e-6);
  EXPECT_LE((s.u0 - o.u0_star).norm(), 1e-11);
}

TEST(FixedPoint, IterationCapReported) {
  auto p = vdp_prop();
  FixedPointOptions fo;
  fo.tol = 1e-12;
  fo.max_iter = 3;
  auto s = fixed_point_solve(p, vdp_mu(), StateVector::Zero(2), fo);
  EXPECT_EQ(s.report.status, SolveStatus::max_iterations);
  EXPECT_EQ(s.report.iterations, 3);
  EXPECT_EQ(s.report.history.size(), 4u);
}

TEST(Newton, AffineMapConvergesInOneStep) {
  std::mt19937_64 rng(51);
  auto m = random_linear(rng, 8, 1.0);
  Propagator prop(m, tableau_library("dirk3"), TimeGrid::uniform(1.0, 30));
  const ParamVector mu = random_vector(rng, m->n_params());
  NewtonOptions no;
  no.gmres_tol = 1e-12;
  no.tol = 1e-10;
  auto s = newton_krylov_solve(prop, mu, StateVector::Zero(8), no);
  ASSERT_TRUE(s.report.converged());
  EXPECT_EQ(s.report.iterations, 1);
  EXPECT_LE((s.u0 - dense_oracle_linear(prop, mu).u0_star).norm(), 1e-10);
}

TEST(Newton, ReportCountsMatchPropagatorCalls) {
  auto p = vdp_prop();
  NewtonOptions no;
  no.tol = 1e-10;
  no.m_precondition = 2;
  auto s = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  ASSERT_TRUE(s.report.converged());
  EXPECT_EQ(s.report.primal_evolutions, p.evolves.load());
  EXPECT_EQ(s.report.sensitivity_evolutions, p.forwards.load());
  EXPECT_EQ(p.adjoints.load(), 0);
  EXPECT_EQ(s.report.preconditioning_sweeps, 2);
  EXPECT_EQ(s.report.primal_evolutions, 1 + 2 + s.report.iterations);
  Index inner = 0;
  for (const auto& k : s.report.inner) inner += k.matvecs;
  EXPECT_EQ(inner, s.report.sensitivity_evolutions);
  EXPECT_EQ(s.report.history.back().cumulative_matvecs, s.report.sensitivity_evolutions);
  EXPECT_NEAR(s.defect, (s.trajectory.final_state() - s.u0).norm(), 0.0);
}

TEST(Newton, SuperlinearDefectDecay) {
  auto p = vdp_prop();
  NewtonOptions no;
  no.tol = 1e-12;
  no.gmres_tol = 1e-6;
  auto s = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  ASSERT_TRUE(s.report.converged());
  const auto& h = s.report.history;
  ASSERT_GE(h.size(), 3u);
  // d_{k+1} / d_k^2 stays bounded until the defect reaches the roundoff floor
  Index checked = 0;
  for (std::size_t k = 0; k + 1 < h.size(); ++k) {
    if (h[k + 1].defect < 1e-13) break;
    EXPECT_LE(h[k + 1].defect, 10.0 * h[k].defect * h[k].defect) << k;
    ++checked;
  }
  EXPECT_GE(checked, 2);
}

TEST(Newton, PreconditioningDoesNotHurt) {
  auto p = vdp_prop();
  NewtonOptions no;
  no.tol = 1e-8;
  auto a = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  no.m_precondition = 5;
  auto b = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  ASSERT_TRUE(a.report.converged() && b.report.converged());
  EXPECT_LE(b.report.iterations, a.report.iterations);
}

TEST(Newton, IterationCapAndValidation) {
  auto p = vdp_prop();
  NewtonOptions no;
  no.tol = 1e-12;
  no.max_newton = 1;
  auto s = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  EXPECT_EQ(s.report.status, SolveStatus::max_iterations);
  no.gmres_tol = 1.5;
  EXPECT_THROW(newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no), Error);
}

TEST(Newton, StepFailureIsReportedNotThrown) {
  // A huge initial state drives the stiff stage Newton past its iteration cap.
  Propagator prop(make_forced_vdp(5.0).first, tableau_library("dirk3"), TimeGrid::uniform(5.0, 5));
  ParamVector mu(3);
  mu << 50.0, 1.0, 0.0;
  StateVector u0(2);
  u0 << 1e6, 1e6;
  auto s = newton_krylov_solve(prop, mu, u0, {});
  EXPECT_FALSE(s.report.converged());
}

TEST(OptShooting, ZeroDynamicsImmediateAcceptance) {
  Propagator prop(zero_model(2), tableau_library("dirk3"), TimeGrid::uniform(1.0, 4));
  auto s = optimization_shooting_solve(prop, one(0.0), StateVector::Constant(2, -1.0), {});
  EXPECT_TRUE(s.report.converged());
  EXPECT_EQ(s.report.iterations, 0);
  EXPECT_EQ(s.report.adjoint_evolutions, 0);
}

TEST(OptShooting, GradientMatchesCentralDifference) {
  auto p = vdp_prop(60);
  StateVector u0(2);
  u0 << 0.4, -0.2;
  const auto tr = p.evolve(vdp_mu(), u0);
  const auto obj = shooting_objective_gradient(p, vdp_mu(), tr);
  const double eps = 1e-6;
  for (Index j = 0; j < 2; ++j) {
    auto j_of = [&](const StateVector& u) {
      const auto t = p.evolve(vdp_mu(), u);
      return 0.5 * (t.final_state() - u).squaredNorm();
    };
    const StateVector e = StateVector::Unit(2, j);
    EXPECT_NEAR((j_of(u0 + eps * e) - j_of(u0 - eps * e)) / (2 * eps), obj.gradient(j), 1e-7);
  }
}

TEST(OptShooting, CountsMatchPropagatorCalls) {
  auto p = vdp_prop();
  OptShootingOptions oo;
  oo.tol = 1e-8;
  auto s = optimization_shooting_solve(p, vdp_mu(), StateVector::Zero(2), oo);
  ASSERT_TRUE(s.report.converged());
  EXPECT_EQ(s.report.primal_evolutions, p.evolves.load());
  EXPECT_EQ(s.report.adjoint_evolutions, p.adjoints.load());
  EXPECT_EQ(p.forwards.load(), 0);
}

TEST(CrossMethod, AllPrimalSolversAgreeAndOrderAsExpected) {
  auto p = vdp_prop();
  const double tol = 1e-10;
  NewtonOptions no;
  no.tol = tol;
  OptShootingOptions lb, sd;
  lb.tol = sd.tol = tol;
  sd.method = DescentMethod::steepest_descent;
  FixedPointOptions fo;
  fo.tol = tol;
  const auto a = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  const auto b = optimization_shooting_solve(p, vdp_mu(), StateVector::Zero(2), lb);
  const auto c = optimization_shooting_solve(p, vdp_mu(), StateVector::Zero(2), sd);
  const auto d = fixed_point_solve(p, vdp_mu(), StateVector::Zero(2), fo);
  for (const auto* s : {&a, &b, &c, &d}) {
    ASSERT_TRUE(s->report.converged()) << s->report.method;
    // |u - u*| <= |(Phi - I)^{-1}| defect, and |(Phi - I)^{-1}| ~ 2 here
    EXPECT_LE((s->u0 - a.u0).norm(), 10 * tol) << s->report.method;
  }
  EXPECT_LE(a.report.iterations, b.report.iterations);
  EXPECT_LE(b.report.iterations, c.report.iterations);
  EXPECT_LE(c.report.iterations, d.report.iterations);
}

TEST(DualSolve, GmresAndFixedPointAgree) {
  auto p = vdp_prop();
  NewtonOptions no;
  no.tol = 1e-12;
  no.gmres_tol = 1e-8;
  const auto prim = newton_krylov_solve(p, vdp_mu(), StateVector::Zero(2), no);
  ASSERT_TRUE(prim.report.converged());
  auto qoi = make_forced_vdp(5.0).second;
  const auto P = accumulate_qoi(p.model(), *qoi, prim.trajectory, vdp_mu());
  for (Index q = 0; q < 2; ++q) {
    DualOptions g, f;
    g.tol = f.tol = 1e-11;
    f.method = DualMethod::fixed_point;
    const Index before = p.adjoints.load();
    const auto dg = dual_solve(p, prim.trajectory, vdp_mu(), P, q, g);
    EXPECT_EQ(dg.report.adjoint_evolutions, p.adjoints.load() - before);
    const auto df = dual_solve(p, prim.trajectory, vdp_mu(), P, q, f);
    ASSERT_TRUE(dg.report.converged() && df.report.converged());
    EXPECT_LE((dg.lambda_final - df.lambda_final).norm(), 1e-9 * std::max(1.0, dg.lambda_final.norm()));
    EXPECT_LE(dg.report.iterations, df.report.iterations);
    // boundary condition holds on the returned trajectory
    const StateVector bc = dg.dual.lambdas.front() + P.dF_du[q].back() - dg.lambda_final;
    EXPECT_LE(bc.norm(), 1e-11);
    EXPECT_EQ(dg.dual.lambdas.back(), dg.lambda_final);
  }
}

TEST(DualSolve, LinearMatchesDenseTransposeSystem) {
  std::mt19937_64 rng(52);
  auto m = random_linear(rng, 6, 1.0);
  Propagator prop(m, tableau_library("sdirk2"), TimeGrid::uniform(1.0, 25));
  const ParamVector mu = random_vector(rng, m->n_params());
  const auto o = dense_oracle_linear(prop, mu);
  const auto tr = prop.evolve(mu, o.u0_star);
  QuadraticQoi q(6, m->n_params(), {{random_vector(rng, 6), Matrix::Identity(6, 6), {}, "P"}});
  const auto P = accumulate_qoi(*m, q, tr, mu);
  DualOptions d;
  d.tol = 1e-12;
  const auto ds = dual_solve(prop, tr, mu, P, 0, d);
  ASSERT_TRUE(ds.report.converged());
  const StateVector z0 = prop.adjoint(tr, mu, StateVector::Zero(6), &P, 0).lambdas.front() + P.dF_du[0].back();
  const StateVector x = (Matrix::Identity(6, 6) - o.Phi.transpose()).partialPivLu().solve(z0);
  EXPECT_LE((ds.lambda_final - x).norm(), 1e-10 * std::max(1.0, x.norm()));
}

TEST(DualSolve, FixedPointDivergesOnUnstableOrbit) {
  // mu1 = 0.5 makes the periodic orbit unstable, so the dual fixed point map expands.
  auto p = vdp_prop();
  ParamVector mu(3);
  mu << 0.5, 0.3, 0.3;
  NewtonOptions no;
  no.tol = 1e-12;
  no.gmres_tol = 1e-10;
  const auto prim = newton_krylov_solve(p, mu, StateVector::Zero(2), no);
  ASSERT_TRUE(prim.report.converged());
  auto qoi = make_forced_vdp(5.0).second;
  const auto P = accumulate_qoi(p.model(), *qoi, prim.trajectory, mu);
  DualOptions f;
  f.method = DualMethod::fixed_point;
  f.tol = 1e-10;
  f.max_iter = 2000;
  const auto df = dual_solve(p, prim.trajectory, mu, P, 0, f);
  EXPECT_FALSE(df.report.converged());
  DualOptions g;
  g.tol = 1e-10;
  EXPECT_TRUE(dual_solve(p, prim.trajectory, mu, P, 0, g).report.converged());
}
