#ifndef TPA_SENSITIVITY_HPP
#define TPA_SENSITIVITY_HPP

#include "tpa/dirk.hpp"

namespace tpa {

/// Adjoint history: lambda^(0..Nt) and stage duals kappa_i^(1..Nt).
struct DualTrajectory {
  ButcherTableau tableau;
  TimeGrid grid;
  std::vector<StateVector> lambdas;
  /// stage_duals[n - 1][i] holds kappa_{i+1}^(n)
  std::vector<std::vector<StateVector>> stage_duals;
};

/**
 * (du^(Nt)/du0) v by one linearized forward sweep along a frozen trajectory.
 * Stage i solves  (M - dt a_ii J_i) w_i = dt J_i (p + sum_{j<i} a_ij w_j),
 * J_i = dr/du at u_i^(n).
 */
inline StateVector forward_sensitivity_apply(const Model& model, const Trajectory& tr, const ParamVector& mu,
                                             const StateVector& v, double tol) {
  require(v.size() == model.dim(), "forward sensitivity: direction has wrong length");
  const auto& tab = tr.tableau;
  const Index s = tab.stages();
  StateVector p = v;
  std::vector<StateVector> w(static_cast<std::size_t>(s));
  for (Index n = 1; n <= tr.grid.steps(); ++n) {
    const double dt = tr.grid.dt(n);
    for (Index i = 0; i < s; ++i) {
      const StateVector ui = tr.stage_state(n, i);
      const double ti = tr.stage_time(n, i);
      StateVector arg = p;
      for (Index j = 0; j < i; ++j) arg += tab.a(i, j) * w[static_cast<std::size_t>(j)];
      const StateVector rhs = dt * model.jac_u_apply(ui, mu, ti, arg);
      w[static_cast<std::size_t>(i)] = solve_stage_operator(model, ui, mu, ti, dt * tab.a(i, i), rhs, tol, false, n, i);
    }
    for (Index i = 0; i < s; ++i) p += tab.b(i) * w[static_cast<std::size_t>(i)];
  }
  return p;
}

/**
 * Backward adjoint sweep from lambda^(Nt) = lambda_final:
 *
 *   M^T kappa_i = dF/dk_i + b_i lambda^(n) + sum_{j>=i} a_ji dt J_j^T kappa_j   (i = s..1)
 *   lambda^(n-1) = lambda^(n) + dF/du^(n-1) + sum_i dt J_i^T kappa_i
 *
 * With partials == nullptr the QoI source terms are zero.
 */
inline DualTrajectory adjoint_backward_evolve(const Model& model, const Trajectory& tr, const ParamVector& mu,
                                              const StateVector& lambda_final, const QoiValue* partials,
                                              Index qoi_index, double tol) {
  require(lambda_final.size() == model.dim(), "adjoint: terminal value has wrong length");
  const auto& tab = tr.tableau;
  const Index s = tab.stages(), nt = tr.grid.steps();
  if (partials) require(qoi_index >= 0 && qoi_index < partials->n_qoi(), "adjoint: qoi index out of range");

  DualTrajectory out;
  out.tableau = tab;
  out.grid = tr.grid;
  out.lambdas.assign(static_cast<std::size_t>(nt + 1), StateVector());
  out.stage_duals.assign(static_cast<std::size_t>(nt), std::vector<StateVector>(static_cast<std::size_t>(s)));
  out.lambdas.back() = lambda_final;

  const auto qs = static_cast<std::size_t>(qoi_index);
  std::vector<StateVector> jt(static_cast<std::size_t>(s));  // J_j^T kappa_j
  for (Index n = nt; n >= 1; --n) {
    const double dt = tr.grid.dt(n);
    const StateVector& lam = out.lambdas[static_cast<std::size_t>(n)];
    auto& kap = out.stage_duals[static_cast<std::size_t>(n - 1)];
    for (Index i = s - 1; i >= 0; --i) {
      const StateVector ui = tr.stage_state(n, i);
      const double ti = tr.stage_time(n, i);
      StateVector rhs = tab.b(i) * lam;
      if (partials) rhs += partials->dF_dk[qs][static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(i)];
      for (Index j = i + 1; j < s; ++j) rhs += (tab.a(j, i) * dt) * jt[static_cast<std::size_t>(j)];
      kap[static_cast<std::size_t>(i)] = solve_stage_operator(model, ui, mu, ti, dt * tab.a(i, i), rhs, tol, true, n, i);
      jt[static_cast<std::size_t>(i)] = model.jac_u_apply_transpose(ui, mu, ti, kap[static_cast<std::size_t>(i)]);
    }
    StateVector prev = lam;
    if (partials) prev += partials->dF_du[qs][static_cast<std::size_t>(n - 1)];
    for (Index i = 0; i < s; ++i) prev += dt * jt[static_cast<std::size_t>(i)];
    out.lambdas[static_cast<std::size_t>(n - 1)] = std::move(prev);
  }
  return out;
}

/// (d lambda^(0) / d lambda_Nt) v: the backward sweep without QoI sources.
inline StateVector adjoint_sensitivity_apply(const Model& model, const Trajectory& tr, const ParamVector& mu,
                                             const StateVector& v, double tol) {
  return adjoint_backward_evolve(model, tr, mu, v, nullptr, 0, tol).lambdas.front();
}

}  // namespace tpa

#endif  // TPA_SENSITIVITY_HPP
