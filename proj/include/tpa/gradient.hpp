#ifndef TPA_GRADIENT_HPP
#define TPA_GRADIENT_HPP

#include "tpa/linear_model.hpp"
#include "tpa/parallel.hpp"
#include "tpa/shooting.hpp"

#include <Eigen/SVD>

#include <optional>

namespace tpa {

/// Failure inside the gradient pipeline, labeled by the stage that failed.
class GradientError : public Error {
 public:
  GradientError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// dF/dmu on the manifold of periodic solutions, n_qoi x N_mu.
struct ManifoldGradient {
  Matrix values;
  double primal_tol = 0.0;
  double dual_tol = 0.0;
  std::vector<std::string> qoi_names;
};

struct GradientOptions {
  NewtonOptions primal;
  DualOptions dual;
  /// Starting guess for the periodic solve; zero when empty.
  std::optional<StateVector> u0_guess;
  /// QoIs that get a dual solve; empty means all. Inactive rows stay zero.
  std::vector<Index> active;
  int workers = 1;
};

struct GradientResult {
  PeriodicSolution primal;
  QoiValue qoi;
  std::vector<DualSolution> duals;
  ManifoldGradient gradient;
};

/// dF/dmu = dF/dmu(explicit) + sum_n dt_n sum_i (dr/dmu at u_i^(n))^T kappa_i^(n)
inline Vector assemble_manifold_gradient(const Model& model, const Trajectory& tr, const DualTrajectory& dual,
                                         const ParamVector& mu, const Vector& explicit_part) {
  Vector g = explicit_part;
  const Index s = tr.tableau.stages();
  for (Index n = 1; n <= tr.grid.steps(); ++n) {
    const double dt = tr.grid.dt(n);
    for (Index i = 0; i < s; ++i) {
      const auto& kap = dual.stage_duals[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(i)];
      g += dt * model.jac_mu_apply_transpose(tr.stage_state(n, i), mu, tr.stage_time(n, i), kap);
    }
  }
  return g;
}

/**
 * Gradients of every QoI on the manifold of periodic solutions: a Newton-Krylov
 * periodic solve, the solver-consistent QoI with its partials, one periodic
 * adjoint solve per QoI, and reconstruction from the stage duals.
 */
inline GradientResult periodic_gradient(const Propagator& prop, const Qoi& qoi, const ParamVector& mu,
                                        const GradientOptions& opt) {
  require(opt.primal.tol > 0.0 && opt.dual.tol > 0.0, "periodic gradient: tolerances must be positive");
  const Model& model = prop.model();
  GradientResult out;
  const StateVector guess = opt.u0_guess.value_or(StateVector::Zero(model.dim()));
  out.primal = newton_krylov_solve(prop, mu, guess, opt.primal);
  if (!out.primal.report.converged())
    throw GradientError("primal", std::string("periodic solve ") + to_string(out.primal.report.status) +
                                      " (defect " + std::to_string(out.primal.defect) + ")" +
                                      (out.primal.report.message.empty() ? "" : ": " + out.primal.report.message));
  try {
    out.qoi = accumulate_qoi(model, qoi, out.primal.trajectory, mu);
  } catch (const std::exception& e) {
    throw GradientError("qoi", e.what());
  }

  const Index nq = qoi.n_qoi();
  out.duals.resize(static_cast<std::size_t>(nq));
  out.gradient.values = Matrix::Zero(nq, model.n_params());
  out.gradient.primal_tol = opt.primal.tol;
  out.gradient.dual_tol = opt.dual.tol;
  out.gradient.qoi_names = qoi.names();
  std::vector<Index> which = opt.active;
  if (which.empty())
    for (Index q = 0; q < nq; ++q) which.push_back(q);
  for (Index q : which) require(q >= 0 && q < nq, "periodic gradient: active qoi index out of range");
  std::vector<Vector> rows(static_cast<std::size_t>(nq), Vector::Zero(model.n_params()));
  parallel_for(which.size(), opt.workers, [&](std::size_t slot) {
    const auto q = static_cast<std::size_t>(which[slot]);
    DualSolution ds;
    try {
      ds = dual_solve(prop, out.primal.trajectory, mu, out.qoi, static_cast<Index>(q), opt.dual);
    } catch (const std::exception& e) {
      throw GradientError("dual", e.what());
    }
    if (!ds.report.converged())
      throw GradientError("dual", "qoi " + std::to_string(q) + ": " + to_string(ds.report.status) + " (defect " +
                                      std::to_string(ds.defect) + ")");
    try {
      rows[q] = assemble_manifold_gradient(model, out.primal.trajectory, ds.dual, mu,
                                           out.qoi.dF_dmu.row(static_cast<Index>(q)).transpose());
    } catch (const std::exception& e) {
      throw GradientError("assembly", e.what());
    }
    out.duals[q] = std::move(ds);
  });
  for (Index q = 0; q < nq; ++q) out.gradient.values.row(q) = rows[static_cast<std::size_t>(q)].transpose();
  return out;
}

struct GradCheckRow {
  Index qoi = 0;
  Index param = 0;
  double tau = 0.0;
  double fd_value = 0.0;
  double adjoint_value = 0.0;
  /// |fd - adjoint| / |adjoint|, or the absolute difference when adjoint == 0.
  double rel_error = 0.0;
  bool ok = true;
  std::string failure;
};

struct GradCheckOptions {
  GradientOptions gradient;
  /// Newton settings for the re-solves at perturbed parameters.
  NewtonOptions resolve;
};

struct GradCheckResult {
  GradientResult adjoint;
  std::vector<GradCheckRow> rows;
};

/**
 * Central differences (F(mu + tau e_p) - F(mu - tau e_p)) / (2 tau) where each
 * F evaluation is a full periodic re-solve warm-started from the base-point
 * periodic state, compared against the adjoint gradient.
 */
inline GradCheckResult grad_check(const Propagator& prop, const Qoi& qoi, const ParamVector& mu,
                                  const std::vector<double>& taus, const GradCheckOptions& opt) {
  for (double t : taus) require(t > 0.0, "grad check: step sizes must be positive");
  require(opt.resolve.tol <= 1e-12 && opt.gradient.primal.tol <= 1e-12,
          "grad check: primal tolerance must be at most 1e-12");
  GradCheckResult out;
  out.adjoint = periodic_gradient(prop, qoi, mu, opt.gradient);
  const StateVector base_u0 = out.adjoint.primal.u0;
  const Model& model = prop.model();
  const Index np = model.n_params(), nq = qoi.n_qoi();
  const std::size_t ntau = taus.size();

  struct Column {
    Vector fd;
    bool ok = true;
    std::string failure;
  };
  std::vector<Column> cols(static_cast<std::size_t>(np) * ntau);
  parallel_for(cols.size(), opt.gradient.workers, [&](std::size_t idx) {
    const Index p = static_cast<Index>(idx / ntau);
    const double tau = taus[idx % ntau];
    auto eval = [&](double sign) -> Vector {
      ParamVector m = mu;
      m(p) += sign * tau;
      auto sol = newton_krylov_solve(prop, m, base_u0, opt.resolve);
      if (!sol.report.converged())
        throw GradientError("primal", std::string("re-solve ") + to_string(sol.report.status));
      return accumulate_qoi(model, qoi, sol.trajectory, m).F;
    };
    Column& c = cols[idx];
    try {
      c.fd = (eval(1.0) - eval(-1.0)) / (2.0 * tau);
    } catch (const std::exception& e) {
      c.ok = false;
      c.failure = e.what();
    }
  });

  for (Index q = 0; q < nq; ++q) {
    for (Index p = 0; p < np; ++p) {
      for (std::size_t k = 0; k < ntau; ++k) {
        const auto& c = cols[static_cast<std::size_t>(p) * ntau + k];
        GradCheckRow row;
        row.qoi = q;
        row.param = p;
        row.tau = taus[k];
        row.adjoint_value = out.adjoint.gradient.values(q, p);
        row.ok = c.ok;
        row.failure = c.failure;
        if (c.ok) {
          row.fd_value = c.fd(q);
          const double diff = std::abs(row.fd_value - row.adjoint_value);
          row.rel_error = row.adjoint_value != 0.0 ? diff / std::abs(row.adjoint_value) : diff;
        } else {
          row.fd_value = NAN;
          row.rel_error = NAN;
        }
        out.rows.push_back(row);
      }
    }
  }
  return out;
}

/// One-period affine map u^(Nt) = Phi u0 + c, built column by column from evolve.
struct AffineMap {
  Matrix Phi;
  StateVector c;
};

inline AffineMap one_period_affine_map(const Propagator& prop, const ParamVector& mu) {
  const Index n = prop.dim();
  require(n <= 200, "dense oracle: state dimension too large for dense algebra");
  AffineMap out;
  out.c = prop.evolve(mu, StateVector::Zero(n)).final_state();
  out.Phi.resize(n, n);
  for (Index k = 0; k < n; ++k) out.Phi.col(k) = prop.evolve(mu, StateVector::Unit(n, k)).final_state() - out.c;
  return out;
}

class OracleError : public Error {
 public:
  using Error::Error;
};

struct LinearOracle {
  Matrix Phi;
  StateVector c;
  /// Exact discrete periodic initial condition, (I - Phi)^{-1} c.
  StateVector u0_star;
  ComplexVector eigenvalues;
};

/// Dense brute-force periodic solution for models with an affine one-period map.
inline LinearOracle dense_oracle_linear(const Propagator& prop, const ParamVector& mu) {
  auto map = one_period_affine_map(prop, mu);
  const Index n = prop.dim();
  const Matrix IminusPhi = Matrix::Identity(n, n) - map.Phi;
  Eigen::JacobiSVD<Matrix> svd(IminusPhi);
  const auto& sv = svd.singularValues();
  if (sv(n - 1) <= 1e-10 * std::max(1.0, sv(0)))
    throw OracleError("dense oracle: I - Phi is numerically singular (neutrally stable instance)");
  LinearOracle out;
  out.u0_star = IminusPhi.fullPivLu().solve(map.c);
  out.eigenvalues = Eigen::EigenSolver<Matrix>(map.Phi, false).eigenvalues();
  out.Phi = std::move(map.Phi);
  out.c = std::move(map.c);
  return out;
}

/**
 * Independent gradient for models whose forcing is linear in mu and vanishes at
 * mu = 0, so every state and stage of the periodic solution is linear in mu.
 * The per-parameter periodic trajectories are found densely and the QoI chain
 * rule is taken through them; no adjoint or sensitivity sweep is involved.
 */
inline Matrix oracle_gradient_linear(const Propagator& prop, const Qoi& qoi, const ParamVector& mu) {
  const Model& model = prop.model();
  const Index n = prop.dim(), np = model.n_params(), nq = qoi.n_qoi();
  const ParamVector zero = ParamVector::Zero(np);
  const auto map = one_period_affine_map(prop, zero);
  const Eigen::FullPivLU<Matrix> lu(Matrix::Identity(n, n) - map.Phi);

  auto periodic_traj = [&](const ParamVector& m) {
    const StateVector c = prop.evolve(m, StateVector::Zero(n)).final_state();
    return prop.evolve(m, lu.solve(c));
  };
  const Trajectory base = periodic_traj(mu);
  std::vector<Trajectory> dirs;
  for (Index p = 0; p < np; ++p) dirs.push_back(periodic_traj(ParamVector::Unit(np, p)));

  Matrix G = Matrix::Zero(nq, np);
  const auto& tab = base.tableau;
  for (Index k = 1; k <= base.grid.steps(); ++k) {
    const double dt = base.grid.dt(k);
    for (Index i = 0; i < tab.stages(); ++i) {
      const StateVector ui = base.stage_state(k, i);
      const double ti = base.stage_time(k, i);
      for (Index q = 0; q < nq; ++q) {
        const StateVector gu = qoi.grad_u(ui, mu, ti, q);
        const ParamVector gm = qoi.grad_mu(ui, mu, ti, q);
        for (Index p = 0; p < np; ++p)
          G(q, p) += dt * tab.b(i) * (gu.dot(dirs[static_cast<std::size_t>(p)].stage_state(k, i)) + gm(p));
      }
    }
  }
  return G;
}

}  // namespace tpa

#endif  // TPA_GRADIENT_HPP
