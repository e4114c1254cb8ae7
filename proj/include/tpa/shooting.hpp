#ifndef TPA_SHOOTING_HPP
#define TPA_SHOOTING_HPP

#include "tpa/sensitivity.hpp"

#include <chrono>
#include <deque>
#include <string>

namespace tpa {

/**
 * Bundles a model, a tableau and a time grid into the three propagations every
 * shooting and adjoint solver is built from. Solvers count their calls into
 * this object in their SolveReport; the methods are virtual so a test can
 * observe the calls independently.
 */
class Propagator {
 public:
  Propagator(ModelPtr model, ButcherTableau tableau, TimeGrid grid, double stage_tol = 1e-12)
      : model_(std::move(model)), tableau_(std::move(tableau)), grid_(std::move(grid)), stage_tol_(stage_tol) {
    require(model_ != nullptr, "propagator: null model");
    require(stage_tol_ > 0.0, "propagator: stage tolerance must be positive");
    tableau_.validate();
  }
  virtual ~Propagator() = default;

  const Model& model() const { return *model_; }
  const ModelPtr& model_ptr() const { return model_; }
  const ButcherTableau& tableau() const { return tableau_; }
  const TimeGrid& grid() const { return grid_; }
  double stage_tol() const { return stage_tol_; }
  Index dim() const { return model_->dim(); }

  virtual Trajectory evolve(const ParamVector& mu, const StateVector& u0) const {
    return tpa::evolve(*model_, tableau_, grid_, mu, u0, stage_tol_);
  }
  virtual StateVector forward_sensitivity(const Trajectory& tr, const ParamVector& mu, const StateVector& v) const {
    return forward_sensitivity_apply(*model_, tr, mu, v, stage_tol_);
  }
  virtual DualTrajectory adjoint(const Trajectory& tr, const ParamVector& mu, const StateVector& lambda_final,
                                 const QoiValue* partials, Index qoi_index) const {
    return adjoint_backward_evolve(*model_, tr, mu, lambda_final, partials, qoi_index, stage_tol_);
  }

 private:
  ModelPtr model_;
  ButcherTableau tableau_;
  TimeGrid grid_;
  double stage_tol_;
};

enum class SolveStatus { converged, max_iterations, line_search_failure, step_failure, diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max_iterations";
    case SolveStatus::line_search_failure: return "line_search_failure";
    case SolveStatus::step_failure: return "step_failure";
    case SolveStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct IterationRecord {
  Index iteration = 0;
  double defect = 0.0;
  Index inner_iterations = 0;
  /// Linearized (sensitivity or adjoint) evolutions so far.
  Index cumulative_matvecs = 0;
};

struct SolveReport {
  std::string method;
  std::vector<IterationRecord> history;
  std::vector<KrylovReport> inner;
  /// Outer iterations of the method proper (Newton steps, descent steps, sweeps).
  Index iterations = 0;
  /// Fixed-point sweeps spent as nonlinear preconditioning before Newton.
  Index preconditioning_sweeps = 0;
  Index primal_evolutions = 0;
  Index sensitivity_evolutions = 0;
  Index adjoint_evolutions = 0;
  /// Some inner GMRES solve stopped before reaching its tolerance.
  bool inner_stagnation = false;
  double wall_seconds = 0.0;
  SolveStatus status = SolveStatus::max_iterations;
  std::string message;

  bool converged() const { return status == SolveStatus::converged; }
  double final_defect() const { return history.empty() ? INFINITY : history.back().defect; }
  Index linear_evolutions() const { return sensitivity_evolutions + adjoint_evolutions; }
  void record(double defect, Index inner_iterations = 0) {
    history.push_back({static_cast<Index>(history.size()), defect, inner_iterations, linear_evolutions()});
  }
};

struct PeriodicSolution {
  StateVector u0;
  Trajectory trajectory;
  double defect = INFINITY;
  SolveReport report;
};

namespace detail {

class WallClock {
 public:
  WallClock() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

inline double defect_of(const Trajectory& tr) { return (tr.final_state() - tr.states.front()).norm(); }

}  // namespace detail

struct FixedPointOptions {
  double tol = 1e-10;
  Index max_iter = 1000;
};

/// Repeated reassignment u0 <- u^(Nt)(u0; mu) until the periodicity defect is below tol.
inline PeriodicSolution fixed_point_solve(const Propagator& prop, const ParamVector& mu, const StateVector& u0_guess,
                                          const FixedPointOptions& opt) {
  require(opt.tol > 0.0, "fixed point: tolerance must be positive");
  detail::WallClock clock;
  PeriodicSolution sol;
  sol.report.method = "fixed-point";
  auto& rep = sol.report;
  try {
    sol.trajectory = prop.evolve(mu, u0_guess);
    ++rep.primal_evolutions;
    sol.defect = detail::defect_of(sol.trajectory);
    rep.record(sol.defect);
    while (!(sol.defect <= opt.tol)) {
      if (rep.iterations >= opt.max_iter || !std::isfinite(sol.defect)) {
        rep.status = std::isfinite(sol.defect) ? SolveStatus::max_iterations : SolveStatus::diverged;
        break;
      }
      const StateVector next = sol.trajectory.final_state();
      sol.trajectory = prop.evolve(mu, next);
      ++rep.primal_evolutions;
      ++rep.iterations;
      sol.defect = detail::defect_of(sol.trajectory);
      rep.record(sol.defect);
    }
    if (sol.defect <= opt.tol) rep.status = SolveStatus::converged;
  } catch (const StepFailure& e) {
    rep.status = SolveStatus::step_failure;
    rep.message = e.what();
  }
  sol.u0 = sol.trajectory.states.empty() ? u0_guess : sol.trajectory.states.front();
  rep.wall_seconds = clock.seconds();
  return sol;
}

struct NewtonOptions {
  double tol = 1e-10;
  /// Relative GMRES tolerance for the Newton correction.
  double gmres_tol = 1e-3;
  /// Fixed-point sweeps applied before the first Newton step.
  Index m_precondition = 0;
  Index max_newton = 50;
  /// Cap on the GMRES iterations per Newton step; 0 means the state dimension.
  Index max_gmres = 0;
  /// Corrections longer than this are scaled back.
  double max_step = 1e3;
};

/**
 * Newton-Krylov shooting: solve (du^(Nt)/du0 - I) du = u^(Nt) - u0 by
 * matrix-free GMRES, each product costing one forward sensitivity sweep, and
 * update u0 <- u0 - du.
 */
inline PeriodicSolution newton_krylov_solve(const Propagator& prop, const ParamVector& mu,
                                            const StateVector& u0_guess, const NewtonOptions& opt) {
  require(opt.tol > 0.0, "newton: tolerance must be positive");
  require(opt.gmres_tol > 0.0 && opt.gmres_tol < 1.0, "newton: GMRES tolerance must lie in (0, 1)");
  require(opt.m_precondition >= 0, "newton: preconditioning sweeps must be non-negative");
  detail::WallClock clock;
  PeriodicSolution sol;
  auto& rep = sol.report;
  rep.method = "newton-gmres";
  StateVector u = u0_guess;
  try {
    sol.trajectory = prop.evolve(mu, u);
    ++rep.primal_evolutions;
    sol.defect = detail::defect_of(sol.trajectory);
    rep.record(sol.defect);
    for (Index k = 0; k < opt.m_precondition && !(sol.defect <= opt.tol); ++k) {
      u = sol.trajectory.final_state();
      sol.trajectory = prop.evolve(mu, u);
      ++rep.primal_evolutions;
      ++rep.preconditioning_sweeps;
      sol.defect = detail::defect_of(sol.trajectory);
      rep.record(sol.defect);
    }
    while (!(sol.defect <= opt.tol)) {
      if (rep.iterations >= opt.max_newton || !std::isfinite(sol.defect)) {
        rep.status = std::isfinite(sol.defect) ? SolveStatus::max_iterations : SolveStatus::diverged;
        break;
      }
      const Trajectory& tr = sol.trajectory;
      const StateVector R = tr.final_state() - u;
      LinearOperator J{prop.dim(), [&](const Vector& v) -> Vector {
                         ++rep.sensitivity_evolutions;
                         return prop.forward_sensitivity(tr, mu, v) - v;
                       }};
      GmresOptions go;
      go.rel_tol = opt.gmres_tol;
      go.max_iter = opt.max_gmres;
      auto lin = gmres(J, R, Vector::Zero(prop.dim()), go);
      if (!lin.report.converged) rep.inner_stagnation = true;
      StateVector du = lin.x;
      if (du.norm() > opt.max_step) du *= opt.max_step / du.norm();
      const Index inner_its = lin.report.iterations;
      rep.inner.push_back(std::move(lin.report));
      u -= du;
      sol.trajectory = prop.evolve(mu, u);
      ++rep.primal_evolutions;
      ++rep.iterations;
      sol.defect = detail::defect_of(sol.trajectory);
      rep.record(sol.defect, inner_its);
    }
    if (sol.defect <= opt.tol) rep.status = SolveStatus::converged;
  } catch (const StepFailure& e) {
    rep.status = SolveStatus::step_failure;
    rep.message = e.what();
  }
  sol.u0 = u;
  rep.wall_seconds = clock.seconds();
  return sol;
}

enum class DescentMethod { steepest_descent, lbfgs };

struct OptShootingOptions {
  double tol = 1e-10;
  DescentMethod method = DescentMethod::lbfgs;
  Index memory = 10;
  Index max_iter = 2000;
  double armijo_c1 = 1e-4;
  Index max_backtracks = 60;
};

/// j(u0) = 1/2 ||u^(Nt)(u0) - u0||^2 and its adjoint gradient lambda^(0) + u0 - u^(Nt).
struct ShootingObjective {
  double value = 0.0;
  StateVector gradient;
};

inline ShootingObjective shooting_objective_gradient(const Propagator& prop, const ParamVector& mu,
                                                     const Trajectory& tr, SolveReport* rep = nullptr) {
  const StateVector R = tr.final_state() - tr.states.front();
  const auto dual = prop.adjoint(tr, mu, R, nullptr, 0);
  if (rep) ++rep->adjoint_evolutions;
  return {0.5 * R.squaredNorm(), dual.lambdas.front() - R};
}

/**
 * Periodic solution as the minimizer of j(u0) by steepest descent or L-BFGS
 * with Armijo backtracking (step halving). Steepest descent starts each line
 * search from twice the previously accepted step; L-BFGS starts from 1.
 */
inline PeriodicSolution optimization_shooting_solve(const Propagator& prop, const ParamVector& mu,
                                                    const StateVector& u0_guess, const OptShootingOptions& opt) {
  require(opt.tol > 0.0, "optimization shooting: tolerance must be positive");
  require(opt.method != DescentMethod::lbfgs || opt.memory >= 1, "optimization shooting: L-BFGS memory must be >= 1");
  detail::WallClock clock;
  PeriodicSolution sol;
  auto& rep = sol.report;
  rep.method = opt.method == DescentMethod::lbfgs ? "l-bfgs" : "steepest-descent";
  StateVector u = u0_guess;
  try {
    sol.trajectory = prop.evolve(mu, u);
    ++rep.primal_evolutions;
    sol.defect = detail::defect_of(sol.trajectory);
    rep.record(sol.defect);
    if (sol.defect <= opt.tol) {
      rep.status = SolveStatus::converged;
    } else {
      auto obj = shooting_objective_gradient(prop, mu, sol.trajectory, &rep);
      std::deque<std::pair<Vector, Vector>> pairs;  // (s, y)
      double alpha_prev = 0.5;
      while (!(sol.defect <= opt.tol)) {
        if (rep.iterations >= opt.max_iter) {
          rep.status = SolveStatus::max_iterations;
          break;
        }
        Vector d = -obj.gradient;
        if (opt.method == DescentMethod::lbfgs && !pairs.empty()) {
          std::vector<double> a(pairs.size());
          Vector q = obj.gradient;
          for (std::size_t i = pairs.size(); i-- > 0;) {
            const auto& [s, y] = pairs[i];
            a[i] = s.dot(q) / y.dot(s);
            q -= a[i] * y;
          }
          const auto& [sl, yl] = pairs.back();
          q *= sl.dot(yl) / yl.dot(yl);
          for (std::size_t i = 0; i < pairs.size(); ++i) {
            const auto& [s, y] = pairs[i];
            const double bta = y.dot(q) / y.dot(s);
            q += (a[i] - bta) * s;
          }
          d = -q;
          if (d.dot(obj.gradient) >= 0.0) {
            d = -obj.gradient;
            pairs.clear();
          }
        }
        const double slope = obj.gradient.dot(d);
        double alpha = opt.method == DescentMethod::lbfgs ? 1.0 : 2.0 * alpha_prev;
        bool accepted = false;
        Trajectory trial;
        for (Index bt = 0; bt <= opt.max_backtracks; ++bt) {
          try {
            trial = prop.evolve(mu, u + alpha * d);
            ++rep.primal_evolutions;
            const double jt = 0.5 * (trial.final_state() - trial.states.front()).squaredNorm();
            if (std::isfinite(jt) && jt <= obj.value + opt.armijo_c1 * alpha * slope) {
              accepted = true;
              break;
            }
          } catch (const StepFailure&) {
            ++rep.primal_evolutions;
          }
          alpha *= 0.5;
        }
        if (!accepted) {
          rep.status = SolveStatus::line_search_failure;
          break;
        }
        alpha_prev = alpha;
        const Vector s = alpha * d;
        u += s;
        sol.trajectory = std::move(trial);
        ++rep.iterations;
        sol.defect = detail::defect_of(sol.trajectory);
        rep.record(sol.defect);
        if (sol.defect <= opt.tol) break;
        auto next = shooting_objective_gradient(prop, mu, sol.trajectory, &rep);
        const Vector y = next.gradient - obj.gradient;
        if (opt.method == DescentMethod::lbfgs && s.dot(y) > 1e-14 * s.norm() * y.norm()) {
          pairs.emplace_back(s, y);
          if (static_cast<Index>(pairs.size()) > opt.memory) pairs.pop_front();
        }
        obj = std::move(next);
      }
      if (sol.defect <= opt.tol) rep.status = SolveStatus::converged;
    }
  } catch (const StepFailure& e) {
    rep.status = SolveStatus::step_failure;
    rep.message = e.what();
  }
  sol.u0 = u;
  rep.wall_seconds = clock.seconds();
  return sol;
}

enum class DualMethod { gmres, fixed_point };

struct DualOptions {
  DualMethod method = DualMethod::gmres;
  /// Absolute tolerance on ||lambda^(0)(x) + dF/du^(Nt) - x||.
  double tol = 1e-10;
  Index max_iter = 1000;
};

struct DualSolution {
  StateVector lambda_final;
  DualTrajectory dual;
  double defect = INFINITY;
  SolveReport report;
};

/**
 * Periodic adjoint two-point problem: find lambda_Nt with
 *   lambda^(0)(lambda_Nt) + dF/du^(Nt) = lambda_Nt,
 * by GMRES on (d lambda^(0)/d lambda_Nt - I) x = -(lambda^(0)(0) + dF/du^(Nt))
 * or by the fixed-point map lambda_Nt <- lambda^(0)(lambda_Nt) + dF/du^(Nt).
 * The returned dual trajectory is regenerated, sources included, from the
 * accepted lambda_Nt.
 */
inline DualSolution dual_solve(const Propagator& prop, const Trajectory& tr, const ParamVector& mu,
                               const QoiValue& partials, Index qoi_index, const DualOptions& opt) {
  require(opt.tol > 0.0, "dual solve: tolerance must be positive");
  require(qoi_index >= 0 && qoi_index < partials.n_qoi(), "dual solve: qoi index out of range");
  detail::WallClock clock;
  DualSolution out;
  auto& rep = out.report;
  const Index n = prop.dim();
  const StateVector& gN = partials.dF_du[static_cast<std::size_t>(qoi_index)].back();

  if (opt.method == DualMethod::gmres) {
    rep.method = "dual-gmres";
    LinearOperator A{n, [&](const Vector& v) -> Vector {
                       ++rep.adjoint_evolutions;
                       return prop.adjoint(tr, mu, v, nullptr, 0).lambdas.front() - v;
                     }};
    // GMRES works from a residual estimate; the sourced sweep after each solve
    // measures the true boundary defect and, if needed, seeds a correction solve.
    constexpr int max_rounds = 4;
    out.lambda_final = StateVector::Zero(n);
    for (int round = 0;; ++round) {
      out.dual = prop.adjoint(tr, mu, out.lambda_final, &partials, qoi_index);
      ++rep.adjoint_evolutions;
      const StateVector r = out.dual.lambdas.front() + gN - out.lambda_final;
      out.defect = r.norm();
      if (out.defect <= opt.tol) {
        rep.status = SolveStatus::converged;
        break;
      }
      if (round == max_rounds || rep.iterations >= opt.max_iter || !std::isfinite(out.defect)) {
        rep.status = std::isfinite(out.defect) ? SolveStatus::max_iterations : SolveStatus::diverged;
        break;
      }
      GmresOptions go;
      go.rel_tol = 0.0;
      go.abs_tol = opt.tol;
      go.max_iter = std::min<Index>(opt.max_iter - rep.iterations, std::max<Index>(n, 1));
      auto lin = gmres(A, -r, Vector::Zero(n), go);
      const auto& hist = lin.report.residual_history;
      for (std::size_t k = rep.history.empty() ? 0 : 1; k < hist.size(); ++k)
        rep.history.push_back({static_cast<Index>(rep.history.size()), hist[k], static_cast<Index>(k),
                               rep.adjoint_evolutions});
      rep.iterations += lin.report.iterations;
      if (!lin.report.converged) rep.inner_stagnation = true;
      out.lambda_final += lin.x;
      rep.inner.push_back(std::move(lin.report));
    }
  } else {
    rep.method = "dual-fixed-point";
    StateVector x = StateVector::Zero(n);
    double first = INFINITY;
    for (;;) {
      out.dual = prop.adjoint(tr, mu, x, &partials, qoi_index);
      ++rep.adjoint_evolutions;
      const StateVector next = out.dual.lambdas.front() + gN;
      out.defect = (next - x).norm();
      out.lambda_final = x;
      rep.history.push_back({rep.iterations, out.defect, 0, rep.adjoint_evolutions});
      if (!std::isfinite(first)) first = out.defect;
      if (out.defect <= opt.tol) {
        rep.status = SolveStatus::converged;
        break;
      }
      if (!std::isfinite(out.defect) || out.defect > 1e8 * std::max(first, 1e-300)) {
        rep.status = SolveStatus::diverged;
        break;
      }
      if (rep.iterations >= opt.max_iter) {
        rep.status = SolveStatus::max_iterations;
        break;
      }
      x = next;
      ++rep.iterations;
    }
  }
  rep.wall_seconds = clock.seconds();
  return out;
}

}  // namespace tpa

#endif  // TPA_SHOOTING_HPP
