#ifndef TPA_DIRK_HPP
#define TPA_DIRK_HPP

#include "tpa/krylov.hpp"
#include "tpa/model.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace tpa {

/// Lower-triangular Butcher tableau of an s-stage DIRK scheme.
struct ButcherTableau {
  std::string name;
  Matrix a;
  Vector b;
  Vector c;
  int order = 0;

  Index stages() const { return b.size(); }

  /// Throws ConfigError unless the tableau is diagonally implicit and consistent.
  void validate() const {
    const Index s = stages();
    require(s >= 1 && a.rows() == s && a.cols() == s && c.size() == s, "tableau " + name + ": inconsistent sizes");
    for (Index i = 0; i < s; ++i)
      for (Index j = i + 1; j < s; ++j) require(a(i, j) == 0.0, "tableau " + name + ": not lower triangular");
    require(std::abs(b.sum() - 1.0) <= 1e-14, "tableau " + name + ": weights do not sum to one");
    for (Index i = 0; i < s; ++i)
      require(std::abs(a.row(i).sum() - c(i)) <= 1e-14, "tableau " + name + ": c_i != sum_j a_ij");
  }

  /// Residuals of the order conditions up to order 3, in the order
  /// [sum b - 1, b.c - 1/2, b.c^2 - 1/3, b.A.c - 1/6].
  Vector order_condition_residuals() const {
    Vector r(4);
    r(0) = b.sum() - 1.0;
    r(1) = b.dot(c) - 0.5;
    r(2) = b.dot(c.cwiseProduct(c)) - 1.0 / 3.0;
    r(3) = b.dot(a * c) - 1.0 / 6.0;
    return r;
  }
};

namespace detail {

// Root of x^3 - 3x^2 + 3x/2 - 1/6 in (1/6, 1/2): the diagonal of the L-stable
// three-stage, third-order SDIRK scheme.
inline double dirk3_diagonal() {
  auto f = [](double x) { return ((x - 3.0) * x + 1.5) * x - 1.0 / 6.0; };
  double lo = 1.0 / 6.0, hi = 0.5;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    if ((f(lo) < 0.0) == (f(mid) < 0.0)) lo = mid; else hi = mid;
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) x -= f(x) / ((3.0 * x - 6.0) * x + 1.5);
  return x;
}

}  // namespace detail

inline ButcherTableau tableau_library(const std::string& name) {
  ButcherTableau t;
  t.name = name;
  if (name == "backward-euler") {
    t.a = Matrix::Constant(1, 1, 1.0);
    t.b = Vector::Constant(1, 1.0);
    t.c = Vector::Constant(1, 1.0);
    t.order = 1;
  } else if (name == "sdirk2") {
    const double g = 1.0 - 1.0 / std::sqrt(2.0);
    t.a = Matrix::Zero(2, 2);
    t.a << g, 0.0, 1.0 - g, g;
    t.b = Vector(2);
    t.b << 1.0 - g, g;
    t.c = Vector(2);
    t.c << g, 1.0;
    t.order = 2;
  } else if (name == "dirk3") {
    const double al = detail::dirk3_diagonal();
    const double tau = 0.5 * (1.0 + al);
    const double b1 = -(6.0 * al * al - 16.0 * al + 1.0) / 4.0;
    const double b2 = (6.0 * al * al - 20.0 * al + 5.0) / 4.0;
    t.a = Matrix::Zero(3, 3);
    t.a << al, 0.0, 0.0, tau - al, al, 0.0, b1, b2, al;
    t.b = Vector(3);
    t.b << b1, b2, al;
    t.c = Vector(3);
    t.c << al, tau, 1.0;
    t.order = 3;
  } else {
    throw ConfigError("unknown tableau '" + name + "' (expected backward-euler, sdirk2 or dirk3)");
  }
  // Round-off in b1 + b2 + alpha can leave the weight sum off by an ulp.
  t.validate();
  return t;
}

/// Time knots t_0 = 0 < t_1 < ... < t_Nt = T.
class TimeGrid {
 public:
  TimeGrid() = default;
  explicit TimeGrid(std::vector<double> knots) : t_(std::move(knots)) {
    require(t_.size() >= 2, "time grid: need at least one step");
    require(t_.front() == 0.0, "time grid: must start at 0");
    for (std::size_t n = 1; n < t_.size(); ++n) require(t_[n] > t_[n - 1], "time grid: knots must increase");
  }

  static TimeGrid uniform(double T, Index steps) {
    require(T > 0.0 && steps >= 1, "time grid: need T > 0 and N_t >= 1");
    std::vector<double> k(static_cast<std::size_t>(steps + 1));
    for (Index n = 0; n <= steps; ++n) k[static_cast<std::size_t>(n)] = T * static_cast<double>(n) / static_cast<double>(steps);
    k.back() = T;
    return TimeGrid(std::move(k));
  }

  Index steps() const { return static_cast<Index>(t_.size()) - 1; }
  double t(Index n) const { return t_[static_cast<std::size_t>(n)]; }
  /// Delta t_n = t_n - t_{n-1}, n = 1..N_t
  double dt(Index n) const { return t_[static_cast<std::size_t>(n)] - t_[static_cast<std::size_t>(n - 1)]; }
  double period() const { return t_.back(); }
  const std::vector<double>& knots() const { return t_; }

 private:
  std::vector<double> t_;
};

/// Primal history over one period: states u^(0..Nt) and stages k_i^(1..Nt).
struct Trajectory {
  ButcherTableau tableau;
  TimeGrid grid;
  std::vector<StateVector> states;
  /// stages[n - 1][i] holds k_{i+1}^(n)
  std::vector<std::vector<StateVector>> stages;

  const StateVector& final_state() const { return states.back(); }

  /// u_i^(n) = u^(n-1) + sum_{j<=i} a_ij k_j^(n)   (n = 1..Nt, i zero-based)
  StateVector stage_state(Index n, Index i) const {
    StateVector ui = states[static_cast<std::size_t>(n - 1)];
    const auto& k = stages[static_cast<std::size_t>(n - 1)];
    for (Index j = 0; j <= i; ++j) ui += tableau.a(i, j) * k[static_cast<std::size_t>(j)];
    return ui;
  }
  double stage_time(Index n, Index i) const { return grid.t(n - 1) + tableau.c(i) * grid.dt(n); }
};

/// Linear solve with the stage operator (M - theta dr/du(u, mu, t)) or its
/// transpose, by dense LU when the model exposes dense matrices and by GMRES
/// otherwise. Residual target is tol.
inline StateVector solve_stage_operator(const Model& model, const StateVector& u, const ParamVector& mu, double t,
                                        double theta, const StateVector& rhs, double tol, bool transpose,
                                        Index step_index, Index stage_index) {
  if (auto J = model.jac_u_matrix(u, mu, t)) {
    auto M = model.mass_matrix();
    require(M.has_value(), "model " + model.name() + " exposes a dense Jacobian but no dense mass matrix");
    Matrix op = *M - theta * *J;
    if (transpose) op.transposeInPlace();
    Eigen::PartialPivLU<Matrix> lu(op);
    StateVector x = lu.solve(rhs);
    if (!x.allFinite()) throw StepFailure(step_index, stage_index, INFINITY, "singular stage operator");
    return x;
  }
  LinearOperator op{model.dim(), {}};
  if (transpose) {
    op.apply = [&](const Vector& v) -> Vector {
      return model.mass_apply_transpose(v) - theta * model.jac_u_apply_transpose(u, mu, t, v);
    };
  } else {
    op.apply = [&](const Vector& v) -> Vector { return model.mass_apply(v) - theta * model.jac_u_apply(u, mu, t, v); };
  }
  GmresOptions go;
  go.rel_tol = 0.0;
  go.abs_tol = tol / 10.0;
  go.restart = model.dim();
  go.max_iter = 4 * model.dim();
  auto res = gmres(op, rhs, Vector::Zero(model.dim()), go);
  if (!res.report.converged || !res.x.allFinite())
    throw StepFailure(step_index, stage_index, res.report.residual_history.back(), "stage linear solve did not converge");
  return res.x;
}

struct StepResult {
  StateVector u_next;
  std::vector<StateVector> stages;
};

struct StepOptions {
  double tol = 1e-12;
  int max_newton = 50;
};

/**
 * One DIRK step. Each stage solves  M k_i = dt r(u_i, mu, t + c_i dt)  with
 * u_i = u_prev + sum_{j<=i} a_ij k_j by Newton's method started from k_i = 0,
 * until |M k_i - dt r| <= tol (1 + |M k_i|).
 */
inline StepResult step(const Model& model, const ButcherTableau& tab, const ParamVector& mu, const StateVector& u_prev,
                       double t_prev, double dt, const StepOptions& opt, Index step_index = 0) {
  require(opt.tol > 0.0, "step: tolerance must be positive");
  const Index s = tab.stages();
  StepResult out;
  out.stages.reserve(static_cast<std::size_t>(s));
  out.u_next = u_prev;
  for (Index i = 0; i < s; ++i) {
    StateVector base = u_prev;
    for (Index j = 0; j < i; ++j) base += tab.a(i, j) * out.stages[static_cast<std::size_t>(j)];
    const double ti = t_prev + tab.c(i) * dt;
    const double theta = dt * tab.a(i, i);
    StateVector k = StateVector::Zero(model.dim());
    StateVector ui = base;
    StateVector R = model.mass_apply(k) - dt * model.residual(ui, mu, ti);
    double rn = R.norm();
    int it = 0;
    // tol is relative to the stage increment; roundoff floors an absolute test for large states
    while (!(rn <= opt.tol * (1.0 + model.mass_apply(k).norm()))) {
      if (it >= opt.max_newton || !std::isfinite(rn))
        throw StepFailure(step_index, i, rn, "stage Newton did not converge");
      k -= solve_stage_operator(model, ui, mu, ti, theta, R, opt.tol, false, step_index, i);
      ui = base + tab.a(i, i) * k;
      R = model.mass_apply(k) - dt * model.residual(ui, mu, ti);
      rn = R.norm();
      ++it;
    }
    out.stages.push_back(std::move(k));
  }
  for (Index i = 0; i < s; ++i) out.u_next += tab.b(i) * out.stages[static_cast<std::size_t>(i)];
  return out;
}

/// Forward evolution over the grid from u0; the final state is u^(Nt)(u0; mu).
inline Trajectory evolve(const Model& model, const ButcherTableau& tab, const TimeGrid& grid, const ParamVector& mu,
                         const StateVector& u0, double stage_tol) {
  require(u0.size() == model.dim(), "evolve: initial state has wrong length");
  require(mu.size() == model.n_params(), "evolve: parameter vector has wrong length");
  Trajectory tr;
  tr.tableau = tab;
  tr.grid = grid;
  const Index nt = grid.steps();
  tr.states.reserve(static_cast<std::size_t>(nt + 1));
  tr.stages.reserve(static_cast<std::size_t>(nt));
  tr.states.push_back(u0);
  StepOptions so;
  so.tol = stage_tol;
  for (Index n = 1; n <= nt; ++n) {
    auto st = step(model, tab, mu, tr.states.back(), grid.t(n - 1), grid.dt(n), so, n);
    tr.states.push_back(std::move(st.u_next));
    tr.stages.push_back(std::move(st.stages));
  }
  return tr;
}

/// Fully discrete quantities of interest and their partial derivatives with
/// respect to every state, stage and parameter.
struct QoiValue {
  Vector F;
  /// dF_du[q][n], n = 0..Nt
  std::vector<std::vector<StateVector>> dF_du;
  /// dF_dk[q][n - 1][i]
  std::vector<std::vector<std::vector<StateVector>>> dF_dk;
  /// n_qoi x N_mu
  Matrix dF_dmu;

  Index n_qoi() const { return F.size(); }
};

/**
 * Solver-consistent quadrature  F_q = sum_n dt_n sum_i b_i f_q(u_i^(n), mu, t_{n-1} + c_i dt_n)
 * with its partials, propagated through u_i^(n) = u^(n-1) + sum_{j<=i} a_ij k_j^(n).
 */
inline QoiValue accumulate_qoi(const Model& model, const Qoi& qoi, const Trajectory& tr, const ParamVector& mu) {
  const auto& tab = tr.tableau;
  const Index nq = qoi.n_qoi(), nt = tr.grid.steps(), s = tab.stages(), nu = model.dim();
  require(static_cast<Index>(tr.states.size()) == nt + 1, "accumulate_qoi: trajectory does not match its grid");
  QoiValue out;
  out.F = Vector::Zero(nq);
  out.dF_dmu = Matrix::Zero(nq, model.n_params());
  out.dF_du.assign(static_cast<std::size_t>(nq),
                   std::vector<StateVector>(static_cast<std::size_t>(nt + 1), StateVector::Zero(nu)));
  out.dF_dk.assign(static_cast<std::size_t>(nq),
                   std::vector<std::vector<StateVector>>(static_cast<std::size_t>(nt),
                                                         std::vector<StateVector>(static_cast<std::size_t>(s),
                                                                                  StateVector::Zero(nu))));
  for (Index n = 1; n <= nt; ++n) {
    const double dt = tr.grid.dt(n);
    for (Index i = 0; i < s; ++i) {
      const StateVector ui = tr.stage_state(n, i);
      const double ti = tr.stage_time(n, i);
      const double w = dt * tab.b(i);
      out.F += w * qoi.integrand(ui, mu, ti);
      for (Index q = 0; q < nq; ++q) {
        const StateVector g = qoi.grad_u(ui, mu, ti, q);
        auto qs = static_cast<std::size_t>(q);
        out.dF_du[qs][static_cast<std::size_t>(n - 1)] += w * g;
        for (Index j = 0; j <= i; ++j)
          out.dF_dk[qs][static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(j)] += (w * tab.a(i, j)) * g;
        out.dF_dmu.row(q) += w * qoi.grad_mu(ui, mu, ti, q).transpose();
      }
    }
  }
  return out;
}

/// Partials of the terminal functional F = v^T u^(Nt) on a trajectory's layout.
inline QoiValue terminal_functional(const Trajectory& tr, const StateVector& v, Index n_params) {
  const Index nt = tr.grid.steps(), s = tr.tableau.stages(), nu = v.size();
  QoiValue out;
  out.F = Vector::Constant(1, v.dot(tr.final_state()));
  out.dF_dmu = Matrix::Zero(1, n_params);
  out.dF_du.assign(1, std::vector<StateVector>(static_cast<std::size_t>(nt + 1), StateVector::Zero(nu)));
  out.dF_du[0].back() = v;
  out.dF_dk.assign(1, std::vector<std::vector<StateVector>>(
                          static_cast<std::size_t>(nt),
                          std::vector<StateVector>(static_cast<std::size_t>(s), StateVector::Zero(nu))));
  return out;
}

}  // namespace tpa

#endif  // TPA_DIRK_HPP
