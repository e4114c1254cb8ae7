#ifndef TPA_OPTIMIZE_HPP
#define TPA_OPTIMIZE_HPP

#include "tpa/gradient.hpp"

#include <deque>
#include <limits>

namespace tpa {

/**
 * min F_objective(mu)  s.t.  F_c(mu) = target_c,  lower <= mu <= upper,
 * with every F evaluated on the periodic solution at mu.
 */
struct OptProblem {
  Index objective = 0;
  std::vector<Index> constraints;
  Vector targets;
  /// Empty vectors mean unbounded.
  Vector lower, upper;
  ParamVector mu0;
  GradientOptions gradient;
  /// Fixed-point sweeps applied to the warm-started guess before Newton.
  Index warm_sweeps = 5;
  double tol_opt = 1e-6;
  double tol_con = 1e-5;
  Index max_outer = 30;
  Index max_inner = 200;
  Index memory = 10;
  double armijo_c1 = 1e-4;
  /// Relative noise in the objective below which the line search uses the gradient alone.
  double noise_level = 1e-10;
  Index max_backtracks = 30;
  /// First step length relative to max(1, |mu|_inf) while no curvature pairs exist.
  double initial_step = 0.1;
  double initial_penalty = 1.0;
};

struct OptRecord {
  Index iteration = 0;
  Index outer = 0;
  ParamVector mu;
  double objective = 0.0;
  /// F_c - target_c
  Vector constraints;
  /// |P(mu - grad L) - mu|_inf with L the augmented Lagrangian
  double optimality = 0.0;
  double gradient_norm = 0.0;
  std::optional<double> penalty;
  Vector multipliers;
  double defect = 0.0;
  Index newton_iterations = 0;
  Index dual_iterations = 0;
};

struct OptHistory {
  std::vector<OptRecord> records;
  SolveStatus status = SolveStatus::max_iterations;
  std::string message;
  Index evaluations = 0;
  Index rejected_trials = 0;
  double wall_seconds = 0.0;
};

struct OptResult {
  ParamVector mu;
  StateVector u0;
  OptHistory history;
  bool converged() const { return history.status == SolveStatus::converged; }
};

namespace detail {

struct OptEval {
  ParamVector mu;
  GradientResult g;
};

inline Vector project(const Vector& x, const Vector& lo, const Vector& hi) { return x.cwiseMax(lo).cwiseMin(hi); }

}  // namespace detail

/**
 * Reduced-space optimization over mu: an augmented-Lagrangian outer loop on
 * the equality constraints and projected L-BFGS on the box for the inner
 * problems. Each evaluation is a full periodic_gradient call warm-started from
 * the last accepted periodic state. A trial whose periodic solve fails is
 * rejected and the step halved.
 */
inline OptResult optimize(const Propagator& prop, const Qoi& qoi, const OptProblem& pb) {
  detail::WallClock clock;
  const Model& model = prop.model();
  const Index np = model.n_params(), nq = qoi.n_qoi();
  const Index nc = static_cast<Index>(pb.constraints.size());
  const double inf = std::numeric_limits<double>::infinity();

  require(pb.mu0.size() == np, "optimize: mu0 has wrong length");
  require(pb.objective >= 0 && pb.objective < nq, "optimize: objective index out of range");
  require(pb.targets.size() == nc, "optimize: need one target per constraint");
  for (Index c : pb.constraints) {
    require(c >= 0 && c < nq, "optimize: constraint index out of range");
    require(c != pb.objective, "optimize: objective cannot also be a constraint");
  }
  require(pb.lower.size() == 0 || pb.lower.size() == np, "optimize: lower bound has wrong length");
  require(pb.upper.size() == 0 || pb.upper.size() == np, "optimize: upper bound has wrong length");
  const Vector lo = pb.lower.size() ? pb.lower : Vector::Constant(np, -inf);
  const Vector hi = pb.upper.size() ? pb.upper : Vector::Constant(np, inf);
  require((lo.array() <= hi.array()).all(), "optimize: inconsistent bounds");
  require(pb.tol_opt > 0.0 && pb.tol_con > 0.0, "optimize: tolerances must be positive");
  require(pb.memory >= 1, "optimize: L-BFGS memory must be >= 1");

  OptResult res;
  auto& hist = res.history;

  GradientOptions gopt = pb.gradient;
  gopt.active.assign(1, pb.objective);
  for (Index c : pb.constraints) gopt.active.push_back(c);

  StateVector warm = pb.gradient.u0_guess.value_or(StateVector::Zero(model.dim()));
  auto evaluate = [&](const ParamVector& mu) {
    GradientOptions o = gopt;
    o.u0_guess = warm;
    o.primal.m_precondition = pb.warm_sweeps;
    ++hist.evaluations;
    return detail::OptEval{mu, periodic_gradient(prop, qoi, mu, o)};
  };

  Vector nu = Vector::Zero(nc);
  double rho = pb.initial_penalty;

  auto residuals = [&](const detail::OptEval& e) {
    Vector h(nc);
    for (Index c = 0; c < nc; ++c) h(c) = e.g.qoi.F(pb.constraints[static_cast<std::size_t>(c)]) - pb.targets(c);
    return h;
  };
  auto lagrangian = [&](const detail::OptEval& e) {
    const Vector h = residuals(e);
    return e.g.qoi.F(pb.objective) - nu.dot(h) + 0.5 * rho * h.squaredNorm();
  };
  auto lagrangian_grad = [&](const detail::OptEval& e) {
    const Vector h = residuals(e);
    Vector g = e.g.gradient.values.row(pb.objective).transpose();
    for (Index c = 0; c < nc; ++c)
      g += (rho * h(c) - nu(c)) * e.g.gradient.values.row(pb.constraints[static_cast<std::size_t>(c)]).transpose();
    return g;
  };
  auto optimality = [&](const ParamVector& mu, const Vector& g) {
    return (detail::project(mu - g, lo, hi) - mu).lpNorm<Eigen::Infinity>();
  };

  Index outer = 0;
  auto record = [&](const detail::OptEval& e) {
    OptRecord r;
    r.iteration = static_cast<Index>(hist.records.size());
    r.outer = outer;
    r.mu = e.mu;
    r.objective = e.g.qoi.F(pb.objective);
    r.constraints = residuals(e);
    const Vector g = lagrangian_grad(e);
    r.optimality = optimality(e.mu, g);
    r.gradient_norm = g.norm();
    if (nc > 0) {
      r.penalty = rho;
      r.multipliers = nu;
    }
    r.defect = e.g.primal.defect;
    r.newton_iterations = e.g.primal.report.iterations;
    for (const auto& d : e.g.duals) r.dual_iterations += d.report.iterations;
    hist.records.push_back(std::move(r));
  };

  detail::OptEval cur;
  try {
    cur = evaluate(detail::project(pb.mu0, lo, hi));
  } catch (const std::exception& e) {
    hist.status = SolveStatus::step_failure;
    hist.message = std::string("initial evaluation failed: ") + e.what();
    res.mu = pb.mu0;
    hist.wall_seconds = clock.seconds();
    return res;
  }
  warm = cur.g.primal.u0;
  record(cur);

  double omega = std::max(pb.tol_opt, 0.1 * hist.records.front().optimality);
  double prev_viol = inf;
  bool done = false;

  for (outer = 0; outer < pb.max_outer && !done; ++outer) {
    std::deque<std::pair<Vector, Vector>> pairs;
    double trust = pb.initial_step * std::max(1.0, cur.mu.lpNorm<Eigen::Infinity>());
    double L = lagrangian(cur);
    Vector g = lagrangian_grad(cur);
    const double inner_tol = nc > 0 ? omega : pb.tol_opt;

    for (Index it = 0; it < pb.max_inner; ++it) {
      if (optimality(cur.mu, g) <= inner_tol) break;
      // variables pinned at a bound by the gradient stay fixed this iteration
      Eigen::Array<bool, Eigen::Dynamic, 1> free(np);
      for (Index p = 0; p < np; ++p)
        free(p) = !((cur.mu(p) <= lo(p) && g(p) > 0.0) || (cur.mu(p) >= hi(p) && g(p) < 0.0));
      auto restrict_free = [&](Vector v) {
        for (Index p = 0; p < np; ++p)
          if (!free(p)) v(p) = 0.0;
        return v;
      };

      Vector q = restrict_free(g);
      std::vector<double> alphas;
      for (auto itp = pairs.rbegin(); itp != pairs.rend(); ++itp) {
        const Vector s = restrict_free(itp->first), y = restrict_free(itp->second);
        const double sy = s.dot(y);
        const double a = sy > 0.0 ? s.dot(q) / sy : 0.0;
        alphas.push_back(a);
        q -= a * y;
      }
      if (!pairs.empty()) {
        const Vector s = restrict_free(pairs.back().first), y = restrict_free(pairs.back().second);
        if (y.squaredNorm() > 0.0 && s.dot(y) > 0.0) q *= s.dot(y) / y.squaredNorm();
      }
      std::size_t ai = alphas.size();
      for (const auto& pr : pairs) {
        const Vector s = restrict_free(pr.first), y = restrict_free(pr.second);
        const double sy = s.dot(y);
        const double b = sy > 0.0 ? y.dot(q) / sy : 0.0;
        q += (alphas[--ai] - b) * s;
      }
      Vector d = -restrict_free(q);
      if (!(g.dot(d) < 0.0)) {
        pairs.clear();
        d = -restrict_free(g);
      }

      double alpha = pairs.empty() ? std::min(1.0, trust / d.lpNorm<Eigen::Infinity>()) : 1.0;
      bool accepted = false;
      detail::OptEval trial;
      double Lt = 0.0;
      for (Index bt = 0; bt <= pb.max_backtracks; ++bt, alpha *= 0.5) {
        const ParamVector mu_t = detail::project(cur.mu + alpha * d, lo, hi);
        if ((mu_t - cur.mu).lpNorm<Eigen::Infinity>() == 0.0) break;
        try {
          trial = evaluate(mu_t);
        } catch (const GradientError&) {
          ++hist.rejected_trials;
          continue;
        }
        Lt = lagrangian(trial);
        const double slope = g.dot(mu_t - cur.mu);
        if (Lt <= L + pb.armijo_c1 * slope) {
          accepted = true;
          break;
        }
        // Near the optimum the decrease drops below the noise in L left by the
        // periodic solves; fall back to the approximate Wolfe test, which
        // trusts the gradient instead.
        const double slope_t = lagrangian_grad(trial).dot(mu_t - cur.mu);
        if (Lt <= L + pb.noise_level * std::abs(L) && slope_t <= (2.0 * pb.armijo_c1 - 1.0) * slope &&
            slope_t >= 0.9 * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        hist.status = SolveStatus::line_search_failure;
        hist.message = "no acceptable step along the search direction";
        done = true;
        break;
      }
      const Vector gt = lagrangian_grad(trial);
      const Vector s = trial.mu - cur.mu, y = gt - g;
      if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
        pairs.emplace_back(s, y);
        if (static_cast<Index>(pairs.size()) > pb.memory) pairs.pop_front();
      }
      trust = 2.0 * s.lpNorm<Eigen::Infinity>();
      cur = std::move(trial);
      warm = cur.g.primal.u0;
      L = Lt;
      g = gt;
      record(cur);
    }
    if (done) break;

    const Vector h = residuals(cur);
    const double viol = nc > 0 ? h.lpNorm<Eigen::Infinity>() : 0.0;
    if (viol <= pb.tol_con && optimality(cur.mu, g) <= pb.tol_opt) {
      hist.status = SolveStatus::converged;
      break;
    }
    if (nc == 0) break;  // inner loop ran out of iterations
    nu -= rho * h;
    if (viol > 0.25 * prev_viol) rho *= 10.0;
    prev_viol = viol;
    omega = std::max(pb.tol_opt, 0.1 * omega);
  }
  if (hist.status == SolveStatus::max_iterations && hist.message.empty())
    hist.message = "iteration limit reached before the optimality and feasibility tolerances";
  res.mu = cur.mu;
  res.u0 = cur.g.primal.u0;
  hist.wall_seconds = clock.seconds();
  return res;
}

}  // namespace tpa

#endif  // TPA_OPTIMIZE_HPP
