#ifndef PA_COMMANDS_HPP
#define PA_COMMANDS_HPP

#include "pa/config.hpp"
#include "tpa/burgers_model.hpp"
#include "tpa/linear_model.hpp"
#include "tpa/vdp_model.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>

namespace pa {

namespace fs = std::filesystem;
using tpa::Matrix;
using tpa::ParamVector;
using tpa::StateVector;
using tpa::Vector;

inline constexpr const char* version = "0.1.0";

enum ExitCode : int { ok = 0, numerical_failure = 1, config_error = 2 };

inline Matrix to_matrix(const Rows& r, const std::string& field) {
  if (r.empty()) return {};
  Matrix m(static_cast<Index>(r.size()), static_cast<Index>(r.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    if (static_cast<Index>(r[static_cast<std::size_t>(i)].size()) != m.cols())
      throw ConfigError("field '" + field + "': ragged matrix");
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

/// Model, QoI and propagator described by a run configuration.
struct Setup {
  RunConfig cfg;
  tpa::ModelPtr model;
  tpa::QoiPtr qoi;
  std::shared_ptr<tpa::Propagator> prop;
  ParamVector mu;
  StateVector u0;

  Index qoi_index(const std::string& name, const std::string& field) const {
    if (name.empty()) return 0;
    const auto names = qoi->names();
    for (std::size_t q = 0; q < names.size(); ++q)
      if (names[q] == name) return static_cast<Index>(q);
    std::string known;
    for (const auto& n : names) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("field '" + field + "': unknown qoi '" + name + "' (known: " + known + ")");
  }
};

inline Setup build(const RunConfig& cfg) {
  Setup s;
  s.cfg = cfg;
  const double T = cfg.discretization.period;
  const auto& m = cfg.model;
  if (m.name == "linear") {
    const Matrix A = to_matrix(m.A, "model.A");
    if (A.rows() != A.cols()) throw ConfigError("field 'model.A': must be square");
    Matrix M = m.mass.empty() ? Matrix::Identity(A.rows(), A.cols()) : to_matrix(m.mass, "model.mass");
    std::vector<tpa::ForcingTerm> forcing;
    for (const auto& f : m.forcing) {
      tpa::ForcingTerm t;
      t.component = f.component;
      t.harmonic = f.harmonic;
      t.kind = f.kind == "cosine" ? tpa::ForcingTerm::Kind::cosine
               : f.kind == "sine" ? tpa::ForcingTerm::Kind::sine
                                  : tpa::ForcingTerm::Kind::constant;
      forcing.push_back(t);
    }
    auto model = tpa::make_linear_periodic(A, forcing, M, T);
    std::vector<tpa::QuadraticIntegrand> terms;
    for (const auto& q : m.qoi)
      terms.push_back({to_vector(q.w), to_matrix(q.Q, "model.qoi.Q"), to_matrix(q.R, "model.qoi.R"), q.name});
    if (terms.empty()) terms.push_back({Vector::Ones(A.rows()), {}, {}, "U"});
    s.qoi = std::make_shared<const tpa::QuadraticQoi>(A.rows(), model->n_params(), std::move(terms));
    s.model = model;
  } else if (m.name == "vdp") {
    std::tie(s.model, s.qoi) = tpa::make_forced_vdp(T);
  } else if (m.name == "burgers") {
    tpa::BurgersOptions o;
    o.n_cells = m.n_cells;
    o.viscosity = m.viscosity;
    o.period = T;
    o.damping = m.damping;
    o.consistent_mass = m.consistent_mass;
    o.dense_jacobian = m.dense_jacobian;
    std::tie(s.model, s.qoi) = tpa::make_burgers_1d(o);
  } else {
    std::tie(s.model, s.qoi) = tpa::make_steady_scalar(T);
  }
  if (static_cast<Index>(cfg.parameters.size()) != s.model->n_params())
    throw ConfigError("field 'parameters': model '" + m.name + "' takes " + std::to_string(s.model->n_params()) +
                      " parameters, got " + std::to_string(cfg.parameters.size()));
  s.mu = to_vector(cfg.parameters);
  if (cfg.solver.u0.empty()) {
    s.u0 = StateVector::Zero(s.model->dim());
  } else {
    if (static_cast<Index>(cfg.solver.u0.size()) != s.model->dim())
      throw ConfigError("field 'solver.u0': expected " + std::to_string(s.model->dim()) + " entries");
    s.u0 = to_vector(cfg.solver.u0);
  }
  s.prop = std::make_shared<tpa::Propagator>(s.model, tpa::tableau_library(cfg.discretization.tableau),
                                             tpa::TimeGrid::uniform(T, cfg.discretization.steps),
                                             cfg.discretization.stage_tol);
  return s;
}

inline tpa::NewtonOptions newton_options(const SolverSection& s) {
  tpa::NewtonOptions o;
  o.tol = s.tol;
  o.gmres_tol = s.gmres_tol;
  o.m_precondition = s.m_precondition;
  if (s.max_iter > 0) o.max_newton = s.max_iter;
  return o;
}

inline tpa::DualOptions dual_options(const SolverSection& s) {
  tpa::DualOptions o;
  o.method = s.dual_method == "fixed-point" ? tpa::DualMethod::fixed_point : tpa::DualMethod::gmres;
  o.tol = s.dual_tol;
  o.max_iter = s.dual_max_iter;
  return o;
}

/// Primal periodic solve with the configured shooting method.
inline tpa::PeriodicSolution solve_primal(const Setup& s, const std::string& method, double tol, Index m) {
  SolverSection v = s.cfg.solver;
  v.tol = tol;
  v.m_precondition = m;
  if (method == "newton") return tpa::newton_krylov_solve(*s.prop, s.mu, s.u0, newton_options(v));
  if (method == "fixed-point") {
    tpa::FixedPointOptions o;
    o.tol = tol;
    if (v.max_iter > 0) o.max_iter = v.max_iter;
    return tpa::fixed_point_solve(*s.prop, s.mu, s.u0, o);
  }
  tpa::OptShootingOptions o;
  o.tol = tol;
  o.method = method == "lbfgs" ? tpa::DescentMethod::lbfgs : tpa::DescentMethod::steepest_descent;
  o.memory = v.memory;
  if (v.max_iter > 0) o.max_iter = v.max_iter;
  return tpa::optimization_shooting_solve(*s.prop, s.mu, s.u0, o);
}

/// Output directory and run manifest.
class Run {
 public:
  Run(std::string command, const RunConfig& cfg)
      : command_(std::move(command)), cfg_(cfg), dir_(cfg.output), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  template <class Fn>
  void write(const std::string& name, Fn&& fn) const {
    auto os = tpa::io::open_out(path(name));
    fn(os);
    if (!os) throw tpa::Error("failed writing " + path(name).string());
  }

  void note(const std::string& key, const std::string& value) { notes_[key] = value; }

  int finish(int code, const std::string& status) const {
    YAML::Node m;
    m["command"] = command_;
    m["status"] = status;
    m["exit_code"] = code;
    m["versions"]["tpa"] = version;
    m["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                             std::to_string(EIGEN_MINOR_VERSION);
    m["versions"]["compiler"] = __VERSION__;
    m["timings"]["wall_seconds"] =
        tpa::io::num(std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    for (const auto& [k, v] : notes_) m["results"][k] = v;
    m["config"] = to_yaml(cfg_);
    write("manifest.yaml", [&](std::ostream& os) { os << emit(m) << '\n'; });
    return code;
  }

 private:
  std::string command_;
  RunConfig cfg_;
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> notes_;
};

inline void write_primal(const Run& run, const tpa::PeriodicSolution& sol) {
  run.write("u0.txt", [&](std::ostream& os) { tpa::io::write_vector(os, sol.u0); });
  run.write("solve_report.csv", [&](std::ostream& os) { tpa::io::write_solve_report_csv(os, sol.report); });
  if (!sol.report.inner.empty())
    run.write("krylov.csv", [&](std::ostream& os) { tpa::io::write_krylov_csv(os, sol.report.inner); });
  if (!sol.trajectory.states.empty()) {
    run.write("trajectory.csv", [&](std::ostream& os) { tpa::io::write_trajectory_csv(os, sol.trajectory); });
    auto os = tpa::io::open_out(run.path("trajectory.bin"), std::ios::out | std::ios::binary);
    tpa::io::write_trajectory_binary(os, sol.trajectory);
  }
}

inline void summarize(Run& run, const tpa::SolveReport& r, const std::string& prefix) {
  run.note(prefix + "status", tpa::to_string(r.status));
  run.note(prefix + "iterations", std::to_string(r.iterations));
  run.note(prefix + "final_defect", tpa::io::num(r.final_defect()));
  if (!r.message.empty()) run.note(prefix + "message", r.message);
}

inline int cmd_solve_periodic(const RunConfig& cfg) {
  const Setup s = build(cfg);
  Run run("solve-periodic", cfg);
  const auto sol = solve_primal(s, cfg.solver.method, cfg.solver.tol, cfg.solver.m_precondition);
  write_primal(run, sol);
  summarize(run, sol.report, "primal_");
  const bool good = sol.report.converged();
  std::cout << "solve-periodic: " << sol.report.method << ' ' << tpa::to_string(sol.report.status) << " after "
            << sol.report.iterations << " iterations, defect " << tpa::io::num(sol.defect) << '\n';
  return run.finish(good ? ok : numerical_failure, tpa::to_string(sol.report.status));
}

inline int cmd_adjoint(const RunConfig& cfg) {
  const Setup s = build(cfg);
  const Index q = s.qoi_index(cfg.adjoint_qoi, "adjoint_qoi");
  Run run("adjoint", cfg);
  const auto sol = tpa::newton_krylov_solve(*s.prop, s.mu, s.u0, newton_options(cfg.solver));
  write_primal(run, sol);
  summarize(run, sol.report, "primal_");
  if (!sol.report.converged()) {
    std::cerr << "adjoint: primal periodic solve failed (" << tpa::to_string(sol.report.status) << ")\n";
    return run.finish(numerical_failure, "primal failure");
  }
  const auto partials = tpa::accumulate_qoi(*s.model, *s.qoi, sol.trajectory, s.mu);
  const auto dual = tpa::dual_solve(*s.prop, sol.trajectory, s.mu, partials, q, dual_options(cfg.solver));
  summarize(run, dual.report, "dual_");
  run.write("dual_report.csv", [&](std::ostream& os) { tpa::io::write_solve_report_csv(os, dual.report); });
  if (!dual.report.inner.empty())
    run.write("dual_krylov.csv", [&](std::ostream& os) { tpa::io::write_krylov_csv(os, dual.report.inner); });
  if (!dual.dual.lambdas.empty()) {
    run.write("dual_trajectory.csv", [&](std::ostream& os) { tpa::io::write_dual_csv(os, dual.dual); });
    run.write("lambda_final.txt", [&](std::ostream& os) { tpa::io::write_vector(os, dual.lambda_final); });
  }
  std::cout << "adjoint: " << dual.report.method << ' ' << tpa::to_string(dual.report.status) << " after "
            << dual.report.iterations << " iterations, defect " << tpa::io::num(dual.defect) << '\n';
  return run.finish(dual.report.converged() ? ok : numerical_failure, tpa::to_string(dual.report.status));
}

inline tpa::GradientOptions gradient_options(const Setup& s) {
  tpa::GradientOptions o;
  o.primal = newton_options(s.cfg.solver);
  o.dual = dual_options(s.cfg.solver);
  o.u0_guess = s.u0;
  o.workers = s.cfg.workers;
  return o;
}

inline void write_qoi_values(const Run& run, const tpa::Qoi& qoi, const Vector& F) {
  run.write("qoi.csv", [&](std::ostream& os) {
    os << "qoi,value\n";
    const auto names = qoi.names();
    for (Index q = 0; q < F.size(); ++q) os << names[static_cast<std::size_t>(q)] << ',' << tpa::io::num(F(q)) << '\n';
  });
}

inline int cmd_gradient(const RunConfig& cfg) {
  const Setup s = build(cfg);
  Run run("gradient", cfg);
  try {
    const auto g = tpa::periodic_gradient(*s.prop, *s.qoi, s.mu, gradient_options(s));
    write_primal(run, g.primal);
    write_qoi_values(run, *s.qoi, g.qoi.F);
    run.write("gradient.csv", [&](std::ostream& os) { tpa::io::write_gradient_csv(os, g.gradient); });
    std::cout << "gradient:\n";
    for (Index q = 0; q < g.gradient.values.rows(); ++q) {
      std::cout << "  " << g.gradient.qoi_names[static_cast<std::size_t>(q)];
      for (Index p = 0; p < g.gradient.values.cols(); ++p) std::cout << ' ' << tpa::io::num(g.gradient.values(q, p));
      std::cout << '\n';
    }
    return run.finish(ok, "converged");
  } catch (const tpa::GradientError& e) {
    std::cerr << "gradient: " << e.what() << '\n';
    run.note("failure_stage", e.stage());
    return run.finish(numerical_failure, e.what());
  }
}

inline int cmd_grad_check(const RunConfig& cfg) {
  const Setup s = build(cfg);
  if (cfg.solver.tol > 1e-12) throw ConfigError("field 'solver.tol': grad-check needs a primal tolerance <= 1e-12");
  Run run("grad-check", cfg);
  tpa::GradCheckOptions o;
  o.gradient = gradient_options(s);
  o.resolve = o.gradient.primal;
  try {
    const auto r = tpa::grad_check(*s.prop, *s.qoi, s.mu, cfg.grad_check.taus, o);
    write_qoi_values(run, *s.qoi, r.adjoint.qoi.F);
    run.write("gradient.csv", [&](std::ostream& os) { tpa::io::write_gradient_csv(os, r.adjoint.gradient); });
    run.write("grad_check.csv", [&](std::ostream& os) { tpa::io::write_grad_check_csv(os, r.rows, s.qoi->names()); });
    double worst_best = 0.0;
    bool all_ok = true;
    const auto names = s.qoi->names();
    for (Index q = 0; q < s.qoi->n_qoi(); ++q)
      for (Index p = 0; p < s.model->n_params(); ++p) {
        double best = INFINITY;
        for (const auto& row : r.rows)
          if (row.qoi == q && row.param == p && row.ok) best = std::min(best, row.rel_error);
        all_ok = all_ok && std::isfinite(best);
        worst_best = std::max(worst_best, best);
        std::cout << "grad-check " << names[static_cast<std::size_t>(q)] << " mu" << p << ": min rel_error "
                  << tpa::io::num(best) << '\n';
      }
    run.note("max_over_pairs_of_min_rel_error", tpa::io::num(worst_best));
    return run.finish(all_ok ? ok : numerical_failure, all_ok ? "completed" : "re-solve failure");
  } catch (const tpa::GradientError& e) {
    std::cerr << "grad-check: " << e.what() << '\n';
    return run.finish(numerical_failure, e.what());
  }
}

inline int cmd_floquet(const RunConfig& cfg) {
  const Setup s = build(cfg);
  Run run("floquet", cfg);
  const auto sol = tpa::newton_krylov_solve(*s.prop, s.mu, s.u0, newton_options(cfg.solver));
  write_primal(run, sol);
  summarize(run, sol.report, "primal_");
  if (!sol.report.converged()) {
    std::cerr << "floquet: periodic solve failed (" << tpa::to_string(sol.report.status) << ")\n";
    return run.finish(numerical_failure, "primal failure");
  }
  tpa::FloquetOptions fo;
  fo.k = cfg.floquet.k;
  fo.m = cfg.floquet.m;
  fo.tol = cfg.floquet.tol;
  fo.margin = cfg.floquet.margin;
  fo.seed = cfg.seed;
  const auto rep = tpa::analyze_stability(*s.prop, sol.trajectory, s.mu, fo);
  run.write("eigenvalues.csv", [&](std::ostream& os) { tpa::io::write_eigenvalues_csv(os, rep.eigenvalues); });
  const std::string stable = !rep.stable ? "indeterminate" : *rep.stable ? "stable" : "not stable";
  run.note("spectral_radius_estimate", tpa::io::num(rep.spectral_radius_estimate));
  run.note("stability", stable);
  std::cout << "floquet: spectral radius " << tpa::io::num(rep.spectral_radius_estimate) << ", " << stable << '\n';
  return run.finish(rep.stable ? ok : numerical_failure, stable);
}

inline int cmd_optimize(const RunConfig& cfg) {
  const Setup s = build(cfg);
  const auto& o = cfg.optimize;
  if (o.objective.empty()) throw ConfigError("field 'optimize.objective': missing required field");
  tpa::OptProblem pb;
  pb.objective = s.qoi_index(o.objective, "optimize.objective");
  std::vector<std::string> cnames;
  pb.targets.resize(static_cast<Index>(o.constraints.size()));
  for (std::size_t c = 0; c < o.constraints.size(); ++c) {
    pb.constraints.push_back(s.qoi_index(o.constraints[c].qoi, "optimize.constraints.qoi"));
    pb.targets(static_cast<Index>(c)) = o.constraints[c].target;
    cnames.push_back(o.constraints[c].qoi);
  }
  const auto np = static_cast<std::size_t>(s.model->n_params());
  if (!o.lower.empty() && o.lower.size() != np) throw ConfigError("field 'optimize.lower': wrong length");
  if (!o.upper.empty() && o.upper.size() != np) throw ConfigError("field 'optimize.upper': wrong length");
  pb.lower = to_vector(o.lower);
  pb.upper = to_vector(o.upper);
  pb.mu0 = s.mu;
  pb.gradient = gradient_options(s);
  pb.warm_sweeps = o.warm_sweeps;
  pb.tol_opt = o.tol_opt;
  pb.tol_con = o.tol_con;
  pb.max_outer = o.max_outer;
  pb.max_inner = o.max_inner;
  Run run("optimize", cfg);
  const auto res = tpa::optimize(*s.prop, *s.qoi, pb);
  run.write("opt_history.csv", [&](std::ostream& os) { tpa::io::write_opt_history_csv(os, res.history, cnames); });
  run.write("mu_opt.txt", [&](std::ostream& os) { tpa::io::write_vector(os, res.mu); });
  if (res.u0.size()) run.write("u0.txt", [&](std::ostream& os) { tpa::io::write_vector(os, res.u0); });
  run.note("status", tpa::to_string(res.history.status));
  run.note("evaluations", std::to_string(res.history.evaluations));
  run.note("rejected_trials", std::to_string(res.history.rejected_trials));
  if (!res.history.message.empty()) run.note("message", res.history.message);
  std::cout << "optimize: " << tpa::to_string(res.history.status) << " after " << res.history.records.size()
            << " iterates";
  if (!res.history.records.empty()) std::cout << ", objective " << tpa::io::num(res.history.records.back().objective);
  std::cout << '\n';
  return run.finish(res.converged() ? ok : numerical_failure, tpa::to_string(res.history.status));
}

/// Methods x tolerances x preconditioning sweeps; m only varies for Newton.
inline int cmd_sweep(const RunConfig& cfg) {
  const Setup s = build(cfg);
  Run run("sweep", cfg);
  std::ostringstream summary, history;
  summary << "method,tol,m,status,iterations,preconditioning_sweeps,primal_evolutions,sensitivity_evolutions,"
             "adjoint_evolutions,final_defect\n";
  history << "method,tol,m,iteration,defect,cumulative_matvecs\n";
  bool all = true;
  for (const auto& method : cfg.sweep.methods)
    for (double tol : cfg.sweep.tols) {
      std::vector<Index> ms = method == "newton" ? cfg.sweep.m : std::vector<Index>{0};
      for (Index m : ms) {
        const auto sol = solve_primal(s, method, tol, m);
        const auto& r = sol.report;
        all = all && r.converged();
        const std::string key = method + ',' + tpa::io::num(tol) + ',' + std::to_string(m);
        summary << key << ',' << tpa::to_string(r.status) << ',' << r.iterations << ',' << r.preconditioning_sweeps
                << ',' << r.primal_evolutions << ',' << r.sensitivity_evolutions << ',' << r.adjoint_evolutions << ','
                << tpa::io::num(r.final_defect()) << '\n';
        for (const auto& h : r.history)
          history << key << ',' << h.iteration << ',' << tpa::io::num(h.defect) << ',' << h.cumulative_matvecs << '\n';
        std::cout << "sweep " << method << " tol " << tol << " m " << m << ": "
                  << tpa::to_string(r.status) << ", " << r.iterations << " iterations\n";
      }
    }
  run.write("sweep.csv", [&](std::ostream& os) { os << summary.str(); });
  run.write("sweep_history.csv", [&](std::ostream& os) { os << history.str(); });
  return run.finish(all ? ok : numerical_failure, all ? "all converged" : "some runs did not converge");
}

using Command = std::function<int(const RunConfig&)>;

inline const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table{
      {"solve-periodic", cmd_solve_periodic}, {"adjoint", cmd_adjoint},   {"gradient", cmd_gradient},
      {"grad-check", cmd_grad_check},         {"floquet", cmd_floquet},   {"optimize", cmd_optimize},
      {"sweep", cmd_sweep}};
  return table;
}

}  // namespace pa

#endif  // PA_COMMANDS_HPP
