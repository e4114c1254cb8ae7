#ifndef PA_CONFIG_HPP
#define PA_CONFIG_HPP

#include "tpa/io.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace pa {

using tpa::ConfigError;
using tpa::Index;

using Rows = std::vector<std::vector<double>>;

struct ForcingSpec {
  Index component = 0;
  int harmonic = 0;
  std::string kind = "constant";
  bool operator==(const ForcingSpec&) const = default;
};

struct QoiTermSpec {
  std::string name;
  std::vector<double> w;
  Rows Q, R;
  bool operator==(const QoiTermSpec&) const = default;
};

struct ModelSection {
  /// linear | vdp | burgers | steady
  std::string name;
  // linear
  Rows A, mass;
  std::vector<ForcingSpec> forcing;
  std::vector<QoiTermSpec> qoi;
  // burgers
  Index n_cells = 64;
  double viscosity = 0.02;
  double damping = 1.0;
  bool consistent_mass = true;
  bool dense_jacobian = false;
  bool operator==(const ModelSection&) const = default;
};

struct DiscretizationSection {
  std::string tableau = "dirk3";
  Index steps = 0;
  double period = 0.0;
  double stage_tol = 1e-12;
  bool operator==(const DiscretizationSection&) const = default;
};

struct SolverSection {
  /// newton | fixed-point | lbfgs | steepest-descent
  std::string method = "newton";
  double tol = 1e-10;
  double gmres_tol = 1e-3;
  Index m_precondition = 0;
  /// 0 picks the method's default
  Index max_iter = 0;
  Index memory = 10;
  std::vector<double> u0;
  /// gmres | fixed-point
  std::string dual_method = "gmres";
  double dual_tol = 1e-10;
  Index dual_max_iter = 1000;
  bool operator==(const SolverSection&) const = default;
};

struct GradCheckSection {
  std::vector<double> taus{1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
  bool operator==(const GradCheckSection&) const = default;
};

struct FloquetSection {
  Index k = 20;
  Index m = 0;
  double tol = 1e-8;
  double margin = 1e-8;
  bool operator==(const FloquetSection&) const = default;
};

struct ConstraintSpec {
  std::string qoi;
  double target = 0.0;
  bool operator==(const ConstraintSpec&) const = default;
};

struct OptimizeSection {
  std::string objective;
  std::vector<ConstraintSpec> constraints;
  std::vector<double> lower, upper;
  double tol_opt = 1e-6;
  double tol_con = 1e-5;
  Index max_outer = 30;
  Index max_inner = 200;
  Index warm_sweeps = 5;
  bool operator==(const OptimizeSection&) const = default;
};

struct SweepSection {
  std::vector<std::string> methods{"newton", "lbfgs", "steepest-descent", "fixed-point"};
  std::vector<double> tols{1e-6, 1e-8, 1e-10};
  std::vector<Index> m{0, 5};
  bool operator==(const SweepSection&) const = default;
};

struct RunConfig {
  ModelSection model;
  DiscretizationSection discretization;
  std::vector<double> parameters;
  SolverSection solver;
  /// QoI used by the adjoint command; empty means the first.
  std::string adjoint_qoi;
  GradCheckSection grad_check;
  FloquetSection floquet;
  OptimizeSection optimize;
  SweepSection sweep;
  std::string output = "out";
  std::uint64_t seed = 12345;
  int workers = 1;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string where(const YAML::Node& n, const std::string& field) {
  const auto m = n.Mark();
  std::string loc = m.is_null() ? std::string("config") : "line " + std::to_string(m.line + 1) + ", column " +
                                                              std::to_string(m.column + 1);
  return loc + ": field '" + field + "'";
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& field, const std::string& msg) {
  throw ConfigError(where(n, field) + ": " + msg);
}

inline void check_keys(const YAML::Node& map, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!map.IsMap()) fail(map, path, "expected a mapping");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) fail(kv.first, path.empty() ? key : path + "." + key, "unknown key");
  }
}

template <class T>
T scalar(const YAML::Node& n, const std::string& field) {
  if (!n.IsScalar()) fail(n, field, "expected a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, field, "cannot convert '" + n.Scalar() + "'");
  }
}

template <class T>
void get(const YAML::Node& map, const char* key, const std::string& path, T& out) {
  if (const auto n = map[key]) out = scalar<T>(n, path + "." + key);
}

template <class T>
void get_list(const YAML::Node& map, const char* key, const std::string& path, std::vector<T>& out) {
  const auto n = map[key];
  if (!n) return;
  const std::string field = path + "." + key;
  if (!n.IsSequence()) fail(n, field, "expected a list");
  out.clear();
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(scalar<T>(n[i], field + "[" + std::to_string(i) + "]"));
}

inline void get_rows(const YAML::Node& map, const char* key, const std::string& path, Rows& out) {
  const auto n = map[key];
  if (!n) return;
  const std::string field = path + "." + key;
  if (!n.IsSequence()) fail(n, field, "expected a list of rows");
  out.clear();
  for (std::size_t i = 0; i < n.size(); ++i) {
    const std::string rf = field + "[" + std::to_string(i) + "]";
    if (!n[i].IsSequence()) fail(n[i], rf, "expected a row list");
    std::vector<double> row;
    for (std::size_t j = 0; j < n[i].size(); ++j)
      row.push_back(scalar<double>(n[i][j], rf + "[" + std::to_string(j) + "]"));
    if (!out.empty() && row.size() != out.front().size()) fail(n[i], rf, "ragged matrix");
    out.push_back(std::move(row));
  }
}

inline void positive(const YAML::Node& root, const std::string& field, double v) {
  if (!(v > 0.0)) fail(root, field, "must be positive");
}

}  // namespace detail

/// Parses and validates a run configuration. Errors carry line and field.
inline RunConfig parse_config(const YAML::Node& root) {
  using namespace detail;
  RunConfig c;
  if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");
  check_keys(root, "", {"model", "discretization", "parameters", "solver", "adjoint_qoi", "grad_check", "floquet",
                        "optimize", "sweep", "output", "seed", "workers"});

  const auto model = root["model"];
  if (!model) fail(root, "model", "missing required section");
  check_keys(model, "model",
             {"name", "A", "mass", "forcing", "qoi", "n_cells", "viscosity", "damping", "consistent_mass",
              "dense_jacobian"});
  if (!model["name"]) fail(model, "model.name", "missing required field");
  get(model, "name", "model", c.model.name);
  static const std::set<std::string> models{"linear", "vdp", "burgers", "steady"};
  if (!models.count(c.model.name)) fail(model["name"], "model.name", "unknown model '" + c.model.name + "'");
  get_rows(model, "A", "model", c.model.A);
  get_rows(model, "mass", "model", c.model.mass);
  if (const auto f = model["forcing"]) {
    if (!f.IsSequence()) fail(f, "model.forcing", "expected a list");
    for (std::size_t i = 0; i < f.size(); ++i) {
      const std::string p = "model.forcing[" + std::to_string(i) + "]";
      check_keys(f[i], p, {"component", "harmonic", "kind"});
      ForcingSpec s;
      get(f[i], "component", p, s.component);
      get(f[i], "harmonic", p, s.harmonic);
      get(f[i], "kind", p, s.kind);
      if (s.kind != "constant" && s.kind != "cosine" && s.kind != "sine")
        fail(f[i]["kind"], p + ".kind", "expected constant, cosine or sine");
      c.model.forcing.push_back(s);
    }
  }
  if (const auto q = model["qoi"]) {
    if (!q.IsSequence()) fail(q, "model.qoi", "expected a list");
    for (std::size_t i = 0; i < q.size(); ++i) {
      const std::string p = "model.qoi[" + std::to_string(i) + "]";
      check_keys(q[i], p, {"name", "w", "Q", "R"});
      QoiTermSpec s;
      get(q[i], "name", p, s.name);
      get_list(q[i], "w", p, s.w);
      get_rows(q[i], "Q", p, s.Q);
      get_rows(q[i], "R", p, s.R);
      c.model.qoi.push_back(std::move(s));
    }
  }
  get(model, "n_cells", "model", c.model.n_cells);
  get(model, "viscosity", "model", c.model.viscosity);
  get(model, "damping", "model", c.model.damping);
  get(model, "consistent_mass", "model", c.model.consistent_mass);
  get(model, "dense_jacobian", "model", c.model.dense_jacobian);
  if (c.model.name == "linear") {
    if (c.model.A.empty()) fail(model, "model.A", "missing required field for the linear model");
    if (c.model.forcing.empty()) fail(model, "model.forcing", "missing required field for the linear model");
  }
  if (c.model.name == "burgers") {
    if (c.model.n_cells < 16) fail(model["n_cells"], "model.n_cells", "must be at least 16");
    positive(model["viscosity"] ? model["viscosity"] : model, "model.viscosity", c.model.viscosity);
  }

  const auto disc = root["discretization"];
  if (!disc) fail(root, "discretization", "missing required section");
  check_keys(disc, "discretization", {"tableau", "steps", "period", "stage_tol"});
  get(disc, "tableau", "discretization", c.discretization.tableau);
  if (!disc["steps"]) fail(disc, "discretization.steps", "missing required field (N_t)");
  if (!disc["period"]) fail(disc, "discretization.period", "missing required field (T)");
  get(disc, "steps", "discretization", c.discretization.steps);
  get(disc, "period", "discretization", c.discretization.period);
  get(disc, "stage_tol", "discretization", c.discretization.stage_tol);
  if (c.discretization.steps < 1) fail(disc["steps"], "discretization.steps", "must be at least 1");
  positive(disc["period"], "discretization.period", c.discretization.period);
  positive(disc["stage_tol"] ? disc["stage_tol"] : disc, "discretization.stage_tol", c.discretization.stage_tol);
  try {
    tpa::tableau_library(c.discretization.tableau);
  } catch (const ConfigError& e) {
    fail(disc["tableau"], "discretization.tableau", e.what());
  }

  if (!root["parameters"]) fail(root, "parameters", "missing required field");
  get_list(root, "parameters", "", c.parameters);
  for (double p : c.parameters)
    if (!std::isfinite(p)) fail(root["parameters"], "parameters", "entries must be finite");

  if (const auto s = root["solver"]) {
    check_keys(s, "solver", {"method", "tol", "gmres_tol", "m_precondition", "max_iter", "memory", "u0",
                             "dual_method", "dual_tol", "dual_max_iter"});
    auto& v = c.solver;
    get(s, "method", "solver", v.method);
    get(s, "tol", "solver", v.tol);
    get(s, "gmres_tol", "solver", v.gmres_tol);
    get(s, "m_precondition", "solver", v.m_precondition);
    get(s, "max_iter", "solver", v.max_iter);
    get(s, "memory", "solver", v.memory);
    get_list(s, "u0", "solver", v.u0);
    get(s, "dual_method", "solver", v.dual_method);
    get(s, "dual_tol", "solver", v.dual_tol);
    get(s, "dual_max_iter", "solver", v.dual_max_iter);
    static const std::set<std::string> methods{"newton", "fixed-point", "lbfgs", "steepest-descent"};
    if (!methods.count(v.method)) fail(s["method"], "solver.method", "unknown method '" + v.method + "'");
    if (v.dual_method != "gmres" && v.dual_method != "fixed-point")
      fail(s["dual_method"], "solver.dual_method", "expected gmres or fixed-point");
    positive(s["tol"] ? s["tol"] : s, "solver.tol", v.tol);
    positive(s["dual_tol"] ? s["dual_tol"] : s, "solver.dual_tol", v.dual_tol);
    if (!(v.gmres_tol > 0.0 && v.gmres_tol < 1.0))
      fail(s["gmres_tol"], "solver.gmres_tol", "must lie in (0, 1)");
    if (v.m_precondition < 0) fail(s["m_precondition"], "solver.m_precondition", "must be non-negative");
    if (v.max_iter < 0) fail(s["max_iter"], "solver.max_iter", "must be non-negative");
    if (v.memory < 1) fail(s["memory"], "solver.memory", "must be at least 1");
    if (v.dual_max_iter < 1) fail(s["dual_max_iter"], "solver.dual_max_iter", "must be at least 1");
  }
  get(root, "adjoint_qoi", "", c.adjoint_qoi);

  if (const auto g = root["grad_check"]) {
    check_keys(g, "grad_check", {"taus"});
    get_list(g, "taus", "grad_check", c.grad_check.taus);
    if (c.grad_check.taus.empty()) fail(g, "grad_check.taus", "need at least one step size");
    for (double t : c.grad_check.taus) positive(g["taus"], "grad_check.taus", t);
  }
  if (const auto f = root["floquet"]) {
    check_keys(f, "floquet", {"k", "m", "tol", "margin"});
    get(f, "k", "floquet", c.floquet.k);
    get(f, "m", "floquet", c.floquet.m);
    get(f, "tol", "floquet", c.floquet.tol);
    get(f, "margin", "floquet", c.floquet.margin);
    if (c.floquet.k < 1) fail(f["k"], "floquet.k", "must be at least 1");
    positive(f["tol"] ? f["tol"] : f, "floquet.tol", c.floquet.tol);
    if (c.floquet.margin < 0.0) fail(f["margin"], "floquet.margin", "must be non-negative");
  }
  if (const auto o = root["optimize"]) {
    check_keys(o, "optimize",
               {"objective", "constraints", "lower", "upper", "tol_opt", "tol_con", "max_outer", "max_inner",
                "warm_sweeps"});
    auto& v = c.optimize;
    get(o, "objective", "optimize", v.objective);
    if (const auto cs = o["constraints"]) {
      if (!cs.IsSequence()) fail(cs, "optimize.constraints", "expected a list");
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const std::string p = "optimize.constraints[" + std::to_string(i) + "]";
        check_keys(cs[i], p, {"qoi", "target"});
        if (!cs[i]["qoi"] || !cs[i]["target"]) fail(cs[i], p, "needs qoi and target");
        ConstraintSpec k;
        get(cs[i], "qoi", p, k.qoi);
        get(cs[i], "target", p, k.target);
        v.constraints.push_back(k);
      }
    }
    get_list(o, "lower", "optimize", v.lower);
    get_list(o, "upper", "optimize", v.upper);
    get(o, "tol_opt", "optimize", v.tol_opt);
    get(o, "tol_con", "optimize", v.tol_con);
    get(o, "max_outer", "optimize", v.max_outer);
    get(o, "max_inner", "optimize", v.max_inner);
    get(o, "warm_sweeps", "optimize", v.warm_sweeps);
    positive(o["tol_opt"] ? o["tol_opt"] : o, "optimize.tol_opt", v.tol_opt);
    positive(o["tol_con"] ? o["tol_con"] : o, "optimize.tol_con", v.tol_con);
    if (v.warm_sweeps < 0) fail(o["warm_sweeps"], "optimize.warm_sweeps", "must be non-negative");
  }
  if (const auto s = root["sweep"]) {
    check_keys(s, "sweep", {"methods", "tols", "m"});
    get_list(s, "methods", "sweep", c.sweep.methods);
    get_list(s, "tols", "sweep", c.sweep.tols);
    get_list(s, "m", "sweep", c.sweep.m);
    for (double t : c.sweep.tols) positive(s["tols"], "sweep.tols", t);
    static const std::set<std::string> methods{"newton", "fixed-point", "lbfgs", "steepest-descent"};
    for (const auto& m : c.sweep.methods)
      if (!methods.count(m)) fail(s["methods"], "sweep.methods", "unknown method '" + m + "'");
  }
  get(root, "output", "", c.output);
  get(root, "seed", "", c.seed);
  get(root, "workers", "", c.workers);
  if (c.workers < 1) fail(root["workers"], "workers", "must be at least 1");
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("line " + std::to_string(e.mark.line + 1) + ", column " + std::to_string(e.mark.column + 1) +
                      ": syntax error: " + e.msg);
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return parse_config_text(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

namespace detail {

inline YAML::Node num(double x) { return YAML::Node(tpa::io::num(x)); }

inline YAML::Node nums(const std::vector<double>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (double x : v) n.push_back(num(x));
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

inline YAML::Node rows(const Rows& r) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const auto& row : r) n.push_back(nums(row));
  return n;
}

}  // namespace detail

/// The full effective configuration, every field explicit; parse_config inverts it.
inline YAML::Node to_yaml(const RunConfig& c) {
  using detail::num;
  using detail::nums;
  using detail::rows;
  YAML::Node root;
  YAML::Node m;
  m["name"] = c.model.name;
  if (!c.model.A.empty()) m["A"] = rows(c.model.A);
  if (!c.model.mass.empty()) m["mass"] = rows(c.model.mass);
  for (const auto& f : c.model.forcing) {
    YAML::Node n;
    n["component"] = f.component;
    n["harmonic"] = f.harmonic;
    n["kind"] = f.kind;
    m["forcing"].push_back(n);
  }
  for (const auto& q : c.model.qoi) {
    YAML::Node n;
    n["name"] = q.name;
    if (!q.w.empty()) n["w"] = nums(q.w);
    if (!q.Q.empty()) n["Q"] = rows(q.Q);
    if (!q.R.empty()) n["R"] = rows(q.R);
    m["qoi"].push_back(n);
  }
  m["n_cells"] = c.model.n_cells;
  m["viscosity"] = num(c.model.viscosity);
  m["damping"] = num(c.model.damping);
  m["consistent_mass"] = c.model.consistent_mass;
  m["dense_jacobian"] = c.model.dense_jacobian;
  root["model"] = m;

  YAML::Node d;
  d["tableau"] = c.discretization.tableau;
  d["steps"] = c.discretization.steps;
  d["period"] = num(c.discretization.period);
  d["stage_tol"] = num(c.discretization.stage_tol);
  root["discretization"] = d;
  root["parameters"] = nums(c.parameters);

  YAML::Node s;
  s["method"] = c.solver.method;
  s["tol"] = num(c.solver.tol);
  s["gmres_tol"] = num(c.solver.gmres_tol);
  s["m_precondition"] = c.solver.m_precondition;
  s["max_iter"] = c.solver.max_iter;
  s["memory"] = c.solver.memory;
  if (!c.solver.u0.empty()) s["u0"] = nums(c.solver.u0);
  s["dual_method"] = c.solver.dual_method;
  s["dual_tol"] = num(c.solver.dual_tol);
  s["dual_max_iter"] = c.solver.dual_max_iter;
  root["solver"] = s;
  if (!c.adjoint_qoi.empty()) root["adjoint_qoi"] = c.adjoint_qoi;

  root["grad_check"]["taus"] = nums(c.grad_check.taus);
  YAML::Node f;
  f["k"] = c.floquet.k;
  f["m"] = c.floquet.m;
  f["tol"] = num(c.floquet.tol);
  f["margin"] = num(c.floquet.margin);
  root["floquet"] = f;

  YAML::Node o;
  if (!c.optimize.objective.empty()) o["objective"] = c.optimize.objective;
  for (const auto& k : c.optimize.constraints) {
    YAML::Node n;
    n["qoi"] = k.qoi;
    n["target"] = num(k.target);
    o["constraints"].push_back(n);
  }
  if (!c.optimize.lower.empty()) o["lower"] = nums(c.optimize.lower);
  if (!c.optimize.upper.empty()) o["upper"] = nums(c.optimize.upper);
  o["tol_opt"] = num(c.optimize.tol_opt);
  o["tol_con"] = num(c.optimize.tol_con);
  o["max_outer"] = c.optimize.max_outer;
  o["max_inner"] = c.optimize.max_inner;
  o["warm_sweeps"] = c.optimize.warm_sweeps;
  root["optimize"] = o;

  YAML::Node w;
  YAML::Node methods(YAML::NodeType::Sequence), ms(YAML::NodeType::Sequence);
  for (const auto& x : c.sweep.methods) methods.push_back(x);
  for (Index x : c.sweep.m) ms.push_back(x);
  methods.SetStyle(YAML::EmitterStyle::Flow);
  ms.SetStyle(YAML::EmitterStyle::Flow);
  w["methods"] = methods;
  w["tols"] = nums(c.sweep.tols);
  w["m"] = ms;
  root["sweep"] = w;

  root["output"] = c.output;
  root["seed"] = c.seed;
  root["workers"] = c.workers;
  return root;
}

inline std::string emit(const YAML::Node& n) {
  YAML::Emitter out;
  out << n;
  return out.c_str();
}

}  // namespace pa

#endif  // PA_CONFIG_HPP
