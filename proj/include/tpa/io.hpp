#ifndef TPA_IO_HPP
#define TPA_IO_HPP

#include "tpa/floquet.hpp"
#include "tpa/optimize.hpp"

#include <bit>
#include <filesystem>
#include <fstream>

namespace tpa::io {

/// Shortest text that round-trips: 17 significant digits.
inline std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_values(std::ostream& os, const Vector& v) {
  for (Index j = 0; j < v.size(); ++j) os << ',' << num(v(j));
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, mode);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  return os;
}

/// One value per line.
inline void write_vector(std::ostream& os, const Vector& v) {
  for (Index j = 0; j < v.size(); ++j) os << num(v(j)) << '\n';
}

inline Vector read_vector(std::istream& is) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(line, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + line + "'");
    }
    if (line.find_first_not_of(" \t\r", used) != std::string::npos) throw ConfigError("not a number: '" + line + "'");
    vals.push_back(x);
  }
  return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

namespace detail {

inline void write_history(std::ostream& os, const TimeGrid& grid, const std::vector<StateVector>& states,
                          const std::vector<std::vector<StateVector>>& stages, const ButcherTableau& tab,
                          const char* state_name) {
  const Index n_u = states.empty() ? 0 : states.front().size();
  os << "n,i,t";
  for (Index j = 0; j < n_u; ++j) os << ',' << state_name << j;
  os << '\n';
  for (Index n = 0; n <= grid.steps(); ++n) {
    os << n << ",0," << num(grid.t(n));
    write_values(os, states[static_cast<std::size_t>(n)]);
    os << '\n';
    if (n == 0) continue;
    for (Index i = 0; i < tab.stages(); ++i) {
      os << n << ',' << i + 1 << ',' << num(grid.t(n - 1) + tab.c(i) * grid.dt(n));
      write_values(os, stages[static_cast<std::size_t>(n - 1)][static_cast<std::size_t>(i)]);
      os << '\n';
    }
  }
}

}  // namespace detail

/// Rows (n, i, t, values); i = 0 is u^(n), i >= 1 is stage k_i^(n) at its stage time.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  detail::write_history(os, tr.grid, tr.states, tr.stages, tr.tableau, "u");
}

/// Same layout with lambda^(n) and kappa_i^(n).
inline void write_dual_csv(std::ostream& os, const DualTrajectory& d) {
  detail::write_history(os, d.grid, d.lambdas, d.stage_duals, d.tableau, "lambda");
}

/**
 * Binary dump, little-endian: int64 N_u, N_t, s, then doubles u^(0) and for
 * each step u^(n), k_1^(n) .. k_s^(n).
 */
inline void write_trajectory_binary(std::ostream& os, const Trajectory& tr) {
  static_assert(std::endian::native == std::endian::little, "binary dumps assume a little-endian host");
  const std::int64_t hdr[3] = {tr.states.front().size(), tr.grid.steps(), tr.tableau.stages()};
  os.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
  auto put = [&](const StateVector& v) {
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  };
  put(tr.states.front());
  for (Index n = 1; n <= tr.grid.steps(); ++n) {
    put(tr.states[static_cast<std::size_t>(n)]);
    for (const auto& k : tr.stages[static_cast<std::size_t>(n - 1)]) put(k);
  }
}

struct RawTrajectory {
  std::vector<StateVector> states;
  std::vector<std::vector<StateVector>> stages;
};

inline RawTrajectory read_trajectory_binary(std::istream& is) {
  std::int64_t hdr[3];
  if (!is.read(reinterpret_cast<char*>(hdr), sizeof hdr)) throw Error("trajectory dump: truncated header");
  const Index n_u = hdr[0], nt = hdr[1], s = hdr[2];
  if (n_u <= 0 || nt <= 0 || s <= 0) throw Error("trajectory dump: bad header");
  auto get = [&] {
    StateVector v(n_u);
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n_u * sizeof(double))))
      throw Error("trajectory dump: truncated data");
    return v;
  };
  RawTrajectory out;
  out.states.push_back(get());
  for (Index n = 1; n <= nt; ++n) {
    out.states.push_back(get());
    out.stages.emplace_back();
    for (Index i = 0; i < s; ++i) out.stages.back().push_back(get());
  }
  return out;
}

inline void write_solve_report_csv(std::ostream& os, const SolveReport& r) {
  os << "iteration,defect,inner_iterations,cumulative_matvecs\n";
  for (const auto& h : r.history)
    os << h.iteration << ',' << num(h.defect) << ',' << h.inner_iterations << ',' << h.cumulative_matvecs << '\n';
}

/// Residual history of every inner Krylov solve, keyed by outer iteration.
inline void write_krylov_csv(std::ostream& os, const std::vector<KrylovReport>& reports) {
  os << "solve,iteration,residual,converged\n";
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const auto& r = reports[k];
    for (std::size_t i = 0; i < r.residual_history.size(); ++i)
      os << k << ',' << i << ',' << num(r.residual_history[i]) << ',' << (r.converged ? 1 : 0) << '\n';
  }
}

inline void write_gradient_csv(std::ostream& os, const ManifoldGradient& g) {
  os << "qoi";
  for (Index p = 0; p < g.values.cols(); ++p) os << ",dmu" << p;
  os << '\n';
  for (Index q = 0; q < g.values.rows(); ++q) {
    os << g.qoi_names[static_cast<std::size_t>(q)];
    write_values(os, g.values.row(q).transpose());
    os << '\n';
  }
}

inline void write_grad_check_csv(std::ostream& os, const std::vector<GradCheckRow>& rows,
                                 const std::vector<std::string>& names) {
  os << "qoi,param,tau,fd,adjoint,rel_error,ok\n";
  for (const auto& r : rows)
    os << names[static_cast<std::size_t>(r.qoi)] << ',' << r.param << ',' << num(r.tau) << ',' << num(r.fd_value) << ','
       << num(r.adjoint_value) << ',' << num(r.rel_error) << ',' << (r.ok ? 1 : 0) << '\n';
}

inline void write_eigenvalues_csv(std::ostream& os, const std::vector<RitzValue>& ev) {
  os << "index,re,im,modulus,residual,converged\n";
  for (std::size_t i = 0; i < ev.size(); ++i)
    os << i << ',' << num(ev[i].value.real()) << ',' << num(ev[i].value.imag()) << ',' << num(std::abs(ev[i].value))
       << ',' << num(ev[i].residual) << ',' << (ev[i].converged ? 1 : 0) << '\n';
}

inline void write_opt_history_csv(std::ostream& os, const OptHistory& h, const std::vector<std::string>& constraint_names) {
  os << "iteration,outer,objective";
  for (const auto& c : constraint_names) os << ",constraint_" << c;
  os << ",optimality,gradient_norm,penalty,defect,newton_iterations,dual_iterations";
  const Index np = h.records.empty() ? 0 : h.records.front().mu.size();
  for (Index p = 0; p < np; ++p) os << ",mu" << p;
  os << '\n';
  for (const auto& r : h.records) {
    os << r.iteration << ',' << r.outer << ',' << num(r.objective);
    write_values(os, r.constraints);
    os << ',' << num(r.optimality) << ',' << num(r.gradient_norm) << ',' << (r.penalty ? num(*r.penalty) : "") << ','
       << num(r.defect) << ',' << r.newton_iterations << ',' << r.dual_iterations;
    write_values(os, r.mu);
    os << '\n';
  }
}

}  // namespace tpa::io

#endif  // TPA_IO_HPP
