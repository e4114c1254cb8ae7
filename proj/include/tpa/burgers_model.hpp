#ifndef TPA_BURGERS_MODEL_HPP
#define TPA_BURGERS_MODEL_HPP

#include "tpa/model.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <numbers>

namespace tpa {

struct BurgersOptions {
  Index n_cells = 64;
  double viscosity = 0.02;
  double period = 1.0;
  /// Linear drag -gamma u; keeps the mean mode strictly contracting.
  double damping = 1.0;
  /// Linear-element mass matrix tridiag(1/6, 2/3, 1/6) instead of M = I.
  bool consistent_mass = true;
  /// Expose a dense Jacobian (stage solves by LU instead of GMRES).
  bool dense_jacobian = false;
};

/**
 * Viscous Burgers equation on the periodic unit interval,
 *
 *   M du/dt = -d/dx(u^2/2) + nu d2u/dx2 - gamma u + s(x, t; mu),
 *
 * discretized with central differences in conservative flux form. The source
 * is a periodic bump that sweeps back and forth across the domain:
 *
 *   s = a exp(kappa (cos(2 pi (x - x_c(t))) - 1)),  kappa = 1 / (2 pi w)^2,
 *   x_c(t) = 1/2 + b sin(2 pi t / T),
 *
 * with mu = (a, b, w): amplitude, sweep, width.
 */
class Burgers1D final : public Model {
 public:
  explicit Burgers1D(const BurgersOptions& opt) : opt_(opt) {
    require(opt_.n_cells >= 16, "burgers: n_cells must be at least 16");
    require(opt_.viscosity > 0.0, "burgers: viscosity must be positive");
    require(opt_.period > 0.0, "burgers: period must be positive");
    require(opt_.damping >= 0.0, "burgers: damping must be non-negative");
    h_ = 1.0 / static_cast<double>(opt_.n_cells);
    if (opt_.consistent_mass) {
      const Index n = opt_.n_cells;
      std::vector<Eigen::Triplet<double>> trip;
      for (Index j = 0; j < n; ++j) {
        trip.emplace_back(j, j, 2.0 / 3.0);
        trip.emplace_back(j, (j + 1) % n, 1.0 / 6.0);
        trip.emplace_back(j, (j + n - 1) % n, 1.0 / 6.0);
      }
      mass_.resize(n, n);
      mass_.setFromTriplets(trip.begin(), trip.end());
      ldlt_.compute(mass_);
      require(ldlt_.info() == Eigen::Success, "burgers: mass factorization failed");
    }
  }

  Index dim() const override { return opt_.n_cells; }
  Index n_params() const override { return 3; }
  double period() const override { return opt_.period; }
  std::string name() const override { return "burgers"; }
  const BurgersOptions& options() const { return opt_; }
  double cell_width() const { return h_; }
  double x(Index j) const { return static_cast<double>(j) * h_; }

  StateVector residual(const StateVector& u, const ParamVector& mu, double t) const override {
    const Index n = dim();
    const double nu_h2 = opt_.viscosity / (h_ * h_);
    StateVector r(n);
    for (Index j = 0; j < n; ++j) {
      const double up = u(next(j)), um = u(prev(j));
      r(j) = -(up * up - um * um) / (4.0 * h_) + nu_h2 * (up - 2.0 * u(j) + um) - opt_.damping * u(j) +
             source(j, mu, t);
    }
    return r;
  }

  StateVector jac_u_apply(const StateVector& u, const ParamVector&, double, const StateVector& v) const override {
    const Index n = dim();
    const double nu_h2 = opt_.viscosity / (h_ * h_);
    StateVector out(n);
    for (Index j = 0; j < n; ++j) {
      const Index p = next(j), m = prev(j);
      out(j) = -(u(p) * v(p) - u(m) * v(m)) / (2.0 * h_) + nu_h2 * (v(p) - 2.0 * v(j) + v(m)) - opt_.damping * v(j);
    }
    return out;
  }

  StateVector jac_u_apply_transpose(const StateVector& u, const ParamVector&, double,
                                    const StateVector& w) const override {
    const Index n = dim();
    const double nu_h2 = opt_.viscosity / (h_ * h_);
    StateVector out(n);
    for (Index j = 0; j < n; ++j) {
      const Index p = next(j), m = prev(j);
      out(j) = u(j) * (w(p) - w(m)) / (2.0 * h_) + nu_h2 * (w(p) - 2.0 * w(j) + w(m)) - opt_.damping * w(j);
    }
    return out;
  }

  ParamVector jac_mu_apply_transpose(const StateVector&, const ParamVector& mu, double t,
                                     const StateVector& w) const override {
    ParamVector g = ParamVector::Zero(3);
    const double a = mu(0), w0 = mu(2);
    const double kappa = kernel_rate(w0);
    const double sweep_rate = 2.0 * std::numbers::pi * std::sin(omega(t));
    for (Index j = 0; j < dim(); ++j) {
      const double phi = 2.0 * std::numbers::pi * (x(j) - center(mu, t));
      const double K = std::exp(kappa * (std::cos(phi) - 1.0));
      g(0) += w(j) * K;
      g(1) += w(j) * a * K * kappa * std::sin(phi) * sweep_rate;
      g(2) += w(j) * a * K * (std::cos(phi) - 1.0) * (-2.0 * kappa / w0);
    }
    return g;
  }

  StateVector mass_apply(const StateVector& v) const override {
    return opt_.consistent_mass ? StateVector(mass_ * v) : v;
  }
  StateVector mass_solve(const StateVector& b) const override {
    return opt_.consistent_mass ? StateVector(ldlt_.solve(b)) : b;
  }
  StateVector mass_apply_transpose(const StateVector& v) const override { return mass_apply(v); }
  StateVector mass_solve_transpose(const StateVector& b) const override { return mass_solve(b); }

  std::optional<Matrix> jac_u_matrix(const StateVector& u, const ParamVector& mu, double t) const override {
    if (!opt_.dense_jacobian) return std::nullopt;
    const Index n = dim();
    Matrix J(n, n);
    for (Index k = 0; k < n; ++k) J.col(k) = jac_u_apply(u, mu, t, StateVector::Unit(n, k));
    return J;
  }
  std::optional<Matrix> mass_matrix() const override {
    if (!opt_.dense_jacobian) return std::nullopt;
    if (!opt_.consistent_mass) return Matrix::Identity(dim(), dim());
    return Matrix(mass_);
  }

  double source(Index j, const ParamVector& mu, double t) const {
    const double phi = 2.0 * std::numbers::pi * (x(j) - center(mu, t));
    return mu(0) * std::exp(kernel_rate(mu(2)) * (std::cos(phi) - 1.0));
  }

 private:
  Index next(Index j) const { return j + 1 == dim() ? 0 : j + 1; }
  Index prev(Index j) const { return j == 0 ? dim() - 1 : j - 1; }
  double omega(double t) const { return 2.0 * std::numbers::pi * t / opt_.period; }
  double center(const ParamVector& mu, double t) const { return 0.5 + mu(1) * std::sin(omega(t)); }
  static double kernel_rate(double w) {
    const double s = 2.0 * std::numbers::pi * w;
    return 1.0 / (s * s);
  }

  BurgersOptions opt_;
  double h_ = 0.0;
  Eigen::SparseMatrix<double> mass_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

// U = integral of u over space-time, S = integral of u^2 over space-time.
class BurgersQoi final : public Qoi {
 public:
  BurgersQoi(Index n_cells) : n_(n_cells), h_(1.0 / static_cast<double>(n_cells)) {}

  Index n_qoi() const override { return 2; }
  std::vector<std::string> names() const override { return {"U", "S"}; }

  Vector integrand(const StateVector& u, const ParamVector&, double) const override {
    Vector f(2);
    f(0) = h_ * u.sum();
    f(1) = h_ * u.squaredNorm();
    return f;
  }
  StateVector grad_u(const StateVector& u, const ParamVector&, double, Index q) const override {
    if (q == 0) return StateVector::Constant(n_, h_);
    return 2.0 * h_ * u;
  }
  ParamVector grad_mu(const StateVector&, const ParamVector&, double, Index) const override {
    return ParamVector::Zero(3);
  }

 private:
  Index n_;
  double h_;
};

inline std::pair<ModelPtr, QoiPtr> make_burgers_1d(const BurgersOptions& opt) {
  return {std::make_shared<const Burgers1D>(opt), std::make_shared<const BurgersQoi>(opt.n_cells)};
}

inline std::pair<ModelPtr, QoiPtr> make_burgers_1d(Index n_cells, double viscosity, double T) {
  BurgersOptions opt;
  opt.n_cells = n_cells;
  opt.viscosity = viscosity;
  opt.period = T;
  return make_burgers_1d(opt);
}

}  // namespace tpa

#endif  // TPA_BURGERS_MODEL_HPP
