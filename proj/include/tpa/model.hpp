#ifndef TPA_MODEL_HPP
#define TPA_MODEL_HPP

#include "tpa/core.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tpa {

/**
 * Parametrized semi-discrete system  M du/dt = r(u, mu, t)  with a constant
 * mass matrix M and a T-periodic right-hand side.
 *
 * Implementations must be pure: every callback depends only on its arguments,
 * so a single instance can be shared by concurrent propagations.
 *
 * The mass matrix is only reached through apply/solve actions. The defaults
 * implement M = I.
 */
class Model {
 public:
  virtual ~Model() = default;

  virtual Index dim() const = 0;
  virtual Index n_params() const = 0;
  virtual double period() const = 0;
  virtual std::string name() const = 0;

  virtual StateVector residual(const StateVector& u, const ParamVector& mu, double t) const = 0;
  /// (dr/du) v
  virtual StateVector jac_u_apply(const StateVector& u, const ParamVector& mu, double t,
                                  const StateVector& v) const = 0;
  /// (dr/du)^T w
  virtual StateVector jac_u_apply_transpose(const StateVector& u, const ParamVector& mu, double t,
                                            const StateVector& w) const = 0;
  /// (dr/dmu)^T w, length N_mu
  virtual ParamVector jac_mu_apply_transpose(const StateVector& u, const ParamVector& mu, double t,
                                             const StateVector& w) const = 0;

  virtual StateVector mass_apply(const StateVector& v) const { return v; }
  virtual StateVector mass_solve(const StateVector& b) const { return b; }
  virtual StateVector mass_apply_transpose(const StateVector& v) const { return v; }
  virtual StateVector mass_solve_transpose(const StateVector& b) const { return b; }

  /// Dense dr/du for small models; empty when the model is matrix-free.
  virtual std::optional<Matrix> jac_u_matrix(const StateVector&, const ParamVector&, double) const {
    return std::nullopt;
  }
  /// Dense M, available whenever jac_u_matrix is.
  virtual std::optional<Matrix> mass_matrix() const { return std::nullopt; }
};

/**
 * Space-time integrands f_q(u, mu, t) whose period integrals are the
 * quantities of interest.
 */
class Qoi {
 public:
  virtual ~Qoi() = default;

  virtual Index n_qoi() const = 0;
  virtual std::vector<std::string> names() const = 0;

  virtual Vector integrand(const StateVector& u, const ParamVector& mu, double t) const = 0;
  /// Gradient of f_q with respect to u.
  virtual StateVector grad_u(const StateVector& u, const ParamVector& mu, double t, Index q) const = 0;
  /// Gradient of f_q with respect to mu.
  virtual ParamVector grad_mu(const StateVector& u, const ParamVector& mu, double t, Index q) const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;
using QoiPtr = std::shared_ptr<const Qoi>;

}  // namespace tpa

#endif  // TPA_MODEL_HPP
