#ifndef TPA_VDP_MODEL_HPP
#define TPA_VDP_MODEL_HPP

#include "tpa/model.hpp"

#include <cmath>
#include <numbers>

namespace tpa {

// Forced Van der Pol oscillator:
//   u1' = u2
//   u2' = mu1 (1 - u1^2) u2 - u1 + mu2 sin(2 pi t / T + mu3)
class ForcedVanDerPol final : public Model {
 public:
  explicit ForcedVanDerPol(double T) : T_(T) { require(T_ > 0.0, "vdp: period must be positive"); }

  Index dim() const override { return 2; }
  Index n_params() const override { return 3; }
  double period() const override { return T_; }
  std::string name() const override { return "vdp"; }

  StateVector residual(const StateVector& u, const ParamVector& mu, double t) const override {
    StateVector r(2);
    r(0) = u(1);
    r(1) = mu(0) * (1.0 - u(0) * u(0)) * u(1) - u(0) + mu(1) * std::sin(phase(t) + mu(2));
    return r;
  }

  StateVector jac_u_apply(const StateVector& u, const ParamVector& mu, double, const StateVector& v) const override {
    return jacobian(u, mu) * v;
  }
  StateVector jac_u_apply_transpose(const StateVector& u, const ParamVector& mu, double,
                                    const StateVector& w) const override {
    return jacobian(u, mu).transpose() * w;
  }
  ParamVector jac_mu_apply_transpose(const StateVector& u, const ParamVector& mu, double t,
                                     const StateVector& w) const override {
    const double th = phase(t) + mu(2);
    ParamVector g(3);
    g(0) = w(1) * (1.0 - u(0) * u(0)) * u(1);
    g(1) = w(1) * std::sin(th);
    g(2) = w(1) * mu(1) * std::cos(th);
    return g;
  }

  std::optional<Matrix> jac_u_matrix(const StateVector& u, const ParamVector& mu, double) const override {
    return jacobian(u, mu);
  }
  std::optional<Matrix> mass_matrix() const override { return Matrix::Identity(2, 2); }

  double phase(double t) const { return 2.0 * std::numbers::pi * t / T_; }

 private:
  static Matrix jacobian(const StateVector& u, const ParamVector& mu) {
    Matrix J(2, 2);
    J << 0.0, 1.0, -2.0 * mu(0) * u(0) * u(1) - 1.0, mu(0) * (1.0 - u(0) * u(0));
    return J;
  }

  double T_;
};

// E = integral of (u1^2 + u2^2), the oscillator energy proxy.
// J = integral of u1 sin(2 pi t / T), the displacement in phase with the
//     reference drive; its sign flips with the forcing phase.
class VanDerPolQoi final : public Qoi {
 public:
  explicit VanDerPolQoi(double T) : T_(T) {}

  Index n_qoi() const override { return 2; }
  std::vector<std::string> names() const override { return {"E", "J"}; }

  Vector integrand(const StateVector& u, const ParamVector&, double t) const override {
    Vector f(2);
    f(0) = u(0) * u(0) + u(1) * u(1);
    f(1) = u(0) * drive(t);
    return f;
  }
  StateVector grad_u(const StateVector& u, const ParamVector&, double t, Index q) const override {
    StateVector g(2);
    if (q == 0) {
      g << 2.0 * u(0), 2.0 * u(1);
    } else {
      g << drive(t), 0.0;
    }
    return g;
  }
  ParamVector grad_mu(const StateVector&, const ParamVector&, double, Index) const override {
    return ParamVector::Zero(3);
  }

 private:
  double drive(double t) const { return std::sin(2.0 * std::numbers::pi * t / T_); }
  double T_;
};

inline std::pair<ModelPtr, QoiPtr> make_forced_vdp(double T) {
  return {std::make_shared<const ForcedVanDerPol>(T), std::make_shared<const VanDerPolQoi>(T)};
}

}  // namespace tpa

#endif  // TPA_VDP_MODEL_HPP
