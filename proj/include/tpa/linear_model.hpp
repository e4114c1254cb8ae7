#ifndef TPA_LINEAR_MODEL_HPP
#define TPA_LINEAR_MODEL_HPP

#include "tpa/model.hpp"

#include <cmath>
#include <numbers>

namespace tpa {

/// One term of a truncated Fourier forcing; its amplitude is a model parameter.
struct ForcingTerm {
  enum class Kind { constant, cosine, sine };
  Index component = 0;
  int harmonic = 0;
  Kind kind = Kind::constant;
};

/**
 * M du/dt = A u + g(t; mu),  g(t; mu) = sum_q mu_q phi_q(t) e_{component_q}.
 *
 * The forcing is linear in mu and T-periodic by construction, so the one-period
 * map is affine and the discrete periodic solution is available in closed form.
 */
class LinearPeriodicModel final : public Model {
 public:
  LinearPeriodicModel(Matrix A, std::vector<ForcingTerm> forcing, Matrix M, double T)
      : A_(std::move(A)), forcing_(std::move(forcing)), M_(std::move(M)), T_(T) {
    require(T_ > 0.0, "linear model: period must be positive");
    require(A_.rows() == A_.cols() && A_.rows() > 0, "linear model: A must be square and non-empty");
    require(M_.rows() == A_.rows() && M_.cols() == A_.cols(), "linear model: M must match A");
    require(A_.allFinite() && M_.allFinite(), "linear model: A and M must be finite");
    for (const auto& f : forcing_) {
      require(f.component >= 0 && f.component < A_.rows(), "linear model: forcing component out of range");
      require(f.harmonic >= 0, "linear model: negative harmonic");
    }
    Eigen::FullPivLU<Matrix> lu(M_);
    require(lu.isInvertible(), "linear model: mass matrix is singular");
    lu_ = Eigen::PartialPivLU<Matrix>(M_);
    lu_t_ = Eigen::PartialPivLU<Matrix>(M_.transpose());
    identity_mass_ = M_.isIdentity(0.0);
  }

  Index dim() const override { return A_.rows(); }
  Index n_params() const override { return static_cast<Index>(forcing_.size()); }
  double period() const override { return T_; }
  std::string name() const override { return "linear"; }

  const Matrix& A() const { return A_; }
  const Matrix& M() const { return M_; }
  const std::vector<ForcingTerm>& forcing() const { return forcing_; }

  /// phi_q(t)
  double basis(Index q, double t) const {
    const auto& f = forcing_[static_cast<std::size_t>(q)];
    const double w = 2.0 * std::numbers::pi * f.harmonic * t / T_;
    switch (f.kind) {
      case ForcingTerm::Kind::cosine: return std::cos(w);
      case ForcingTerm::Kind::sine: return std::sin(w);
      default: return 1.0;
    }
  }

  StateVector forcing_at(const ParamVector& mu, double t) const {
    StateVector g = StateVector::Zero(dim());
    for (Index q = 0; q < n_params(); ++q) g(forcing_[static_cast<std::size_t>(q)].component) += mu(q) * basis(q, t);
    return g;
  }

  StateVector residual(const StateVector& u, const ParamVector& mu, double t) const override {
    return A_ * u + forcing_at(mu, t);
  }
  StateVector jac_u_apply(const StateVector&, const ParamVector&, double, const StateVector& v) const override {
    return A_ * v;
  }
  StateVector jac_u_apply_transpose(const StateVector&, const ParamVector&, double,
                                    const StateVector& w) const override {
    return A_.transpose() * w;
  }
  ParamVector jac_mu_apply_transpose(const StateVector&, const ParamVector&, double t,
                                     const StateVector& w) const override {
    ParamVector out(n_params());
    for (Index q = 0; q < n_params(); ++q) out(q) = w(forcing_[static_cast<std::size_t>(q)].component) * basis(q, t);
    return out;
  }

  StateVector mass_apply(const StateVector& v) const override { return identity_mass_ ? v : StateVector(M_ * v); }
  StateVector mass_solve(const StateVector& b) const override { return identity_mass_ ? b : StateVector(lu_.solve(b)); }
  StateVector mass_apply_transpose(const StateVector& v) const override {
    return identity_mass_ ? v : StateVector(M_.transpose() * v);
  }
  StateVector mass_solve_transpose(const StateVector& b) const override {
    return identity_mass_ ? b : StateVector(lu_t_.solve(b));
  }

  std::optional<Matrix> jac_u_matrix(const StateVector&, const ParamVector&, double) const override { return A_; }
  std::optional<Matrix> mass_matrix() const override { return M_; }

 private:
  Matrix A_;
  std::vector<ForcingTerm> forcing_;
  Matrix M_;
  double T_;
  Eigen::PartialPivLU<Matrix> lu_;
  Eigen::PartialPivLU<Matrix> lu_t_;
  bool identity_mass_ = false;
};

inline std::shared_ptr<const LinearPeriodicModel> make_linear_periodic(Matrix A, std::vector<ForcingTerm> forcing,
                                                                       Matrix M, double T) {
  return std::make_shared<const LinearPeriodicModel>(std::move(A), std::move(forcing), std::move(M), T);
}

inline std::shared_ptr<const LinearPeriodicModel> make_linear_periodic(Matrix A, std::vector<ForcingTerm> forcing,
                                                                       double T) {
  const Index n = A.rows();
  return make_linear_periodic(std::move(A), std::move(forcing), Matrix::Identity(n, n), T);
}

/// f_q(u, mu) = w_q^T u + 1/2 u^T Q_q u + 1/2 mu^T R_q mu
struct QuadraticIntegrand {
  Vector w;
  Matrix Q;  // symmetric, may be empty (zero)
  Matrix R;  // symmetric, may be empty (zero)
  std::string name;
};

class QuadraticQoi final : public Qoi {
 public:
  QuadraticQoi(Index n_u, Index n_mu, std::vector<QuadraticIntegrand> terms)
      : n_u_(n_u), n_mu_(n_mu), terms_(std::move(terms)) {
    require(!terms_.empty(), "quadratic qoi: at least one integrand required");
    for (auto& t : terms_) {
      if (t.w.size() == 0) t.w = Vector::Zero(n_u_);
      if (t.Q.size() == 0) t.Q = Matrix::Zero(n_u_, n_u_);
      if (t.R.size() == 0) t.R = Matrix::Zero(n_mu_, n_mu_);
      require(t.w.size() == n_u_ && t.Q.rows() == n_u_ && t.Q.cols() == n_u_, "quadratic qoi: state size mismatch");
      require(t.R.rows() == n_mu_ && t.R.cols() == n_mu_, "quadratic qoi: parameter size mismatch");
    }
  }

  Index n_qoi() const override { return static_cast<Index>(terms_.size()); }
  std::vector<std::string> names() const override {
    std::vector<std::string> out;
    for (std::size_t q = 0; q < terms_.size(); ++q)
      out.push_back(terms_[q].name.empty() ? "F" + std::to_string(q) : terms_[q].name);
    return out;
  }
  const std::vector<QuadraticIntegrand>& terms() const { return terms_; }

  Vector integrand(const StateVector& u, const ParamVector& mu, double) const override {
    Vector f(n_qoi());
    for (Index q = 0; q < n_qoi(); ++q) {
      const auto& t = terms_[static_cast<std::size_t>(q)];
      f(q) = t.w.dot(u) + 0.5 * u.dot(t.Q * u) + 0.5 * mu.dot(t.R * mu);
    }
    return f;
  }
  StateVector grad_u(const StateVector& u, const ParamVector&, double, Index q) const override {
    const auto& t = terms_[static_cast<std::size_t>(q)];
    return t.w + 0.5 * (t.Q + t.Q.transpose()) * u;
  }
  ParamVector grad_mu(const StateVector&, const ParamVector& mu, double, Index q) const override {
    const auto& t = terms_[static_cast<std::size_t>(q)];
    return 0.5 * (t.R + t.R.transpose()) * mu;
  }

 private:
  Index n_u_;
  Index n_mu_;
  std::vector<QuadraticIntegrand> terms_;
};

/// Scalar u' = -u + mu with F = integral of u; its periodic solution is u = mu.
inline std::pair<std::shared_ptr<const LinearPeriodicModel>, QoiPtr> make_steady_scalar(double T) {
  auto model = make_linear_periodic(Matrix::Constant(1, 1, -1.0), {ForcingTerm{0, 0, ForcingTerm::Kind::constant}}, T);
  auto qoi = std::make_shared<const QuadraticQoi>(1, 1, std::vector<QuadraticIntegrand>{{Vector::Ones(1), {}, {}, "U"}});
  return {model, qoi};
}

}  // namespace tpa

#endif  // TPA_LINEAR_MODEL_HPP
