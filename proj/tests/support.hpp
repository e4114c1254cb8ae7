#ifndef TPA_TESTS_SUPPORT_HPP
#define TPA_TESTS_SUPPORT_HPP

#include "tpa/burgers_model.hpp"
#include "tpa/gradient.hpp"
#include "tpa/linear_model.hpp"
#include "tpa/vdp_model.hpp"

#include <random>

namespace tpa::testing {

inline Vector random_vector(std::mt19937_64& rng, Index n) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(n);
  for (Index j = 0; j < n; ++j) v(j) = g(rng);
  return v;
}

inline Matrix random_matrix(std::mt19937_64& rng, Index r, Index c) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

/// r = 0 in n dimensions.
inline std::shared_ptr<const LinearPeriodicModel> zero_model(Index n, double T = 1.0) {
  return make_linear_periodic(Matrix::Zero(n, n), {ForcingTerm{0, 0, ForcingTerm::Kind::constant}}, T);
}

/// u' = -u + mu.
inline std::shared_ptr<const LinearPeriodicModel> scalar_decay(double T) {
  return make_linear_periodic(Matrix::Constant(1, 1, -1.0), {ForcingTerm{0, 0, ForcingTerm::Kind::constant}}, T);
}

/**
 * A = -alpha I + K + eps R with K skew, forcing terms on random components.
 * alpha is drawn so that exp(-alpha T) lies in (rho_lo, rho_hi).
 */
inline std::shared_ptr<const LinearPeriodicModel> random_linear(std::mt19937_64& rng, Index n, double T,
                                                                double rho_lo = 0.2, double rho_hi = 0.9,
                                                                Index n_forcing = 3) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double rho = rho_lo + (rho_hi - rho_lo) * u01(rng);
  const double alpha = -std::log(rho) / T;
  const Matrix S = random_matrix(rng, n, n);
  const Matrix K = 0.5 * (S - S.transpose()) / std::sqrt(static_cast<double>(n));
  const Matrix R = random_matrix(rng, n, n) / std::sqrt(static_cast<double>(n));
  Matrix A = -alpha * Matrix::Identity(n, n) + K + 0.05 * alpha * R;
  std::vector<ForcingTerm> f;
  std::uniform_int_distribution<Index> comp(0, n - 1);
  std::uniform_int_distribution<int> harm(0, 2), kind(0, 2);
  for (Index q = 0; q < n_forcing; ++q)
    f.push_back({comp(rng), harm(rng), static_cast<ForcingTerm::Kind>(kind(rng))});
  return make_linear_periodic(std::move(A), std::move(f), T);
}

/**
 * Independent one-step algebra for M u' = A u + g(t) with M = I: the stage
 * vector solves (I - A_tab (x) dt A) k = (1 (x) dt A) u + dt G.
 */
inline StateVector kron_step(const Matrix& A, const ButcherTableau& tab, const StateVector& u,
                             const std::function<StateVector(double)>& g, double t, double dt) {
  const Index n = A.rows(), s = tab.stages();
  Matrix big = Matrix::Identity(n * s, n * s);
  Vector rhs(n * s);
  for (Index i = 0; i < s; ++i) {
    for (Index j = 0; j < s; ++j) big.block(i * n, j * n, n, n) -= tab.a(i, j) * dt * A;
    rhs.segment(i * n, n) = dt * (A * u + g(t + tab.c(i) * dt));
  }
  const Vector k = big.partialPivLu().solve(rhs);
  StateVector out = u;
  for (Index i = 0; i < s; ++i) out += tab.b(i) * k.segment(i * n, n);
  return out;
}

/// Dense monodromy of the homogeneous linear recursion over N steps.
inline Matrix kron_monodromy(const Matrix& A, const ButcherTableau& tab, double T, Index steps) {
  const Index n = A.rows();
  const double dt = T / static_cast<double>(steps);
  auto zero = [n](double) { return StateVector::Zero(n).eval(); };
  Matrix step_map(n, n);
  for (Index j = 0; j < n; ++j) step_map.col(j) = kron_step(A, tab, StateVector::Unit(n, j), zero, 0.0, dt);
  Matrix P = Matrix::Identity(n, n);
  for (Index k = 0; k < steps; ++k) P = step_map * P;
  return P;
}

/// Stability function R(z) = 1 + z b^T (I - z A)^{-1} 1.
inline double stability_function(const ButcherTableau& tab, double z) {
  const Index s = tab.stages();
  const Matrix I = Matrix::Identity(s, s);
  return 1.0 + z * tab.b.dot((I - z * tab.a).partialPivLu().solve(Vector::Ones(s)));
}

inline Propagator make_prop(ModelPtr m, const std::string& tableau, Index steps) {
  const double T = m->period();
  return Propagator(std::move(m), tableau_library(tableau), TimeGrid::uniform(T, steps), 1e-12);
}

inline ParamVector vdp_mu() {
  ParamVector mu(3);
  mu << -0.3, 0.3, 0.3;
  return mu;
}

inline ParamVector burgers_mu() {
  ParamVector mu(3);
  mu << 1.0, 0.2, 0.05;
  return mu;
}

}  // namespace tpa::testing

#endif  // TPA_TESTS_SUPPORT_HPP
