#ifndef TPA_FLOQUET_HPP
#define TPA_FLOQUET_HPP

#include "tpa/shooting.hpp"

#include <optional>

namespace tpa {

struct FloquetOptions {
  Index k = 20;
  /// Arnoldi subspace size; 0 picks max(2k + 2, 20).
  Index m = 0;
  double tol = 1e-8;
  /// Stable means every multiplier has modulus <= 1 - margin.
  double margin = 1e-8;
  Index max_restarts = 100;
  std::uint64_t seed = 12345;
};

struct StabilityReport {
  /// Leading multipliers, sorted by descending modulus.
  std::vector<RitzValue> eigenvalues;
  double spectral_radius_estimate = 0.0;
  /// Empty when some requested multiplier did not converge.
  std::optional<bool> stable;
  Index matvecs = 0;
  bool dense = false;
};

/**
 * Leading eigenvalues (Floquet multipliers) of the monodromy operator
 * v -> (du^(Nt)/du0) v along a periodic trajectory. When k covers (almost)
 * the whole state space the monodromy is formed column by column and
 * diagonalized densely instead.
 */
inline StabilityReport analyze_stability(const Propagator& prop, const Trajectory& tr, const ParamVector& mu,
                                         const FloquetOptions& opt) {
  require(opt.k >= 1, "floquet: need k >= 1");
  require(opt.margin >= 0.0, "floquet: margin must be non-negative");
  const Index n = prop.dim();
  StabilityReport rep;
  if (opt.k + 1 >= n) {
    Matrix Phi(n, n);
    for (Index j = 0; j < n; ++j) Phi.col(j) = prop.forward_sensitivity(tr, mu, StateVector::Unit(n, j));
    rep.matvecs = n;
    rep.dense = true;
    const ComplexVector ev = Eigen::EigenSolver<Matrix>(Phi, false).eigenvalues();
    for (Index i = 0; i < ev.size(); ++i) rep.eigenvalues.push_back({ev(i), 0.0, true});
    std::stable_sort(rep.eigenvalues.begin(), rep.eigenvalues.end(), [](const RitzValue& a, const RitzValue& b) {
      const double ma = std::abs(a.value), mb = std::abs(b.value);
      if (ma != mb) return ma > mb;
      return a.value.imag() > b.value.imag();
    });
    if (static_cast<Index>(rep.eigenvalues.size()) > opt.k) {
      // keep conjugate pairs together
      Index keep = opt.k;
      const auto& last = rep.eigenvalues[static_cast<std::size_t>(keep - 1)].value;
      if (last.imag() > 0.0) ++keep;
      rep.eigenvalues.resize(static_cast<std::size_t>(keep));
    }
  } else {
    LinearOperator op{n, [&](const Vector& v) -> Vector { return prop.forward_sensitivity(tr, mu, v); }};
    ArnoldiOptions ao;
    ao.k = opt.k;
    ao.m = opt.m;
    ao.tol = opt.tol;
    ao.max_restarts = opt.max_restarts;
    ao.seed = opt.seed;
    auto er = arnoldi_eigs(op, ao);
    rep.eigenvalues = std::move(er.values);
    rep.matvecs = er.matvecs;
  }
  bool all_conv = true;
  for (const auto& e : rep.eigenvalues) {
    rep.spectral_radius_estimate = std::max(rep.spectral_radius_estimate, std::abs(e.value));
    all_conv = all_conv && e.converged;
  }
  if (all_conv) rep.stable = rep.spectral_radius_estimate <= 1.0 - opt.margin;
  return rep;
}

}  // namespace tpa

#endif  // TPA_FLOQUET_HPP
