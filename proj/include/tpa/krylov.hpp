#ifndef TPA_KRYLOV_HPP
#define TPA_KRYLOV_HPP

#include "tpa/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <random>
#include <vector>

namespace tpa {

/// Matrix-free linear map of size dim.
struct LinearOperator {
  Index dim = 0;
  std::function<Vector(const Vector&)> apply;
};

struct KrylovReport {
  bool converged = false;
  Index iterations = 0;
  /// ||b - A x_k||_2 estimates, entry 0 is the initial residual.
  std::vector<double> residual_history;
  Index matvecs = 0;
};

struct GmresOptions {
  double rel_tol = 1e-6;
  /// Converged once ||r|| <= max(rel_tol ||b||, abs_tol).
  double abs_tol = 0.0;
  /// Total iteration cap; 0 means the operator dimension.
  Index max_iter = 0;
  /// Restart length; empty means full (unrestarted) GMRES.
  std::optional<Index> restart;
};

struct GmresResult {
  Vector x;
  KrylovReport report;
};

namespace detail {

// Two-pass modified Gram-Schmidt of w against the first ncols columns of V.
// Accumulates the projection coefficients into h.
inline void orthogonalize(const Matrix& V, Index ncols, Vector& w, Eigen::Ref<Vector> h) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Index i = 0; i < ncols; ++i) {
      const double c = V.col(i).dot(w);
      h(i) += c;
      w -= c * V.col(i);
    }
  }
}

}  // namespace detail

/**
 * GMRES with modified Gram-Schmidt (one reorthogonalization pass) and Givens
 * rotations. A happy breakdown is treated as exact convergence. When the
 * iteration cap is hit, the minimum-residual iterate found so far is returned.
 */
inline GmresResult gmres(const LinearOperator& op, const Vector& b, const Vector& x0, const GmresOptions& opt) {
  require(op.dim == b.size() && op.dim == x0.size(), "gmres: dimension mismatch");
  require(opt.rel_tol > 0.0 || opt.abs_tol > 0.0, "gmres: tolerance must be positive");

  GmresResult out{x0, {}};
  KrylovReport& rep = out.report;
  const Index n = op.dim;
  const Index max_iter = opt.max_iter > 0 ? opt.max_iter : std::max<Index>(n, 1);
  const Index cycle = std::max<Index>(1, std::min(opt.restart.value_or(max_iter), max_iter));
  const double target = std::max(opt.rel_tol * b.norm(), opt.abs_tol);

  Vector r = b;
  if (x0.squaredNorm() > 0.0) {
    r -= op.apply(x0);
    ++rep.matvecs;
  }
  double beta = r.norm();
  rep.residual_history.push_back(beta);
  if (beta <= target) {
    rep.converged = true;
    return out;
  }

  while (rep.iterations < max_iter) {
    const Index m = std::min(cycle, max_iter - rep.iterations);
    Matrix V = Matrix::Zero(n, m + 1);
    Matrix H = Matrix::Zero(m + 1, m);
    Vector cs = Vector::Zero(m), sn = Vector::Zero(m), g = Vector::Zero(m + 1);
    V.col(0) = r / beta;
    g(0) = beta;

    Index k = 0;
    bool done = false;
    for (; k < m; ++k) {
      Vector w = op.apply(V.col(k));
      ++rep.matvecs;
      const double wnorm0 = w.norm();
      Vector h = Vector::Zero(k + 2);
      detail::orthogonalize(V, k + 1, w, h.head(k + 1));
      h(k + 1) = w.norm();
      const bool breakdown = h(k + 1) <= 1e-14 * std::max(wnorm0, 1e-300);
      if (!breakdown) V.col(k + 1) = w / h(k + 1);

      for (Index i = 0; i < k; ++i) {
        const double t = cs(i) * h(i) + sn(i) * h(i + 1);
        h(i + 1) = -sn(i) * h(i) + cs(i) * h(i + 1);
        h(i) = t;
      }
      const double denom = std::hypot(h(k), h(k + 1));
      cs(k) = denom > 0.0 ? h(k) / denom : 1.0;
      sn(k) = denom > 0.0 ? h(k + 1) / denom : 0.0;
      h(k) = denom;
      h(k + 1) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      H.col(k).head(k + 2) = h;

      ++rep.iterations;
      const double res = std::abs(g(k + 1));
      rep.residual_history.push_back(breakdown ? 0.0 : res);
      if (breakdown || res <= target) {
        done = true;
        ++k;
        break;
      }
    }

    // Solve the k x k triangular system and update the iterate.
    Vector y = H.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    out.x += V.leftCols(k) * y;
    if (done) {
      rep.converged = true;
      return out;
    }
    if (rep.iterations >= max_iter) break;
    r = b - op.apply(out.x);
    ++rep.matvecs;
    beta = r.norm();
    if (beta <= target) {
      rep.converged = true;
      return out;
    }
  }
  return out;
}

struct RitzValue {
  std::complex<double> value;
  /// ||A x - theta x|| estimate for the unit Ritz vector.
  double residual = 0.0;
  bool converged = false;
};

struct ArnoldiOptions {
  Index k = 6;
  /// Subspace size; 0 means max(2k + 2, 20) capped at the operator dimension.
  Index m = 0;
  double tol = 1e-10;
  Index max_restarts = 200;
  std::uint64_t seed = 12345;
};

struct EigenReport {
  /// Sorted by descending modulus.
  std::vector<RitzValue> values;
  bool converged = false;
  Index restarts = 0;
  Index matvecs = 0;
};

namespace detail {

// Indices of the k largest-modulus eigenvalues, extended so a conjugate pair is
// never split.
inline std::vector<Index> wanted_indices(const ComplexVector& theta, Index k) {
  std::vector<Index> order(static_cast<std::size_t>(theta.size()));
  for (Index i = 0; i < theta.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ma = std::abs(theta(a)), mb = std::abs(theta(b));
    if (ma != mb) return ma > mb;
    return theta(a).imag() > theta(b).imag();
  });
  Index take = std::min<Index>(k, theta.size());
  if (take < theta.size() && take > 0) {
    const auto last = theta(order[static_cast<std::size_t>(take - 1)]);
    const auto nxt = theta(order[static_cast<std::size_t>(take)]);
    if (std::abs(last.imag()) > 0.0 && std::abs(nxt - std::conj(last)) <= 1e-12 * std::max(1.0, std::abs(last)))
      ++take;
  }
  order.resize(static_cast<std::size_t>(take));
  return order;
}

}  // namespace detail

/**
 * Leading-modulus eigenvalues of a matrix-free operator by thick-restarted
 * Arnoldi. After each sweep the wanted Ritz subspace (a real basis of the
 * wanted eigenvectors of the projected matrix) is kept and the Krylov
 * decomposition  A V = V G + f e^T  is extended from it.
 */
inline EigenReport arnoldi_eigs(const LinearOperator& op, const ArnoldiOptions& opt) {
  const Index n = op.dim;
  require(n >= 1, "arnoldi: empty operator");
  const Index k = opt.k;
  Index m = opt.m > 0 ? opt.m : std::max<Index>(2 * k + 2, 20);
  m = std::min(m, n);
  require(k >= 1 && k < m, "arnoldi: need 1 <= k < m <= dim");

  EigenReport rep;
  Matrix V = Matrix::Zero(n, m + 1);
  Matrix G = Matrix::Zero(m + 1, m);

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v0(n);
  for (Index i = 0; i < n; ++i) v0(i) = normal(rng);
  V.col(0) = v0.normalized();

  Index p = 0;  // number of basis vectors already carried in the decomposition
  for (;;) {
    Index mm = m;
    double beta = 0.0;
    for (Index j = p; j < m; ++j) {
      Vector w = op.apply(V.col(j));
      ++rep.matvecs;
      const double wnorm0 = w.norm();
      Vector h = Vector::Zero(j + 1);
      detail::orthogonalize(V, j + 1, w, h);
      G.col(j).head(j + 1) = h;
      beta = w.norm();
      if (beta <= 1e-13 * std::max(wnorm0, 1e-300)) {
        // invariant subspace
        mm = j + 1;
        beta = 0.0;
        break;
      }
      V.col(j + 1) = w / beta;
      if (j + 1 < m + 1) G(j + 1, j) = beta;
    }

    const Matrix Gm = G.topLeftCorner(mm, mm);
    Eigen::EigenSolver<Matrix> es(Gm, true);
    const ComplexVector theta = es.eigenvalues();
    const Eigen::MatrixXcd Y = es.eigenvectors();
    const auto wanted = detail::wanted_indices(theta, std::min(k, mm));

    rep.values.clear();
    bool all_conv = true;
    for (Index idx : wanted) {
      const Eigen::VectorXcd y = Y.col(idx).normalized();
      const double res = std::abs(beta) * std::abs(y(mm - 1));
      const bool conv = res <= opt.tol;
      all_conv = all_conv && conv;
      rep.values.push_back({theta(idx), res, conv});
    }
    if (all_conv || mm < m) {
      rep.converged = all_conv;
      break;
    }
    if (rep.restarts >= opt.max_restarts) break;
    ++rep.restarts;

    // Real basis of the wanted invariant subspace of Gm.
    std::vector<Vector> cols;
    for (Index idx : wanted) {
      const Eigen::VectorXcd y = Y.col(idx);
      if (theta(idx).imag() < 0.0) continue;  // conjugate partner already covered
      cols.push_back(y.real());
      if (theta(idx).imag() > 0.0) cols.push_back(y.imag());
    }
    Matrix Yr(mm, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) Yr.col(static_cast<Index>(c)) = cols[c];
    Eigen::HouseholderQR<Matrix> qr(Yr);
    const Index kk = Yr.cols();
    const Matrix Q = qr.householderQ() * Matrix::Identity(mm, kk);
    if (kk + 1 > m) break;

    const Matrix S = Q.transpose() * Gm * Q;
    const Vector brow = beta * Q.row(mm - 1).transpose();
    const Matrix Vk = V.leftCols(mm) * Q;
    const Vector vnext = V.col(mm);
    V.setZero();
    G.setZero();
    V.leftCols(kk) = Vk;
    V.col(kk) = vnext;
    G.topLeftCorner(kk, kk) = S;
    G.row(kk).head(kk) = brow.transpose();
    p = kk;
  }

  std::stable_sort(rep.values.begin(), rep.values.end(), [](const RitzValue& a, const RitzValue& b) {
    const double ma = std::abs(a.value), mb = std::abs(b.value);
    if (ma != mb) return ma > mb;
    return a.value.imag() > b.value.imag();
  });
  return rep;
}

}  // namespace tpa

#endif  // TPA_KRYLOV_HPP
