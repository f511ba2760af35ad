#pragma once

// Small dense linear-algebra kernels shared by the estimators and diagnostics.
// Everything here is templated on the Eigen expression type so callers can pass
// blocks, maps or plain matrices of any floating scalar.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace labelshift::linalg {

template <typename Derived>
using PlainVector = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted ascending.
///
/// Sweeps until the off-diagonal Frobenius norm drops below `tol` (absolute) or
/// `max_sweeps` is exhausted. Only the lower triangle's symmetry is assumed, not
/// checked; the input is symmetrized first.
template <typename Derived>
PlainVector<Derived> jacobi_eigenvalues(const Eigen::MatrixBase<Derived>& input,
                                        typename Derived::Scalar tol = 1e-12,
                                        int max_sweeps = 100) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (input.rows() != input.cols()) {
    throw std::invalid_argument("jacobi_eigenvalues: matrix must be square");
  }
  const Eigen::Index n = input.rows();
  Matrix a = (input + input.transpose()) / Scalar(2);

  auto off_norm = [&]() {
    Scalar s = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) s += 2 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  for (int sweep = 0; sweep < max_sweeps && off_norm() > tol; ++sweep) {
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const Scalar apq = a(p, q);
        if (apq == Scalar(0)) continue;
        // Rotation angle zeroing a(p,q): tan(2θ) = 2 a_pq / (a_qq - a_pp).
        const Scalar theta = (a(q, q) - a(p, p)) / (2 * apq);
        const Scalar t = (theta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1));
        const Scalar c = 1 / std::sqrt(t * t + 1);
        const Scalar s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar akp = a(k, p);
          const Scalar akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const Scalar apk = a(p, k);
          const Scalar aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }

  PlainVector<Derived> eig = a.diagonal();
  std::sort(eig.data(), eig.data() + eig.size());
  return eig;
}

template <typename Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  return jacobi_eigenvalues(m)(0);
}

template <typename Derived>
typename Derived::Scalar max_eigenvalue(const Eigen::MatrixBase<Derived>& m) {
  const auto eig = jacobi_eigenvalues(m);
  return eig(eig.size() - 1);
}

/// Euclidean projection of `v` onto {w : w >= 0, a·w = 1} for strictly positive `a`.
///
/// KKT gives w = max(v - λa, 0) with λ chosen so that a·w = 1. The map λ ↦ a·w(λ)
/// is continuous, piecewise linear and non-increasing with breakpoints v_i / a_i,
/// so λ is found exactly by scanning the sorted breakpoints.
template <typename DerivedV, typename DerivedA>
PlainVector<DerivedV> project_to_scaled_simplex(const Eigen::MatrixBase<DerivedV>& v,
                                                const Eigen::MatrixBase<DerivedA>& a) {
  using Scalar = typename DerivedV::Scalar;
  const Eigen::Index n = v.size();
  if (a.size() != n) throw std::invalid_argument("project_to_scaled_simplex: size mismatch");
  if ((a.array() <= Scalar(0)).any()) {
    throw std::invalid_argument("project_to_scaled_simplex: constraint vector must be positive");
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  // Descending breakpoints: coordinate i is active (positive) iff λ < v_i / a_i.
  std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    return v(i) / a(i) > v(j) / a(j);
  });

  // With the first r coordinates active: a·w = Σ a_i v_i - λ Σ a_i² = 1.
  Scalar sum_av = 0;
  Scalar sum_aa = 0;
  Scalar lambda = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const Eigen::Index i = order[r];
    sum_av += a(i) * v(i);
    sum_aa += a(i) * a(i);
    lambda = (sum_av - 1) / sum_aa;
    const bool last = r + 1 == order.size();
    if (last || lambda >= v(order[r + 1]) / a(order[r + 1])) break;
  }

  PlainVector<DerivedV> w = (v.array() - lambda * a.array()).max(Scalar(0)).matrix();
  return w;
}

} // namespace labelshift::linalg
