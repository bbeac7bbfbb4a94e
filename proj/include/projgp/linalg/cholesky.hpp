#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "projgp/errors.hpp"

namespace projgp::linalg {

struct CholeskyFactor {
  Eigen::MatrixXd L;     // lower triangular, L L^T = A + jitter I
  double jitter = 0.0;   // jitter actually applied

  Eigen::Index size() const { return L.rows(); }

  // 2 * sum(log diag(L)) = log|A + jitter I|
  double log_determinant() const {
    return 2.0 * L.diagonal().array().log().sum();
  }
};

namespace detail {
// Unblocked factorization used only to locate the offending pivot after the
// fast path reports a numerical issue.
inline int find_failing_pivot(const Eigen::MatrixXd& A) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = A(j, j) - L.row(j).head(j).squaredNorm();
    if (d <= 0.0 || !std::isfinite(d)) return static_cast<int>(j);
    L(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i)
      L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  return -1;
}
}  // namespace detail

inline CholeskyFactor cholesky_factor(const Eigen::MatrixXd& A, double jitter = 0.0) {
  if (A.rows() != A.cols()) throw DimensionMismatch("cholesky_factor: matrix is not square");
  Eigen::MatrixXd Aj = A;
  if (jitter != 0.0) Aj.diagonal().array() += jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(Aj);
  if (llt.info() != Eigen::Success) {
    int pivot = detail::find_failing_pivot(Aj);
    throw NotPositiveDefinite(
        "cholesky_factor: matrix not positive definite (pivot " + std::to_string(pivot) + ")",
        pivot);
  }
  return CholeskyFactor{llt.matrixL(), jitter};
}

inline Eigen::MatrixXd cholesky_solve(const CholeskyFactor& f, const Eigen::MatrixXd& B) {
  if (B.rows() != f.size())
    throw DimensionMismatch("cholesky_solve: right-hand side rows do not match factor size");
  Eigen::MatrixXd X = f.L.triangularView<Eigen::Lower>().solve(B);
  f.L.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
  return X;
}

// Jitter ladder: 0, then 1e-8 * mean(diag) scaled by 10 up to 1e-4 * mean(diag).
inline CholeskyFactor cholesky_with_jitter_ladder(const Eigen::MatrixXd& A) {
  const double base = A.diagonal().mean();
  int last_pivot = -1;
  for (double factor : {0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4}) {
    try {
      return cholesky_factor(A, factor * base);
    } catch (const NotPositiveDefinite& e) {
      last_pivot = e.pivot_index;
    }
  }
  throw NotPositiveDefinite(
      "cholesky_with_jitter_ladder: not positive definite after maximum jitter (pivot " +
          std::to_string(last_pivot) + ")",
      last_pivot);
}

}  // namespace projgp::linalg
