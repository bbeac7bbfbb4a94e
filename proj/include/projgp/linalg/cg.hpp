#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "projgp/errors.hpp"
#include "projgp/linalg/operator.hpp"

namespace projgp::linalg {

enum class Preconditioner { None, Diagonal };

struct CGConfig {
  double tolerance = 1e-4;   // relative residual ||Ax - b|| / ||b||
  int max_iterations = 1000;
  Preconditioner preconditioner = Preconditioner::None;
};

struct CGResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

inline CGResult conjugate_gradients(const SymmetricOperator& A, const Eigen::VectorXd& b,
                                    const CGConfig& cfg = {},
                                    const Eigen::VectorXd* warm_start = nullptr) {
  if (cfg.tolerance <= 0.0 || cfg.max_iterations < 1)
    throw ConfigError("conjugate_gradients: tolerance must be > 0 and max_iterations >= 1");
  if (b.size() != A.dimension)
    throw DimensionMismatch("conjugate_gradients: right-hand side does not match operator");

  const double bnorm = b.norm();
  CGResult res;
  res.x = Eigen::VectorXd::Zero(A.dimension);
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  const bool use_diag = cfg.preconditioner == Preconditioner::Diagonal;
  Eigen::VectorXd inv_diag;
  if (use_diag) {
    if (A.diagonal.size() != A.dimension)
      throw ConfigError("conjugate_gradients: diagonal preconditioner requires operator diagonal");
    inv_diag = A.diagonal.cwiseInverse();
  }

  Eigen::VectorXd r = b;
  if (warm_start && warm_start->size() == A.dimension) {
    res.x = *warm_start;
    r = b - A.apply(res.x);
    res.relative_residual = r.norm() / bnorm;
    if (res.relative_residual <= cfg.tolerance) {
      res.converged = true;
      return res;
    }
  }
  Eigen::VectorXd z = use_diag ? Eigen::VectorXd(inv_diag.cwiseProduct(r)) : r;
  Eigen::VectorXd p = z;
  double rz = r.dot(z);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    Eigen::VectorXd Ap = A.apply(p);
    const double pAp = p.dot(Ap);
    if (pAp <= 0.0 || !std::isfinite(pAp))
      throw NumericalBreakdown("conjugate_gradients: p'Ap <= 0, operator is not positive definite");
    const double alpha = rz / pAp;
    res.x += alpha * p;
    r -= alpha * Ap;
    res.iterations = it;
    res.relative_residual = r.norm() / bnorm;
    if (res.relative_residual <= cfg.tolerance) {
      res.converged = true;
      return res;
    }
    z = use_diag ? Eigen::VectorXd(inv_diag.cwiseProduct(r)) : r;
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  return res;  // converged stays false
}

}  // namespace projgp::linalg
