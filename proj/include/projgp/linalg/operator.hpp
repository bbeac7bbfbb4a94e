#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>

namespace projgp::linalg {

// Matrix-free symmetric linear map v -> A v. `diagonal` is optional and only
// needed by the diagonal CG preconditioner.
struct SymmetricOperator {
  Eigen::Index dimension = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
  Eigen::VectorXd diagonal;  // empty when unknown

  static SymmetricOperator from_dense(Eigen::MatrixXd A) {
    SymmetricOperator op;
    op.dimension = A.rows();
    op.diagonal = A.diagonal();
    op.apply = [M = std::move(A)](const Eigen::VectorXd& v) -> Eigen::VectorXd { return M * v; };
    return op;
  }
};

}  // namespace projgp::linalg
