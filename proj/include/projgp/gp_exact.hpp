#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "projgp/errors.hpp"
#include "projgp/kernels.hpp"
#include "projgp/linalg/cholesky.hpp"

namespace projgp {

// Immutable exact-GP state: training inputs, Cholesky factor of K + sigma_n^2 I,
// alpha = (K + sigma_n^2 I)^{-1} y, and the kernel snapshot.
struct ExactFit {
  Eigen::MatrixXd X;
  linalg::CholeskyFactor factor;
  Eigen::VectorXd alpha;
  Kernel kernel;
};

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

namespace detail {
inline void check_finite(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (!X.allFinite() || !y.allFinite())
    throw NonFiniteInput("fit_exact: inputs contain NaN or infinity");
}
}  // namespace detail

inline ExactFit fit_exact(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Kernel kernel) {
  detail::check_finite(X, y);
  if (X.rows() != y.size()) throw DimensionMismatch("fit_exact: X rows and y length differ");
  if (X.rows() < 1) throw ConfigError("fit_exact: need at least one data point");
  Eigen::MatrixXd K = kernel.gram(X);
  K.diagonal().array() += kernel.spec().noise_variance;
  auto factor = linalg::cholesky_with_jitter_ladder(K);
  Eigen::VectorXd alpha = linalg::cholesky_solve(factor, y);
  return ExactFit{X, std::move(factor), std::move(alpha), std::move(kernel)};
}

inline Eigen::VectorXd predict_mean(const ExactFit& fit, const Eigen::MatrixXd& Xstar) {
  Eigen::MatrixXd Kxs = fit.kernel.gram(fit.X, Xstar);  // n x n*
  return Kxs.transpose() * fit.alpha;
}

inline Prediction predict(const ExactFit& fit, const Eigen::MatrixXd& Xstar) {
  Eigen::MatrixXd Kxs = fit.kernel.gram(fit.X, Xstar);
  Prediction out;
  out.mean = Kxs.transpose() * fit.alpha;
  Eigen::MatrixXd V = fit.factor.L.triangularView<Eigen::Lower>().solve(Kxs);
  out.covariance = fit.kernel.gram(Xstar) - V.transpose() * V;
  return out;
}

inline double log_marginal_likelihood(const ExactFit& fit, const Eigen::VectorXd& y) {
  const double n = static_cast<double>(y.size());
  return -0.5 * y.dot(fit.alpha) - fit.factor.L.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * M_PI);
}

// dL/dtheta_l = 1/2 alpha' (dK/dtheta_l) alpha - 1/2 tr((K + sigma_n^2 I)^{-1} dK/dtheta_l),
// evaluated for every packed hyperparameter.
inline Eigen::VectorXd lml_gradient(const ExactFit& fit, const Eigen::VectorXd& y) {
  const Eigen::Index n = fit.X.rows();
  (void)y;  // alpha already encodes y
  Eigen::MatrixXd Kinv = linalg::cholesky_solve(fit.factor, Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd B = fit.alpha * fit.alpha.transpose() - Kinv;
  GramCache cache = fit.kernel.assemble_cached(fit.X);
  return 0.5 * fit.kernel.gradient_contraction(fit.X, cache, B);
}

}  // namespace projgp
