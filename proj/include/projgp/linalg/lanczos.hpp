#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <random>

#include "projgp/errors.hpp"
#include "projgp/linalg/operator.hpp"

namespace projgp::linalg {

// Rademacher +-1 probe matrix (n x num_probes) for Hutchinson-style estimators.
inline Eigen::MatrixXd probe_vectors(Eigen::Index n, int num_probes, std::uint64_t seed) {
  if (n < 1 || num_probes < 1)
    throw ConfigError("probe_vectors: n and num_probes must be >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd Z(n, num_probes);
  for (int j = 0; j < num_probes; ++j)
    for (Eigen::Index i = 0; i < n; ++i) Z(i, j) = (rng() & 1ULL) ? 1.0 : -1.0;
  return Z;
}

struct LanczosConfig {
  int num_probes = 30;
  int steps = 30;
  std::uint64_t seed = 0;
};

// Stochastic Lanczos quadrature estimate of log|A| for SPD A.
// Full reorthogonalization; cheap at the small step counts used here.
inline double lanczos_logdet(const SymmetricOperator& A, int num_probes, int lanczos_steps,
                             std::uint64_t seed) {
  if (num_probes < 1 || lanczos_steps < 1)
    throw ConfigError("lanczos_logdet: probes and steps must be >= 1");
  const Eigen::Index n = A.dimension;
  const int steps = static_cast<int>(std::min<Eigen::Index>(lanczos_steps, n));
  const Eigen::MatrixXd Z = probe_vectors(n, num_probes, seed);

  double estimate = 0.0;
  Eigen::MatrixXd Q(n, steps);
  Eigen::VectorXd alpha(steps), beta(steps);
  for (int p = 0; p < num_probes; ++p) {
    Eigen::VectorXd q = Z.col(p) / Z.col(p).norm();
    int k = 0;
    double beta_prev = 0.0;
    Eigen::VectorXd q_prev = Eigen::VectorXd::Zero(n);
    for (; k < steps; ++k) {
      Q.col(k) = q;
      Eigen::VectorXd w = A.apply(q);
      alpha[k] = q.dot(w);
      w -= alpha[k] * q + beta_prev * q_prev;
      // full reorthogonalization against the Krylov basis built so far
      w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
      const double b = w.norm();
      if (k + 1 == steps || b < 1e-12) {
        ++k;
        break;
      }
      beta[k] = b;
      q_prev = q;
      beta_prev = b;
      q = w / b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(alpha.head(k), beta.head(std::max(0, k - 1)));
    if (es.info() != Eigen::Success)
      throw NumericalBreakdown("lanczos_logdet: tridiagonal eigendecomposition failed");
    const Eigen::VectorXd& evals = es.eigenvalues();
    for (int i = 0; i < k; ++i) {
      if (evals[i] <= 0.0)
        throw NumericalBreakdown("lanczos_logdet: nonpositive Ritz value, operator not PD");
      const double tau = es.eigenvectors()(0, i);
      estimate += static_cast<double>(n) * tau * tau * std::log(evals[i]);
    }
  }
  return estimate / num_probes;
}

inline double lanczos_logdet(const SymmetricOperator& A, const LanczosConfig& cfg) {
  return lanczos_logdet(A, cfg.num_probes, cfg.steps, cfg.seed);
}

}  // namespace projgp::linalg
