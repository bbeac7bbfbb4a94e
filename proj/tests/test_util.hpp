#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace test_util {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = nd(gen);
  return M;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::uint64_t seed) {
  return random_matrix(n, 1, seed).col(0);
}

// Well-conditioned random SPD matrix.
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::uint64_t seed, double ridge = -1.0) {
  Eigen::MatrixXd X = random_matrix(n, n, seed);
  if (ridge < 0.0) ridge = 0.5 * static_cast<double>(n);
  return X * X.transpose() + ridge * Eigen::MatrixXd::Identity(n, n);
}

}  // namespace test_util
