#pragma once

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "projgp/errors.hpp"
#include "projgp/linalg/fft.hpp"

namespace projgp::linalg {

// Symmetric Toeplitz matrix represented by its first column.
struct ToeplitzColumn {
  Eigen::VectorXd first_column;

  Eigen::Index size() const { return first_column.size(); }

  Eigen::MatrixXd dense() const {
    const Eigen::Index m = size();
    Eigen::MatrixXd T(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < m; ++j) T(i, j) = first_column[std::abs(i - j)];
    return T;
  }
};

// T*v through circulant embedding of size next_pow2(2m-1).
// Keeps the FFT of the embedded column so repeated products with the same
// Toeplitz matrix (the CG hot path) cost two transforms each.
class ToeplitzMatvec {
 public:
  explicit ToeplitzMatvec(const ToeplitzColumn& c)
      : m_(c.size()), fft_(Fft::next_pow2(static_cast<std::size_t>(2 * c.size() - 1))) {
    if (m_ < 1) throw DimensionMismatch("toeplitz_matvec: empty first column");
    const std::size_t L = fft_.size();
    chat_.assign(L, {0.0, 0.0});
    for (Eigen::Index k = 0; k < m_; ++k) chat_[static_cast<std::size_t>(k)] = c.first_column[k];
    for (Eigen::Index k = 1; k < m_; ++k) chat_[L - static_cast<std::size_t>(k)] = c.first_column[k];
    fft_.transform(chat_, false);
  }

  Eigen::Index size() const { return m_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (v.size() != m_)
      throw DimensionMismatch("toeplitz_matvec: vector length does not match column length");
    const std::size_t L = fft_.size();
    std::vector<std::complex<double>> work(L, {0.0, 0.0});
    for (Eigen::Index i = 0; i < m_; ++i) work[static_cast<std::size_t>(i)] = v[i];
    fft_.transform(work, false);
    for (std::size_t i = 0; i < L; ++i) work[i] *= chat_[i];
    fft_.transform(work, true);
    Eigen::VectorXd out(m_);
    for (Eigen::Index i = 0; i < m_; ++i) out[i] = work[static_cast<std::size_t>(i)].real();
    return out;
  }

 private:
  Eigen::Index m_;
  Fft fft_;
  std::vector<std::complex<double>> chat_;
};

inline Eigen::VectorXd toeplitz_matvec(const ToeplitzColumn& c, const Eigen::VectorXd& v) {
  return ToeplitzMatvec(c).apply(v);
}

}  // namespace projgp::linalg
