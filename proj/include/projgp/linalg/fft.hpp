#pragma once

#include <cassert>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace projgp::linalg {

// Iterative radix-2 FFT with cached twiddles and bit-reversal table.
// Sizes must be powers of two; callers pad as needed.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n) {
    assert(n >= 1 && (n & (n - 1)) == 0 && "FFT size must be a power of two");
    bitrev_.resize(n);
    std::size_t log2n = 0;
    while ((std::size_t{1} << log2n) < n) ++log2n;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < log2n; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(angle), std::sin(angle)};
    }
  }

  std::size_t size() const { return n_; }

  // In-place transform; inverse includes the 1/n normalization.
  void transform(std::vector<std::complex<double>>& a, bool inverse) const {
    assert(a.size() == n_);
    for (std::size_t i = 0; i < n_; ++i)
      if (bitrev_[i] > i) std::swap(a[i], a[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          std::complex<double> w = twiddles_[k * stride];
          if (inverse) w = std::conj(w);
          std::complex<double> u = a[start + k];
          std::complex<double> t = w * a[start + k + len / 2];
          a[start + k] = u + t;
          a[start + k + len / 2] = u - t;
        }
      }
    }
    if (inverse) {
      const double scale = 1.0 / static_cast<double>(n_);
      for (auto& x : a) x *= scale;
    }
  }

  static std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
  }

 private:
  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddles_;
};

}  // namespace projgp::linalg
