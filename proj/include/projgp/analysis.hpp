#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "projgp/errors.hpp"
#include "projgp/kernels.hpp"

namespace projgp {

// Closed-form J -> infinity limit of the projected sub-kernel average:
// RBF sub-kernels converge to the inverse multiquadratic, cosine sub-kernels
// to the RBF, under Gaussian directions.
inline double closed_form_expected(SubKernelFamily family, double lag) {
  switch (family) {
    case SubKernelFamily::RBF: return 1.0 / std::sqrt(1.0 + lag * lag);
    case SubKernelFamily::Cosine: return std::exp(-0.5 * lag * lag);
    default: break;
  }
  throw UnsupportedFamily("closed_form_expected: no closed form for this sub-kernel family");
}

// Var(phi(eta' tau)) for RBF phi and Gaussian eta, as a function of r = ||tau||.
inline double rbf_projection_variance(double r) {
  if (r < 0.0) throw ConfigError("rbf_projection_variance: r must be nonnegative");
  const double r2 = r * r;
  return 1.0 / std::sqrt(1.0 + 2.0 * r2) - 1.0 / (1.0 + r2);
}

// Simultaneous deviation bound for J averaged projections over n lag points:
// eps = 2/(3J) (log(1/delta) + 2 log n + 1) + sqrt(2 v_sup / J).
inline double bernstein_bound(long J, double delta, long n, double v_sup) {
  if (delta <= 0.0 || delta >= 1.0) throw InvalidDelta("bernstein_bound: delta must be in (0,1)");
  if (J < 1 || n < 1 || v_sup < 0.0) throw ConfigError("bernstein_bound: invalid arguments");
  const double j = static_cast<double>(J);
  return 2.0 / (3.0 * j) * (std::log(1.0 / delta) + 2.0 * std::log(static_cast<double>(n)) + 1.0) +
         std::sqrt(2.0 * v_sup / j);
}

namespace detail {
inline double phi_scalar(SubKernelFamily f, double t) {
  switch (f) {
    case SubKernelFamily::RBF: return std::exp(-0.5 * t * t);
    case SubKernelFamily::IMQ: return 1.0 / std::sqrt(1.0 + t * t);
    case SubKernelFamily::Cosine: return std::cos(t);
  }
  return 0.0;
}
}  // namespace detail

// Monte Carlo mean (1/J) sum_j phi(eta_j' tau) at tau = lag * e_1, with
// eta_j ~ N(0, I_d). One direction set shared across all lags.
inline Eigen::VectorXd empirical_expected_kernel(SubKernelFamily family, int d, long J,
                                                 const std::vector<double>& lags,
                                                 std::uint64_t seed) {
  if (J < 1 || d < 1) throw ConfigError("empirical_expected_kernel: J and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lags.size()));
  for (long j = 0; j < J; ++j) {
    double first = nd(rng);
    for (int c = 1; c < d; ++c) nd(rng);  // remaining components of the direction
    for (std::size_t l = 0; l < lags.size(); ++l)
      acc[static_cast<Eigen::Index>(l)] += detail::phi_scalar(family, first * lags[l]);
  }
  return acc / static_cast<double>(J);
}

struct ConvergenceReport {
  SubKernelFamily family = SubKernelFamily::RBF;
  std::vector<long> J_values;
  std::vector<double> lags;
  Eigen::MatrixXd empirical;  // one row per J value, one column per lag
  Eigen::VectorXd closed;     // closed form per lag
  Eigen::MatrixXd abs_error;
  double slope = 0.0;  // log-log fit of max abs error against J
  std::uint64_t seed = 0;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("ConvergenceReport: cannot open " + path);
    out << "J,lag,empirical,closed_form,abs_error\n";
    out.precision(17);
    for (std::size_t r = 0; r < J_values.size(); ++r)
      for (std::size_t c = 0; c < lags.size(); ++c)
        out << J_values[r] << "," << lags[c] << ","
            << empirical(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << ","
            << closed[static_cast<Eigen::Index>(c)] << ","
            << abs_error(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) << "\n";
  }
};

// Monte Carlo convergence study over nested prefixes of one direction stream.
inline ConvergenceReport convergence_report(SubKernelFamily family, int d,
                                            const std::vector<long>& J_values,
                                            const std::vector<double>& lags,
                                            std::uint64_t seed) {
  if (J_values.empty() || lags.empty())
    throw ConfigError("convergence_report: need J values and lags");
  ConvergenceReport rep;
  rep.family = family;
  rep.J_values = J_values;
  rep.lags = lags;
  rep.seed = seed;
  rep.closed.resize(static_cast<Eigen::Index>(lags.size()));
  for (std::size_t c = 0; c < lags.size(); ++c)
    rep.closed[static_cast<Eigen::Index>(c)] = closed_form_expected(family, lags[c]);

  rep.empirical.resize(static_cast<Eigen::Index>(J_values.size()),
                       static_cast<Eigen::Index>(lags.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lags.size()));
  long done = 0;
  long max_J = *std::max_element(J_values.begin(), J_values.end());
  std::vector<std::pair<long, std::size_t>> ordered;
  for (std::size_t i = 0; i < J_values.size(); ++i) ordered.push_back({J_values[i], i});
  std::sort(ordered.begin(), ordered.end());
  for (const auto& [J, row] : ordered) {
    if (J < 1) throw ConfigError("convergence_report: J values must be >= 1");
    for (; done < J; ++done) {
      double first = nd(rng);
      for (int c = 1; c < d; ++c) nd(rng);
      for (std::size_t l = 0; l < lags.size(); ++l)
        acc[static_cast<Eigen::Index>(l)] += detail::phi_scalar(family, first * lags[l]);
    }
    rep.empirical.row(static_cast<Eigen::Index>(row)) =
        (acc / static_cast<double>(J)).transpose();
  }
  (void)max_J;
  rep.abs_error = (rep.empirical.rowwise() - rep.closed.transpose()).cwiseAbs();

  // least-squares slope of log(max abs error) against log(J)
  const Eigen::Index k = static_cast<Eigen::Index>(J_values.size());
  if (k >= 2) {
    Eigen::VectorXd lx(k), ly(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      lx[i] = std::log(static_cast<double>(J_values[static_cast<std::size_t>(i)]));
      double maxerr = rep.abs_error.row(i).maxCoeff();
      ly[i] = std::log(std::max(maxerr, 1e-300));
    }
    const double mx = lx.mean(), my = ly.mean();
    rep.slope = (lx.array() - mx).matrix().dot((ly.array() - my).matrix()) /
                (lx.array() - mx).square().sum();
  }
  return rep;
}

}  // namespace projgp
