#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "projgp/errors.hpp"

namespace projgp {

// Regular 1-D inducing grid.
struct Grid1D {
  double lower = 0.0;
  double upper = 1.0;
  int m = 4;

  double spacing() const { return (upper - lower) / (m - 1); }
  double node(int i) const { return lower + i * spacing(); }

  void validate() const {
    if (m < 4) throw ConfigError("Grid1D: cubic interpolation needs at least 4 nodes");
    if (!(upper > lower)) throw ConfigError("Grid1D: upper bound must exceed lower bound");
  }

  bool contains(double t) const {
    const double tol = 1e-9 * std::max(1.0, std::max(std::abs(lower), std::abs(upper)));
    return t >= lower - tol && t <= upper + tol;
  }
};

// Grid covering [min - pad, max + pad] with uniform spacing. pad is
// padding_fraction * range, floored at 1e-6 when a positive padding is
// requested; a degenerate range expands symmetrically by 1.
inline Grid1D build_grid(const Eigen::VectorXd& values, int m, double padding_fraction) {
  if (values.size() < 1) throw ConfigError("build_grid: need at least one value");
  if (m < 4) throw ConfigError("build_grid: m must be >= 4");
  if (padding_fraction < 0.0) throw ConfigError("build_grid: padding_fraction must be >= 0");
  double lo = values.minCoeff(), hi = values.maxCoeff();
  if (hi == lo) {
    lo -= 1.0;
    hi += 1.0;
  }
  double pad = padding_fraction * (hi - lo);
  if (padding_fraction > 0.0) pad = std::max(pad, 1e-6);
  Grid1D g{lo - pad, hi + pad, m};
  g.validate();
  return g;
}

// Training grids pad by 10% of the data range plus 3 grid cells per side, so
// every boundary cubic stencil stays interior.
inline Grid1D training_grid(const Eigen::VectorXd& values, int m) {
  if (m < 10) throw ConfigError("training_grid: m must be >= 10");
  Grid1D inner = build_grid(values, m - 6, 0.1);
  const double h = inner.spacing();
  Grid1D g{inner.lower - 3.0 * h, inner.upper + 3.0 * h, m};
  g.validate();
  return g;
}

}  // namespace projgp
