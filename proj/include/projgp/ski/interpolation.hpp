#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "projgp/errors.hpp"
#include "projgp/ski/grid.hpp"

namespace projgp {

struct InterpStencil {
  std::array<int, 4> index;
  std::array<double, 4> weight;
};

namespace detail {
inline int stencil_base(const Grid1D& g, double t) {
  int cell = static_cast<int>(std::floor((t - g.lower) / g.spacing()));
  cell = std::max(0, std::min(cell, g.m - 2));
  return std::max(0, std::min(cell - 1, g.m - 4));
}
}  // namespace detail

// Local 4-point cubic interpolation weights on a uniform grid. The weights are
// the Lagrange cubic basis on the surrounding stencil, so they sum to one and
// reproduce cubic polynomials exactly; at interior cell midpoints they equal
// the classic (-1/16, 9/16, 9/16, -1/16) pattern.
inline InterpStencil cubic_interp_weights(const Grid1D& g, double t) {
  g.validate();
  if (!g.contains(t))
    throw OutOfBounds("cubic_interp_weights: point " + std::to_string(t) +
                      " outside grid [" + std::to_string(g.lower) + ", " +
                      std::to_string(g.upper) + "]");
  const int b = detail::stencil_base(g, t);
  InterpStencil s;
  double x[4];
  for (int i = 0; i < 4; ++i) {
    s.index[static_cast<std::size_t>(i)] = b + i;
    x[i] = g.node(b + i);
  }
  for (int i = 0; i < 4; ++i) {
    double w = 1.0;
    for (int l = 0; l < 4; ++l)
      if (l != i) w *= (t - x[l]) / (x[i] - x[l]);
    s.weight[static_cast<std::size_t>(i)] = w;
  }
  return s;
}

// d/dt of the four Lagrange cubic weights at t.
inline InterpStencil cubic_interp_weight_derivs(const Grid1D& g, double t) {
  g.validate();
  if (!g.contains(t))
    throw OutOfBounds("cubic_interp_weight_derivs: point outside grid");
  const int b = detail::stencil_base(g, t);
  InterpStencil s;
  double x[4];
  for (int i = 0; i < 4; ++i) {
    s.index[static_cast<std::size_t>(i)] = b + i;
    x[i] = g.node(b + i);
  }
  for (int i = 0; i < 4; ++i) {
    double denom = 1.0;
    for (int l = 0; l < 4; ++l)
      if (l != i) denom *= (x[i] - x[l]);
    double acc = 0.0;
    for (int mskip = 0; mskip < 4; ++mskip) {
      if (mskip == i) continue;
      double prod = 1.0;
      for (int l = 0; l < 4; ++l)
        if (l != i && l != mskip) prod *= (t - x[l]);
      acc += prod;
    }
    s.weight[static_cast<std::size_t>(i)] = acc / denom;
  }
  return s;
}

// Sparse interpolation matrix W: one 4-point stencil per data point.
struct SparseInterpolation {
  int grid_size = 0;
  std::vector<InterpStencil> rows;

  Eigen::Index n() const { return static_cast<Eigen::Index>(rows.size()); }

  static SparseInterpolation build(const Grid1D& g, const Eigen::VectorXd& points) {
    SparseInterpolation W;
    W.grid_size = g.m;
    W.rows.reserve(static_cast<std::size_t>(points.size()));
    for (Eigen::Index i = 0; i < points.size(); ++i)
      W.rows.push_back(cubic_interp_weights(g, points[i]));
    return W;
  }

  static SparseInterpolation build_derivs(const Grid1D& g, const Eigen::VectorXd& points) {
    SparseInterpolation W;
    W.grid_size = g.m;
    W.rows.reserve(static_cast<std::size_t>(points.size()));
    for (Eigen::Index i = 0; i < points.size(); ++i)
      W.rows.push_back(cubic_interp_weight_derivs(g, points[i]));
    return W;
  }

  // W u (n from m)
  Eigen::VectorXd apply(const Eigen::VectorXd& u) const {
    if (u.size() != grid_size) throw DimensionMismatch("SparseInterpolation: grid size mismatch");
    Eigen::VectorXd out(n());
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      out[i] = r.weight[0] * u[r.index[0]] + r.weight[1] * u[r.index[1]] +
               r.weight[2] * u[r.index[2]] + r.weight[3] * u[r.index[3]];
    }
    return out;
  }

  // W^T v (m from n)
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const {
    if (v.size() != n()) throw DimensionMismatch("SparseInterpolation: data size mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(grid_size);
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      out[r.index[0]] += r.weight[0] * v[i];
      out[r.index[1]] += r.weight[1] * v[i];
      out[r.index[2]] += r.weight[2] * v[i];
      out[r.index[3]] += r.weight[3] * v[i];
    }
    return out;
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n(), grid_size);
    for (Eigen::Index i = 0; i < n(); ++i) {
      const auto& r = rows[static_cast<std::size_t>(i)];
      for (int k = 0; k < 4; ++k) W(i, r.index[static_cast<std::size_t>(k)]) += r.weight[static_cast<std::size_t>(k)];
    }
    return W;
  }
};

}  // namespace projgp
