#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "projgp/errors.hpp"
#include "projgp/kernels.hpp"
#include "projgp/linalg/cg.hpp"
#include "projgp/linalg/lanczos.hpp"
#include "projgp/linalg/toeplitz.hpp"
#include "projgp/ski/grid.hpp"
#include "projgp/ski/interpolation.hpp"
#include "projgp/train.hpp"

namespace projgp {

namespace ski_detail {

inline double profile_1d(SubKernelFamily f, double u) {
  switch (f) {
    case SubKernelFamily::RBF: return std::exp(-0.5 * u * u);
    case SubKernelFamily::IMQ: return 1.0 / std::sqrt(1.0 + u * u);
    case SubKernelFamily::Cosine: return std::cos(u);
  }
  return 0.0;
}

// d profile(u / sigma) / d log sigma evaluated at lag u/sigma already scaled.
inline double profile_1d_dlogls(SubKernelFamily f, double u) {
  switch (f) {
    case SubKernelFamily::RBF: return u * u * std::exp(-0.5 * u * u);
    case SubKernelFamily::IMQ: return u * u * std::pow(1.0 + u * u, -1.5);
    case SubKernelFamily::Cosine: return u * std::sin(u);
  }
  return 0.0;
}

inline void check_ski_kernel(const Kernel& k) {
  if (k.structure() != KernelStructure::Projected &&
      k.structure() != KernelStructure::ProjectedPrescale)
    throw ConfigError("SKI inference requires a projected additive kernel");
  if (!k.projections().all_degree_one())
    throw UnsupportedDegree("SKI inference supports only degree-1 sub-kernels");
}

// Per-projection training coordinates. For the prescale structure the ARD
// scaling is folded into the coordinates; otherwise the raw projection is used
// and the per-sub-kernel lengthscale lives in the grid kernel column.
inline std::vector<Eigen::VectorXd> projected_coords(const Eigen::MatrixXd& X, const Kernel& k) {
  const auto& P = k.projections();
  std::vector<Eigen::VectorXd> z;
  z.reserve(static_cast<std::size_t>(P.count()));
  if (k.structure() == KernelStructure::ProjectedPrescale) {
    Eigen::MatrixXd Xs = X * k.spec().lengthscales.cwiseInverse().asDiagonal();
    for (int j = 0; j < P.count(); ++j)
      z.push_back(Xs * P.matrices[static_cast<std::size_t>(j)].row(0).transpose());
  } else {
    for (int j = 0; j < P.count(); ++j)
      z.push_back(X * P.matrices[static_cast<std::size_t>(j)].row(0).transpose());
  }
  return z;
}

}  // namespace ski_detail

// One projection's SKI machinery: grid, interpolation, Toeplitz grid kernel.
struct SkiProjectionParts {
  Grid1D grid;
  SparseInterpolation W;
  linalg::ToeplitzColumn column;  // normalized profile, lengthscale applied
  std::shared_ptr<const linalg::ToeplitzMatvec> T;
  Eigen::VectorXd z;  // training coordinates for this projection
};

// First column of K_UU for projection j (profile normalized to phi(0) = 1).
inline linalg::ToeplitzColumn ski_grid_column(const Grid1D& g, SubKernelFamily family,
                                              double lengthscale) {
  Eigen::VectorXd c(g.m);
  const double h = g.spacing();
  for (int r = 0; r < g.m; ++r)
    c[r] = ski_detail::profile_1d(family, r * h / lengthscale);
  return linalg::ToeplitzColumn{c};
}

inline SkiProjectionParts make_ski_parts(const Eigen::VectorXd& z, int m,
                                         SubKernelFamily family, double lengthscale,
                                         const Grid1D* fixed_grid = nullptr) {
  SkiProjectionParts parts;
  parts.z = z;
  parts.grid = fixed_grid ? *fixed_grid : training_grid(z, m);
  parts.W = SparseInterpolation::build(parts.grid, z);
  parts.column = ski_grid_column(parts.grid, family, lengthscale);
  parts.T = std::make_shared<linalg::ToeplitzMatvec>(parts.column);
  return parts;
}

// v -> scale * W K_UU W^T v for a single projection.
inline linalg::SymmetricOperator ski_operator(const SkiProjectionParts& parts, double scale) {
  linalg::SymmetricOperator op;
  op.dimension = parts.W.n();
  op.apply = [&parts, scale](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return scale * parts.W.apply(parts.T->apply(parts.W.apply_transpose(v)));
  };
  return op;
}

// v -> sum_j scale_j W_j K_j W_j^T v + noise * v, fixed summation order.
inline linalg::SymmetricOperator additive_ski_operator(
    const std::vector<SkiProjectionParts>& parts, const Eigen::VectorXd& scales,
    double noise_variance) {
  if (parts.empty()) throw EmptyProjectionSet("additive_ski_operator: no projections");
  if (static_cast<Eigen::Index>(parts.size()) != scales.size())
    throw DimensionMismatch("additive_ski_operator: one scale per projection required");
  linalg::SymmetricOperator op;
  op.dimension = parts[0].W.n();
  op.apply = [&parts, scales, noise_variance](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    Eigen::VectorXd out = noise_variance * v;
    for (std::size_t j = 0; j < parts.size(); ++j)
      out.noalias() +=
          scales[static_cast<Eigen::Index>(j)] *
          parts[j].W.apply(parts[j].T->apply(parts[j].W.apply_transpose(v)));
    return out;
  };
  return op;
}

// Dense reconstruction for small-scale verification.
inline Eigen::MatrixXd dense_ski_matrix(const std::vector<SkiProjectionParts>& parts,
                                        const Eigen::VectorXd& scales, double noise_variance) {
  const Eigen::Index n = parts[0].W.n();
  Eigen::MatrixXd A = noise_variance * Eigen::MatrixXd::Identity(n, n);
  for (std::size_t j = 0; j < parts.size(); ++j) {
    Eigen::MatrixXd W = parts[j].W.dense();
    A.noalias() += scales[static_cast<Eigen::Index>(j)] *
                   (W * parts[j].column.dense() * W.transpose());
  }
  return A;
}

struct SkiFit {
  explicit SkiFit(Kernel k) : kernel(std::move(k)) {}

  Kernel kernel;  // hyperparameter snapshot (projected structure)
  std::vector<SkiProjectionParts> parts;
  Eigen::VectorXd alpha_bar;                 // (K_ski + noise I)^{-1} y
  std::vector<Eigen::VectorXd> grid_mean;    // per projection: scale * K_UU W^T alpha
  linalg::CGConfig cg;
  bool cg_converged = false;
  double cg_residual = 0.0;
  int cg_iterations = 0;

  Eigen::VectorXd scales() const {
    return kernel.spec().output_scale * kernel.spec().mixing_weights;
  }
};

// Per-sub-kernel lengthscale for the grid column (unit under prescale).
inline double ski_sub_lengthscale(const Kernel& k, int j) {
  return k.structure() == KernelStructure::ProjectedPrescale ? 1.0 : k.spec().lengthscales[j];
}

inline SkiFit fit_ski(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Kernel kernel, int m,
                      const linalg::CGConfig& cg = {1e-6, 1000, linalg::Preconditioner::None},
                      const std::vector<Grid1D>* fixed_grids = nullptr) {
  ski_detail::check_ski_kernel(kernel);
  detail::check_finite(X, y);
  auto coords = ski_detail::projected_coords(X, kernel);
  SkiFit fit(std::move(kernel));
  fit.cg = cg;
  for (std::size_t j = 0; j < coords.size(); ++j)
    fit.parts.push_back(make_ski_parts(coords[j], m, fit.kernel.spec().family,
                                       ski_sub_lengthscale(fit.kernel, static_cast<int>(j)),
                                       fixed_grids ? &(*fixed_grids)[j] : nullptr));
  Eigen::VectorXd scales = fit.scales();
  auto A = additive_ski_operator(fit.parts, scales, fit.kernel.spec().noise_variance);
  auto sol = linalg::conjugate_gradients(A, y, cg);
  fit.alpha_bar = sol.x;
  fit.cg_converged = sol.converged;
  fit.cg_residual = sol.relative_residual;
  fit.cg_iterations = sol.iterations;
  for (std::size_t j = 0; j < fit.parts.size(); ++j)
    fit.grid_mean.push_back(scales[static_cast<Eigen::Index>(j)] *
                            fit.parts[j].T->apply(fit.parts[j].W.apply_transpose(fit.alpha_bar)));
  return fit;
}

// Covers both the training and the supplied extra points when building grids,
// the rebuild path for out-of-bounds prediction inputs.
inline SkiFit fit_ski_covering(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Kernel kernel,
                               int m, const Eigen::MatrixXd& Xextra,
                               const linalg::CGConfig& cg = {1e-6, 1000,
                                                             linalg::Preconditioner::None}) {
  ski_detail::check_ski_kernel(kernel);
  auto ztr = ski_detail::projected_coords(X, kernel);
  auto zex = ski_detail::projected_coords(Xextra, kernel);
  std::vector<Grid1D> grids;
  for (std::size_t j = 0; j < ztr.size(); ++j) {
    Eigen::VectorXd all(ztr[j].size() + zex[j].size());
    all << ztr[j], zex[j];
    grids.push_back(training_grid(all, m));
  }
  return fit_ski(X, y, std::move(kernel), m, cg, &grids);
}

// Predictive mean: per-point cost independent of n thanks to the cached
// grid_mean vectors.
inline Eigen::VectorXd predict_ski(const SkiFit& fit, const Eigen::MatrixXd& Xstar) {
  auto coords = ski_detail::projected_coords(Xstar, fit.kernel);
  const Eigen::Index ns = Xstar.rows();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(ns);
  for (std::size_t j = 0; j < fit.parts.size(); ++j) {
    const auto& g = fit.parts[j].grid;
    const auto& gm = fit.grid_mean[j];
    for (Eigen::Index i = 0; i < ns; ++i) {
      InterpStencil st = cubic_interp_weights(g, coords[j][i]);  // OutOfBounds propagates
      mean[i] += st.weight[0] * gm[st.index[0]] + st.weight[1] * gm[st.index[1]] +
                 st.weight[2] * gm[st.index[2]] + st.weight[3] * gm[st.index[3]];
    }
  }
  return mean;
}

// Approximate diagonal predictive variance: one CG solve per test point
// against the SKI operator. Documented as approximate; meant for small batches.
inline Eigen::VectorXd predict_ski_variance(const SkiFit& fit, const Eigen::MatrixXd& Xstar) {
  auto coords = ski_detail::projected_coords(Xstar, fit.kernel);
  const Eigen::Index ns = Xstar.rows();
  const Eigen::Index n = fit.alpha_bar.size();
  Eigen::VectorXd scales = fit.scales();
  auto A = additive_ski_operator(fit.parts, scales, fit.kernel.spec().noise_variance);
  Eigen::VectorXd var(ns);
  for (Eigen::Index i = 0; i < ns; ++i) {
    // cross covariance k(X, x*) through the interpolation structure
    Eigen::VectorXd kx = Eigen::VectorXd::Zero(n);
    for (std::size_t j = 0; j < fit.parts.size(); ++j) {
      InterpStencil st = cubic_interp_weights(fit.parts[j].grid, coords[j][i]);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(fit.parts[j].grid.m);
      for (int k = 0; k < 4; ++k)
        e[st.index[static_cast<std::size_t>(k)]] += st.weight[static_cast<std::size_t>(k)];
      kx.noalias() += scales[static_cast<Eigen::Index>(j)] *
                      fit.parts[j].W.apply(fit.parts[j].T->apply(e));
    }
    auto sol = linalg::conjugate_gradients(A, kx, fit.cg);
    var[i] = std::max(0.0, fit.kernel.prior_variance() - kx.dot(sol.x));
  }
  return var;
}

// ---- Training objective ---------------------------------------------------------

struct SkiTrainConfig {
  int m = 512;
  linalg::CGConfig cg_train{1e-4, 1000, linalg::Preconditioner::None};
  int probes = 10;         // Hutchinson probes per iteration during training
  int lanczos_steps = 30;  // SLQ steps (full reorthogonalization)
  std::uint64_t seed = 0;
  // Reuse one probe set across iterations. This keeps the stopping statistic
  // deterministic and lets the probe solves warm-start from the previous
  // iteration; set false to redraw probes every iteration.
  bool fixed_probes = true;
};

// Stochastic SKI marginal-likelihood objective: CG for the quadratic term,
// stochastic Lanczos quadrature for the log determinant, Hutchinson trace
// estimation for its gradient.
class SkiLmlObjective final : public Objective {
 public:
  SkiLmlObjective(Eigen::MatrixXd X, Eigen::VectorXd y, Kernel prototype, SkiTrainConfig cfg)
      : X_(std::move(X)), y_(std::move(y)), kernel_(std::move(prototype)), cfg_(cfg) {
    ski_detail::check_ski_kernel(kernel_);
    detail::check_finite(X_, y_);
    if (kernel_.structure() == KernelStructure::Projected) {
      // projections of the raw inputs never change; freeze grids and W
      raw_coords_ = ski_detail::projected_coords(X_, kernel_);
      for (const auto& z : raw_coords_) {
        fixed_grids_.push_back(training_grid(z, cfg_.m));
        fixed_W_.push_back(SparseInterpolation::build(fixed_grids_.back(), z));
      }
    }
  }

  int dim() const override { return kernel_.num_params(); }
  Eigen::VectorXd initial_theta() const override { return kernel_.pack(); }
  int noise_index() const override { return kernel_.noise_param_index(); }
  Eigen::Index data_size() const override { return X_.rows(); }
  const Kernel& kernel() const { return kernel_; }

  double eval(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) override {
    kernel_.unpack(theta);
    const Eigen::Index n = X_.rows();
    const auto& spec = kernel_.spec();
    const bool prescale = kernel_.structure() == KernelStructure::ProjectedPrescale;
    const int J = kernel_.projections().count();

    // assemble per-projection machinery for the current theta
    std::vector<SkiProjectionParts> parts(static_cast<std::size_t>(J));
    std::vector<SparseInterpolation> Wd;  // derivative stencils (prescale only)
    Eigen::MatrixXd Xs;
    if (prescale) {
      Xs = X_ * spec.lengthscales.cwiseInverse().asDiagonal();
      Wd.resize(static_cast<std::size_t>(J));
      for (int j = 0; j < J; ++j) {
        Eigen::VectorXd z =
            Xs * kernel_.projections().matrices[static_cast<std::size_t>(j)].row(0).transpose();
        parts[static_cast<std::size_t>(j)] = make_ski_parts(z, cfg_.m, spec.family, 1.0);
        Wd[static_cast<std::size_t>(j)] =
            SparseInterpolation::build_derivs(parts[static_cast<std::size_t>(j)].grid, z);
      }
    } else {
      for (int j = 0; j < J; ++j) {
        auto& p = parts[static_cast<std::size_t>(j)];
        p.z = raw_coords_[static_cast<std::size_t>(j)];
        p.grid = fixed_grids_[static_cast<std::size_t>(j)];
        p.W = fixed_W_[static_cast<std::size_t>(j)];
        p.column = ski_grid_column(p.grid, spec.family, spec.lengthscales[j]);
        p.T = std::make_shared<linalg::ToeplitzMatvec>(p.column);
      }
    }
    Eigen::VectorXd scales = spec.output_scale * spec.mixing_weights;
    auto A = additive_ski_operator(parts, scales, spec.noise_variance);

    // derivative Toeplitz columns for per-sub lengthscales
    std::vector<std::shared_ptr<linalg::ToeplitzMatvec>> Td;
    if (!prescale) {
      for (int j = 0; j < J; ++j) {
        const auto& g = parts[static_cast<std::size_t>(j)].grid;
        Eigen::VectorXd c(g.m);
        for (int r = 0; r < g.m; ++r)
          c[r] = ski_detail::profile_1d_dlogls(spec.family, r * g.spacing() / spec.lengthscales[j]);
        Td.push_back(std::make_shared<linalg::ToeplitzMatvec>(linalg::ToeplitzColumn{c}));
      }
    }

    auto solve = [&](const Eigen::VectorXd& b, Eigen::VectorXd* warm) {
      auto sol = linalg::conjugate_gradients(A, b, cfg_.cg_train, warm);
      if (warm) *warm = sol.x;
      return sol.x;
    };

    Eigen::VectorXd alpha = solve(y_, &warm_alpha_);
    const double quad = -0.5 * y_.dot(alpha);
    const std::uint64_t iter_seed =
        cfg_.fixed_probes ? cfg_.seed : cfg_.seed + 0x9e3779b97f4a7c15ull * (++iteration_);
    const double logdet =
        linalg::lanczos_logdet(A, cfg_.probes, cfg_.lanczos_steps, iter_seed);
    const double lml = quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

    // gradient: 1/2 a' dA a  -  1/2 * mean_z (A^{-1} z)' dA z  over probes
    grad = Eigen::VectorXd::Zero(kernel_.num_params());
    const int nl = kernel_.num_lengthscales();
    Eigen::MatrixXd Z = linalg::probe_vectors(n, cfg_.probes, iter_seed);
    if (warm_probe_.size() != static_cast<std::size_t>(cfg_.probes))
      warm_probe_.assign(static_cast<std::size_t>(cfg_.probes), Eigen::VectorXd());

    auto accumulate_pair = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v, double coeff) {
      // per-projection building blocks
      Eigen::VectorXd signal_v = Eigen::VectorXd::Zero(n);
      Eigen::MatrixXd Q;  // prescale: q_j columns for the ARD contraction
      if (prescale) Q.resize(n, J);
      for (int j = 0; j < J; ++j) {
        const auto& p = parts[static_cast<std::size_t>(j)];
        Eigen::VectorXd wv = p.W.apply_transpose(v);
        Eigen::VectorXd Tv = p.T->apply(wv);
        signal_v.noalias() += scales[j] * p.W.apply(Tv);
        if (prescale) {
          Eigen::VectorXd wu = p.W.apply_transpose(u);
          Eigen::VectorXd Tu = p.T->apply(wu);
          Eigen::VectorXd aj = Wd[static_cast<std::size_t>(j)].apply(Tv);
          Eigen::VectorXd bj = Wd[static_cast<std::size_t>(j)].apply(Tu);
          Q.col(j) = scales[j] * (u.cwiseProduct(aj) + v.cwiseProduct(bj));
        } else {
          Eigen::VectorXd wu = p.W.apply_transpose(u);
          // per-sub lengthscale gradient entry
          grad[j] += coeff * scales[j] * wu.dot(Td[static_cast<std::size_t>(j)]->apply(wv));
        }
        if (spec.learn_mixing) {
          Eigen::VectorXd wu = p.W.apply_transpose(u);
          mixing_uSv_[static_cast<std::size_t>(j)] = spec.output_scale * wu.dot(Tv);
        }
      }
      if (prescale) {
        // grad_i += coeff * sum_j (-P_ji) * xs_col_i . q_j
        Eigen::MatrixXd G = Xs.transpose() * Q;  // d x J
        for (int j = 0; j < J; ++j) {
          const auto& Pj = kernel_.projections().matrices[static_cast<std::size_t>(j)];
          grad.head(nl).noalias() += coeff * (-1.0) * (G.col(j).array() * Pj.row(0).transpose().array()).matrix();
        }
      }
      // output scale
      grad[nl] += coeff * u.dot(signal_v);
      // noise
      grad[nl + 1] += coeff * spec.noise_variance * u.dot(v);
      // mixing logits
      if (spec.learn_mixing) {
        const double uSmixv = u.dot(signal_v) / spec.output_scale;
        for (int j = 0; j < J; ++j)
          grad[nl + 2 + j] += coeff * spec.output_scale * spec.mixing_weights[j] *
                              (mixing_uSv_[static_cast<std::size_t>(j)] / spec.output_scale - uSmixv);
      }
    };

    if (spec.learn_mixing) mixing_uSv_.assign(static_cast<std::size_t>(J), 0.0);
    accumulate_pair(alpha, alpha, 0.5);
    for (int p = 0; p < cfg_.probes; ++p) {
      Eigen::VectorXd z = Z.col(p);
      Eigen::VectorXd w = solve(
          z, cfg_.fixed_probes ? &warm_probe_[static_cast<std::size_t>(p)] : nullptr);
      accumulate_pair(w, z, -0.5 / static_cast<double>(cfg_.probes));
    }

    grad /= static_cast<double>(n);
    return lml / static_cast<double>(n);
  }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Kernel kernel_;
  SkiTrainConfig cfg_;
  std::vector<Eigen::VectorXd> raw_coords_;
  std::vector<Grid1D> fixed_grids_;
  std::vector<SparseInterpolation> fixed_W_;
  std::vector<double> mixing_uSv_;
  Eigen::VectorXd warm_alpha_;
  std::vector<Eigen::VectorXd> warm_probe_;
  std::uint64_t iteration_ = 0;
};

}  // namespace projgp
