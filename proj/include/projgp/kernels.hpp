#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "projgp/errors.hpp"
#include "projgp/projections.hpp"

namespace projgp {

enum class SubKernelFamily { RBF, IMQ, Cosine };

inline std::string family_name(SubKernelFamily f) {
  switch (f) {
    case SubKernelFamily::RBF: return "rbf";
    case SubKernelFamily::IMQ: return "imq";
    case SubKernelFamily::Cosine: return "cosine";
  }
  return "?";
}

inline SubKernelFamily family_from_name(const std::string& s) {
  if (s == "rbf") return SubKernelFamily::RBF;
  if (s == "imq") return SubKernelFamily::IMQ;
  if (s == "cosine") return SubKernelFamily::Cosine;
  throw UnsupportedFamily("unknown kernel family: " + s);
}

// Normalized stationary profiles, phi(0) = 1 (|.| <= 1 for cosine).
inline double rbf_profile(double sq_norm) { return std::exp(-0.5 * sq_norm); }
inline double imq_profile(double sq_norm) { return 1.0 / std::sqrt(1.0 + sq_norm); }

// Spec-surface sub-kernel evaluations on a lag vector.
inline double rbf(const Eigen::VectorXd& tau, const Eigen::VectorXd& lengthscales) {
  if (tau.size() != lengthscales.size())
    throw DimensionMismatch("rbf: lag and lengthscale sizes differ");
  return rbf_profile(tau.cwiseQuotient(lengthscales).squaredNorm());
}
inline double rbf(double tau, double lengthscale) { return rbf_profile(tau * tau / (lengthscale * lengthscale)); }

inline double imq(const Eigen::VectorXd& tau, const Eigen::VectorXd& lengthscales) {
  if (tau.size() != lengthscales.size())
    throw DimensionMismatch("imq: lag and lengthscale sizes differ");
  return imq_profile(tau.cwiseQuotient(lengthscales).squaredNorm());
}
inline double imq(double tau, double lengthscale) { return imq_profile(tau * tau / (lengthscale * lengthscale)); }

inline double cosine_subkernel(double t) { return std::cos(t); }

namespace detail {
// phi on an already lengthscale-scaled lag vector.
inline double profile(SubKernelFamily f, const Eigen::VectorXd& u) {
  switch (f) {
    case SubKernelFamily::RBF: return rbf_profile(u.squaredNorm());
    case SubKernelFamily::IMQ: return imq_profile(u.squaredNorm());
    case SubKernelFamily::Cosine: {
      double p = 1.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) p *= std::cos(u[i]);
      return p;
    }
  }
  return 0.0;
}
}  // namespace detail

// Hyperparameters for one kernel. The lengthscale layout depends on the
// structure: length d for Direct/Gam/ProjectedPrescale, sum of sub-kernel
// degrees for Projected (one ARD vector per sub-kernel, concatenated).
struct KernelSpec {
  SubKernelFamily family = SubKernelFamily::RBF;
  Eigen::VectorXd lengthscales;
  double output_scale = 1.0;
  Eigen::VectorXd mixing_weights;  // one weight per projection; empty otherwise
  double noise_variance = 0.01;
  bool learn_mixing = false;

  static Eigen::VectorXd uniform_weights(int J) {
    return Eigen::VectorXd::Constant(J, 1.0 / static_cast<double>(J));
  }

  void validate() const {
    if ((lengthscales.array() <= 0.0).any())
      throw ConfigError("KernelSpec: lengthscales must be positive");
    if (output_scale <= 0.0) throw ConfigError("KernelSpec: output_scale must be positive");
    if (noise_variance <= 0.0) throw ConfigError("KernelSpec: noise_variance must be positive");
    if (mixing_weights.size() > 0) {
      if ((mixing_weights.array() < 0.0).any())
        throw ConfigError("KernelSpec: mixing weights must be nonnegative");
      if (!learn_mixing && std::abs(mixing_weights.sum() - 1.0) > 1e-12)
        throw ConfigError("KernelSpec: fixed mixing weights must sum to 1");
    }
  }
};

struct GramMatrix {
  Eigen::MatrixXd values;
  bool symmetric = false;
};

enum class KernelStructure { Direct, Gam, Projected, ProjectedPrescale };

inline std::string structure_name(KernelStructure s) {
  switch (s) {
    case KernelStructure::Direct: return "direct";
    case KernelStructure::Gam: return "gam";
    case KernelStructure::Projected: return "projected";
    case KernelStructure::ProjectedPrescale: return "projected-prescale";
  }
  return "?";
}

// Per-theta evaluation cache: the signal Gram plus whatever per-projection
// arrays the gradient contraction can reuse (phi matrices are the expensive
// part; exp dominates assembly time at scale).
struct GramCache {
  Eigen::MatrixXd K;                     // signal gram (no noise)
  std::vector<Eigen::MatrixXd> phi;      // per projection (or per axis for Gam)
  std::vector<Eigen::MatrixXd> scaled;   // per projection: scaled projected coords (n x D_j)
  Eigen::MatrixXd xtilde;                // scaled inputs where applicable
};

class Kernel {
 public:
  static Kernel direct(KernelSpec spec, int input_dim) {
    return Kernel(KernelStructure::Direct, std::move(spec), ProjectionSet{}, input_dim);
  }
  static Kernel gam(KernelSpec spec, int input_dim) {
    return Kernel(KernelStructure::Gam, std::move(spec), ProjectionSet{}, input_dim);
  }
  static Kernel projected(KernelSpec spec, ProjectionSet P) {
    int d = P.input_dim();
    return Kernel(KernelStructure::Projected, std::move(spec), std::move(P), d);
  }
  static Kernel projected_prescale(KernelSpec spec, ProjectionSet P) {
    int d = P.input_dim();
    return Kernel(KernelStructure::ProjectedPrescale, std::move(spec), std::move(P), d);
  }

  KernelStructure structure() const { return structure_; }
  const KernelSpec& spec() const { return spec_; }
  KernelSpec& spec() { return spec_; }
  const ProjectionSet& projections() const { return proj_; }
  int input_dim() const { return input_dim_; }

  // Prior variance k(x, x); mixing weights sum to one, so this is the output scale.
  double prior_variance() const { return spec_.output_scale; }

  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
    if (x.size() != input_dim_ || y.size() != input_dim_)
      throw DimensionMismatch("Kernel: input dimension mismatch");
    const Eigen::VectorXd tau = x - y;
    const double s = spec_.output_scale;
    switch (structure_) {
      case KernelStructure::Direct:
        return s * detail::profile(spec_.family, tau.cwiseQuotient(spec_.lengthscales));
      case KernelStructure::Gam: {
        double acc = 0.0;
        for (int i = 0; i < input_dim_; ++i) {
          Eigen::VectorXd u(1);
          u[0] = tau[i] / spec_.lengthscales[i];
          acc += detail::profile(spec_.family, u);
        }
        return s * acc / input_dim_;
      }
      case KernelStructure::Projected: {
        double acc = 0.0;
        int offset = 0;
        for (int j = 0; j < proj_.count(); ++j) {
          const int dj = proj_.degrees[static_cast<std::size_t>(j)];
          Eigen::VectorXd u = proj_.matrices[static_cast<std::size_t>(j)] * tau;
          u = u.cwiseQuotient(spec_.lengthscales.segment(offset, dj));
          acc += spec_.mixing_weights[j] * detail::profile(spec_.family, u);
          offset += dj;
        }
        return s * acc;
      }
      case KernelStructure::ProjectedPrescale: {
        const Eigen::VectorXd tt = tau.cwiseQuotient(spec_.lengthscales);
        double acc = 0.0;
        for (int j = 0; j < proj_.count(); ++j)
          acc += spec_.mixing_weights[j] *
                 detail::profile(spec_.family, proj_.matrices[static_cast<std::size_t>(j)] * tt);
        return s * acc;
      }
    }
    return 0.0;
  }

  // ---- Gram assembly -------------------------------------------------------

  Eigen::MatrixXd gram(const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2) const {
    check_inputs(X);
    check_inputs(X2);
    GramCache cache;
    assemble(X, &X2, cache, /*want_cache=*/false);
    return cache.K;
  }

  Eigen::MatrixXd gram(const Eigen::MatrixXd& X) const {
    check_inputs(X);
    GramCache cache;
    assemble(X, nullptr, cache, /*want_cache=*/false);
    return cache.K;
  }

  GramCache assemble_cached(const Eigen::MatrixXd& X) const {
    check_inputs(X);
    GramCache cache;
    assemble(X, nullptr, cache, /*want_cache=*/true);
    return cache;
  }

  // ---- Hyperparameter vector (log / logit space) ---------------------------

  int num_lengthscales() const { return static_cast<int>(spec_.lengthscales.size()); }

  int num_params() const {
    return num_lengthscales() + 2 + (spec_.learn_mixing ? proj_.count() : 0);
  }

  Eigen::VectorXd pack() const {
    Eigen::VectorXd theta(num_params());
    const int nl = num_lengthscales();
    theta.head(nl) = spec_.lengthscales.array().log();
    theta[nl] = std::log(spec_.output_scale);
    theta[nl + 1] = std::log(spec_.noise_variance);
    if (spec_.learn_mixing)
      theta.tail(proj_.count()) = spec_.mixing_weights.array().log();
    return theta;
  }

  void unpack(const Eigen::VectorXd& theta) {
    if (theta.size() != num_params())
      throw DimensionMismatch("Kernel::unpack: wrong parameter vector length");
    const int nl = num_lengthscales();
    spec_.lengthscales = theta.head(nl).array().exp();
    spec_.output_scale = std::exp(theta[nl]);
    spec_.noise_variance = std::exp(theta[nl + 1]);
    if (spec_.learn_mixing) {
      Eigen::ArrayXd logits = theta.tail(proj_.count()).array();
      logits -= logits.maxCoeff();
      Eigen::ArrayXd w = logits.exp();
      spec_.mixing_weights = w / w.sum();
    }
  }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    for (int i = 0; i < num_lengthscales(); ++i) names.push_back("log_lengthscale_" + std::to_string(i));
    names.push_back("log_output_scale");
    names.push_back("log_noise_variance");
    if (spec_.learn_mixing)
      for (int j = 0; j < proj_.count(); ++j) names.push_back("mixing_logit_" + std::to_string(j));
    return names;
  }

  int noise_param_index() const { return num_lengthscales() + 1; }

  // ---- Gradients -----------------------------------------------------------

  // Explicit dK/dtheta_l matrices for the symmetric training Gram. Meant for
  // small n; training uses gradient_contraction instead.
  std::vector<Eigen::MatrixXd> gradients(const Eigen::MatrixXd& X) const;

  // g[l] = sum_ab B_ab dK_ab/dtheta_l computed from a cached assembly.
  Eigen::VectorXd gradient_contraction(const Eigen::MatrixXd& X, const GramCache& cache,
                                       const Eigen::MatrixXd& B) const;

 private:
  Kernel(KernelStructure st, KernelSpec spec, ProjectionSet proj, int input_dim)
      : structure_(st), spec_(std::move(spec)), proj_(std::move(proj)), input_dim_(input_dim) {
    if (structure_ == KernelStructure::Projected || structure_ == KernelStructure::ProjectedPrescale) {
      if (proj_.count() == 0) throw EmptyProjectionSet("Kernel: projection set is empty");
      if (spec_.mixing_weights.size() == 0)
        spec_.mixing_weights = KernelSpec::uniform_weights(proj_.count());
      if (spec_.mixing_weights.size() != proj_.count())
        throw DimensionMismatch("Kernel: one mixing weight per projection required");
    }
    const int expected_ls = structure_ == KernelStructure::Projected ? proj_.total_degree() : input_dim_;
    if (spec_.lengthscales.size() == 0)
      spec_.lengthscales = Eigen::VectorXd::Ones(expected_ls);
    if (spec_.lengthscales.size() != expected_ls)
      throw DimensionMismatch("Kernel: lengthscale vector has length " +
                              std::to_string(spec_.lengthscales.size()) + ", expected " +
                              std::to_string(expected_ls));
    spec_.validate();
  }

  void check_inputs(const Eigen::MatrixXd& X) const {
    if (X.cols() != input_dim_)
      throw DimensionMismatch("Kernel: data has " + std::to_string(X.cols()) +
                              " columns, kernel expects " + std::to_string(input_dim_));
  }

  void assemble(const Eigen::MatrixXd& X, const Eigen::MatrixXd* X2, GramCache& cache,
                bool want_cache) const;

  // Fills phi column-by-column and accumulates weight * phi into K in the
  // same pass; storing phi is optional (the gradient path reuses it).
  void accumulate_phi_1d(const Eigen::VectorXd& u, const Eigen::VectorXd& v, double weight,
                         Eigen::MatrixXd& K, Eigen::MatrixXd* store) const {
    Eigen::VectorXd col(u.size());
    for (Eigen::Index b = 0; b < v.size(); ++b) {
      auto lag = u.array() - v[b];
      switch (spec_.family) {
        case SubKernelFamily::RBF: col = (-0.5 * lag.square()).exp(); break;
        case SubKernelFamily::IMQ: col = (1.0 + lag.square()).rsqrt(); break;
        case SubKernelFamily::Cosine: col = lag.cos(); break;
      }
      K.col(b) += weight * col;
      if (store) store->col(b) = col;
    }
  }

  // phi matrix for scaled 1-D coordinate vectors (outer lag u_a - v_b);
  // column-wise so the lag stays a contiguous packet expression
  Eigen::MatrixXd phi_gram_1d(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
    Eigen::MatrixXd phi(u.size(), v.size());
    for (Eigen::Index b = 0; b < v.size(); ++b) {
      auto lag = u.array() - v[b];
      switch (spec_.family) {
        case SubKernelFamily::RBF: phi.col(b) = (-0.5 * lag.square()).exp(); break;
        case SubKernelFamily::IMQ: phi.col(b) = (1.0 + lag.square()).rsqrt(); break;
        case SubKernelFamily::Cosine: phi.col(b) = lag.cos(); break;
      }
    }
    return phi;
  }

  // phi matrix for scaled multi-D coordinates (rows are points)
  Eigen::MatrixXd phi_gram_nd(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const {
    if (spec_.family == SubKernelFamily::Cosine) {
      Eigen::MatrixXd P = Eigen::MatrixXd::Ones(U.rows(), V.rows());
      for (Eigen::Index c = 0; c < U.cols(); ++c)
        P.array() *= (U.col(c).replicate(1, V.rows()) -
                      V.col(c).transpose().replicate(U.rows(), 1)).array().cos();
      return P;
    }
    Eigen::VectorXd su = U.rowwise().squaredNorm();
    Eigen::VectorXd sv = V.rowwise().squaredNorm();
    Eigen::MatrixXd Q = su.replicate(1, V.rows()) + sv.transpose().replicate(U.rows(), 1) -
                        2.0 * U * V.transpose();
    Q = Q.cwiseMax(0.0);
    if (spec_.family == SubKernelFamily::RBF) return (-0.5 * Q.array()).exp();
    return (1.0 + Q.array()).rsqrt();
  }

  KernelStructure structure_;
  KernelSpec spec_;
  ProjectionSet proj_;
  int input_dim_;
};

// ---- Gram assembly ----------------------------------------------------------

inline void Kernel::assemble(const Eigen::MatrixXd& X, const Eigen::MatrixXd* X2,
                             GramCache& cache, bool want_cache) const {
  const Eigen::MatrixXd& Y = X2 ? *X2 : X;
  const double s = spec_.output_scale;
  switch (structure_) {
    case KernelStructure::Direct: {
      Eigen::MatrixXd Xs = X * spec_.lengthscales.cwiseInverse().asDiagonal();
      Eigen::MatrixXd Ys = X2 ? Eigen::MatrixXd(Y * spec_.lengthscales.cwiseInverse().asDiagonal()) : Xs;
      cache.K = s * phi_gram_nd(Xs, Ys);
      if (want_cache) cache.xtilde = std::move(Xs);
      break;
    }
    case KernelStructure::Gam: {
      cache.K = Eigen::MatrixXd::Zero(X.rows(), Y.rows());
      const double w = s / input_dim_;
      for (int i = 0; i < input_dim_; ++i) {
        Eigen::MatrixXd phi;
        if (want_cache) phi.resize(X.rows(), Y.rows());
        accumulate_phi_1d(X.col(i) / spec_.lengthscales[i], Y.col(i) / spec_.lengthscales[i], w,
                          cache.K, want_cache ? &phi : nullptr);
        if (want_cache) cache.phi.push_back(std::move(phi));
      }
      if (want_cache) cache.xtilde = X * spec_.lengthscales.cwiseInverse().asDiagonal();
      break;
    }
    case KernelStructure::Projected:
    case KernelStructure::ProjectedPrescale: {
      const bool prescale = structure_ == KernelStructure::ProjectedPrescale;
      Eigen::MatrixXd Xs = prescale
          ? Eigen::MatrixXd(X * spec_.lengthscales.cwiseInverse().asDiagonal()) : X;
      Eigen::MatrixXd Ys = prescale
          ? Eigen::MatrixXd(Y * spec_.lengthscales.cwiseInverse().asDiagonal()) : Y;
      cache.K = Eigen::MatrixXd::Zero(X.rows(), Y.rows());
      int offset = 0;
      for (int j = 0; j < proj_.count(); ++j) {
        const auto& P = proj_.matrices[static_cast<std::size_t>(j)];
        const int dj = proj_.degrees[static_cast<std::size_t>(j)];
        Eigen::MatrixXd U = Xs * P.transpose();
        if (!prescale)
          U = U * spec_.lengthscales.segment(offset, dj).cwiseInverse().asDiagonal();
        Eigen::MatrixXd V;
        if (X2) {
          V = Ys * P.transpose();
          if (!prescale)
            V = V * spec_.lengthscales.segment(offset, dj).cwiseInverse().asDiagonal();
        } else {
          V = U;
        }
        const double weight = s * spec_.mixing_weights[j];
        if (dj == 1) {
          Eigen::MatrixXd phi;
          if (want_cache) phi.resize(X.rows(), Y.rows());
          accumulate_phi_1d(U.col(0), V.col(0), weight, cache.K, want_cache ? &phi : nullptr);
          if (want_cache) {
            cache.scaled.push_back(U);
            cache.phi.push_back(std::move(phi));
          }
        } else {
          Eigen::MatrixXd phi = phi_gram_nd(U, V);
          cache.K.noalias() += weight * phi;
          if (want_cache) {
            cache.scaled.push_back(U);
            cache.phi.push_back(std::move(phi));
          }
        }
        offset += dj;
      }
      if (want_cache && prescale) cache.xtilde = std::move(Xs);
      break;
    }
  }
}

// ---- Explicit gradient matrices ----------------------------------------------

inline std::vector<Eigen::MatrixXd> Kernel::gradients(const Eigen::MatrixXd& X) const {
  check_inputs(X);
  const Eigen::Index n = X.rows();
  const double s = spec_.output_scale;
  std::vector<Eigen::MatrixXd> grads(static_cast<std::size_t>(num_params()),
                                     Eigen::MatrixXd::Zero(n, n));
  GramCache cache = assemble_cached(X);
  const int nl = num_lengthscales();

  auto lag_1d = [](const Eigen::VectorXd& u) {
    return Eigen::MatrixXd(u.replicate(1, u.size()) - u.transpose().replicate(u.size(), 1));
  };

  switch (structure_) {
    case KernelStructure::Direct: {
      for (int i = 0; i < input_dim_; ++i) {
        Eigen::MatrixXd D2 = lag_1d(cache.xtilde.col(i)).array().square();
        switch (spec_.family) {
          case SubKernelFamily::RBF:
            grads[static_cast<std::size_t>(i)] = cache.K.cwiseProduct(D2);
            break;
          case SubKernelFamily::IMQ: {
            // dK/dlog sigma_i = s (1+q)^{-3/2} dtilde_i^2 ; (1+q)^{-3/2} = (K/s)^3 / s^{... }
            Eigen::ArrayXXd inner = (cache.K.array() / s).pow(3.0) * s;
            grads[static_cast<std::size_t>(i)] = (inner * D2.array()).matrix();
            break;
          }
          case SubKernelFamily::Cosine: {
            Eigen::MatrixXd D = lag_1d(cache.xtilde.col(i));
            // product over other axes times sin * lag
            Eigen::MatrixXd rest = Eigen::MatrixXd::Constant(n, n, s);
            for (int l = 0; l < input_dim_; ++l)
              if (l != i) rest.array() *= lag_1d(cache.xtilde.col(l)).array().cos();
            grads[static_cast<std::size_t>(i)] =
                (rest.array() * D.array().sin() * D.array()).matrix();
            break;
          }
        }
      }
      break;
    }
    case KernelStructure::Gam: {
      const double w = s / input_dim_;
      for (int i = 0; i < input_dim_; ++i) {
        Eigen::MatrixXd D = lag_1d(Eigen::VectorXd(X.col(i) / spec_.lengthscales[i]));
        const auto& phi = cache.phi[static_cast<std::size_t>(i)];
        switch (spec_.family) {
          case SubKernelFamily::RBF:
            grads[static_cast<std::size_t>(i)] =
                w * (phi.array() * D.array().square()).matrix();
            break;
          case SubKernelFamily::IMQ:
            grads[static_cast<std::size_t>(i)] =
                w * (phi.array().pow(3.0) * D.array().square()).matrix();
            break;
          case SubKernelFamily::Cosine:
            grads[static_cast<std::size_t>(i)] =
                w * (D.array().sin() * D.array()).matrix();
            break;
        }
      }
      break;
    }
    case KernelStructure::Projected:
    case KernelStructure::ProjectedPrescale: {
      const bool prescale = structure_ == KernelStructure::ProjectedPrescale;
      int offset = 0;
      for (int j = 0; j < proj_.count(); ++j) {
        const int dj = proj_.degrees[static_cast<std::size_t>(j)];
        const double aj = s * spec_.mixing_weights[j];
        const auto& U = cache.scaled[static_cast<std::size_t>(j)];
        const auto& phi = cache.phi[static_cast<std::size_t>(j)];
        for (int r = 0; r < dj; ++r) {
          Eigen::MatrixXd D = lag_1d(U.col(r));
          // dphi/du_r as a matrix factor against the lag in coordinate r
          Eigen::MatrixXd dphi_du;  // = dphi/du_r / (lag already separated below)
          switch (spec_.family) {
            case SubKernelFamily::RBF:
              dphi_du = (-phi.array() * D.array()).matrix();
              break;
            case SubKernelFamily::IMQ:
              dphi_du = (-phi.array().pow(3.0) * D.array()).matrix();
              break;
            case SubKernelFamily::Cosine: {
              Eigen::MatrixXd rest = Eigen::MatrixXd::Ones(n, n);
              for (int l = 0; l < dj; ++l)
                if (l != r) rest.array() *= lag_1d(U.col(l)).array().cos();
              dphi_du = (-rest.array() * D.array().sin()).matrix();
              break;
            }
          }
          if (!prescale) {
            // per-sub lengthscale: du/dlog sigma_{j,r} = -u_r, so dK = aj * dphi_du .* (-D)
            grads[static_cast<std::size_t>(offset + r)] =
                aj * (dphi_du.array() * (-D.array())).matrix();
          } else {
            // ARD prescale: du_r/dlog sigma_i = -P(r,i) * (xt_ai - xt_bi)
            const auto& P = proj_.matrices[static_cast<std::size_t>(j)];
            for (int i = 0; i < input_dim_; ++i) {
              if (P(r, i) == 0.0) continue;
              Eigen::MatrixXd Dx = lag_1d(cache.xtilde.col(i));
              grads[static_cast<std::size_t>(i)].noalias() +=
                  (-aj * P(r, i)) * dphi_du.cwiseProduct(Dx);
            }
          }
        }
        offset += dj;
      }
      break;
    }
  }

  // output scale: dK/dlog s = K (signal part)
  grads[static_cast<std::size_t>(nl)] = cache.K;
  // noise: dK/dlog sigma_n^2 = sigma_n^2 I
  grads[static_cast<std::size_t>(nl + 1)] =
      spec_.noise_variance * Eigen::MatrixXd::Identity(n, n);
  // mixing logits (softmax parameterization)
  if (spec_.learn_mixing) {
    for (int j = 0; j < proj_.count(); ++j) {
      Eigen::MatrixXd Kj = s * cache.phi[static_cast<std::size_t>(j)];
      grads[static_cast<std::size_t>(nl + 2 + j)] =
          spec_.mixing_weights[j] * (Kj - cache.K);
    }
  }
  return grads;
}

// ---- Fast trace contraction ---------------------------------------------------

inline Eigen::VectorXd Kernel::gradient_contraction(const Eigen::MatrixXd& X,
                                                    const GramCache& cache,
                                                    const Eigen::MatrixXd& B) const {
  const Eigen::Index n = X.rows();
  if (B.rows() != n || B.cols() != n)
    throw DimensionMismatch("gradient_contraction: B must be n x n");
  const double s = spec_.output_scale;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(num_params());
  const int nl = num_lengthscales();

  // Row sums and product against t of the elementwise product B .* W without
  // materializing it; W columns are supplied by a functor (phi-derived arrays).
  auto masked_reduce = [&B](const auto& wcol, const Eigen::VectorXd& t, Eigen::VectorXd& r,
                            Eigen::VectorXd& Ct) {
    const Eigen::Index nn = B.rows();
    r.setZero(nn);
    Ct.setZero(nn);
    Eigen::VectorXd cb(nn);
    for (Eigen::Index b = 0; b < nn; ++b) {
      cb = B.col(b).array() * wcol(b);
      r += cb;
      Ct += t[b] * cb;
    }
  };
  // sum_ab C_ab (t_a - t_b)^2 for symmetric C = B .* W
  auto quad_contract_fused = [&masked_reduce](const auto& wcol, const Eigen::VectorXd& t) {
    Eigen::VectorXd r, Ct;
    masked_reduce(wcol, t, r, Ct);
    return 2.0 * (t.array().square() * r.array()).sum() - 2.0 * t.dot(Ct);
  };

  switch (structure_) {
    case KernelStructure::Direct: {
      Eigen::MatrixXd C;
      switch (spec_.family) {
        case SubKernelFamily::RBF:
          C = B.cwiseProduct(cache.K);
          break;
        case SubKernelFamily::IMQ:
          C = (B.array() * (cache.K.array() / s).pow(3.0) * s).matrix();
          break;
        case SubKernelFamily::Cosine: {
          // no shared factorization across axes; contract per axis directly
          for (int i = 0; i < input_dim_; ++i) {
            Eigen::MatrixXd D = cache.xtilde.col(i).replicate(1, n) -
                                cache.xtilde.col(i).transpose().replicate(n, 1);
            Eigen::MatrixXd rest = Eigen::MatrixXd::Constant(n, n, s);
            for (int l = 0; l < input_dim_; ++l)
              if (l != i) {
                Eigen::MatrixXd Dl = cache.xtilde.col(l).replicate(1, n) -
                                     cache.xtilde.col(l).transpose().replicate(n, 1);
                rest.array() *= Dl.array().cos();
              }
            g[i] = (B.array() * rest.array() * D.array().sin() * D.array()).sum();
          }
          C.resize(0, 0);
          break;
        }
      }
      if (C.size() > 0) {
        Eigen::VectorXd r = C.rowwise().sum();
        Eigen::MatrixXd M = C * cache.xtilde;  // n x d
        Eigen::VectorXd t1 = cache.xtilde.array().square().matrix().transpose() * r;
        Eigen::VectorXd t2 = (cache.xtilde.array() * M.array()).colwise().sum();
        g.head(input_dim_) = 2.0 * t1 - 2.0 * t2;
      }
      break;
    }
    case KernelStructure::Gam: {
      const double w = s / input_dim_;
      for (int i = 0; i < input_dim_; ++i) {
        const auto& phi = cache.phi[static_cast<std::size_t>(i)];
        const Eigen::VectorXd t = cache.xtilde.col(i);
        switch (spec_.family) {
          case SubKernelFamily::RBF:
            g[i] = w * quad_contract_fused([&phi](Eigen::Index b) { return phi.col(b).array(); }, t);
            break;
          case SubKernelFamily::IMQ:
            g[i] = w * quad_contract_fused(
                           [&phi](Eigen::Index b) { return phi.col(b).array().pow(3.0); }, t);
            break;
          case SubKernelFamily::Cosine: {
            Eigen::MatrixXd D = t.replicate(1, n) - t.transpose().replicate(n, 1);
            g[i] = w * (B.array() * D.array().sin() * D.array()).sum();
            break;
          }
        }
      }
      break;
    }
    case KernelStructure::Projected: {
      int offset = 0;
      for (int j = 0; j < proj_.count(); ++j) {
        const int dj = proj_.degrees[static_cast<std::size_t>(j)];
        const double aj = s * spec_.mixing_weights[j];
        const auto& U = cache.scaled[static_cast<std::size_t>(j)];
        const auto& phi = cache.phi[static_cast<std::size_t>(j)];
        for (int r = 0; r < dj; ++r) {
          const Eigen::VectorXd t = U.col(r);
          switch (spec_.family) {
            case SubKernelFamily::RBF: {
              g[offset + r] =
                  aj * quad_contract_fused([&phi](Eigen::Index b) { return phi.col(b).array(); }, t);
              break;
            }
            case SubKernelFamily::IMQ: {
              g[offset + r] = aj * quad_contract_fused(
                                       [&phi](Eigen::Index b) { return phi.col(b).array().pow(3.0); }, t);
              break;
            }
            case SubKernelFamily::Cosine: {
              Eigen::MatrixXd D = t.replicate(1, n) - t.transpose().replicate(n, 1);
              Eigen::MatrixXd rest = Eigen::MatrixXd::Ones(n, n);
              for (int l = 0; l < dj; ++l)
                if (l != r) {
                  Eigen::MatrixXd Dl = U.col(l).replicate(1, n) -
                                       U.col(l).transpose().replicate(n, 1);
                  rest.array() *= Dl.array().cos();
                }
              g[offset + r] = aj * (B.array() * rest.array() * D.array().sin() * D.array()).sum();
              break;
            }
          }
        }
        offset += dj;
      }
      break;
    }
    case KernelStructure::ProjectedPrescale: {
      // accumulate row-sum vectors per (j, r) and contract against xtilde once
      Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, input_dim_);  // sum_j P(r,i)-weighted H rows
      for (int j = 0; j < proj_.count(); ++j) {
        const int dj = proj_.degrees[static_cast<std::size_t>(j)];
        const double aj = s * spec_.mixing_weights[j];
        const auto& U = cache.scaled[static_cast<std::size_t>(j)];
        const auto& phi = cache.phi[static_cast<std::size_t>(j)];
        const auto& P = proj_.matrices[static_cast<std::size_t>(j)];
        for (int r = 0; r < dj; ++r) {
          const Eigen::VectorXd t = U.col(r);
          // h = rowsum(H) with H = -aj * B .* dphi/du_r; for RBF and IMQ the
          // lag factor separates, so h = -aj * (t .* rowsum(C) - C t) with
          // C = B .* (phi or phi^3), computed without materializing C.
          Eigen::VectorXd h;
          switch (spec_.family) {
            case SubKernelFamily::RBF: {
              Eigen::VectorXd rC, Ct;
              masked_reduce([&phi](Eigen::Index b) { return phi.col(b).array(); }, t, rC, Ct);
              h = (-aj) * (t.cwiseProduct(rC) - Ct);
              break;
            }
            case SubKernelFamily::IMQ: {
              Eigen::VectorXd rC, Ct;
              masked_reduce([&phi](Eigen::Index b) { return phi.col(b).array().pow(3.0); }, t,
                            rC, Ct);
              h = (-aj) * (t.cwiseProduct(rC) - Ct);
              break;
            }
            case SubKernelFamily::Cosine: {
              Eigen::MatrixXd D = t.replicate(1, n) - t.transpose().replicate(n, 1);
              Eigen::MatrixXd rest = Eigen::MatrixXd::Ones(n, n);
              for (int l = 0; l < dj; ++l)
                if (l != r) {
                  Eigen::MatrixXd Dl = U.col(l).replicate(1, n) -
                                       U.col(l).transpose().replicate(n, 1);
                  rest.array() *= Dl.array().cos();
                }
              Eigen::MatrixXd H = (-aj) * (B.array() * rest.array() * D.array().sin()).matrix();
              h = H.rowwise().sum();
              break;
            }
          }
          // sum_ab H_ab (xt_ai - xt_bi) = 2 * rowsum(H) . xt_i  (H antisymmetric)
          for (int i = 0; i < input_dim_; ++i)
            if (P(r, i) != 0.0) R.col(i).noalias() += (-P(r, i)) * h;
        }
      }
      g.head(input_dim_) = 2.0 * (cache.xtilde.array() * R.array()).colwise().sum();
      break;
    }
  }

  // output scale
  g[nl] = (B.array() * cache.K.array()).sum();
  // noise
  g[nl + 1] = spec_.noise_variance * B.trace();
  // mixing logits
  if (spec_.learn_mixing) {
    for (int j = 0; j < proj_.count(); ++j) {
      Eigen::MatrixXd Kj = s * cache.phi[static_cast<std::size_t>(j)];
      g[nl + 2 + j] = spec_.mixing_weights[j] *
                      (B.array() * (Kj - cache.K).array()).sum();
    }
  }
  return g;
}

// ---- Spec-surface free functions ---------------------------------------------

inline double gam_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                         const KernelSpec& spec) {
  auto k = Kernel::gam(spec, static_cast<int>(x.size()));
  return k(x, x2);
}

inline double projected_additive_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                                        const ProjectionSet& P, const KernelSpec& spec) {
  auto k = Kernel::projected(spec, P);
  return k(x, x2);
}

inline double ard_prescale_kernel(const Eigen::VectorXd& x, const Eigen::VectorXd& x2,
                                  const ProjectionSet& P, const KernelSpec& spec) {
  auto k = Kernel::projected_prescale(spec, P);
  return k(x, x2);
}

inline GramMatrix gram(const Kernel& k, const Eigen::MatrixXd& X, const Eigen::MatrixXd& X2) {
  return GramMatrix{k.gram(X, X2), false};
}

inline GramMatrix gram(const Kernel& k, const Eigen::MatrixXd& X) {
  return GramMatrix{k.gram(X), true};
}

inline std::vector<Eigen::MatrixXd> kernel_gradients(const Kernel& k, const Eigen::MatrixXd& X) {
  return k.gradients(X);
}

}  // namespace projgp
