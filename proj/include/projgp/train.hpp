#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "projgp/data.hpp"
#include "projgp/errors.hpp"
#include "projgp/gp_exact.hpp"
#include "projgp/kernels.hpp"

namespace projgp {

struct NoisePriorConfig {
  double lower = 1e-4;
  double upper = 1.0;
  double sharpness = 100.0;  // quadratic curvature in log-noise outside the box
};

struct TrainConfig {
  double learning_rate = 0.1;
  int max_iterations = 1000;
  double stop_tolerance = 1e-4;
  int stop_window = 20;
  int smoothing = 10;  // moving-average width for the stopping statistic
  NoisePriorConfig noise_prior;

  void validate() const {
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (stop_window < 1) throw ConfigError("TrainConfig: stop_window must be >= 1");
    if (smoothing < 1) throw ConfigError("TrainConfig: smoothing must be >= 1");
    if (noise_prior.lower >= noise_prior.upper)
      throw ConfigError("TrainConfig: noise prior lower bound must be below upper bound");
  }
};

struct TrainTrace {
  std::vector<double> objective;  // per-datapoint MAP objective (lml + prior)/n
  std::vector<double> grad_norm;
  Eigen::VectorXd best_theta;
  double best_smoothed = -std::numeric_limits<double>::infinity();
  int best_iteration = -1;
  Eigen::VectorXd failed_theta;  // set when the objective threw mid-run

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("TrainTrace: cannot open " + path);
    out << "iteration,lml,grad_norm\n";
    out.precision(17);
    for (std::size_t i = 0; i < objective.size(); ++i)
      out << i << "," << objective[i] << "," << grad_norm[i] << "\n";
  }
};

// ---- Adam ---------------------------------------------------------------------

struct AdamState {
  Eigen::VectorXd m, v;
  int t = 0;
};

// One descent step with standard moment updates (beta1 = 0.9, beta2 = 0.999).
inline std::pair<Eigen::VectorXd, AdamState> adam_step(const Eigen::VectorXd& theta,
                                                       const Eigen::VectorXd& gradient,
                                                       AdamState state, double lr) {
  if (!gradient.allFinite()) throw NonFiniteGradient("adam_step: gradient has non-finite entries");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (state.m.size() == 0) {
    state.m = Eigen::VectorXd::Zero(theta.size());
    state.v = Eigen::VectorXd::Zero(theta.size());
  }
  state.t += 1;
  state.m = beta1 * state.m + (1.0 - beta1) * gradient;
  state.v = beta2 * state.v.array().matrix() +
            (1.0 - beta2) * gradient.array().square().matrix();
  const double bc1 = 1.0 - std::pow(beta1, state.t);
  const double bc2 = 1.0 - std::pow(beta2, state.t);
  Eigen::VectorXd mhat = state.m / bc1;
  Eigen::VectorXd vhat = state.v / bc2;
  Eigen::VectorXd next =
      theta.array() - lr * mhat.array() / (vhat.array().sqrt() + eps);
  return {next, std::move(state)};
}

// ---- Smoothed box prior over the noise variance --------------------------------

struct PriorEval {
  double value = 0.0;
  double gradient = 0.0;  // with respect to log sigma_n^2
};

inline PriorEval smoothed_box_log_prior(double noise_variance, const NoisePriorConfig& cfg) {
  if (noise_variance <= 0.0)
    throw ConfigError("smoothed_box_log_prior: noise variance must be positive");
  const double u = std::log(noise_variance);
  const double lo = std::log(cfg.lower), hi = std::log(cfg.upper);
  PriorEval out;
  if (u < lo) {
    out.value = -0.5 * cfg.sharpness * (u - lo) * (u - lo);
    out.gradient = -cfg.sharpness * (u - lo);  // positive: push back up
  } else if (u > hi) {
    out.value = -0.5 * cfg.sharpness * (u - hi) * (u - hi);
    out.gradient = -cfg.sharpness * (u - hi);  // negative: push back down
  }
  return out;
}

// ---- Objective abstraction ------------------------------------------------------

// Maximization objective over the packed hyperparameter vector. Implementations
// report the per-datapoint log marginal likelihood and its gradient.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual int dim() const = 0;
  virtual Eigen::VectorXd initial_theta() const = 0;
  virtual int noise_index() const = 0;
  virtual Eigen::Index data_size() const = 0;
  // value and gradient of per-datapoint LML at theta
  virtual double eval(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) = 0;
};

class ExactLmlObjective final : public Objective {
 public:
  ExactLmlObjective(Eigen::MatrixXd X, Eigen::VectorXd y, Kernel prototype)
      : X_(std::move(X)), y_(std::move(y)), kernel_(std::move(prototype)) {
    detail::check_finite(X_, y_);
  }

  int dim() const override { return kernel_.num_params(); }
  Eigen::VectorXd initial_theta() const override { return kernel_.pack(); }
  int noise_index() const override { return kernel_.noise_param_index(); }
  Eigen::Index data_size() const override { return X_.rows(); }

  double eval(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) override {
    kernel_.unpack(theta);
    const Eigen::Index n = X_.rows();
    GramCache cache = kernel_.assemble_cached(X_);
    Eigen::MatrixXd K = cache.K;
    K.diagonal().array() += kernel_.spec().noise_variance;
    auto factor = linalg::cholesky_with_jitter_ladder(K);
    Eigen::VectorXd alpha = linalg::cholesky_solve(factor, y_);
    const double lml = -0.5 * y_.dot(alpha) - factor.L.diagonal().array().log().sum() -
                       0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    Eigen::MatrixXd B = linalg::cholesky_solve(factor, Eigen::MatrixXd::Identity(n, n));
    B.noalias() -= alpha * alpha.transpose();
    B = -B;  // alpha alpha' - K^{-1}
    grad = 0.5 * kernel_.gradient_contraction(X_, cache, B) / static_cast<double>(n);
    return lml / static_cast<double>(n);
  }

  const Kernel& kernel() const { return kernel_; }

 private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  Kernel kernel_;
};

// ---- Optimization loop -----------------------------------------------------------

// Adam ascent on the per-datapoint MAP objective (LML + noise prior), stopping
// when the moving-average objective has not improved by stop_tolerance for
// stop_window iterations. Returns the parameters at the best smoothed value.
inline Eigen::VectorXd optimize(Objective& objective, const TrainConfig& cfg, TrainTrace& trace) {
  cfg.validate();
  Eigen::VectorXd theta = objective.initial_theta();
  AdamState state;
  trace = TrainTrace{};
  trace.best_theta = theta;

  int last_improvement = 0;
  const int noise_idx = objective.noise_index();

  for (int it = 0; it < cfg.max_iterations; ++it) {
    Eigen::VectorXd grad;
    double value;
    try {
      value = objective.eval(theta, grad);
    } catch (const NotPositiveDefinite&) {
      trace.failed_theta = theta;
      throw;
    }
    if (noise_idx >= 0) {
      // MAP objective: (lml + log prior)/n, gradients combined additively
      const double n_points = static_cast<double>(objective.data_size());
      PriorEval prior = smoothed_box_log_prior(std::exp(theta[noise_idx]), cfg.noise_prior);
      value += prior.value / n_points;
      grad[noise_idx] += prior.gradient / n_points;
    }
    trace.objective.push_back(value);
    trace.grad_norm.push_back(grad.norm());

    // moving average over the trailing window
    const int w = std::min<int>(cfg.smoothing, static_cast<int>(trace.objective.size()));
    double smoothed = 0.0;
    for (int k = 0; k < w; ++k)
      smoothed += trace.objective[trace.objective.size() - 1 - static_cast<std::size_t>(k)];
    smoothed /= w;

    if (smoothed >= trace.best_smoothed + cfg.stop_tolerance || it == 0) {
      trace.best_smoothed = smoothed;
      trace.best_theta = theta;
      trace.best_iteration = it;
      last_improvement = it;
    } else if (smoothed > trace.best_smoothed) {
      trace.best_smoothed = smoothed;  // track the max but do not reset the window
      trace.best_theta = theta;
      trace.best_iteration = it;
    }
    if (it - last_improvement >= cfg.stop_window) break;

    auto [next, next_state] = adam_step(theta, -grad, std::move(state), cfg.learning_rate);
    theta = std::move(next);
    state = std::move(next_state);
  }
  return trace.best_theta;
}

// ---- Cross validation -------------------------------------------------------------

// Trains on the normalized training split and returns predictions for the
// normalized test features. fold_seed varies across (repeat, fold).
using FoldTrainer = std::function<Eigen::VectorXd(
    const Eigen::MatrixXd& Xtrain, const Eigen::VectorXd& ytrain, const Eigen::MatrixXd& Xtest,
    std::uint64_t fold_seed)>;

struct FoldResult {
  int repeat = 0;
  int fold = 0;
  double rmse = 0.0;
  double seconds = 0.0;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;

  void finalize() {
    const double m = static_cast<double>(folds.size());
    double acc = 0.0;
    for (const auto& f : folds) acc += f.rmse;
    mean_rmse = acc / m;
    double ss = 0.0;
    for (const auto& f : folds) ss += (f.rmse - mean_rmse) * (f.rmse - mean_rmse);
    std_rmse = folds.size() > 1 ? std::sqrt(ss / (m - 1.0)) : 0.0;
  }
};

inline CvResult cross_validate(const Dataset& ds, const FoldTrainer& trainer, int folds = 10,
                               int repeats = 2, std::uint64_t seed = 0, int threads = 1) {
  ds.validate();
  if (ds.n() < folds) throw TooFewPoints("cross_validate: fewer points than folds");
  struct Task {
    int repeat, fold;
    std::uint64_t fold_seed;
  };
  std::vector<Task> tasks;
  std::vector<std::vector<int>> assignments;
  for (int r = 0; r < repeats; ++r) {
    assignments.push_back(make_folds(ds.n(), folds, seed + 0x9e3779b9u * (r + 1)));
    for (int f = 0; f < folds; ++f)
      tasks.push_back({r, f, seed + 1000003ull * static_cast<std::uint64_t>(r * folds + f + 1)});
  }

  auto run_task = [&](const Task& t) -> FoldResult {
    const auto& fold_of = assignments[static_cast<std::size_t>(t.repeat)];
    std::vector<int> train_idx, test_idx;
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      if (fold_of[static_cast<std::size_t>(i)] == t.fold)
        test_idx.push_back(static_cast<int>(i));
      else
        train_idx.push_back(static_cast<int>(i));
    }
    Eigen::MatrixXd Xtr(train_idx.size(), ds.d()), Xte(test_idx.size(), ds.d());
    Eigen::VectorXd ytr(train_idx.size()), yte(test_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      Xtr.row(static_cast<Eigen::Index>(i)) = ds.X.row(train_idx[i]);
      ytr[static_cast<Eigen::Index>(i)] = ds.y[train_idx[i]];
    }
    for (std::size_t i = 0; i < test_idx.size(); ++i) {
      Xte.row(static_cast<Eigen::Index>(i)) = ds.X.row(test_idx[i]);
      yte[static_cast<Eigen::Index>(i)] = ds.y[test_idx[i]];
    }
    // normalization statistics from the training folds only
    Normalizer nz = Normalizer::fit(Xtr, ytr);
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXd pred = trainer(nz.transform_features(Xtr), nz.transform_targets(ytr),
                                   nz.transform_features(Xte), t.fold_seed);
    const auto t1 = std::chrono::steady_clock::now();
    Eigen::VectorXd resid = pred - nz.transform_targets(yte);
    FoldResult fr;
    fr.repeat = t.repeat;
    fr.fold = t.fold;
    fr.rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size()));
    fr.seconds = std::chrono::duration<double>(t1 - t0).count();
    return fr;
  };

  CvResult result;
  result.folds.resize(tasks.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) result.folds[i] = run_task(tasks[i]);
  } else {
    std::size_t next = 0;
    while (next < tasks.size()) {
      const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                      tasks.size() - next);
      std::vector<std::future<FoldResult>> futures;
      for (std::size_t b = 0; b < batch; ++b)
        futures.push_back(std::async(std::launch::async, run_task, tasks[next + b]));
      for (std::size_t b = 0; b < batch; ++b) result.folds[next + b] = futures[b].get();
      next += batch;
    }
  }
  result.finalize();
  return result;
}

}  // namespace projgp
