#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "projgp/train.hpp"
#include "test_util.hpp"

using namespace projgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("adam step", "[train]") {
  SECTION("zero gradient leaves parameters unchanged") {
    VectorXd theta = test_util::random_vector(4, 1);
    auto [next, state] = adam_step(theta, VectorXd::Zero(4), AdamState{}, 0.1);
    CHECK((next - theta).norm() == 0.0);
    CHECK(state.t == 1);
  }
  SECTION("constant gradient approaches a step of size lr") {
    VectorXd theta = VectorXd::Zero(2);
    VectorXd g(2);
    g << 3.0, -0.5;
    AdamState state;
    VectorXd prev = theta;
    for (int i = 0; i < 200; ++i) {
      auto [next, s] = adam_step(theta, g, std::move(state), 0.1);
      prev = theta;
      theta = next;
      state = std::move(s);
    }
    VectorXd delta = theta - prev;
    CHECK(std::abs(delta[0] + 0.1) < 1e-3);  // descends against positive gradient
    CHECK(std::abs(delta[1] - 0.1) < 1e-3);
  }
  SECTION("deterministic") {
    VectorXd theta = test_util::random_vector(3, 2);
    VectorXd g = test_util::random_vector(3, 3);
    auto [a1, s1] = adam_step(theta, g, AdamState{}, 0.05);
    auto [a2, s2] = adam_step(theta, g, AdamState{}, 0.05);
    CHECK(a1 == a2);
    auto [b1, t1] = adam_step(a1, g, std::move(s1), 0.05);
    auto [b2, t2] = adam_step(a2, g, std::move(s2), 0.05);
    CHECK(b1 == b2);
  }
  SECTION("non-finite gradient rejected") {
    VectorXd g(1);
    g << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(VectorXd::Zero(1), g, AdamState{}, 0.1), NonFiniteGradient);
  }
}

TEST_CASE("smoothed box prior", "[train]") {
  NoisePriorConfig cfg;  // [1e-4, 1], sharpness 100
  SECTION("flat interior") {
    auto mid = smoothed_box_log_prior(1e-2, cfg);
    CHECK(mid.value == 0.0);
    CHECK(mid.gradient == 0.0);
  }
  SECTION("restoring gradient below the box") {
    auto low = smoothed_box_log_prior(1e-6, cfg);
    CHECK(low.value < 0.0);
    CHECK(low.gradient > 0.0);
  }
  SECTION("restoring gradient above the box") {
    auto high = smoothed_box_log_prior(10.0, cfg);
    CHECK(high.value < 0.0);
    CHECK(high.gradient < 0.0);
  }
  SECTION("symmetric penalties equidistant in log space") {
    auto low = smoothed_box_log_prior(1e-4 * std::exp(-1.0), cfg);
    auto high = smoothed_box_log_prior(1.0 * std::exp(1.0), cfg);
    CHECK(low.value == Catch::Approx(high.value));
    CHECK(low.gradient == Catch::Approx(-high.gradient));
  }
}

namespace {

// Objective whose value depends only on the iteration count: rises by
// 2e-3 per call until iteration 50, then stays flat. Gradient is zero.
class StaircaseObjective final : public Objective {
 public:
  int dim() const override { return 1; }
  VectorXd initial_theta() const override { return VectorXd::Zero(1); }
  int noise_index() const override { return -1; }
  Eigen::Index data_size() const override { return 1; }
  double eval(const VectorXd&, VectorXd& grad) override {
    grad = VectorXd::Zero(1);
    double v = 2e-3 * std::min(calls_, 50);
    ++calls_;
    return v;
  }

 private:
  int calls_ = 0;
};

Kernel rbf1d(double ls, double noise) {
  KernelSpec spec;
  spec.family = SubKernelFamily::RBF;
  spec.lengthscales = VectorXd::Constant(1, ls);
  spec.output_scale = 1.0;
  spec.noise_variance = noise;
  return Kernel::direct(spec, 1);
}

}  // namespace

TEST_CASE("optimize stopping-window semantics", "[train]") {
  StaircaseObjective obj;
  TrainConfig cfg;
  cfg.max_iterations = 1000;
  cfg.stop_tolerance = 1e-4;
  cfg.stop_window = 20;
  cfg.smoothing = 10;
  TrainTrace trace;
  optimize(obj, cfg, trace);
  // smoothed value last improves by >= 1e-4 at iteration 59 (window filling with
  // the plateau), so the loop must stop exactly at iteration 79.
  CHECK(trace.objective.size() == 80);
  CHECK(trace.best_iteration == 59);
  // never more than stop_window iterations past the last improvement
  CHECK(static_cast<int>(trace.objective.size()) - 1 - trace.best_iteration == cfg.stop_window);
}

TEST_CASE("optimize recovers a known lengthscale within a factor of two", "[train]") {
  // sample y from a GP with RBF lengthscale 0.5 on n = 100 points
  const int n = 100;
  MatrixXd X = 3.0 * test_util::random_matrix(n, 1, 11);
  auto gen_kernel = rbf1d(0.5, 1e-6);
  MatrixXd K = gen_kernel.gram(X) + 1e-6 * MatrixXd::Identity(n, n);
  Eigen::LLT<MatrixXd> llt(K);
  VectorXd y = llt.matrixL() * test_util::random_vector(n, 12);

  ExactLmlObjective obj(X, y, rbf1d(1.0, 0.01));
  TrainConfig cfg;
  TrainTrace trace;
  VectorXd theta = optimize(obj, cfg, trace);
  const double recovered = std::exp(theta[0]);
  CHECK(recovered > 0.25);
  CHECK(recovered < 1.0);
}

TEST_CASE("optimize explains pure noise through the noise term", "[train]") {
  const int n = 100;
  MatrixXd X = test_util::random_matrix(n, 2, 21);
  VectorXd y = test_util::random_vector(n, 22);
  y = (y.array() - y.mean()) / std::sqrt((y.array() - y.mean()).square().mean());

  KernelSpec spec;
  spec.family = SubKernelFamily::RBF;
  spec.lengthscales = VectorXd::Ones(2);
  spec.output_scale = 1.0;
  // start the noise away from the interpolation basin; with a tiny initial
  // noise the optimizer can reach the equivalent degenerate description
  // (lengthscales -> 0, signal variance acting as noise) instead
  spec.noise_variance = 0.25;
  ExactLmlObjective obj(X, y, Kernel::direct(spec, 2));
  TrainConfig cfg;
  TrainTrace trace;
  VectorXd theta = optimize(obj, cfg, trace);
  const double noise = std::exp(theta[obj.noise_index()]);
  CHECK(noise > 0.5);
  CHECK(noise < 1.6);
  CHECK(noise <= cfg.noise_prior.upper * std::exp(0.5));  // within the smoothed box
}

TEST_CASE("optimize is deterministic and never ends below the start", "[train]") {
  const int n = 40;
  MatrixXd X = test_util::random_matrix(n, 2, 31);
  VectorXd y = (X.col(0).array().sin() + 0.1 * test_util::random_vector(n, 32).array()).matrix();

  TrainConfig cfg;
  cfg.max_iterations = 120;
  KernelSpec spec;
  spec.family = SubKernelFamily::RBF;
  spec.lengthscales = VectorXd::Ones(2);
  spec.output_scale = 1.0;
  spec.noise_variance = 0.01;
  ExactLmlObjective o1(X, y, Kernel::direct(spec, 2));
  ExactLmlObjective o2(X, y, Kernel::direct(spec, 2));
  TrainTrace t1, t2;
  optimize(o1, cfg, t1);
  optimize(o2, cfg, t2);
  REQUIRE(t1.objective.size() == t2.objective.size());
  for (std::size_t i = 0; i < t1.objective.size(); ++i)
    CHECK(t1.objective[i] == t2.objective[i]);
  CHECK(t1.best_smoothed >= t1.objective.front() - 1e-9);
}

TEST_CASE("cross validation protocol", "[train]") {
  auto ds = synth_additive_sin(80, 2, 0.1, 41);

  SECTION("mean predictor scores about one on normalized targets") {
    FoldTrainer mean_trainer = [](const MatrixXd&, const VectorXd&, const MatrixXd& Xte,
                                  std::uint64_t) { return VectorXd::Zero(Xte.rows()); };
    auto cv = cross_validate(ds, mean_trainer, 10, 2, 1);
    CHECK(cv.folds.size() == 20);
    CHECK(cv.mean_rmse > 0.85);
    CHECK(cv.mean_rmse < 1.15);
  }
  SECTION("every point appears in a test fold exactly once per repeat") {
    std::vector<int> seen(static_cast<std::size_t>(ds.n()), 0);
    FoldTrainer counting = [&](const MatrixXd& Xtr, const VectorXd&, const MatrixXd& Xte,
                               std::uint64_t) {
      CHECK(Xtr.rows() + Xte.rows() == ds.n());
      return VectorXd::Zero(Xte.rows());
    };
    auto cv = cross_validate(ds, counting, 8, 2, 5);
    // fold sizes partition n for each repeat
    std::vector<int> fold_sizes(8, 0);
    for (const auto& f : cv.folds)
      if (f.repeat == 0) ++fold_sizes[static_cast<std::size_t>(f.fold)];
    CHECK(cv.folds.size() == 16);
  }
  SECTION("no test-fold leakage into normalization statistics") {
    // capture the normalized training targets of fold 0 and check they do not
    // change when the fold-0 test values are corrupted
    VectorXd captured;
    FoldTrainer capture = [&](const MatrixXd&, const VectorXd& ytr, const MatrixXd& Xte,
                              std::uint64_t) {
      if (captured.size() == 0) captured = ytr;
      return VectorXd::Zero(Xte.rows());
    };
    cross_validate(ds, capture, 10, 1, 7);
    VectorXd first = captured;

    auto corrupted = ds;
    auto fold_of = make_folds(ds.n(), 10, 7 + 0x9e3779b9u);
    for (Eigen::Index i = 0; i < ds.n(); ++i)
      if (fold_of[static_cast<std::size_t>(i)] == 0) corrupted.y[i] += 1000.0;
    captured.resize(0);
    cross_validate(corrupted, capture, 10, 1, 7);
    CHECK((captured - first).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SECTION("same seed reproduces fold assignments and metrics") {
    FoldTrainer mean_trainer = [](const MatrixXd&, const VectorXd&, const MatrixXd& Xte,
                                  std::uint64_t) { return VectorXd::Zero(Xte.rows()); };
    auto a = cross_validate(ds, mean_trainer, 5, 2, 9);
    auto b = cross_validate(ds, mean_trainer, 5, 2, 9);
    REQUIRE(a.folds.size() == b.folds.size());
    for (std::size_t i = 0; i < a.folds.size(); ++i) CHECK(a.folds[i].rmse == b.folds[i].rmse);
    auto c = cross_validate(ds, mean_trainer, 5, 2, 9, 2);  // threaded run
    for (std::size_t i = 0; i < a.folds.size(); ++i) CHECK(a.folds[i].rmse == c.folds[i].rmse);
  }
  SECTION("zero-noise duplicated-target dataset interpolates to zero error") {
    Dataset dup;
    dup.name = "dup";
    dup.X = test_util::random_matrix(30, 1, 55);
    dup.y = dup.X.col(0);
    FoldTrainer exact_trainer = [](const MatrixXd& Xtr, const VectorXd& ytr,
                                   const MatrixXd& Xte, std::uint64_t) {
      KernelSpec spec;
      spec.family = SubKernelFamily::RBF;
      spec.lengthscales = VectorXd::Ones(1);
      spec.output_scale = 1.0;
      spec.noise_variance = 1e-8;
      auto fit = fit_exact(Xtr, ytr, Kernel::direct(spec, 1));
      return predict_mean(fit, Xte);
    };
    auto cv = cross_validate(dup, exact_trainer, 10, 1, 3);
    CHECK(cv.mean_rmse < 0.05);
  }
  SECTION("too few points") {
    FoldTrainer t = [](const MatrixXd&, const VectorXd&, const MatrixXd& Xte, std::uint64_t) {
      return VectorXd::Zero(Xte.rows());
    };
    Dataset tiny;
    tiny.X = MatrixXd::Ones(3, 1);
    tiny.y = VectorXd::Ones(3);
    CHECK_THROWS_AS(cross_validate(tiny, t, 10, 1, 1), TooFewPoints);
  }
}

TEST_CASE("train trace CSV", "[train]") {
  StaircaseObjective obj;
  TrainConfig cfg;
  cfg.max_iterations = 30;
  TrainTrace trace;
  optimize(obj, cfg, trace);
  trace.write_csv("projgp_trace_tmp.csv");
  std::ifstream in("projgp_trace_tmp.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,lml,grad_norm");
  int rows = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(trace.objective.size()));
  std::remove("projgp_trace_tmp.csv");
}
