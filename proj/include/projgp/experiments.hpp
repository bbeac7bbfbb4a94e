#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "projgp/analysis.hpp"
#include "projgp/data.hpp"
#include "projgp/models.hpp"
#include "projgp/train.hpp"

namespace projgp {

namespace experiments_detail {
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 12);  // short id
}
}  // namespace experiments_detail

// Reproducible experiment record: config echo, run id, seed, timings, results.
struct ExperimentReport {
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string run_id;
  double wall_seconds = 0.0;
  nlohmann::json results;

  void stamp() {
    nlohmann::json key = config;
    key["seed"] = seed;
    run_id = experiments_detail::fnv1a_hex(key.dump());
  }

  nlohmann::json to_json() const {
    return {{"config", config},
            {"seed", seed},
            {"run_id", run_id},
            {"wall_seconds", wall_seconds},
            {"results", results}};
  }

  void write_json(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("ExperimentReport: cannot open " + path);
    out << to_json().dump(2) << "\n";
  }
};

// ---- Cross-validation experiment -------------------------------------------------

struct CvExperiment {
  CvResult cv;
  ExperimentReport report;
};

inline CvExperiment run_cv(const Dataset& ds, const ModelConfig& model, const TrainConfig& tc,
                           int folds, int repeats, std::uint64_t seed, int threads,
                           const std::string& out_prefix = "") {
  const auto t0 = std::chrono::steady_clock::now();
  FoldTrainer trainer = [&](const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
                            const Eigen::MatrixXd& Xte, std::uint64_t fold_seed) {
    return zoo_train_predict(Xtr, ytr, Xte, model, tc, fold_seed);
  };
  CvExperiment out;
  out.cv = cross_validate(ds, trainer, folds, repeats, seed, threads);
  out.report.config = {{"experiment", "cv"},
                       {"dataset", ds.name},
                       {"n", ds.n()},
                       {"d", ds.d()},
                       {"folds", folds},
                       {"repeats", repeats},
                       {"model", model.to_json()}};
  out.report.seed = seed;
  out.report.stamp();
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report.results = {{"mean_rmse", out.cv.mean_rmse},
                        {"std_rmse", out.cv.std_rmse},
                        {"two_std", 2.0 * out.cv.std_rmse}};

  if (!out_prefix.empty()) {
    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw ConfigError("run_cv: cannot open " + out_prefix + ".csv");
    csv << "repeat,fold,rmse,seconds\n";
    csv.precision(17);
    for (const auto& f : out.cv.folds)
      csv << f.repeat << "," << f.fold << "," << f.rmse << "," << f.seconds << "\n";
    out.report.write_json(out_prefix + ".json");
  }
  return out;
}

// ---- J ablation -------------------------------------------------------------------

struct AblationRow {
  int J;
  double mean_rmse;
  double two_std;
};

struct AblationExperiment {
  std::vector<AblationRow> rows;
  ExperimentReport report;
};

inline AblationExperiment run_ablate_j(const Dataset& ds, const ModelConfig& base,
                                       std::vector<int> J_list, const TrainConfig& tc, int folds,
                                       int repeats, std::uint64_t seed, int threads,
                                       const std::string& out_prefix = "") {
  if (J_list.empty()) throw ConfigError("ablate-j: J list is empty");
  std::vector<int> unique_J;
  std::set<int> seen;
  for (int J : J_list) {
    if (seen.insert(J).second)
      unique_J.push_back(J);
    else
      std::cerr << "warning: duplicate J = " << J << " ignored\n";
  }
  std::sort(unique_J.begin(), unique_J.end());

  const auto t0 = std::chrono::steady_clock::now();
  AblationExperiment out;
  for (int J : unique_J) {
    ModelConfig cfg = base;
    cfg.set_J(J);
    auto cv = run_cv(ds, cfg, tc, folds, repeats, seed, threads);
    out.rows.push_back({J, cv.cv.mean_rmse, 2.0 * cv.cv.std_rmse});
  }
  out.report.config = {{"experiment", "ablate-j"},
                       {"dataset", ds.name},
                       {"model", base.to_json()},
                       {"J_list", unique_J},
                       {"folds", folds},
                       {"repeats", repeats}};
  out.report.seed = seed;
  out.report.stamp();
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto& rows = out.report.results["rows"] = nlohmann::json::array();
  for (const auto& r : out.rows)
    rows.push_back({{"J", r.J}, {"mean_rmse", r.mean_rmse}, {"two_std", r.two_std}});

  if (!out_prefix.empty()) {
    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw ConfigError("ablate-j: cannot open " + out_prefix + ".csv");
    csv << "J,mean_rmse,two_std\n";
    csv.precision(17);
    for (const auto& r : out.rows) csv << r.J << "," << r.mean_rmse << "," << r.two_std << "\n";
    out.report.write_json(out_prefix + ".json");
  }
  return out;
}

// ---- Expected-kernel convergence ---------------------------------------------------

inline ExperimentReport run_kernel_convergence(SubKernelFamily family,
                                               const std::vector<long>& J_list,
                                               std::uint64_t seed,
                                               const std::string& out_prefix = "",
                                               std::vector<double> lags = {0.0, 0.25, 0.5, 1.0,
                                                                           2.0, 5.0},
                                               int d = 10) {
  const auto t0 = std::chrono::steady_clock::now();
  auto rep = convergence_report(family, d, J_list, lags, seed);
  ExperimentReport report;
  report.config = {{"experiment", "kernel-convergence"},
                   {"family", family_name(family)},
                   {"J_list", J_list},
                   {"lags", lags},
                   {"d", d}};
  report.seed = seed;
  report.stamp();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report.results["slope"] = rep.slope;
  double max_err_last = rep.abs_error.row(rep.abs_error.rows() - 1).maxCoeff();
  report.results["max_abs_error_at_largest_J"] = max_err_last;
  if (!out_prefix.empty()) {
    rep.write_csv(out_prefix + ".csv");
    report.write_json(out_prefix + ".json");
  }
  return report;
}

// ---- Runtime scaling benchmark -------------------------------------------------------

struct BenchRow {
  int n;
  double ski_seconds;
  double cholesky_seconds;
};

struct BenchExperiment {
  std::vector<BenchRow> rows;
  double ski_slope = 0.0;
  double cholesky_slope = 0.0;
  ExperimentReport report;
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t k = x.size();
  double mx = 0, my = 0;
  std::vector<double> lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
    mx += lx[i];
    my += ly[i];
  }
  mx /= k;
  my /= k;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < k; ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

// Fixed-iteration training timings: SKI with Gaussian 1-D projections against
// Cholesky-based RBF-ARD, on the additive-sin generator.
inline BenchExperiment run_bench_runtime(const std::vector<int>& n_list, int d,
                                         std::uint64_t seed, int iterations = 120, int J = 20,
                                         int m = 512, const std::string& out_prefix = "") {
  if (n_list.empty()) throw ConfigError("bench-runtime: n list is empty");
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig tc;
  tc.max_iterations = iterations;
  tc.stop_tolerance = 0.0;  // fixed iteration count, never stop early

  BenchExperiment out;
  for (int n : n_list) {
    auto ds = synth_additive_sin(n, d, 0.01, seed + static_cast<std::uint64_t>(n));
    Normalizer nz = Normalizer::fit(ds.X, ds.y);
    Eigen::MatrixXd Xn = nz.transform_features(ds.X);
    Eigen::VectorXd yn = nz.transform_targets(ds.y);

    ModelConfig ski_cfg = ModelConfig::from_name("rpa-gp-1");
    ski_cfg.inference = InferenceKind::Ski;
    ski_cfg.m = m;
    ski_cfg.set_J(J);
    Kernel ski_kernel = make_zoo_kernel(ski_cfg, d, seed + 1);
    SkiTrainConfig scfg;
    scfg.m = m;
    scfg.seed = seed + 2;
    auto ts0 = std::chrono::steady_clock::now();
    {
      SkiLmlObjective obj(Xn, yn, ski_kernel, scfg);
      TrainTrace trace;
      optimize(obj, tc, trace);
    }
    auto ts1 = std::chrono::steady_clock::now();

    ModelConfig chol_cfg = ModelConfig::from_name("rbf-ard");
    Kernel chol_kernel = make_zoo_kernel(chol_cfg, d, seed + 3);
    auto tc0 = std::chrono::steady_clock::now();
    {
      ExactLmlObjective obj(Xn, yn, chol_kernel);
      TrainTrace trace;
      optimize(obj, tc, trace);
    }
    auto tc1 = std::chrono::steady_clock::now();

    out.rows.push_back({n, std::chrono::duration<double>(ts1 - ts0).count(),
                        std::chrono::duration<double>(tc1 - tc0).count()});
  }
  if (out.rows.size() >= 2) {
    std::vector<double> ns, ski_t, chol_t;
    for (const auto& r : out.rows) {
      ns.push_back(r.n);
      ski_t.push_back(r.ski_seconds);
      chol_t.push_back(r.cholesky_seconds);
    }
    out.ski_slope = loglog_slope(ns, ski_t);
    out.cholesky_slope = loglog_slope(ns, chol_t);
  }

  out.report.config = {{"experiment", "bench-runtime"}, {"n_list", n_list}, {"d", d},
                       {"iterations", iterations},      {"J", J},           {"m", m}};
  out.report.seed = seed;
  out.report.stamp();
  out.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.report.results["ski_slope"] = out.ski_slope;
  out.report.results["cholesky_slope"] = out.cholesky_slope;
  auto& rows = out.report.results["rows"] = nlohmann::json::array();
  for (const auto& r : out.rows)
    rows.push_back({{"n", r.n},
                    {"ski_seconds", r.ski_seconds},
                    {"cholesky_seconds", r.cholesky_seconds}});

  if (!out_prefix.empty()) {
    std::ofstream csv(out_prefix + ".csv");
    if (!csv) throw ConfigError("bench-runtime: cannot open " + out_prefix + ".csv");
    csv << "n,ski_seconds,cholesky_seconds\n";
    csv.precision(17);
    for (const auto& r : out.rows)
      csv << r.n << "," << r.ski_seconds << "," << r.cholesky_seconds << "\n";
    out.report.write_json(out_prefix + ".json");
  }
  return out;
}

}  // namespace projgp
