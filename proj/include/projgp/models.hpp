#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "projgp/errors.hpp"
#include "projgp/gp_exact.hpp"
#include "projgp/gp_ski.hpp"
#include "projgp/kernels.hpp"
#include "projgp/projections.hpp"
#include "projgp/train.hpp"

namespace projgp {

enum class InferenceKind { Exact, Ski };

// Model zoo configuration. Names map onto fixed (family, projection method,
// degree schedule, prescale, inference) tuples; J, degrees, m and inference
// stay overridable from the CLI.
struct ModelConfig {
  std::string name;
  SubKernelFamily family = SubKernelFamily::RBF;
  KernelStructure structure = KernelStructure::Direct;
  ProjectionMethod method = ProjectionMethod::Gaussian;
  std::vector<int> degrees;  // empty for direct / gam
  InferenceKind inference = InferenceKind::Exact;
  int m = 512;
  bool mean_baseline = false;
  double init_noise = 0.01;

  int J() const { return static_cast<int>(degrees.size()); }

  static std::vector<std::string> zoo_names() {
    return {"rbf-ard",  "imq-ard",  "gam",        "single-rp",  "rpa-gp-1", "rpa-gp-2",
            "rpa-gp-3", "dpa-gp",   "rpa-gp-ard", "dpa-gp-ard", "dpa-gp-ard-ski", "mean"};
  }

  static ModelConfig from_name(const std::string& name) {
    ModelConfig c;
    c.name = name;
    auto ones = [](int J) { return std::vector<int>(static_cast<std::size_t>(J), 1); };
    if (name == "mean") {
      c.mean_baseline = true;
    } else if (name == "rbf-ard") {
      c.family = SubKernelFamily::RBF;
      c.structure = KernelStructure::Direct;
    } else if (name == "imq-ard") {
      c.family = SubKernelFamily::IMQ;
      c.structure = KernelStructure::Direct;
    } else if (name == "gam") {
      c.structure = KernelStructure::Gam;
    } else if (name == "single-rp") {
      c.structure = KernelStructure::Projected;
      c.method = ProjectionMethod::Gaussian;
      c.degrees = ones(1);
    } else if (name == "rpa-gp-1") {
      c.structure = KernelStructure::Projected;
      c.method = ProjectionMethod::Gaussian;
      c.degrees = ones(20);
    } else if (name == "rpa-gp-2") {
      c.structure = KernelStructure::Projected;
      c.method = ProjectionMethod::Gaussian;
      for (int r = 0; r < 4; ++r) c.degrees.push_back(1);
      for (int r = 0; r < 4; ++r) c.degrees.push_back(2);
      for (int r = 0; r < 4; ++r) c.degrees.push_back(3);
    } else if (name == "rpa-gp-3") {
      c.structure = KernelStructure::Projected;
      c.method = ProjectionMethod::Gaussian;
      for (int r = 0; r < 3; ++r) c.degrees.push_back(1);
      for (int r = 0; r < 3; ++r) c.degrees.push_back(2);
      for (int r = 0; r < 3; ++r) c.degrees.push_back(3);
      for (int r = 0; r < 2; ++r) c.degrees.push_back(4);
      for (int r = 0; r < 2; ++r) c.degrees.push_back(5);
      c.degrees.push_back(6);
    } else if (name == "dpa-gp") {
      c.structure = KernelStructure::Projected;
      c.method = ProjectionMethod::Diverse;
      c.degrees = ones(20);
    } else if (name == "rpa-gp-ard") {
      c.structure = KernelStructure::ProjectedPrescale;
      c.method = ProjectionMethod::Gaussian;
      c.degrees = ones(20);
    } else if (name == "dpa-gp-ard") {
      c.structure = KernelStructure::ProjectedPrescale;
      c.method = ProjectionMethod::Diverse;
      c.degrees = ones(20);
    } else if (name == "dpa-gp-ard-ski") {
      c.structure = KernelStructure::ProjectedPrescale;
      c.method = ProjectionMethod::Diverse;
      c.degrees = ones(20);
      c.inference = InferenceKind::Ski;
    } else {
      throw ConfigError("unknown model '" + name + "'");
    }
    return c;
  }

  void set_J(int J) {
    if (structure != KernelStructure::Projected &&
        structure != KernelStructure::ProjectedPrescale)
      throw ConfigError("--J applies only to projected models");
    if (J < 1) throw ConfigError("--J must be >= 1");
    degrees.assign(static_cast<std::size_t>(J), 1);
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["family"] = family_name(family);
    j["structure"] = structure_name(structure);
    j["projection_method"] = method == ProjectionMethod::Gaussian ? "gaussian" : "diverse";
    j["degrees"] = degrees;
    j["inference"] = inference == InferenceKind::Exact ? "exact" : "ski";
    j["m"] = m;
    j["mean_baseline"] = mean_baseline;
    return j;
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c = from_name(j.at("name").get<std::string>());
    c.family = family_from_name(j.at("family").get<std::string>());
    c.degrees = j.at("degrees").get<std::vector<int>>();
    c.method = j.at("projection_method").get<std::string>() == "diverse"
                   ? ProjectionMethod::Diverse
                   : ProjectionMethod::Gaussian;
    c.inference = j.at("inference").get<std::string>() == "ski" ? InferenceKind::Ski
                                                                : InferenceKind::Exact;
    c.m = j.at("m").get<int>();
    return c;
  }
};

// Kernel at the protocol's initial hyperparameters (lengthscales 1, output
// scale 1, noise 0.01 on normalized data).
inline Kernel make_zoo_kernel(const ModelConfig& cfg, int d, std::uint64_t seed) {
  if (cfg.mean_baseline) throw ConfigError("mean baseline has no kernel");
  KernelSpec spec;
  spec.family = cfg.family;
  spec.output_scale = 1.0;
  spec.noise_variance = cfg.init_noise;
  switch (cfg.structure) {
    case KernelStructure::Direct:
      spec.lengthscales = Eigen::VectorXd::Ones(d);
      return Kernel::direct(spec, d);
    case KernelStructure::Gam:
      spec.lengthscales = Eigen::VectorXd::Ones(d);
      return Kernel::gam(spec, d);
    case KernelStructure::Projected:
    case KernelStructure::ProjectedPrescale: {
      if (cfg.degrees.empty()) throw ConfigError("projected model needs a degree schedule");
      ProjectionSet P;
      if (cfg.method == ProjectionMethod::Gaussian) {
        P = sample_gaussian(cfg.J(), cfg.degrees, d, seed);
      } else {
        for (int dj : cfg.degrees)
          if (dj != 1)
            throw InvalidDegrees("diverse projections support only degree-1 schedules");
        P = diverse_directions(cfg.J(), d, seed);
      }
      if (cfg.structure == KernelStructure::ProjectedPrescale) {
        spec.lengthscales = Eigen::VectorXd::Ones(d);
        return Kernel::projected_prescale(spec, P);
      }
      spec.lengthscales = Eigen::VectorXd::Ones(P.total_degree());
      return Kernel::projected(spec, P);
    }
  }
  throw ConfigError("unreachable model structure");
}

// Fitted model plus everything prediction and persistence need.
struct TrainedModel {
  ModelConfig config;
  Normalizer normalizer;
  std::optional<ExactFit> exact;
  std::optional<SkiFit> ski;
  Eigen::MatrixXd X_train;  // normalized features (SKI covering refits)
  Eigen::VectorXd y_train;  // normalized targets
  TrainTrace trace;
};

struct SkiRunConfigs {
  linalg::CGConfig cg_predict{1e-6, 1000, linalg::Preconditioner::None};
  SkiTrainConfig train;
};

// Train on normalized data and return predictions for normalized test inputs.
inline Eigen::VectorXd zoo_train_predict(const Eigen::MatrixXd& Xtr, const Eigen::VectorXd& ytr,
                                         const Eigen::MatrixXd& Xte, const ModelConfig& cfg,
                                         const TrainConfig& tc, std::uint64_t seed,
                                         TrainTrace* trace_out = nullptr) {
  if (cfg.mean_baseline) return Eigen::VectorXd::Zero(Xte.rows());
  Kernel kernel = make_zoo_kernel(cfg, static_cast<int>(Xtr.cols()), seed);
  TrainTrace trace;
  if (cfg.inference == InferenceKind::Exact) {
    ExactLmlObjective obj(Xtr, ytr, kernel);
    Eigen::VectorXd theta = optimize(obj, tc, trace);
    kernel.unpack(theta);
    auto fit = fit_exact(Xtr, ytr, kernel);
    if (trace_out) *trace_out = trace;
    return predict_mean(fit, Xte);
  }
  SkiTrainConfig scfg;
  scfg.m = cfg.m;
  scfg.seed = seed + 17;
  SkiLmlObjective obj(Xtr, ytr, kernel, scfg);
  Eigen::VectorXd theta = optimize(obj, tc, trace);
  kernel.unpack(theta);
  if (trace_out) *trace_out = trace;
  linalg::CGConfig cgp{1e-6, 1000, linalg::Preconditioner::None};
  try {
    auto fit = fit_ski(Xtr, ytr, kernel, cfg.m, cgp);
    return predict_ski(fit, Xte);
  } catch (const OutOfBounds&) {
    auto fit = fit_ski_covering(Xtr, ytr, kernel, cfg.m, Xte, cgp);
    return predict_ski(fit, Xte);
  }
}

// Full fit for persistence / the fit & predict CLI verbs.
inline TrainedModel fit_model(const Dataset& ds, const ModelConfig& cfg, const TrainConfig& tc,
                              std::uint64_t seed) {
  ds.validate();
  TrainedModel model;
  model.config = cfg;
  model.normalizer = Normalizer::fit(ds.X, ds.y);
  model.X_train = model.normalizer.transform_features(ds.X);
  model.y_train = model.normalizer.transform_targets(ds.y);
  if (cfg.mean_baseline) return model;
  Kernel kernel = make_zoo_kernel(cfg, static_cast<int>(ds.d()), seed);
  if (cfg.inference == InferenceKind::Exact) {
    ExactLmlObjective obj(model.X_train, model.y_train, kernel);
    Eigen::VectorXd theta = optimize(obj, tc, model.trace);
    kernel.unpack(theta);
    model.exact.emplace(fit_exact(model.X_train, model.y_train, kernel));
  } else {
    SkiTrainConfig scfg;
    scfg.m = cfg.m;
    scfg.seed = seed + 17;
    SkiLmlObjective obj(model.X_train, model.y_train, kernel, scfg);
    Eigen::VectorXd theta = optimize(obj, tc, model.trace);
    kernel.unpack(theta);
    model.ski.emplace(fit_ski(model.X_train, model.y_train, kernel, cfg.m,
                              linalg::CGConfig{1e-6, 1000, linalg::Preconditioner::None}));
  }
  return model;
}

// Predictions in the original target units.
inline Eigen::VectorXd predict_model(const TrainedModel& model, const Eigen::MatrixXd& Xraw) {
  if (Xraw.cols() != model.X_train.cols())
    throw DimensionMismatch("predict: data has " + std::to_string(Xraw.cols()) +
                            " features, model expects " + std::to_string(model.X_train.cols()));
  Eigen::MatrixXd Xn = model.normalizer.transform_features(Xraw);
  Eigen::VectorXd mean_n;
  if (model.config.mean_baseline) {
    mean_n = Eigen::VectorXd::Zero(Xn.rows());
  } else if (model.exact.has_value()) {
    mean_n = predict_mean(*model.exact, Xn);
  } else if (model.ski.has_value()) {
    try {
      mean_n = predict_ski(*model.ski, Xn);
    } catch (const OutOfBounds&) {
      auto refit = fit_ski_covering(model.X_train, model.y_train, model.ski->kernel,
                                    model.config.m, Xn, model.ski->cg);
      mean_n = predict_ski(refit, Xn);
    }
  } else {
    throw ConfigError("predict: model has no fitted state");
  }
  return model.normalizer.inverse_targets(mean_n);
}

}  // namespace projgp
