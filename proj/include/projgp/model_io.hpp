#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "projgp/errors.hpp"
#include "projgp/models.hpp"

namespace projgp {

// Model files: 8-byte magic, little-endian u64 header length, JSON header
// (config, hyperparameters, normalizer, projections, block directory), then
// contiguous little-endian f64 blocks.
namespace model_io_detail {

constexpr char kMagic[8] = {'P', 'R', 'O', 'J', 'G', 'P', '0', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64_block(std::ostream& out, const double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(data[i]);
      write_u64(out, bits);
    }
  }
}

inline void read_f64_block(std::istream& in, double* data, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) data[i] = std::bit_cast<double>(read_u64(in));
  }
}

}  // namespace model_io_detail

inline void save_model(const TrainedModel& model, const std::string& path) {
  nlohmann::json header;
  header["format"] = "projgp-model";
  header["version"] = 1;
  header["model"] = model.config.to_json();
  header["normalizer"] = model.normalizer.to_json();

  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> blocks;
  Eigen::MatrixXd theta, alpha, L, ytr;
  blocks.push_back({"X_train", &model.X_train});
  ytr = model.y_train;
  blocks.push_back({"y_train", &ytr});
  if (model.config.mean_baseline) {
    header["state"] = "mean";
  } else if (model.exact.has_value()) {
    header["state"] = "exact";
    header["theta"] = std::vector<double>();
    Eigen::VectorXd t = model.exact->kernel.pack();
    header["theta"] = std::vector<double>(t.data(), t.data() + t.size());
    if (model.exact->kernel.structure() == KernelStructure::Projected ||
        model.exact->kernel.structure() == KernelStructure::ProjectedPrescale)
      header["projections"] = model.exact->kernel.projections().to_json();
    alpha = model.exact->alpha;
    blocks.push_back({"alpha", &alpha});
    L = model.exact->factor.L;
    blocks.push_back({"cholesky_factor", &L});
    header["jitter"] = model.exact->factor.jitter;
  } else if (model.ski.has_value()) {
    header["state"] = "ski";
    Eigen::VectorXd t = model.ski->kernel.pack();
    header["theta"] = std::vector<double>(t.data(), t.data() + t.size());
    header["projections"] = model.ski->kernel.projections().to_json();
    alpha = model.ski->alpha_bar;
    blocks.push_back({"alpha", &alpha});
  } else {
    throw ConfigError("save_model: model has no fitted state");
  }

  auto& dir = header["blocks"] = nlohmann::json::array();
  for (const auto& [name, mat] : blocks)
    dir.push_back({{"name", name}, {"rows", mat->rows()}, {"cols", mat->cols()}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_model: cannot open " + path);
  out.write(model_io_detail::kMagic, 8);
  const std::string htext = header.dump();
  model_io_detail::write_u64(out, htext.size());
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& [name, mat] : blocks)
    model_io_detail::write_f64_block(out, mat->data(), static_cast<std::size_t>(mat->size()));
  if (!out) throw ConfigError("save_model: write failed for " + path);
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, model_io_detail::kMagic, 8) != 0)
    throw ParseError("load_model: bad magic in " + path, 0, 0);
  const std::uint64_t hlen = model_io_detail::read_u64(in);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  nlohmann::json header = nlohmann::json::parse(htext);

  TrainedModel model;
  model.config = ModelConfig::from_json(header.at("model"));
  model.normalizer = Normalizer::from_json(header.at("normalizer"));

  std::vector<Eigen::MatrixXd> mats;
  for (const auto& b : header.at("blocks")) {
    Eigen::MatrixXd M(b.at("rows").get<Eigen::Index>(), b.at("cols").get<Eigen::Index>());
    model_io_detail::read_f64_block(in, M.data(), static_cast<std::size_t>(M.size()));
    mats.push_back(std::move(M));
  }
  if (!in) throw ParseError("load_model: truncated file " + path, 0, 0);
  model.X_train = mats.at(0);
  model.y_train = mats.at(1).col(0);

  const std::string state = header.at("state").get<std::string>();
  if (state == "mean") return model;

  auto theta_vec = header.at("theta").get<std::vector<double>>();
  Eigen::VectorXd theta =
      Eigen::Map<Eigen::VectorXd>(theta_vec.data(), static_cast<Eigen::Index>(theta_vec.size()));
  const int d = static_cast<int>(model.X_train.cols());
  Kernel kernel = [&] {
    if (model.config.structure == KernelStructure::Projected ||
        model.config.structure == KernelStructure::ProjectedPrescale) {
      auto P = ProjectionSet::from_json(header.at("projections"));
      KernelSpec spec;
      spec.family = model.config.family;
      if (model.config.structure == KernelStructure::Projected) {
        spec.lengthscales = Eigen::VectorXd::Ones(P.total_degree());
        return Kernel::projected(spec, std::move(P));
      }
      spec.lengthscales = Eigen::VectorXd::Ones(d);
      return Kernel::projected_prescale(spec, std::move(P));
    }
    KernelSpec spec;
    spec.family = model.config.family;
    spec.lengthscales = Eigen::VectorXd::Ones(d);
    return model.config.structure == KernelStructure::Gam ? Kernel::gam(spec, d)
                                                          : Kernel::direct(spec, d);
  }();
  kernel.unpack(theta);

  if (state == "exact") {
    ExactFit fit{model.X_train,
                 linalg::CholeskyFactor{mats.at(3), header.at("jitter").get<double>()},
                 mats.at(2).col(0), kernel};
    model.exact.emplace(std::move(fit));
  } else if (state == "ski") {
    // rebuild grids, interpolation and grid means from the stored coordinates
    auto fit = fit_ski(model.X_train, model.y_train, kernel, model.config.m,
                       linalg::CGConfig{1e-6, 1000, linalg::Preconditioner::None});
    // replace the CG solution with the persisted one for bit-exact predictions
    fit.alpha_bar = mats.at(2).col(0);
    Eigen::VectorXd scales = fit.scales();
    for (std::size_t j = 0; j < fit.parts.size(); ++j)
      fit.grid_mean[j] = scales[static_cast<Eigen::Index>(j)] *
                         fit.parts[j].T->apply(fit.parts[j].W.apply_transpose(fit.alpha_bar));
    model.ski.emplace(std::move(fit));
  } else {
    throw ParseError("load_model: unknown state '" + state + "'", 0, 0);
  }
  return model;
}

}  // namespace projgp
