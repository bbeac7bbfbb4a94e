#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "projgp/errors.hpp"

namespace projgp {

struct Dataset {
  std::string name;
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }

  void validate() const {
    if (X.rows() < 1 || X.cols() < 1) throw ConfigError("Dataset: empty data");
    if (X.rows() != y.size()) throw DimensionMismatch("Dataset: X rows and y length differ");
    if (!X.allFinite() || !y.allFinite())
      throw NonFiniteValue("Dataset: non-finite value after ingestion");
  }
};

// Z-score normalization fitted on a training split. Constant features keep
// std 1 so the transform stays invertible.
struct Normalizer {
  Eigen::VectorXd feature_mean, feature_std;
  double target_mean = 0.0, target_std = 1.0;

  static Normalizer fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Normalizer nz;
    const double n = static_cast<double>(X.rows());
    nz.feature_mean = X.colwise().mean();
    Eigen::MatrixXd centered = X.rowwise() - nz.feature_mean.transpose();
    nz.feature_std = (centered.array().square().colwise().sum() / n).sqrt();
    for (Eigen::Index i = 0; i < nz.feature_std.size(); ++i)
      if (nz.feature_std[i] < 1e-12) nz.feature_std[i] = 1.0;
    nz.target_mean = y.mean();
    nz.target_std = std::sqrt((y.array() - nz.target_mean).square().sum() / n);
    if (nz.target_std < 1e-12) nz.target_std = 1.0;
    return nz;
  }

  Eigen::MatrixXd transform_features(const Eigen::MatrixXd& X) const {
    return (X.rowwise() - feature_mean.transpose()).array().rowwise() /
           feature_std.transpose().array();
  }
  Eigen::VectorXd transform_targets(const Eigen::VectorXd& y) const {
    return (y.array() - target_mean) / target_std;
  }
  Eigen::VectorXd inverse_targets(const Eigen::VectorXd& yn) const {
    return yn.array() * target_std + target_mean;
  }

  nlohmann::json to_json() const {
    return {{"feature_mean", std::vector<double>(feature_mean.data(), feature_mean.data() + feature_mean.size())},
            {"feature_std", std::vector<double>(feature_std.data(), feature_std.data() + feature_std.size())},
            {"target_mean", target_mean},
            {"target_std", target_std}};
  }
  static Normalizer from_json(const nlohmann::json& j) {
    Normalizer nz;
    auto fm = j.at("feature_mean").get<std::vector<double>>();
    auto fs = j.at("feature_std").get<std::vector<double>>();
    nz.feature_mean = Eigen::Map<Eigen::VectorXd>(fm.data(), static_cast<Eigen::Index>(fm.size()));
    nz.feature_std = Eigen::Map<Eigen::VectorXd>(fs.data(), static_cast<Eigen::Index>(fs.size()));
    nz.target_mean = j.at("target_mean").get<double>();
    nz.target_std = j.at("target_std").get<double>();
    return nz;
  }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, delim)) cells.push_back(cell);
  if (!line.empty() && line.back() == delim) cells.push_back("");
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end == begin) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  auto e = s.find_last_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// CSV loader: header autodetected from a non-numeric first row unless forced.
// target_column is a column name (with header) or a 0-based index.
inline Dataset load_csv(const std::string& path, const std::string& target_column,
                        char delimiter = ',', std::optional<bool> header_flag = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ConfigError("load_csv: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ParseError("load_csv: empty file " + path, 0, 0);

  auto first = detail::split_line(lines[0], delimiter);
  bool has_header;
  if (header_flag.has_value()) {
    has_header = *header_flag;
  } else {
    has_header = false;
    for (const auto& cell : first) {
      double v;
      if (!detail::parse_double(detail::trim(cell), v)) {
        has_header = true;
        break;
      }
    }
  }

  std::vector<std::string> columns;
  std::size_t data_start = 0;
  if (has_header) {
    for (auto& c : first) columns.push_back(detail::trim(c));
    data_start = 1;
  } else {
    for (std::size_t i = 0; i < first.size(); ++i) columns.push_back("col" + std::to_string(i));
  }

  int target_idx = -1;
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == target_column) target_idx = static_cast<int>(i);
  if (target_idx < 0) {
    double idx;
    if (detail::parse_double(target_column, idx) && idx >= 0 &&
        idx < static_cast<double>(columns.size()))
      target_idx = static_cast<int>(idx);
  }
  if (target_idx < 0)
    throw MissingTarget("load_csv: target column '" + target_column + "' not found");

  const std::size_t n_rows = lines.size() - data_start;
  const std::size_t n_cols = columns.size();
  if (n_rows == 0) throw ParseError("load_csv: no data rows", 0, 0);
  if (n_cols < 2) throw ConfigError("load_csv: need at least one feature and one target column");

  Dataset ds;
  ds.name = path;
  ds.X.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(n_cols - 1));
  ds.y.resize(static_cast<Eigen::Index>(n_rows));
  for (std::size_t c = 0; c < n_cols; ++c)
    if (static_cast<int>(c) != target_idx) ds.feature_names.push_back(columns[c]);

  for (std::size_t r = 0; r < n_rows; ++r) {
    auto cells = detail::split_line(lines[r + data_start], delimiter);
    if (cells.size() != n_cols)
      throw ParseError("load_csv: row " + std::to_string(r + 1) + " has " +
                           std::to_string(cells.size()) + " cells, expected " +
                           std::to_string(n_cols),
                       static_cast<int>(r + 1), -1);
    Eigen::Index feat = 0;
    for (std::size_t c = 0; c < n_cols; ++c) {
      double v;
      if (!detail::parse_double(detail::trim(cells[c]), v))
        throw ParseError("load_csv: cannot parse '" + detail::trim(cells[c]) + "' at row " +
                             std::to_string(r + 1) + ", column " + std::to_string(c + 1),
                         static_cast<int>(r + 1), static_cast<int>(c + 1));
      if (!std::isfinite(v))
        throw NonFiniteValue("load_csv: non-finite value at row " + std::to_string(r + 1) +
                                 ", column " + std::to_string(c + 1),
                             static_cast<int>(r + 1), static_cast<int>(c + 1));
      if (static_cast<int>(c) == target_idx)
        ds.y[static_cast<Eigen::Index>(r)] = v;
      else
        ds.X(static_cast<Eigen::Index>(r), feat++) = v;
    }
  }
  ds.validate();
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path, char delimiter = ',') {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_csv: cannot open " + path);
  for (Eigen::Index c = 0; c < ds.d(); ++c) {
    if (c < static_cast<Eigen::Index>(ds.feature_names.size()))
      out << ds.feature_names[static_cast<std::size_t>(c)];
    else
      out << "x" << c;
    out << delimiter;
  }
  out << "target\n";
  out.precision(17);
  for (Eigen::Index r = 0; r < ds.n(); ++r) {
    for (Eigen::Index c = 0; c < ds.d(); ++c) out << ds.X(r, c) << delimiter;
    out << ds.y[r] << "\n";
  }
}

// ---- Synthetic generators -----------------------------------------------------

inline Dataset synth_additive_sin(int n, int d, double noise_std, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("synth_additive_sin: n and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.name = "additive-sin";
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.X(i, j) = nd(rng);
  for (int i = 0; i < n; ++i) {
    double t = ds.X.row(i).array().sin().sum();
    ds.y[i] = t + (noise_std > 0.0 ? noise_std * nd(rng) : 0.0);
  }
  return ds;
}

// Smooth XOR relaxation on [-1, 1]^2: y = tanh(5 x1) * tanh(5 x2) + noise.
inline Dataset synth_xor_relaxation(int n, int d, std::uint64_t seed, double noise_std = 0.01) {
  if (n < 1 || d != 2) throw ConfigError("synth_xor_relaxation: requires d = 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.name = "xor-relaxation";
  ds.X.resize(n, 2);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i) {
    ds.X(i, 0) = ud(rng);
    ds.X(i, 1) = ud(rng);
  }
  for (int i = 0; i < n; ++i) {
    double t = std::tanh(5.0 * ds.X(i, 0)) * std::tanh(5.0 * ds.X(i, 1));
    ds.y[i] = t + (noise_std > 0.0 ? noise_std * nd(rng) : 0.0);
  }
  return ds;
}

inline Dataset synth_rotation_invariant(int n, int d, std::uint64_t seed,
                                        double noise_std = 0.01) {
  if (n < 1 || d < 1) throw ConfigError("synth_rotation_invariant: n and d must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.name = "rotation-invariant";
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.X(i, j) = nd(rng);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(ds.X.row(i).norm());
    ds.y[i] = t + (noise_std > 0.0 ? noise_std * nd(rng) : 0.0);
  }
  return ds;
}

// Additive sin over the first ceil(d * relevant_fraction) coordinates only.
inline Dataset synth_irrelevant_features(int n, int d, double relevant_fraction,
                                         std::uint64_t seed, double noise_std = 0.01) {
  if (n < 1 || d < 1) throw ConfigError("synth_irrelevant_features: n and d must be >= 1");
  if (relevant_fraction <= 0.0 || relevant_fraction > 1.0)
    throw ConfigError("synth_irrelevant_features: relevant_fraction must be in (0, 1]");
  const int k = static_cast<int>(std::ceil(d * relevant_fraction));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.name = "irrelevant-features";
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) ds.X(i, j) = nd(rng);
  for (int i = 0; i < n; ++i) {
    double t = ds.X.row(i).head(k).array().sin().sum();
    ds.y[i] = t + (noise_std > 0.0 ? noise_std * nd(rng) : 0.0);
  }
  return ds;
}

// Shuffled fold assignment: fold_of[i] in [0, folds).
inline std::vector<int> make_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 2 || n < folds) throw TooFewPoints("make_folds: need n >= folds >= 2");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (std::size_t pos = 0; pos < perm.size(); ++pos)
    fold_of[static_cast<std::size_t>(perm[pos])] = static_cast<int>(pos % folds);
  return fold_of;
}

}  // namespace projgp
