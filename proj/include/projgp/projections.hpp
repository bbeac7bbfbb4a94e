#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "projgp/errors.hpp"

namespace projgp {

enum class ProjectionMethod { Gaussian, Diverse };

// Projection matrices P^(j) of shape D_j x d, plus provenance.
struct ProjectionSet {
  std::vector<Eigen::MatrixXd> matrices;
  std::vector<int> degrees;
  ProjectionMethod method = ProjectionMethod::Gaussian;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(matrices.size()); }
  int input_dim() const { return matrices.empty() ? 0 : static_cast<int>(matrices[0].cols()); }
  int total_degree() const {
    int t = 0;
    for (int dj : degrees) t += dj;
    return t;
  }
  bool all_degree_one() const {
    for (int dj : degrees)
      if (dj != 1) return false;
    return true;
  }

  // Rows of a J x d matrix when every projection is one-dimensional.
  Eigen::MatrixXd directions() const {
    if (!all_degree_one())
      throw UnsupportedDegree("ProjectionSet::directions: all degrees must be 1");
    Eigen::MatrixXd D(count(), input_dim());
    for (int j = 0; j < count(); ++j) D.row(j) = matrices[static_cast<std::size_t>(j)].row(0);
    return D;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["method"] = method == ProjectionMethod::Gaussian ? "gaussian" : "diverse";
    j["seed"] = seed;
    j["input_dim"] = input_dim();
    j["degrees"] = degrees;
    auto& mats = j["matrices"] = nlohmann::json::array();
    for (const auto& P : matrices) {
      std::vector<double> flat(static_cast<std::size_t>(P.size()));
      for (Eigen::Index r = 0; r < P.rows(); ++r)
        for (Eigen::Index c = 0; c < P.cols(); ++c)
          flat[static_cast<std::size_t>(r * P.cols() + c)] = P(r, c);  // row-major
      mats.push_back(flat);
    }
    return j;
  }

  static ProjectionSet from_json(const nlohmann::json& j) {
    ProjectionSet ps;
    ps.method = j.at("method").get<std::string>() == "diverse" ? ProjectionMethod::Diverse
                                                               : ProjectionMethod::Gaussian;
    ps.seed = j.at("seed").get<std::uint64_t>();
    ps.degrees = j.at("degrees").get<std::vector<int>>();
    const int d = j.at("input_dim").get<int>();
    for (std::size_t k = 0; k < ps.degrees.size(); ++k) {
      const int dj = ps.degrees[k];
      const auto flat = j.at("matrices").at(k).get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(dj) * static_cast<std::size_t>(d))
        throw ParseError("ProjectionSet::from_json: matrix size mismatch", static_cast<int>(k), -1);
      Eigen::MatrixXd P(dj, d);
      for (int r = 0; r < dj; ++r)
        for (int c = 0; c < d; ++c) P(r, c) = flat[static_cast<std::size_t>(r * d + c)];
      ps.matrices.push_back(std::move(P));
    }
    return ps;
  }
};

// Gaussian random projections with entries N(0, 1/D_j).
inline ProjectionSet sample_gaussian(int J, const std::vector<int>& degrees, int d,
                                     std::uint64_t seed) {
  if (J < 1 || d < 1) throw ConfigError("sample_gaussian: J and d must be >= 1");
  if (static_cast<int>(degrees.size()) != J)
    throw InvalidDegrees("sample_gaussian: need one degree per projection");
  for (int dj : degrees)
    if (dj < 1 || dj > d)
      throw InvalidDegrees("sample_gaussian: degrees must satisfy 1 <= D_j <= d, got " +
                           std::to_string(dj));
  std::mt19937_64 rng(seed);
  ProjectionSet ps;
  ps.method = ProjectionMethod::Gaussian;
  ps.seed = seed;
  ps.degrees = degrees;
  for (int dj : degrees) {
    std::normal_distribution<double> nd(0.0, 1.0 / std::sqrt(static_cast<double>(dj)));
    Eigen::MatrixXd P(dj, d);
    for (int r = 0; r < dj; ++r)
      for (int c = 0; c < d; ++c) P(r, c) = nd(rng);
    ps.matrices.push_back(std::move(P));
  }
  return ps;
}

namespace detail {
inline void check_unit_rows(const Eigen::MatrixXd& dirs) {
  for (Eigen::Index j = 0; j < dirs.rows(); ++j)
    if (std::abs(dirs.row(j).norm() - 1.0) > 1e-8)
      throw DegenerateDirection("direction " + std::to_string(j) + " is not unit norm");
}
}  // namespace detail

// Antipodal separation: min over pairs of arccos(|eta_j . eta_j'|), in [0, pi/2].
inline double separation_distance(const Eigen::MatrixXd& directions) {
  if (directions.rows() < 2)
    throw ConfigError("separation_distance: need at least two directions");
  detail::check_unit_rows(directions);
  double min_angle = M_PI / 2.0;
  for (Eigen::Index a = 0; a < directions.rows(); ++a)
    for (Eigen::Index b = a + 1; b < directions.rows(); ++b) {
      double c = std::min(1.0, std::abs(directions.row(a).dot(directions.row(b))));
      min_angle = std::min(min_angle, std::acos(c));
    }
  return min_angle;
}

// Fourth-power repulsion loss over ordered pairs: sum_{j != j'} (eta_j . eta_j')^4.
inline double diversity_loss(const Eigen::MatrixXd& directions) {
  Eigen::MatrixXd G = directions * directions.transpose();
  G.diagonal().setZero();
  return G.array().pow(4).sum();
}

// Euclidean gradient of diversity_loss with respect to each row.
inline Eigen::MatrixXd diversity_loss_gradient(const Eigen::MatrixXd& directions) {
  Eigen::MatrixXd G = directions * directions.transpose();
  G.diagonal().setZero();
  Eigen::MatrixXd C = G.array().cube().matrix();
  return 8.0 * C * directions;
}

struct GdConfig {
  double initial_step = 0.1;
  int max_steps = 2000;
  double tolerance = 1e-12;  // stop when |delta loss| falls below this
  int max_backtracks = 60;
};

namespace detail {
inline Eigen::MatrixXd normalize_rows(Eigen::MatrixXd M) {
  for (Eigen::Index r = 0; r < M.rows(); ++r) M.row(r) /= M.row(r).norm();
  return M;
}

inline Eigen::MatrixXd random_directions(int J, int d, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd D(J, d);
  for (int r = 0; r < J; ++r)
    for (int c = 0; c < d; ++c) D(r, c) = nd(rng);
  return normalize_rows(std::move(D));
}
}  // namespace detail

// Deterministically diversified unit directions. J <= d: Gram-Schmidt on a
// seeded Gaussian set. J > d: projected gradient descent on the product of
// spheres (Euclidean step, renormalize rows, backtracking line search).
inline ProjectionSet diverse_directions(int J, int d, std::uint64_t seed,
                                        const GdConfig& cfg = {}) {
  if (J < 1 || d < 1) throw ConfigError("diverse_directions: J and d must be >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd D;
  if (J <= d) {
    std::normal_distribution<double> nd(0.0, 1.0);
    D.resize(J, d);
    int j = 0;
    while (j < J) {
      Eigen::VectorXd v(d);
      for (int c = 0; c < d; ++c) v[c] = nd(rng);
      for (int prev = 0; prev < j; ++prev) v -= D.row(prev).dot(v) * D.row(prev).transpose();
      const double norm = v.norm();
      if (norm < 1e-10) continue;  // essentially dependent draw, take another
      // second orthogonalization pass for QR-level accuracy
      for (int prev = 0; prev < j; ++prev) v -= D.row(prev).dot(v) * D.row(prev).transpose();
      D.row(j) = v.transpose() / v.norm();
      ++j;
    }
  } else {
    D = detail::random_directions(J, d, rng);
    double loss = diversity_loss(D);
    double step = cfg.initial_step;
    int consecutive_failures = 0;
    for (int it = 0; it < cfg.max_steps; ++it) {
      Eigen::MatrixXd grad = diversity_loss_gradient(D);
      Eigen::MatrixXd candidate;
      double cand_loss = loss;
      bool accepted = false;
      for (int bt = 0; bt <= cfg.max_backtracks; ++bt) {
        candidate = detail::normalize_rows(D - step * grad);
        cand_loss = diversity_loss(candidate);
        if (cand_loss < loss) {
          accepted = true;
          break;
        }
        if (bt < cfg.max_backtracks) step *= 0.5;
      }
      if (!accepted) {
        if (++consecutive_failures >= 50)
          throw OptimizerDiverged("diverse_directions: loss increased for 50 consecutive steps");
        continue;
      }
      consecutive_failures = 0;
      const double improvement = loss - cand_loss;
      D = std::move(candidate);
      loss = cand_loss;
      step = std::min(step * 2.0, cfg.initial_step);
      if (improvement < cfg.tolerance) break;
    }
  }

  ProjectionSet ps;
  ps.method = ProjectionMethod::Diverse;
  ps.seed = seed;
  ps.degrees.assign(static_cast<std::size_t>(J), 1);
  for (int j = 0; j < J; ++j) ps.matrices.push_back(D.row(j));
  return ps;
}

}  // namespace projgp
