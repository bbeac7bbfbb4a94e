#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "projgp/projections.hpp"
#include "test_util.hpp"

using namespace projgp;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("sample_gaussian shapes and determinism", "[projections]") {
  SECTION("same seed twice gives identical sets") {
    auto a = sample_gaussian(5, {1, 1, 2, 2, 3}, 6, 42);
    auto b = sample_gaussian(5, {1, 1, 2, 2, 3}, 6, 42);
    REQUIRE(a.count() == b.count());
    for (int j = 0; j < a.count(); ++j) CHECK(a.matrices[j] == b.matrices[j]);
  }
  SECTION("20 one-dimensional projections in d = 8") {
    auto ps = sample_gaussian(20, std::vector<int>(20, 1), 8, 7);
    REQUIRE(ps.count() == 20);
    for (const auto& P : ps.matrices) {
      CHECK(P.rows() == 1);
      CHECK(P.cols() == 8);
    }
  }
  SECTION("mixed degrees 4x1, 4x2, 4x3") {
    std::vector<int> degrees;
    for (int r = 0; r < 4; ++r) degrees.push_back(1);
    for (int r = 0; r < 4; ++r) degrees.push_back(2);
    for (int r = 0; r < 4; ++r) degrees.push_back(3);
    auto ps = sample_gaussian(12, degrees, 5, 3);
    REQUIRE(ps.count() == 12);
    for (int j = 0; j < 12; ++j) {
      CHECK(ps.matrices[j].rows() == degrees[j]);
      CHECK(ps.matrices[j].cols() == 5);
    }
  }
  SECTION("entry variance is consistent with 1/D_j") {
    for (int dj : {1, 2, 4}) {
      auto ps = sample_gaussian(40, std::vector<int>(40, dj), 100, 11 + dj);
      double ss = 0.0;
      int count = 0;
      for (const auto& P : ps.matrices) {
        ss += P.array().square().sum();
        count += static_cast<int>(P.size());
      }
      double sample_var = ss / count;
      CHECK(std::abs(sample_var - 1.0 / dj) < 0.2 / dj);
    }
  }
  SECTION("invalid degrees rejected") {
    CHECK_THROWS_AS(sample_gaussian(1, {0}, 4, 1), InvalidDegrees);
    CHECK_THROWS_AS(sample_gaussian(1, {5}, 4, 1), InvalidDegrees);
    CHECK_THROWS_AS(sample_gaussian(2, {1}, 4, 1), InvalidDegrees);
  }
}

TEST_CASE("separation distance", "[projections]") {
  SECTION("orthogonal pair") {
    MatrixXd D(2, 3);
    D << 1, 0, 0, 0, 1, 0;
    CHECK(separation_distance(D) == Catch::Approx(M_PI / 2));
  }
  SECTION("antipodal pair has zero separation") {
    MatrixXd D(2, 2);
    D << 1, 0, -1, 0;
    CHECK(separation_distance(D) == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("three directions at 60 degrees in the plane") {
    MatrixXd D(3, 2);
    for (int k = 0; k < 3; ++k) {
      double a = k * M_PI / 3.0;
      D(k, 0) = std::cos(a);
      D(k, 1) = std::sin(a);
    }
    CHECK(separation_distance(D) == Catch::Approx(M_PI / 3).epsilon(1e-10));
  }
  SECTION("invariant to sign flips") {
    MatrixXd D = test_util::random_matrix(4, 6, 5);
    for (int r = 0; r < 4; ++r) D.row(r) /= D.row(r).norm();
    double before = separation_distance(D);
    D.row(2) *= -1.0;
    CHECK(separation_distance(D) == Catch::Approx(before));
  }
  SECTION("non-unit row rejected") {
    MatrixXd D(2, 2);
    D << 2, 0, 0, 1;
    CHECK_THROWS_AS(separation_distance(D), DegenerateDirection);
  }
}

TEST_CASE("diversity loss and gradient", "[projections]") {
  SECTION("orthogonal set has zero loss") {
    CHECK(diversity_loss(MatrixXd::Identity(3, 3)) == 0.0);
  }
  SECTION("two directions at 45 degrees") {
    MatrixXd D(2, 2);
    D << 1, 0, std::sqrt(0.5), std::sqrt(0.5);
    CHECK(diversity_loss(D) == Catch::Approx(0.5).epsilon(1e-12));
  }
  SECTION("tangent-space gradient matches central finite differences") {
    MatrixXd D = test_util::random_matrix(5, 3, 9);
    for (int r = 0; r < 5; ++r) D.row(r) /= D.row(r).norm();
    MatrixXd grad = diversity_loss_gradient(D);
    const double h = 1e-6;
    for (int r = 0; r < 5; ++r) {
      // random tangent direction at row r
      VectorXd t = test_util::random_vector(3, 100 + r);
      t -= D.row(r).dot(t) * D.row(r).transpose();
      t /= t.norm();
      auto perturbed = [&](double eps) {
        MatrixXd P = D;
        P.row(r) = (D.row(r) + eps * t.transpose()).normalized();
        return diversity_loss(P);
      };
      double fd = (perturbed(h) - perturbed(-h)) / (2 * h);
      double analytic = grad.row(r).dot(t);
      CHECK(std::abs(fd - analytic) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("diverse directions", "[projections]") {
  SECTION("J = 3, d = 5 gives orthonormal rows via Gram-Schmidt") {
    auto ps = diverse_directions(3, 5, 1);
    MatrixXd D = ps.directions();
    MatrixXd G = D * D.transpose();
    CHECK((G - MatrixXd::Identity(3, 3)).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(separation_distance(D) == Catch::Approx(M_PI / 2).epsilon(1e-9));
  }
  SECTION("J = d = 4 reaches zero loss") {
    auto ps = diverse_directions(4, 4, 2);
    CHECK(diversity_loss(ps.directions()) < 1e-12);
  }
  SECTION("J = 3, d = 2: descent reduces loss, usually grows separation") {
    int improved_sep = 0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      Eigen::MatrixXd init = projgp::detail::random_directions(3, 2, rng);
      double init_loss = diversity_loss(init);
      double init_sep = separation_distance(init);
      auto ps = diverse_directions(3, 2, seed);
      MatrixXd D = ps.directions();
      REQUIRE(diversity_loss(D) <= init_loss + 1e-15);
      for (int r = 0; r < 3; ++r) REQUIRE(std::abs(D.row(r).norm() - 1.0) < 1e-12);
      if (separation_distance(D) >= init_sep - 1e-12) ++improved_sep;
    }
    CHECK(improved_sep >= 45);  // >= 90% of seeds
  }
  SECTION("optimum for J = 3, d = 2 is the 60-degree frame") {
    auto ps = diverse_directions(3, 2, 17);
    CHECK(separation_distance(ps.directions()) == Catch::Approx(M_PI / 3).epsilon(1e-3));
  }
  SECTION("deterministic given seed") {
    auto a = diverse_directions(6, 3, 99);
    auto b = diverse_directions(6, 3, 99);
    for (int j = 0; j < a.count(); ++j) CHECK(a.matrices[j] == b.matrices[j]);
  }
  SECTION("pathological config raises OptimizerDiverged") {
    GdConfig cfg;
    cfg.initial_step = 1e6;
    cfg.max_backtracks = 0;  // line search disabled: every step overshoots
    cfg.tolerance = 0.0;
    CHECK_THROWS_AS(diverse_directions(5, 2, 3, cfg), OptimizerDiverged);
  }
}

TEST_CASE("projection set JSON round trip", "[projections]") {
  auto ps = sample_gaussian(4, {1, 2, 1, 3}, 5, 123);
  auto j = ps.to_json();
  auto back = ProjectionSet::from_json(j);
  CHECK(back.method == ps.method);
  CHECK(back.seed == ps.seed);
  CHECK(back.degrees == ps.degrees);
  for (int k = 0; k < ps.count(); ++k) CHECK(back.matrices[k] == ps.matrices[k]);
}
