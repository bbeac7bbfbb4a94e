#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "projgp/linalg/cg.hpp"
#include "projgp/linalg/cholesky.hpp"
#include "projgp/linalg/lanczos.hpp"
#include "projgp/linalg/toeplitz.hpp"
#include "test_util.hpp"

using namespace projgp;
using namespace projgp::linalg;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("cholesky_factor basic cases", "[linalg]") {
  SECTION("identity") {
    auto f = cholesky_factor(MatrixXd::Identity(3, 3), 0.0);
    CHECK((f.L - MatrixXd::Identity(3, 3)).norm() < 1e-14);
  }
  SECTION("hand 2x2") {
    MatrixXd A(2, 2);
    A << 4, 2, 2, 3;
    auto f = cholesky_factor(A, 0.0);
    CHECK(f.L(0, 0) == Catch::Approx(2.0));
    CHECK(f.L(1, 0) == Catch::Approx(1.0));
    CHECK(f.L(1, 1) == Catch::Approx(std::sqrt(2.0)));
    CHECK(f.L(0, 1) == 0.0);
    CHECK((f.L * f.L.transpose() - A).norm() / A.norm() < 1e-12);
  }
  SECTION("indefinite matrix throws with pivot index") {
    MatrixXd A(2, 2);
    A << 1, 2, 2, 1;  // eigenvalues 3, -1
    try {
      cholesky_factor(A, 0.0);
      FAIL("expected NotPositiveDefinite");
    } catch (const NotPositiveDefinite& e) {
      CHECK(e.pivot_index == 1);
    }
  }
  SECTION("jitter is added to the diagonal") {
    MatrixXd A = MatrixXd::Zero(2, 2);
    auto f = cholesky_factor(A, 4.0);
    CHECK(f.L(0, 0) == Catch::Approx(2.0));
    CHECK(f.jitter == 4.0);
  }
}

TEST_CASE("cholesky round trip on random SPD matrices", "[linalg]") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    MatrixXd A = test_util::random_spd(40, seed);
    auto f = cholesky_factor(A, 1e-3);
    MatrixXd R = f.L * f.L.transpose();
    MatrixXd target = A + 1e-3 * MatrixXd::Identity(40, 40);
    CHECK((R - target).norm() / A.norm() < 1e-10);
  }
}

TEST_CASE("cholesky_solve", "[linalg]") {
  SECTION("identity factor") {
    CholeskyFactor f{MatrixXd::Identity(3, 3), 0.0};
    MatrixXd B = test_util::random_matrix(3, 2, 7);
    CHECK((cholesky_solve(f, B) - B).norm() < 1e-14);
  }
  SECTION("hand 2x2") {
    MatrixXd A(2, 2);
    A << 4, 2, 2, 3;
    auto f = cholesky_factor(A, 0.0);
    VectorXd b(2);
    b << 4, 2;
    VectorXd x = cholesky_solve(f, b);
    CHECK(x[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(x[1] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("matches dense inverse on 3x3 with multiple right-hand sides") {
    MatrixXd A = test_util::random_spd(3, 11);
    MatrixXd B = test_util::random_matrix(3, 2, 12);
    auto f = cholesky_factor(A, 0.0);
    MatrixXd X = cholesky_solve(f, B);
    MatrixXd Xref = A.inverse() * B;
    CHECK((X - Xref).norm() / Xref.norm() < 1e-9);
    CHECK((A * X - B).norm() / B.norm() < 1e-9);
  }
  SECTION("dimension mismatch") {
    CholeskyFactor f{MatrixXd::Identity(3, 3), 0.0};
    CHECK_THROWS_AS(cholesky_solve(f, MatrixXd::Zero(4, 1)), DimensionMismatch);
  }
}

TEST_CASE("jitter ladder", "[linalg]") {
  // Slightly indefinite matrix: ladder must rescue it if within 1e-4*mean(diag).
  MatrixXd A = MatrixXd::Identity(4, 4);
  A(0, 0) = 1.0 - 1e-7;
  A(0, 1) = A(1, 0) = 1.0;  // 2x2 block [[1-1e-7,1],[1,1]] slightly indefinite
  auto f = cholesky_with_jitter_ladder(A);
  CHECK(f.jitter > 0.0);
  MatrixXd R = f.L * f.L.transpose();
  CHECK((R - (A + f.jitter * MatrixXd::Identity(4, 4))).norm() / A.norm() < 1e-10);

  MatrixXd B(2, 2);
  B << 1, 2, 2, 1;  // firmly indefinite, ladder cannot help
  CHECK_THROWS_AS(cholesky_with_jitter_ladder(B), NotPositiveDefinite);
}

TEST_CASE("toeplitz matvec examples", "[linalg]") {
  SECTION("identity column") {
    ToeplitzColumn c{(VectorXd(3) << 1, 0, 0).finished()};
    VectorXd v(3);
    v << 5, 6, 7;
    CHECK((toeplitz_matvec(c, v) - v).norm() < 1e-12);
  }
  SECTION("2x2 dense oracle") {
    ToeplitzColumn c{(VectorXd(2) << 2, 1).finished()};
    VectorXd v(2);
    v << 1, 1;
    VectorXd r = toeplitz_matvec(c, v);
    CHECK(r[0] == Catch::Approx(3.0));
    CHECK(r[1] == Catch::Approx(3.0));
  }
  SECTION("m = 33 (non power of two) dense oracle") {
    ToeplitzColumn c{test_util::random_vector(33, 5)};
    VectorXd v = test_util::random_vector(33, 6);
    VectorXd fast = toeplitz_matvec(c, v);
    VectorXd ref = c.dense() * v;
    CHECK((fast - ref).norm() / ref.norm() < 1e-8);
  }
}

TEST_CASE("toeplitz matvec equals dense reconstruction for m in 1..64", "[linalg]") {
  std::uint64_t seed = 1000;
  for (int m = 1; m <= 64; ++m) {
    // ~2 random draws per size; the full 100-seed sweep lives in the slow suite
    int reps = 2;
    for (int r = 0; r < reps; ++r) {
      ToeplitzColumn c{test_util::random_vector(m, seed++)};
      VectorXd v = test_util::random_vector(m, seed++);
      VectorXd fast = toeplitz_matvec(c, v);
      VectorXd ref = c.dense() * v;
      double scale = std::max(1.0, ref.norm());
      CHECK((fast - ref).norm() / scale < 1e-8);
    }
  }
}

TEST_CASE("toeplitz matvec 100-seed sweep", "[linalg][slow]") {
  std::uint64_t seed = 9000;
  for (int m = 1; m <= 64; ++m) {
    for (int r = 0; r < 100; ++r) {
      ToeplitzColumn c{test_util::random_vector(m, seed++)};
      VectorXd v = test_util::random_vector(m, seed++);
      double scale = std::max(1.0, (c.dense() * v).norm());
      REQUIRE((toeplitz_matvec(c, v) - c.dense() * v).norm() / scale < 1e-8);
    }
  }
}

TEST_CASE("conjugate gradients", "[linalg]") {
  SECTION("identity converges in one iteration") {
    auto A = SymmetricOperator::from_dense(MatrixXd::Identity(3, 3));
    VectorXd b(3);
    b << 1, 2, 3;
    auto r = conjugate_gradients(A, b, {1e-10, 10, Preconditioner::None});
    CHECK(r.iterations == 1);
    CHECK(r.converged);
    CHECK((r.x - b).norm() < 1e-10);
  }
  SECTION("two distinct eigenvalues converge in at most two iterations") {
    MatrixXd D = MatrixXd::Zero(2, 2);
    D(0, 0) = 1;
    D(1, 1) = 10;
    auto A = SymmetricOperator::from_dense(D);
    VectorXd b(2);
    b << 1, 10;
    auto r = conjugate_gradients(A, b, {1e-12, 10, Preconditioner::None});
    CHECK(r.iterations <= 2);
    CHECK((r.x - VectorXd::Ones(2)).norm() < 1e-9);
  }
  SECTION("zero right-hand side returns zero in zero iterations") {
    auto A = SymmetricOperator::from_dense(MatrixXd::Identity(4, 4));
    auto r = conjugate_gradients(A, VectorXd::Zero(4), {});
    CHECK(r.iterations == 0);
    CHECK(r.converged);
    CHECK(r.x.norm() == 0.0);
  }
  SECTION("random SPD 50x50 matches Cholesky solve") {
    MatrixXd M = test_util::random_spd(50, 21);
    VectorXd b = test_util::random_vector(50, 22);
    auto r = conjugate_gradients(SymmetricOperator::from_dense(M),
                                 b, {1e-8, 1000, Preconditioner::None});
    VectorXd xref = cholesky_solve(cholesky_factor(M), b);
    CHECK(r.converged);
    CHECK((r.x - xref).norm() / xref.norm() < 1e-6);
  }
  SECTION("indefinite operator raises NumericalBreakdown") {
    MatrixXd M(2, 2);
    M << 1, 2, 2, 1;
    VectorXd b(2);
    b << 0, 1;
    CHECK_THROWS_AS(conjugate_gradients(SymmetricOperator::from_dense(M), b, {}),
                    NumericalBreakdown);
  }
  SECTION("diagonal preconditioner") {
    MatrixXd D = MatrixXd::Zero(40, 40);
    for (int i = 0; i < 40; ++i) D(i, i) = 1.0 + i * 100.0;
    MatrixXd M = D + 0.01 * test_util::random_spd(40, 31, 0.0);
    auto op = SymmetricOperator::from_dense(M);
    VectorXd b = test_util::random_vector(40, 32);
    auto plain = conjugate_gradients(op, b, {1e-10, 1000, Preconditioner::None});
    auto prec = conjugate_gradients(op, b, {1e-10, 1000, Preconditioner::Diagonal});
    CHECK(prec.converged);
    CHECK(prec.iterations <= plain.iterations);
    CHECK((prec.x - plain.x).norm() / plain.x.norm() < 1e-7);
  }
  SECTION("preconditioner without stored diagonal is a config error") {
    SymmetricOperator op;
    op.dimension = 2;
    op.apply = [](const VectorXd& v) { return v; };
    CHECK_THROWS_AS(conjugate_gradients(op, VectorXd::Ones(2),
                                        {1e-8, 10, Preconditioner::Diagonal}),
                    ConfigError);
  }
}

TEST_CASE("CG-Cholesky equivalence up to n = 200", "[linalg]") {
  for (Eigen::Index n : {20, 100, 200}) {
    MatrixXd M = test_util::random_spd(n, 40 + static_cast<std::uint64_t>(n));
    VectorXd b = test_util::random_vector(n, 50 + static_cast<std::uint64_t>(n));
    auto r = conjugate_gradients(SymmetricOperator::from_dense(M), b,
                                 {1e-10, 10000, Preconditioner::None});
    VectorXd xref = cholesky_solve(cholesky_factor(M), b);
    CHECK((r.x - xref).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("probe vectors", "[linalg]") {
  MatrixXd Z1 = probe_vectors(4, 1, 77);
  MatrixXd Z2 = probe_vectors(4, 1, 77);
  CHECK(Z1 == Z2);  // determinism

  MatrixXd Z = probe_vectors(1000, 50, 3);
  CHECK(std::abs(Z.mean()) < 0.1);
  for (int j = 0; j < Z.cols(); ++j) {
    CHECK(Z.col(j).squaredNorm() == 1000.0);  // entries are exactly +-1
    CHECK(Z.col(j).cwiseAbs().minCoeff() == 1.0);
  }
}

TEST_CASE("lanczos log-determinant", "[linalg]") {
  SECTION("identity gives zero") {
    auto A = SymmetricOperator::from_dense(MatrixXd::Identity(100, 100));
    CHECK(std::abs(lanczos_logdet(A, 5, 20, 1)) < 1e-8);
  }
  SECTION("diag(1..10) within 2 percent of log(10!)") {
    MatrixXd D = MatrixXd::Zero(10, 10);
    for (int i = 0; i < 10; ++i) D(i, i) = i + 1.0;
    double est = lanczos_logdet(SymmetricOperator::from_dense(D), 30, 20, 2);
    double exact = std::lgamma(11.0);  // log(10!)
    CHECK(exact == Catch::Approx(15.104412573).epsilon(1e-6));
    CHECK(std::abs(est - exact) / exact < 0.02);
  }
  SECTION("random SPD 100x100 matches Cholesky log-determinant within 2 percent") {
    MatrixXd M = test_util::random_spd(100, 60);
    double exact = cholesky_factor(M).log_determinant();
    double est = lanczos_logdet(SymmetricOperator::from_dense(M), 30, 20, 3);
    CHECK(std::abs(est - exact) / std::abs(exact) < 0.02);
  }
  SECTION("diag(1..k) for k in {10, 50, 200}") {
    for (int k : {10, 50, 200}) {
      MatrixXd D = MatrixXd::Zero(k, k);
      double exact = 0.0;
      for (int i = 0; i < k; ++i) {
        D(i, i) = i + 1.0;
        exact += std::log(i + 1.0);
      }
      double est = lanczos_logdet(SymmetricOperator::from_dense(D), 30, 30, 4);
      CHECK(std::abs(est - exact) / exact < 0.02);
    }
  }
  SECTION("indefinite operator raises NumericalBreakdown") {
    MatrixXd M(2, 2);
    M << 1, 2, 2, 1;
    CHECK_THROWS_AS(lanczos_logdet(SymmetricOperator::from_dense(M), 3, 2, 5),
                    NumericalBreakdown);
  }
}

TEST_CASE("symmetric operator linearity and symmetry probes", "[linalg]") {
  MatrixXd M = test_util::random_spd(30, 70);
  auto A = SymmetricOperator::from_dense(M);
  VectorXd u = test_util::random_vector(30, 71);
  VectorXd v = test_util::random_vector(30, 72);
  // linearity
  VectorXd lhs = A.apply(2.5 * u + 0.5 * v);
  VectorXd rhs = 2.5 * A.apply(u) + 0.5 * A.apply(v);
  CHECK((lhs - rhs).norm() / rhs.norm() < 1e-12);
  // symmetry
  CHECK(std::abs(u.dot(A.apply(v)) - v.dot(A.apply(u))) /
            std::abs(u.dot(A.apply(v))) < 1e-10);
}
