#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dkgp/linalg.hpp"
#include "oracles.hpp"

namespace dkgp {
namespace {

using linalg::SparseRowMatrix;

Matrix random_pd(std::size_t n, std::uint64_t seed) {
  const Matrix M = oracle::random_matrix(n, n, seed);
  return M.transpose() * M + Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
}

TEST(Cholesky, IdentityIsItsOwnFactor) {
  EXPECT_TRUE(linalg::cholesky(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
}

TEST(Cholesky, TwoByTwoByHand) {
  Matrix A(2, 2);
  A << 4, 2, 2, 3;
  const Matrix L = linalg::cholesky(A);
  Matrix expected(2, 2);
  expected << 2, 0, 1, std::sqrt(2.0);
  EXPECT_LT((L - expected).norm(), 1e-14);
}

TEST(Cholesky, IndefiniteThrows) {
  Matrix A(2, 2);
  A << 1, 2, 2, 1;
  EXPECT_THROW(linalg::cholesky(A), NotPositiveDefinite);
  EXPECT_THROW(linalg::cholesky_jittered(A), NotPositiveDefinite);
}

TEST(Cholesky, NonSquareThrows) {
  EXPECT_THROW(linalg::cholesky(Matrix::Ones(2, 3)), ShapeError);
}

TEST(Cholesky, ReconstructsRandomPd) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Matrix A = random_pd(5 + seed * 7, seed);
    const Matrix L = linalg::cholesky(A);
    EXPECT_LT(linalg::relative_frobenius(L * L.transpose(), A), 1e-10);
    EXPECT_EQ(L.triangularView<Eigen::StrictlyUpper>().toDenseMatrix().norm(), 0.0);
  }
}

TEST(Cholesky, JitterAddsFractionOfMeanDiagonal) {
  Matrix A = Matrix::Ones(3, 3);  // rank one, singular
  double applied = 0.0;
  const Matrix L = linalg::cholesky_jittered(A, &applied);
  EXPECT_DOUBLE_EQ(applied, linalg::kJitterFirst);
  Matrix jittered = A;
  jittered.diagonal().array() += applied;
  EXPECT_LT(linalg::relative_frobenius(L * L.transpose(), jittered), 1e-10);
}

TEST(CholeskyLogdet, MatchesCofactorDeterminant) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix A = random_pd(6, seed + 100);
    const double logdet = linalg::cholesky_logdet(linalg::cholesky(A));
    EXPECT_NEAR(logdet, std::log(oracle::determinant(A)), 1e-9);
  }
}

TEST(SolvePsd, IdentityReturnsRhs) {
  const Vector b = Vector::LinSpaced(4, -1, 2);
  EXPECT_LT((linalg::solve_psd(Matrix::Identity(4, 4), b) - b).norm(), 1e-15);
}

TEST(SolvePsd, TwoByTwoByHand) {
  Matrix A(2, 2);
  A << 4, 2, 2, 3;
  const Vector x = linalg::solve_psd(A, Vector::Unit(2, 0));
  EXPECT_NEAR(x(0), 0.375, 1e-14);
  EXPECT_NEAR(x(1), -0.25, 1e-14);
}

TEST(SolvePsd, NotPositiveDefinitePropagates) {
  Matrix A(2, 2);
  A << 1, 2, 2, 1;
  EXPECT_THROW(linalg::solve_psd(A, Vector::Ones(2)), NotPositiveDefinite);
}

TEST(SolvePsd, AgreesWithGaussianElimination) {
  const Matrix A = random_pd(12, 7);
  const Matrix B = oracle::random_matrix(12, 3, 8);
  const Matrix X = linalg::solve_psd(A, B);
  const Matrix ref = oracle::gauss_solve(A, B);
  EXPECT_LT((X - ref).norm() / ref.norm(), 1e-10);
  EXPECT_LT((A * X - B).norm() / B.norm(), 1e-8);
}

TEST(SymEigen, DiagonalSortedDescending) {
  const linalg::EigenDecomposition e = linalg::sym_eigen(Vector(Eigen::Vector3d(3, 1, 2)).asDiagonal());
  EXPECT_NEAR(e.values(0), 3, 1e-14);
  EXPECT_NEAR(e.values(1), 2, 1e-14);
  EXPECT_NEAR(e.values(2), 1, 1e-14);
}

TEST(SymEigen, TwoByTwoCharacteristicPolynomial) {
  Matrix A(2, 2);
  A << 2, 1, 1, 2;
  const linalg::EigenDecomposition e = linalg::sym_eigen(A);
  EXPECT_NEAR(e.values(0), 3, 1e-12);
  EXPECT_NEAR(e.values(1), 1, 1e-12);
}

TEST(SymEigen, IdentityAllOnes) {
  const linalg::EigenDecomposition e = linalg::sym_eigen(Matrix::Identity(4, 4));
  EXPECT_LT((e.values - Vector::Ones(4)).norm(), 1e-14);
}

TEST(SymEigen, EigenpairsAndOrthonormality) {
  const Matrix A = random_pd(15, 3);
  const linalg::EigenDecomposition e = linalg::sym_eigen(A);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    EXPECT_LT((A * e.vectors.col(i) - e.values(i) * e.vectors.col(i)).norm(), 1e-8);
  }
  EXPECT_LT((e.vectors.transpose() * e.vectors - Matrix::Identity(15, 15)).norm(), 1e-8);
}

TEST(SymEigen, NonSymmetricThrows) {
  Matrix A(2, 2);
  A << 1, 2, 0, 1;
  EXPECT_THROW(linalg::sym_eigen(A), InvalidArgument);
}

TEST(ConjugateGradient, IdentityConvergesInOneIteration) {
  const Vector b = Vector::LinSpaced(5, 1, 5);
  const linalg::CgResult r = linalg::conjugate_gradient([](const Vector& v) { return v; }, b, 1e-10, 10);
  EXPECT_EQ(r.iterations, 1u);
  EXPECT_LT((r.x - b).norm(), 1e-14);
}

TEST(ConjugateGradient, MatchesCholeskySolve) {
  Matrix A(2, 2);
  A << 4, 2, 2, 3;
  const Vector b = Vector::Unit(2, 0);
  const linalg::CgResult r =
      linalg::conjugate_gradient([&](const Vector& v) { return Vector(A * v); }, b, 1e-12, 10);
  EXPECT_LT((r.x - linalg::solve_psd(A, b)).norm(), 1e-10);
}

TEST(ConjugateGradient, ZeroBudgetThrowsNoConvergence) {
  Matrix A(2, 2);
  A << 4, 2, 2, 3;
  try {
    linalg::conjugate_gradient([&](const Vector& v) { return Vector(A * v); }, Vector::Ones(2), 1e-8, 0);
    FAIL() << "expected NoConvergence";
  } catch (const NoConvergence& e) {
    EXPECT_EQ(e.iterations(), 0u);
    EXPECT_GT(e.residual(), 1e-8);
  }
}

TEST(ConjugateGradient, AgreesWithCholeskyOnRandomSystems) {
  for (std::size_t n : {10u, 100u, 500u}) {
    Matrix A = random_pd(n, n);
    A /= A.diagonal().mean();
    A.diagonal().array() += 0.5;
    const Vector b = oracle::random_matrix(n, 1, n + 1);
    const double tol = 1e-8;
    const linalg::CgResult r =
        linalg::conjugate_gradient([&](const Vector& v) { return Vector(A * v); }, b, tol, 5 * n);
    const Vector ref = linalg::solve_psd(A, b);
    EXPECT_LE(r.relative_residual, tol);
    EXPECT_LT((A * r.x - b).norm() / b.norm(), 10 * tol);
    EXPECT_LT((r.x - ref).norm() / ref.norm(), 1e-5);
  }
}

TEST(Lanczos, DiagonalSpectrum) {
  const Vector d = Eigen::Vector3d(1, 2, 3);
  const linalg::LanczosResult lr =
      linalg::lanczos([&](const Vector& v) { return Vector(d.asDiagonal() * v); }, Vector::Ones(3), 3);
  const linalg::EigenDecomposition e = linalg::sym_eigen(lr.T.to_dense());
  EXPECT_NEAR(e.values(0), 3, 1e-8);
  EXPECT_NEAR(e.values(1), 2, 1e-8);
  EXPECT_NEAR(e.values(2), 1, 1e-8);
}

TEST(Lanczos, IdentityBreaksDownAfterOneStep) {
  const linalg::LanczosResult lr =
      linalg::lanczos([](const Vector& v) { return v; }, Vector::LinSpaced(6, 1, 6), 4);
  EXPECT_TRUE(lr.breakdown);
  EXPECT_EQ(lr.T.size(), 1u);
  EXPECT_NEAR(lr.T.diag(0), 1.0, 1e-14);
}

TEST(Lanczos, FullRankReproducesSpectrumAndOrthogonality) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Matrix M = oracle::random_matrix(20, 20, seed + 40);
    const Matrix A = 0.5 * (M + M.transpose());
    const linalg::LanczosResult lr = linalg::lanczos([&](const Vector& v) { return Vector(A * v); },
                                                     oracle::random_matrix(20, 1, seed), 20);
    ASSERT_EQ(lr.Q.cols(), 20);
    EXPECT_LT((lr.Q.transpose() * lr.Q - Matrix::Identity(20, 20)).norm(), 1e-6);
    EXPECT_LT((lr.Q.transpose() * A * lr.Q - lr.T.to_dense()).norm(), 1e-6);
    const Vector ev = linalg::sym_eigen(lr.T.to_dense()).values;
    const Vector ref = linalg::sym_eigen(A).values;
    EXPECT_LT((ev - ref).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(SparseRowMatrix, IdentityMatvec) {
  const Vector v = Vector::LinSpaced(5, -2, 2);
  EXPECT_EQ(linalg::sparse_matvec(SparseRowMatrix::identity(5), v), v);
}

TEST(SparseRowMatrix, SelectionRow) {
  const SparseRowMatrix W(1, 4, {0, 1}, {1}, {1.0});
  EXPECT_EQ(linalg::sparse_matvec(W, Eigen::Vector4d(7, 8, 9, 10))(0), 8.0);
}

TEST(SparseRowMatrix, DimensionMismatchThrows) {
  EXPECT_THROW(linalg::sparse_matvec(SparseRowMatrix::identity(3), Vector::Ones(4)), ShapeError);
}

TEST(SparseRowMatrix, InvalidLayoutsRejected) {
  EXPECT_THROW(SparseRowMatrix(1, 2, {0, 2}, {1, 1}, {1.0, 1.0}), InvalidArgument);  // duplicate col
  EXPECT_THROW(SparseRowMatrix(1, 2, {0, 1}, {2}, {1.0}), InvalidArgument);          // col out of range
  EXPECT_THROW(SparseRowMatrix(2, 2, {0, 1, 0}, {0}, {1.0}), InvalidArgument);       // decreasing offsets
}

TEST(SparseRowMatrix, MatchesDenseMultiply) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  Matrix dense = Matrix::Zero(40, 30);
  for (int k = 0; k < 200; ++k) dense(rng() % 40, rng() % 30) = u(rng);
  const SparseRowMatrix W = SparseRowMatrix::from_dense(dense);
  const Vector v = oracle::random_matrix(30, 1, 3);
  const Vector w = oracle::random_matrix(40, 1, 4);
  EXPECT_LT((linalg::sparse_matvec(W, v) - dense * v).norm() / (dense * v).norm(), 1e-13);
  EXPECT_LT((linalg::sparse_matvec_transpose(W, w) - dense.transpose() * w).norm(), 1e-13);
  EXPECT_EQ(W.to_dense(), dense);
}

TEST(PairwiseSum, ExactOnIntegers) {
  std::vector<double> v(1001);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  EXPECT_EQ(linalg::pairwise_sum(v), 500500.0);
}

}  // namespace
}  // namespace dkgp
