#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>

#include "dkgp/compute.hpp"
#include "dkgp/features.hpp"
#include "oracles.hpp"

namespace dkgp {
namespace {

// Runs the body once single-threaded and once with four threads.
class ThreadCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }

 private:
  int saved_ = 1;
};

TEST_P(ThreadCounts, PairwiseSqdistMatchesSerial) {
  const Matrix A = oracle::random_matrix(57, 6, 1, -3, 3);
  const Matrix B = oracle::random_matrix(33, 6, 2, -3, 3);
  const Matrix ref = compute::serial::pairwise_sqdist(A, B);
  const Matrix got = compute::pairwise_sqdist(A, B);
  EXPECT_LT((got - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
  EXPECT_GE(got.minCoeff(), 0.0);
}

TEST_P(ThreadCounts, PairwiseSqdistSamePointsHasZeroDiagonal) {
  const Matrix A = oracle::random_matrix(40, 3, 5, -100, 100);
  const Matrix D = compute::pairwise_sqdist(A, A, true);
  EXPECT_EQ(D.diagonal().cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((D - D.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST_P(ThreadCounts, SiluMatchesSerialAndClosedForm) {
  const Matrix X = oracle::random_matrix(30, 20, 3, -40, 40);
  const Matrix got = compute::silu(X);
  EXPECT_LT((got - compute::serial::silu(X)).cwiseAbs().maxCoeff(), 1e-13);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    EXPECT_NEAR(got(i, 0), oracle::silu(X(i, 0)), 1e-12 * (1 + std::abs(X(i, 0))));
  }
}

TEST_P(ThreadCounts, SiluDerivativeMatchesFiniteDifference) {
  const Matrix X = oracle::random_matrix(10, 10, 9, -6, 6);
  const Matrix d = compute::silu_derivative(X);
  const double h = 1e-6;
  const Matrix fd = (compute::silu(X.array() + h) - compute::silu(X.array() - h)) / (2 * h);
  EXPECT_LT((d - fd).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_P(ThreadCounts, BsplineDesignMatchesSerial) {
  const std::vector<double> knots = features::uniform_knots(5, 3, -1.0, 1.0);
  const Matrix X = oracle::random_matrix(64, 7, 4, -1.5, 1.5);
  const compute::BsplineDesign got = compute::bspline_design(X, knots, 3, -1.0, 1.0, true);
  const compute::BsplineDesign ref = compute::serial::bspline_design(X, knots, 3, -1.0, 1.0, true);
  ASSERT_EQ(got.basis_count, ref.basis_count);
  EXPECT_LT((got.basis - ref.basis).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_LT((got.derivative - ref.derivative).cwiseAbs().maxCoeff(), 1e-12);
}

TEST_P(ThreadCounts, CsrMatvecMatchesSerial) {
  Matrix dense = oracle::random_matrix(50, 20, 6);
  dense = dense.unaryExpr([](double v) { return std::abs(v) < 0.7 ? 0.0 : v; });
  const linalg::SparseRowMatrix W = linalg::SparseRowMatrix::from_dense(dense);
  const Vector v = oracle::random_matrix(20, 1, 7);
  Vector y1(50), y2(50);
  compute::csr_matvec(W.row_offsets(), W.col_indices(), W.values(), {v.data(), 20}, {y1.data(), 50});
  compute::serial::csr_matvec(W.row_offsets(), W.col_indices(), W.values(), {v.data(), 20}, {y2.data(), 50});
  EXPECT_EQ(y1, y2);
}

INSTANTIATE_TEST_SUITE_P(OneAndFour, ThreadCounts, ::testing::Values(1, 4));

TEST(Bspline, ClosedFormCubicOracle) {
  const std::vector<double> knots = features::uniform_knots(5, 3, -1.0, 1.0);
  const double h = 2.0 / 5.0;
  for (double u = -1.0; u < 1.0; u += 0.0137) {
    const std::vector<double> b = features::bspline_basis(u, knots, 3);
    ASSERT_EQ(b.size(), 8u);
    double total = 0.0;
    for (int c = 0; c < 8; ++c) {
      EXPECT_NEAR(b[static_cast<std::size_t>(c)], oracle::cardinal_cubic(u, -1.0 - 3 * h, h, c), 1e-13);
      total += b[static_cast<std::size_t>(c)];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Bspline, ClampedDerivativeIsZero) {
  const std::vector<double> knots = features::uniform_knots(5, 3, -1.0, 1.0);
  Matrix X(2, 1);
  X << -3.0, 2.5;
  const compute::BsplineDesign d = compute::bspline_design(X, knots, 3, -1.0, 1.0, true);
  EXPECT_EQ(d.derivative.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(d.basis.row(0).sum(), 1.0, 1e-12);
  EXPECT_NEAR(d.basis.row(1).sum(), 1.0, 1e-12);
}

TEST(Bspline, DerivativeMatchesFiniteDifference) {
  const std::vector<double> knots = features::uniform_knots(5, 3, -1.0, 1.0);
  const Matrix X = oracle::random_matrix(20, 1, 12, -0.95, 0.95);
  const double h = 1e-6;
  const compute::BsplineDesign d = compute::bspline_design(X, knots, 3, -1.0, 1.0, true);
  const Matrix up = compute::bspline_design(X.array() + h, knots, 3, -1.0, 1.0, false).basis;
  const Matrix dn = compute::bspline_design(X.array() - h, knots, 3, -1.0, 1.0, false).basis;
  EXPECT_LT((d.derivative - (up - dn) / (2 * h)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Threads, EnvironmentVariableCapsWorkers) {
  ::setenv("DKGP_THREADS", "3", 1);
  EXPECT_EQ(compute::configure_threads_from_env(), 3);
  EXPECT_EQ(omp_get_max_threads(), 3);
  ::unsetenv("DKGP_THREADS");
  EXPECT_EQ(compute::configure_threads_from_env(), 1);
  EXPECT_EQ(omp_get_max_threads(), 1);
}

}  // namespace
}  // namespace dkgp
