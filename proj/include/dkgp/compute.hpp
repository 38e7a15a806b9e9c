#pragma once

// Data-parallel inner kernels. Every kernel has an OpenMP implementation in
// `dkgp::compute` and a plain single-threaded reference in
// `dkgp::compute::serial`, kept for tests and the kernel benchmark. The two
// must agree to 1e-13 relative; the serial versions use the most literal
// formulation (direct differences, full Cox-de Boor recursion) so they double
// as oracles.

#include <cstddef>
#include <span>

#include "dkgp/linalg.hpp"

namespace dkgp::compute {

// D(i,j) = ||A_i - B_j||^2 via ||a||^2 + ||b||^2 - 2 a.b, clamped at zero.
// When `same_points` is set the diagonal is exactly zero and D is exactly
// symmetric.
Matrix pairwise_sqdist(const Matrix& A, const Matrix& B, bool same_points = false);

// Elementwise silu(x) = x * sigmoid(x) and its derivative.
Matrix silu(const Matrix& X);
Matrix silu_derivative(const Matrix& X);

// B-spline design matrix for every column of X.
//
// For input column i and basis function c the entry lives at column
// i * basis_count + c. Inputs are clamped to [lo, hi] first; the derivative
// of a clamped entry is zero.
struct BsplineDesign {
  Matrix basis;
  Matrix derivative;  // empty unless requested
  std::size_t basis_count = 0;
};

BsplineDesign bspline_design(const Matrix& X, std::span<const double> knots, int order, double lo,
                             double hi, bool with_derivative);

// Nonzero window of the order-`order` basis at u: writes order+1 values for
// basis indices span-order .. span and returns span. If `derivative` is
// non-empty it receives d/du of the same window. Requires
// knots[order] <= u < knots[size - order - 1] or u == that right end.
std::size_t bspline_window(double u, std::span<const double> knots, int order,
                           std::span<double> values, std::span<double> derivative);

// y = W v for CSR storage.
void csr_matvec(std::span<const std::size_t> row_offsets, std::span<const std::size_t> cols,
                std::span<const double> values, std::span<const double> v, std::span<double> y);

namespace serial {

Matrix pairwise_sqdist(const Matrix& A, const Matrix& B);
Matrix silu(const Matrix& X);
BsplineDesign bspline_design(const Matrix& X, std::span<const double> knots, int order, double lo,
                             double hi, bool with_derivative);
void csr_matvec(std::span<const std::size_t> row_offsets, std::span<const std::size_t> cols,
                std::span<const double> values, std::span<const double> v, std::span<double> y);

// All basis values of the given order at u by the textbook recursion.
void cox_de_boor(double u, std::span<const double> knots, int order, std::span<double> out);

}  // namespace serial

// Thread cap from DKGP_THREADS (default 1); applied to OpenMP and Eigen.
int configure_threads_from_env();

// Flushes subnormal results to zero on the calling thread and every OpenMP
// worker. Kernel entries far below 1e-308 otherwise slow GEMMs sharply.
void enable_flush_to_zero();

}  // namespace dkgp::compute
