#pragma once

// Dense, sparse and matrix-free linear algebra used throughout the library.
//
// Dense storage is Eigen's column-major MatrixXd; factorizations of dense
// matrices are delegated to Eigen. The Krylov methods (conjugate gradient,
// Lanczos) only see the operator through a matrix-vector callback.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dkgp/errors.hpp"

namespace dkgp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// y = A v for a symmetric operator A that is never materialized.
using LinearOperator = std::function<Vector(const Vector&)>;

namespace linalg {

// Compressed sparse row matrix.
class SparseRowMatrix {
 public:
  SparseRowMatrix() = default;
  SparseRowMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> row_offsets,
                  std::vector<std::size_t> col_indices, std::vector<double> values);

  static SparseRowMatrix identity(std::size_t n);
  static SparseRowMatrix from_dense(const Matrix& dense, double drop_tolerance = 0.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const std::size_t> col_indices() const noexcept { return col_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  // Column indices / values of a single row.
  std::span<const std::size_t> row_cols(std::size_t r) const noexcept {
    return {col_indices_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }
  std::span<const double> row_values(std::size_t r) const noexcept {
    return {values_.data() + row_offsets_[r], row_offsets_[r + 1] - row_offsets_[r]};
  }

  Matrix to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

struct SymTridiagonal {
  Vector diag;
  Vector offdiag;  // length diag.size() - 1

  std::size_t size() const noexcept { return static_cast<std::size_t>(diag.size()); }
  Matrix to_dense() const;
};

struct EigenDecomposition {
  Vector values;  // descending
  Matrix vectors;  // column i pairs with values[i]
};

struct LanczosResult {
  Matrix Q;  // n x k, orthonormal columns
  SymTridiagonal T;
  bool breakdown = false;  // true when k < requested rank
};

// Jitter added before factorizing kernel-derived matrices, as a fraction of
// the mean diagonal. The second value is the single retry.
inline constexpr double kJitterFirst = 1e-6;
inline constexpr double kJitterRetry = 1e-4;

// Plain Cholesky, no jitter. Throws NotPositiveDefinite on a nonpositive pivot.
Matrix cholesky(const Matrix& A);

// Cholesky under the jitter policy: A + jitter*mean(diag) I, retried once
// with a larger jitter. `applied_jitter` receives the absolute amount added.
Matrix cholesky_jittered(const Matrix& A, double* applied_jitter = nullptr);

// Solves A X = B for PD A using the jittered factorization.
Matrix solve_psd(const Matrix& A, const Matrix& B);

// Solves with an existing lower Cholesky factor.
Matrix cholesky_solve(const Matrix& L, const Matrix& B);

// log|A| from a lower Cholesky factor.
double cholesky_logdet(const Matrix& L);

EigenDecomposition sym_eigen(const Matrix& A, double symmetry_tolerance = 1e-10);

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

// Conjugate gradient for an SPD operator. Throws NoConvergence if the relative
// residual is still above `tol` after `max_iter` iterations.
CgResult conjugate_gradient(const LinearOperator& mvm, const Vector& b, double tol,
                            std::size_t max_iter);

// Lanczos tridiagonalization with full reorthogonalization. Stops early (and
// flags breakdown) when the Krylov space is exhausted.
LanczosResult lanczos(const LinearOperator& mvm, const Vector& seed, std::size_t rank);

// CSR matrix times vector (OpenMP over rows).
Vector sparse_matvec(const SparseRowMatrix& W, const Vector& v);
// W^T v.
Vector sparse_matvec_transpose(const SparseRowMatrix& W, const Vector& v);

// Pairwise (cascade) summation: deterministic for a fixed input order.
double pairwise_sum(std::span<const double> values);
double pairwise_dot(const Vector& a, const Vector& b);

// Relative Frobenius distance ||A - B||_F / ||B||_F.
double relative_frobenius(const Matrix& A, const Matrix& B);

bool is_symmetric(const Matrix& A, double relative_tolerance);

}  // namespace linalg
}  // namespace dkgp
