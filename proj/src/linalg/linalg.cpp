#include "dkgp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dkgp/compute.hpp"

namespace dkgp::linalg {

SparseRowMatrix::SparseRowMatrix(std::size_t rows, std::size_t cols,
                                 std::vector<std::size_t> row_offsets,
                                 std::vector<std::size_t> col_indices, std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0) {
    throw InvalidArgument("SparseRowMatrix: row_offsets must have rows+1 entries starting at 0");
  }
  if (col_indices_.size() != values_.size() || row_offsets_.back() != values_.size()) {
    throw InvalidArgument("SparseRowMatrix: last offset must equal the number of values");
  }
  std::vector<std::size_t> scratch;
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r + 1] < row_offsets_[r]) {
      throw InvalidArgument("SparseRowMatrix: row_offsets must be nondecreasing");
    }
    scratch.assign(col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r]),
                   col_indices_.begin() + static_cast<std::ptrdiff_t>(row_offsets_[r + 1]));
    std::sort(scratch.begin(), scratch.end());
    if (!scratch.empty() && scratch.back() >= cols_) {
      throw InvalidArgument("SparseRowMatrix: column index out of range in row " +
                            std::to_string(r));
    }
    if (std::adjacent_find(scratch.begin(), scratch.end()) != scratch.end()) {
      throw InvalidArgument("SparseRowMatrix: duplicate column in row " + std::to_string(r));
    }
  }
}

SparseRowMatrix SparseRowMatrix::identity(std::size_t n) {
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::size_t> cols(n);
  for (std::size_t i = 0; i <= n; ++i) {
    offsets[i] = i;
  }
  for (std::size_t i = 0; i < n; ++i) {
    cols[i] = i;
  }
  return {n, n, std::move(offsets), std::move(cols), std::vector<double>(n, 1.0)};
}

SparseRowMatrix SparseRowMatrix::from_dense(const Matrix& dense, double drop_tolerance) {
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      if (std::abs(dense(r, c)) > drop_tolerance) {
        cols.push_back(static_cast<std::size_t>(c));
        vals.push_back(dense(r, c));
      }
    }
    offsets.push_back(vals.size());
  }
  return {static_cast<std::size_t>(dense.rows()), static_cast<std::size_t>(dense.cols()),
          std::move(offsets), std::move(cols), std::move(vals)};
}

Matrix SparseRowMatrix::to_dense() const {
  Matrix dense = Matrix::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      dense(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_indices_[k])) = values_[k];
    }
  }
  return dense;
}

Matrix SymTridiagonal::to_dense() const {
  const Eigen::Index n = diag.size();
  Matrix T = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    T(i, i) = diag(i);
    if (i + 1 < n) {
      T(i, i + 1) = offdiag(i);
      T(i + 1, i) = offdiag(i);
    }
  }
  return T;
}

namespace {

void require_square(const Matrix& A, const char* who) {
  if (A.rows() != A.cols()) {
    throw ShapeError(std::string(who) + ": matrix is not square (" + std::to_string(A.rows()) +
                     "x" + std::to_string(A.cols()) + ")");
  }
}

bool try_cholesky(const Matrix& A, Matrix& L) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) {
    return false;
  }
  L = llt.matrixL();
  return L.allFinite();
}

}  // namespace

Matrix cholesky(const Matrix& A) {
  require_square(A, "cholesky");
  Matrix L;
  if (!try_cholesky(A, L)) {
    throw NotPositiveDefinite("cholesky pivot <= 0 (n=" + std::to_string(A.rows()) + ")");
  }
  return L;
}

Matrix cholesky_jittered(const Matrix& A, double* applied_jitter) {
  require_square(A, "cholesky_jittered");
  const double mean_diag = A.rows() > 0 ? A.diagonal().mean() : 1.0;
  const double scale = mean_diag > 0.0 && std::isfinite(mean_diag) ? mean_diag : 1.0;
  Matrix L;
  for (const double fraction : {kJitterFirst, kJitterRetry}) {
    Matrix jittered = A;
    jittered.diagonal().array() += fraction * scale;
    if (try_cholesky(jittered, L)) {
      if (applied_jitter != nullptr) {
        *applied_jitter = fraction * scale;
      }
      return L;
    }
  }
  throw NotPositiveDefinite("cholesky failed after jitter retries (n=" +
                            std::to_string(A.rows()) + ")");
}

Matrix cholesky_solve(const Matrix& L, const Matrix& B) {
  if (B.rows() != L.rows()) {
    throw ShapeError("cholesky_solve: right-hand side has " + std::to_string(B.rows()) +
                     " rows, expected " + std::to_string(L.rows()));
  }
  Matrix X = L.triangularView<Eigen::Lower>().solve(B);
  L.triangularView<Eigen::Lower>().transpose().solveInPlace(X);
  return X;
}

Matrix solve_psd(const Matrix& A, const Matrix& B) {
  require_square(A, "solve_psd");
  if (B.rows() != A.rows()) {
    throw ShapeError("solve_psd: B.rows != A.rows");
  }
  Matrix L;
  if (!try_cholesky(A, L)) {
    L = cholesky_jittered(A);
  }
  return cholesky_solve(L, B);
}

double cholesky_logdet(const Matrix& L) {
  const Vector logs = L.diagonal().array().log().matrix();
  return 2.0 * pairwise_sum({logs.data(), static_cast<std::size_t>(logs.size())});
}

bool is_symmetric(const Matrix& A, double relative_tolerance) {
  if (A.rows() != A.cols()) {
    return false;
  }
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  return (A - A.transpose()).cwiseAbs().maxCoeff() <= relative_tolerance * scale;
}

EigenDecomposition sym_eigen(const Matrix& A, double symmetry_tolerance) {
  require_square(A, "sym_eigen");
  if (!is_symmetric(A, symmetry_tolerance)) {
    throw InvalidArgument("sym_eigen: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(A);
  if (solver.info() != Eigen::Success) {
    throw NoConvergence("sym_eigen", static_cast<std::size_t>(A.rows()) * 30, 0.0);
  }
  EigenDecomposition out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 16;
  if (values.size() <= kBlock) {
    double acc = 0.0;
    for (const double v : values) {
      acc += v;
    }
    return acc;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double pairwise_dot(const Vector& a, const Vector& b) {
  const Vector prod = a.cwiseProduct(b);
  return pairwise_sum({prod.data(), static_cast<std::size_t>(prod.size())});
}

CgResult conjugate_gradient(const LinearOperator& mvm, const Vector& b, double tol,
                            std::size_t max_iter) {
  if (!(tol > 0.0)) {
    throw InvalidArgument("conjugate_gradient: tol must be positive");
  }
  CgResult result;
  result.x = Vector::Zero(b.size());
  const double bnorm = std::sqrt(pairwise_dot(b, b));
  if (bnorm == 0.0) {
    return result;
  }
  Vector r = b;
  Vector p = r;
  double rr = pairwise_dot(r, r);
  double rel = 1.0;
  for (std::size_t k = 0; k < max_iter; ++k) {
    const Vector Ap = mvm(p);
    if (Ap.size() != b.size()) {
      throw ShapeError("conjugate_gradient: operator changed vector length");
    }
    const double pAp = pairwise_dot(p, Ap);
    if (!(pAp > 0.0)) {
      throw NotPositiveDefinite("conjugate_gradient: p^T A p <= 0");
    }
    const double alpha = rr / pAp;
    result.x += alpha * p;
    r -= alpha * Ap;
    const double rr_next = pairwise_dot(r, r);
    rel = std::sqrt(rr_next) / bnorm;
    result.iterations = k + 1;
    result.relative_residual = rel;
    if (rel <= tol) {
      return result;
    }
    p = r + (rr_next / rr) * p;
    rr = rr_next;
  }
  throw NoConvergence("conjugate_gradient", max_iter, rel);
}

LanczosResult lanczos(const LinearOperator& mvm, const Vector& seed, std::size_t rank) {
  const auto n = static_cast<std::size_t>(seed.size());
  if (rank == 0 || rank > n) {
    throw InvalidArgument("lanczos: rank must be in [1, n]");
  }
  const double seed_norm = seed.norm();
  if (!(seed_norm > 0.0)) {
    throw InvalidArgument("lanczos: seed vector must be nonzero");
  }
  Matrix Q(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rank));
  std::vector<double> alphas;
  std::vector<double> betas;
  Q.col(0) = seed / seed_norm;
  double operator_scale = 0.0;
  bool breakdown = false;
  std::size_t k = 0;
  for (; k < rank; ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    Vector w = mvm(Q.col(kk));
    const double alpha = Q.col(kk).dot(w);
    alphas.push_back(alpha);
    w -= alpha * Q.col(kk);
    if (k > 0) {
      w -= betas.back() * Q.col(kk - 1);
    }
    // Full reorthogonalization, applied twice.
    for (int pass = 0; pass < 2; ++pass) {
      const auto Qk = Q.leftCols(kk + 1);
      w -= Qk * (Qk.transpose() * w);
    }
    const double beta = w.norm();
    operator_scale = std::max(operator_scale, std::hypot(alpha, beta));
    if (k + 1 == rank) {
      break;
    }
    if (beta <= 1e-10 * std::max(operator_scale, 1e-300)) {
      breakdown = true;
      break;
    }
    betas.push_back(beta);
    Q.col(kk + 1) = w / beta;
  }
  const std::size_t size = alphas.size();
  LanczosResult out;
  out.Q = Q.leftCols(static_cast<Eigen::Index>(size));
  out.T.diag = Eigen::Map<const Vector>(alphas.data(), static_cast<Eigen::Index>(size));
  out.T.offdiag = Vector(static_cast<Eigen::Index>(size) - 1);
  for (std::size_t i = 0; i + 1 < size; ++i) {
    out.T.offdiag(static_cast<Eigen::Index>(i)) = betas[i];
  }
  out.breakdown = breakdown;
  return out;
}

Vector sparse_matvec(const SparseRowMatrix& W, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != W.cols()) {
    throw ShapeError("sparse_matvec: vector length " + std::to_string(v.size()) +
                     " != cols " + std::to_string(W.cols()));
  }
  Vector y(static_cast<Eigen::Index>(W.rows()));
  compute::csr_matvec(W.row_offsets(), W.col_indices(), W.values(),
                      {v.data(), static_cast<std::size_t>(v.size())},
                      {y.data(), static_cast<std::size_t>(y.size())});
  return y;
}

Vector sparse_matvec_transpose(const SparseRowMatrix& W, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != W.rows()) {
    throw ShapeError("sparse_matvec_transpose: vector length mismatch");
  }
  Vector y = Vector::Zero(static_cast<Eigen::Index>(W.cols()));
  for (std::size_t r = 0; r < W.rows(); ++r) {
    const double vr = v(static_cast<Eigen::Index>(r));
    const auto cols = W.row_cols(r);
    const auto vals = W.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) {
      y(static_cast<Eigen::Index>(cols[k])) += vals[k] * vr;
    }
  }
  return y;
}

double relative_frobenius(const Matrix& A, const Matrix& B) {
  const double denom = B.norm();
  return denom > 0.0 ? (A - B).norm() / denom : (A - B).norm();
}

}  // namespace dkgp::linalg
