#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dkgp/scalable.hpp"

namespace dkgp::scalable {

namespace {

constexpr std::uint64_t kLanczosSeed = 0x5eedULL;

Vector lanczos_seed(std::size_t n) {
  std::mt19937_64 rng(kLanczosSeed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  return v;
}

// (U diag(lambda) U^T o B) v = sum_a lambda_a u_a o B (u_a o v)
Vector hadamard_apply(const LowRankKernel& head, const LinearOperator& B, const Vector& v) {
  Vector out = Vector::Zero(v.size());
  for (Eigen::Index a = 0; a < head.U.cols(); ++a) {
    const Vector u = head.U.col(a);
    out += head.lambda(a) * u.cwiseProduct(B(u.cwiseProduct(v)));
  }
  return out;
}

}  // namespace

Vector LowRankKernel::apply(const Vector& v) const {
  return U * (lambda.asDiagonal() * (U.transpose() * v));
}

Vector ski_factor_mvm(const SkiFactor& f, const Vector& v) {
  return linalg::sparse_matvec(f.W, f.kuu * linalg::sparse_matvec_transpose(f.W, v));
}

LowRankKernel lanczos_low_rank(const LinearOperator& op, std::size_t n, std::size_t rank) {
  if (rank == 0 || n == 0) {
    throw InvalidArgument("lanczos_low_rank: rank and size must be positive");
  }
  const linalg::LanczosResult lr = linalg::lanczos(op, lanczos_seed(n), std::min(rank, n));
  const linalg::EigenDecomposition eig = linalg::sym_eigen(lr.T.to_dense());
  return {lr.Q * eig.vectors, eig.values};
}

SkipOperator::SkipOperator(std::vector<SkiFactor> factors, std::size_t rank)
    : factors_(std::move(factors)), rank_(rank), n_(0) {
  if (factors_.empty()) {
    throw InvalidArgument("SkipOperator: no factors");
  }
  if (rank_ == 0) {
    throw InvalidArgument("SkipOperator: rank must be positive");
  }
  n_ = factors_.front().W.rows();
  for (const SkiFactor& f : factors_) {
    if (f.W.rows() != n_) throw ShapeError("SkipOperator: factors disagree on n");
  }
  if (factors_.size() == 1) return;
  const SkiFactor& first = factors_.front();
  head_ = lanczos_low_rank([&](const Vector& v) { return ski_factor_mvm(first, v); }, n_, rank_);
  for (std::size_t d = 1; d + 1 < factors_.size(); ++d) {
    const SkiFactor& f = factors_[d];
    const LinearOperator B = [&](const Vector& v) { return ski_factor_mvm(f, v); };
    const LowRankKernel prev = head_;
    head_ = lanczos_low_rank([&](const Vector& v) { return hadamard_apply(prev, B, v); }, n_,
                             rank_);
  }
}

Vector SkipOperator::apply(const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != n_) {
    throw ShapeError("SkipOperator: vector length " + std::to_string(v.size()) + " != n " +
                     std::to_string(n_));
  }
  const SkiFactor& last = factors_.back();
  if (factors_.size() == 1) return ski_factor_mvm(last, v);
  return hadamard_apply(head_, [&](const Vector& u) { return ski_factor_mvm(last, u); }, v);
}

LowRankKernel SkipOperator::truncated() const {
  return lanczos_low_rank([this](const Vector& v) { return apply(v); }, n_, rank_);
}

Vector skip_mvm(std::span<const SkiFactor> factors, std::size_t rank, const Vector& v) {
  return SkipOperator(std::vector<SkiFactor>(factors.begin(), factors.end()), rank).apply(v);
}

std::vector<SkiFactor> make_skip_factors(const Matrix& X, const Vector& lengthscales,
                                         std::size_t m_per_dim, double padding_fraction) {
  if (X.cols() != lengthscales.size()) {
    throw ShapeError("make_skip_factors: " + std::to_string(lengthscales.size()) +
                     " lengthscales for " + std::to_string(X.cols()) + " columns");
  }
  std::vector<SkiFactor> out;
  for (Eigen::Index d = 0; d < X.cols(); ++d) {
    const Matrix col = X.col(d);
    const ProductGrid grid = build_grid(col, m_per_dim, padding_fraction);
    out.push_back({interp_weights(col, grid), grid_kernel_1d(grid.dims[0], lengthscales(d))});
  }
  return out;
}

double skip_nll(const kernels::KernelHyperparams& hp, const Matrix& X, const Vector& y,
                std::size_t m_per_dim, std::size_t rank, const KissOptions& options) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw ShapeError("skip_nll: X/y size mismatch");
  }
  const SkipOperator op(make_skip_factors(X, hp.lengthscales(), m_per_dim), rank);
  const double sigma2 = hp.signal_variance();
  const double noise = hp.noise_variance();
  const Vector r = y.array() - hp.mean_constant;
  const auto cg = linalg::conjugate_gradient(
      [&](const Vector& v) { return Vector(sigma2 * op.apply(v) + noise * v); }, r,
      options.cg_tolerance, options.cg_max_iterations);
  const LowRankKernel low = op.truncated();
  const auto n = static_cast<std::size_t>(y.size());
  const auto k = static_cast<std::size_t>(low.lambda.size());
  double logdet = static_cast<double>(n - k) * std::log(noise);
  for (Eigen::Index i = 0; i < low.lambda.size(); ++i) {
    logdet += std::log(sigma2 * std::max(low.lambda(i), 0.0) + noise);
  }
  return 0.5 * (r.dot(cg.x) + logdet + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
}

}  // namespace dkgp::scalable
