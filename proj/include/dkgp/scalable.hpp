#pragma once

// Structured kernel interpolation over a regular inducing grid (KISS-GP),
//   K(X, X) ~= W K_UU W^T,
// with K_UU a Kronecker product of per-dimension RBF matrices and W a sparse
// matrix of local cubic interpolation weights, plus the product-kernel
// variant (SKIP) that multiplies per-input-dimension SKI kernels elementwise
// through low-rank Lanczos factors.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dkgp/gp.hpp"
#include "dkgp/kernels.hpp"
#include "dkgp/linalg.hpp"

namespace dkgp::scalable {

struct Grid1D {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t m = 4;

  double spacing() const { return (hi - lo) / static_cast<double>(m - 1); }
  double node(std::size_t j) const { return lo + static_cast<double>(j) * spacing(); }
};

// Row-major over dims: the last dimension varies fastest.
struct ProductGrid {
  std::vector<Grid1D> dims;

  std::size_t size() const;
  std::size_t dim_count() const { return dims.size(); }
  std::vector<std::size_t> strides() const;
  // Coordinates of the flat node index.
  std::vector<double> node(std::size_t flat) const;
};

inline constexpr std::size_t kMaxGridDims = 4;

// Per dimension: [min - pad, max + pad] with pad = padding_fraction * (max - min);
// constant columns are widened to [c - 0.5, c + 0.5].
ProductGrid build_grid(const Matrix& Z, std::size_t m_per_dim, double padding_fraction = 0.1);

// Four interpolation weights for a scalar on a 1-D grid, over nodes
// first .. first+3. Interior cells use the Keys cubic-convolution kernel
// (a = -0.5); the two boundary cells use 4-point Lagrange interpolation so
// every stencil stays on the grid. `derivative` is d/dz of the weights.
struct Stencil {
  std::size_t first = 0;
  std::array<double, 4> weights{};
  std::array<double, 4> derivative{};
  bool clamped = false;
};
Stencil interp_stencil(double z, const Grid1D& grid);

// Keys cubic convolution kernel with a = -0.5 and its derivative.
double keys_kernel(double s);
double keys_kernel_derivative(double s);

// Interpolation matrix for the rows of Z; points outside the grid are
// clamped to its boundary (a warning is logged once per call).
linalg::SparseRowMatrix interp_weights(const Matrix& Z, const ProductGrid& grid);

// Applies (F_0 kron F_1 kron ... ) to v without forming the product.
Vector kron_mvm(std::span<const Matrix> factors, const Vector& v);

// Unit-variance RBF matrix over the nodes of one grid dimension.
Matrix grid_kernel_1d(const Grid1D& grid, double lengthscale);

enum class LogDetMode { automatic, eigen, dense };

struct KissOptions {
  double cg_tolerance = 1e-4;
  std::size_t cg_max_iterations = 1000;
  LogDetMode logdet = LogDetMode::automatic;
  std::size_t dense_logdet_max_n = 2000;
  double predict_cg_tolerance = 1e-8;
};

struct KissGpModel {
  kernels::KernelHyperparams hp;
  Matrix latent;  // n x D training latents
  ProductGrid grid;
  linalg::SparseRowMatrix W;
  std::vector<Matrix> factors;  // unit-variance per-dimension K_UU
  std::vector<linalg::EigenDecomposition> factor_eigen;

  std::size_t n() const { return W.rows(); }
};

// Builds the model from latent points on a fixed grid.
KissGpModel make_kiss_model(const kernels::KernelHyperparams& hp, const Matrix& Z,
                            const ProductGrid& grid);
// Maps X through the feature extractor and builds a fresh grid around it.
KissGpModel make_kiss_model(const kernels::DeepKernelParams& dk, const Matrix& X,
                            std::size_t m_per_dim, double padding_fraction = 0.1);

// (W sigma^2 K_UU W^T + s^2 I) v
Vector kiss_mvm(const KissGpModel& model, const Vector& v);

double kiss_nll(const KissGpModel& model, const Vector& y, const KissOptions& options = {});

// Approximate NLL and its gradient with respect to the latent points and the
// kernel hyperparameters. With the eigenvalue log-determinant the latent
// gradient only carries the quadratic term (the grid is held fixed).
struct KissGradient {
  double value = 0.0;
  Matrix d_latent;
  Vector d_log_lengthscales;
  double d_log_signal_variance = 0.0;
  double d_log_noise_variance = 0.0;
  double d_mean_constant = 0.0;
};
KissGradient kiss_nll_grad(const kernels::KernelHyperparams& hp, const Matrix& Z, const Vector& y,
                           const ProductGrid& grid, const KissOptions& options = {});

// Variance-only posterior at latent test points.
gp::PosteriorPrediction kiss_predict(const KissGpModel& model, const Vector& y,
                                     const Matrix& Zstar, bool with_variance = true,
                                     const KissOptions& options = {});

// ---------------------------------------------------------------------------
// SKIP

// One input dimension's SKI kernel: K_d ~= W kuu W^T.
struct SkiFactor {
  linalg::SparseRowMatrix W;
  Matrix kuu;
};

// Symmetric low-rank form U diag(lambda) U^T.
struct LowRankKernel {
  Matrix U;
  Vector lambda;
  Vector apply(const Vector& v) const;
};

Vector ski_factor_mvm(const SkiFactor& f, const Vector& v);

// Rank-`rank` eigen-form of a symmetric operator via Lanczos from a fixed seed.
LowRankKernel lanczos_low_rank(const LinearOperator& op, std::size_t n, std::size_t rank);

// Approximates (K_1 o K_2 o ... o K_d) v. Factors are merged left to right;
// every merged product except the last is re-truncated to `rank`.
Vector skip_mvm(std::span<const SkiFactor> factors, std::size_t rank, const Vector& v);

// The same product as a reusable operator (decompositions done once).
class SkipOperator {
 public:
  SkipOperator(std::vector<SkiFactor> factors, std::size_t rank);
  Vector apply(const Vector& v) const;
  std::size_t n() const { return n_; }
  // Rank-`rank` eigen-form of the whole product.
  LowRankKernel truncated() const;

 private:
  std::vector<SkiFactor> factors_;
  std::size_t rank_;
  std::size_t n_;
  // Low-rank form of the product of all factors but the last.
  LowRankKernel head_;
};

// Per-input-dimension SKI factors for raw inputs with unit signal variance.
std::vector<SkiFactor> make_skip_factors(const Matrix& X, const Vector& lengthscales,
                                         std::size_t m_per_dim, double padding_fraction = 0.1);

// NLL of the SKIP model sigma^2 (K_1 o ... o K_d) + s^2 I: quadratic term by
// CG, log-determinant from the rank-`rank` truncation of the product.
double skip_nll(const kernels::KernelHyperparams& hp, const Matrix& X, const Vector& y,
                std::size_t m_per_dim, std::size_t rank, const KissOptions& options = {});

}  // namespace dkgp::scalable
