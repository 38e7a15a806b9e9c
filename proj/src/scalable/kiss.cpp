#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>
#include <string>

#include "dkgp/scalable.hpp"

namespace dkgp::scalable {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);
constexpr double kKeysA = -0.5;

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Lagrange basis on nodes {0,1,2,3} at position x, with derivatives.
void lagrange4(double x, std::array<double, 4>& w, std::array<double, 4>& dw) {
  for (int k = 0; k < 4; ++k) {
    double value = 1.0;
    double deriv = 0.0;
    for (int l = 0; l < 4; ++l) {
      if (l == k) continue;
      const double denom = static_cast<double>(k - l);
      // Product rule: derivative picks one factor at a time.
      double term = 1.0 / denom;
      for (int q = 0; q < 4; ++q) {
        if (q == k || q == l) continue;
        term *= (x - q) / static_cast<double>(k - q);
      }
      deriv += term;
      value *= (x - l) / denom;
    }
    w[static_cast<std::size_t>(k)] = value;
    dw[static_cast<std::size_t>(k)] = deriv;
  }
}

// Per-dimension stencils for every latent point.
struct DimStencils {
  std::vector<Stencil> rows;
};

std::vector<DimStencils> stencils_for(const Matrix& Z, const ProductGrid& grid,
                                      std::size_t* clamped_count) {
  std::vector<DimStencils> out(grid.dim_count());
  std::size_t clamped = 0;
  for (std::size_t d = 0; d < grid.dim_count(); ++d) {
    out[d].rows.resize(static_cast<std::size_t>(Z.rows()));
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      Stencil s = interp_stencil(Z(i, static_cast<Eigen::Index>(d)), grid.dims[d]);
      clamped += s.clamped ? 1 : 0;
      out[d].rows[static_cast<std::size_t>(i)] = s;
    }
  }
  if (clamped_count != nullptr) {
    *clamped_count = clamped;
  }
  return out;
}

void warn_clamped(std::size_t count, const char* who) {
  if (count > 0) {
    std::clog << "warning: " << who << ": " << count
              << " latent coordinate(s) outside the inducing grid were clamped\n";
  }
}

void check_grid_matches(const Matrix& Z, const ProductGrid& grid, const char* who) {
  if (grid.dim_count() == 0 || grid.size() == 0) {
    throw InvalidArgument(std::string(who) + ": EmptyGrid");
  }
  if (static_cast<std::size_t>(Z.cols()) != grid.dim_count()) {
    throw ShapeError(std::string(who) + ": latent width " + std::to_string(Z.cols()) +
                     " does not match grid dimension " + std::to_string(grid.dim_count()));
  }
}

linalg::SparseRowMatrix assemble(const std::vector<DimStencils>& st, const ProductGrid& grid,
                                 std::size_t n, std::vector<double>* derivative) {
  const std::size_t D = grid.dim_count();
  const std::vector<std::size_t> strides = grid.strides();
  std::size_t per_row = 1;
  for (std::size_t d = 0; d < D; ++d) per_row *= 4;
  std::vector<std::size_t> offsets(n + 1);
  std::vector<std::size_t> cols(n * per_row);
  std::vector<double> vals(n * per_row);
  if (derivative != nullptr) {
    derivative->assign(n * per_row * D, 0.0);
  }
  for (std::size_t i = 0; i <= n; ++i) offsets[i] = i * per_row;
  std::vector<std::size_t> digit(D);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t combo = 0; combo < per_row; ++combo) {
      std::size_t rest = combo;
      for (std::size_t d = D; d-- > 0;) {
        digit[d] = rest % 4;
        rest /= 4;
      }
      std::size_t col = 0;
      double w = 1.0;
      for (std::size_t d = 0; d < D; ++d) {
        const Stencil& s = st[d].rows[i];
        col += (s.first + digit[d]) * strides[d];
        w *= s.weights[digit[d]];
      }
      const std::size_t k = i * per_row + combo;
      cols[k] = col;
      vals[k] = w;
      if (derivative != nullptr) {
        for (std::size_t d = 0; d < D; ++d) {
          double dw = 1.0;
          for (std::size_t e = 0; e < D; ++e) {
            const Stencil& s = st[e].rows[i];
            dw *= e == d ? s.derivative[digit[e]] : s.weights[digit[e]];
          }
          (*derivative)[k * D + d] = dw;
        }
      }
    }
  }
  return {n, grid.size(), std::move(offsets), std::move(cols), std::move(vals)};
}

// W_d F W_d^T for one dimension's stencils (dense n x n); `left_derivative`
// uses the derivative stencil on the left side.
Matrix stencil_product(const std::vector<Stencil>& st, const Matrix& F, bool left_derivative) {
  const auto n = static_cast<Eigen::Index>(st.size());
  Matrix M(n, F.cols());  // (W_d or W'_d) F
  for (Eigen::Index i = 0; i < n; ++i) {
    const Stencil& s = st[static_cast<std::size_t>(i)];
    const auto& w = left_derivative ? s.derivative : s.weights;
    M.row(i).setZero();
    for (std::size_t a = 0; a < 4; ++a) {
      M.row(i) += w[a] * F.row(static_cast<Eigen::Index>(s.first + a));
    }
  }
  Matrix S(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Stencil& s = st[static_cast<std::size_t>(k)];
    S.col(k).setZero();
    for (std::size_t a = 0; a < 4; ++a) {
      S.col(k) += s.weights[a] * M.col(static_cast<Eigen::Index>(s.first + a));
    }
  }
  return S;
}

// d K_d / d log l_d for a unit-variance grid kernel.
Matrix grid_kernel_dlog_lengthscale(const Grid1D& grid, double lengthscale) {
  const auto m = static_cast<Eigen::Index>(grid.m);
  Matrix dK(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double diff = grid.node(static_cast<std::size_t>(i)) - grid.node(static_cast<std::size_t>(j));
      const double s2 = diff * diff / (lengthscale * lengthscale);
      dK(i, j) = std::exp(-0.5 * s2) * s2;
    }
  }
  return dK;
}

struct KroneckerSpectrum {
  Vector values;  // sigma^2 * product of per-dim eigenvalues, descending
  std::vector<std::vector<std::size_t>> index;  // per value: eigen index per dim
};

KroneckerSpectrum kronecker_spectrum(const std::vector<linalg::EigenDecomposition>& eig,
                                     double sigma2) {
  std::size_t total = 1;
  for (const auto& e : eig) total *= static_cast<std::size_t>(e.values.size());
  std::vector<double> vals(total);
  std::vector<std::vector<std::size_t>> idx(total, std::vector<std::size_t>(eig.size()));
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rest = flat;
    double v = sigma2;
    for (std::size_t d = eig.size(); d-- > 0;) {
      const auto md = static_cast<std::size_t>(eig[d].values.size());
      idx[flat][d] = rest % md;
      rest /= md;
      v *= std::max(eig[d].values(static_cast<Eigen::Index>(idx[flat][d])), 0.0);
    }
    vals[flat] = v;
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
  KroneckerSpectrum out;
  out.values.resize(static_cast<Eigen::Index>(total));
  out.index.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    out.values(static_cast<Eigen::Index>(k)) = vals[order[k]];
    out.index.push_back(idx[order[k]]);
  }
  return out;
}

bool use_dense_logdet(const KissOptions& options, std::size_t n) {
  switch (options.logdet) {
    case LogDetMode::dense:
      return true;
    case LogDetMode::eigen:
      return false;
    case LogDetMode::automatic:
      return n <= options.dense_logdet_max_n;
  }
  return false;
}

// sigma^2 (o_d S_d) + s^2 I, built from per-dimension SKI matrices.
Matrix dense_ski_covariance(const std::vector<Matrix>& S, double sigma2, double noise) {
  Matrix A = S[0];
  for (std::size_t d = 1; d < S.size(); ++d) A = A.cwiseProduct(S[d]);
  A *= sigma2;
  A.diagonal().array() += noise;
  return A;
}

std::vector<Matrix> per_dim_ski(const std::vector<DimStencils>& st,
                                const std::vector<Matrix>& factors) {
  std::vector<Matrix> S;
  for (std::size_t d = 0; d < factors.size(); ++d) {
    S.push_back(stencil_product(st[d].rows, factors[d], false));
  }
  return S;
}

}  // namespace

double keys_kernel(double s) {
  const double x = std::abs(s);
  if (x <= 1.0) return ((kKeysA + 2.0) * x - (kKeysA + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((kKeysA * x - 5.0 * kKeysA) * x + 8.0 * kKeysA) * x - 4.0 * kKeysA;
  return 0.0;
}

double keys_kernel_derivative(double s) {
  const double x = std::abs(s);
  const double sign = s < 0.0 ? -1.0 : 1.0;
  if (x <= 1.0) return sign * (3.0 * (kKeysA + 2.0) * x * x - 2.0 * (kKeysA + 3.0) * x);
  if (x < 2.0) return sign * (3.0 * kKeysA * x * x - 10.0 * kKeysA * x + 8.0 * kKeysA);
  return 0.0;
}

std::size_t ProductGrid::size() const {
  if (dims.empty()) return 0;
  std::size_t total = 1;
  for (const Grid1D& g : dims) total *= g.m;
  return total;
}

std::vector<std::size_t> ProductGrid::strides() const {
  std::vector<std::size_t> s(dims.size(), 1);
  for (std::size_t d = dims.size(); d-- > 1;) {
    s[d - 1] = s[d] * dims[d].m;
  }
  return s;
}

std::vector<double> ProductGrid::node(std::size_t flat) const {
  std::vector<double> coords(dims.size());
  for (std::size_t d = dims.size(); d-- > 0;) {
    coords[d] = dims[d].node(flat % dims[d].m);
    flat /= dims[d].m;
  }
  return coords;
}

ProductGrid build_grid(const Matrix& Z, std::size_t m_per_dim, double padding_fraction) {
  const auto D = static_cast<std::size_t>(Z.cols());
  if (D == 0 || D > kMaxGridDims) {
    throw InvalidArgument("build_grid: TooManyDims (" + std::to_string(D) +
                          " latent dimensions, at most " + std::to_string(kMaxGridDims) + ")");
  }
  if (m_per_dim < 4) {
    throw InvalidArgument("build_grid: cubic interpolation needs at least 4 nodes per dimension");
  }
  if (Z.rows() == 0) {
    throw InvalidArgument("build_grid: no points");
  }
  ProductGrid grid;
  for (std::size_t d = 0; d < D; ++d) {
    const auto col = Z.col(static_cast<Eigen::Index>(d));
    const double lo = col.minCoeff();
    const double hi = col.maxCoeff();
    Grid1D g;
    g.m = m_per_dim;
    if (hi - lo <= 0.0) {
      g.lo = lo - 0.5;
      g.hi = hi + 0.5;
    } else {
      const double pad = padding_fraction * (hi - lo);
      g.lo = lo - pad;
      g.hi = hi + pad;
    }
    grid.dims.push_back(g);
  }
  return grid;
}

Stencil interp_stencil(double z, const Grid1D& grid) {
  if (grid.m < 4) {
    throw InvalidArgument("interp_stencil: grid needs at least 4 nodes");
  }
  Stencil s;
  if (z < grid.lo || z > grid.hi) {
    s.clamped = true;
    z = std::clamp(z, grid.lo, grid.hi);
  }
  const double h = grid.spacing();
  const double p = (z - grid.lo) / h;
  const auto last_cell = static_cast<std::ptrdiff_t>(grid.m) - 2;
  const std::ptrdiff_t j = std::clamp(static_cast<std::ptrdiff_t>(std::floor(p)),
                                      std::ptrdiff_t{0}, last_cell);
  const double t = p - static_cast<double>(j);
  std::array<double, 4> dw_dp{};
  if (j >= 1 && j + 2 <= static_cast<std::ptrdiff_t>(grid.m) - 1) {
    s.first = static_cast<std::size_t>(j - 1);
    const std::array<double, 4> dist{1.0 + t, t, 1.0 - t, 2.0 - t};
    const std::array<double, 4> ddist{1.0, 1.0, -1.0, -1.0};
    for (std::size_t a = 0; a < 4; ++a) {
      s.weights[a] = keys_kernel(dist[a]);
      dw_dp[a] = keys_kernel_derivative(dist[a]) * ddist[a];
    }
  } else if (j == 0) {
    s.first = 0;
    lagrange4(t, s.weights, dw_dp);
  } else {
    s.first = grid.m - 4;
    lagrange4(t + 2.0, s.weights, dw_dp);
  }
  for (std::size_t a = 0; a < 4; ++a) {
    s.derivative[a] = s.clamped ? 0.0 : dw_dp[a] / h;
  }
  return s;
}

linalg::SparseRowMatrix interp_weights(const Matrix& Z, const ProductGrid& grid) {
  check_grid_matches(Z, grid, "interp_weights");
  std::size_t clamped = 0;
  const auto st = stencils_for(Z, grid, &clamped);
  warn_clamped(clamped, "interp_weights");
  return assemble(st, grid, static_cast<std::size_t>(Z.rows()), nullptr);
}

Vector kron_mvm(std::span<const Matrix> factors, const Vector& v) {
  std::size_t total = 1;
  for (const Matrix& f : factors) {
    if (f.rows() != f.cols()) throw ShapeError("kron_mvm: factors must be square");
    total *= static_cast<std::size_t>(f.rows());
  }
  if (static_cast<std::size_t>(v.size()) != total) {
    throw ShapeError("kron_mvm: vector length " + std::to_string(v.size()) + " != " +
                     std::to_string(total));
  }
  Vector x = v;
  Vector y(v.size());
  std::size_t outer = 1;
  for (std::size_t d = 0; d < factors.size(); ++d) {
    const auto md = static_cast<std::size_t>(factors[d].rows());
    const std::size_t inner = total / (outer * md);
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t offset = o * md * inner;
      Eigen::Map<const RowMajorMatrix> block(x.data() + offset, static_cast<Eigen::Index>(md),
                                             static_cast<Eigen::Index>(inner));
      Eigen::Map<RowMajorMatrix> out(y.data() + offset, static_cast<Eigen::Index>(md),
                                     static_cast<Eigen::Index>(inner));
      out.noalias() = factors[d] * block;
    }
    std::swap(x, y);
    outer *= md;
  }
  return x;
}

Matrix grid_kernel_1d(const Grid1D& grid, double lengthscale) {
  const auto m = static_cast<Eigen::Index>(grid.m);
  Matrix K(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double diff = (grid.node(static_cast<std::size_t>(i)) -
                           grid.node(static_cast<std::size_t>(j))) / lengthscale;
      K(i, j) = std::exp(-0.5 * diff * diff);
    }
  }
  return K;
}

KissGpModel make_kiss_model(const kernels::KernelHyperparams& hp, const Matrix& Z,
                            const ProductGrid& grid) {
  check_grid_matches(Z, grid, "make_kiss_model");
  if (static_cast<std::size_t>(hp.log_lengthscales.size()) != grid.dim_count()) {
    throw ShapeError("make_kiss_model: lengthscale count does not match the grid");
  }
  KissGpModel model;
  model.hp = hp;
  model.latent = Z;
  model.grid = grid;
  model.W = interp_weights(Z, grid);
  const Vector ls = hp.lengthscales();
  for (std::size_t d = 0; d < grid.dim_count(); ++d) {
    model.factors.push_back(grid_kernel_1d(grid.dims[d], ls(static_cast<Eigen::Index>(d))));
    model.factor_eigen.push_back(linalg::sym_eigen(model.factors.back()));
  }
  return model;
}

KissGpModel make_kiss_model(const kernels::DeepKernelParams& dk, const Matrix& X,
                            std::size_t m_per_dim, double padding_fraction) {
  const Matrix Z = features::feature_forward(dk.feature, X);
  return make_kiss_model(dk.base, Z, build_grid(Z, m_per_dim, padding_fraction));
}

Vector kiss_mvm(const KissGpModel& model, const Vector& v) {
  if (static_cast<std::size_t>(v.size()) != model.n()) {
    throw ShapeError("kiss_mvm: vector length " + std::to_string(v.size()) + " != n " +
                     std::to_string(model.n()));
  }
  const Vector u = linalg::sparse_matvec_transpose(model.W, v);
  const Vector ku = kron_mvm(model.factors, u);
  return model.hp.signal_variance() * linalg::sparse_matvec(model.W, ku) +
         model.hp.noise_variance() * v;
}

namespace {

double eigen_logdet(const KroneckerSpectrum& spec, std::size_t n, std::size_t m_total,
                    double noise, std::size_t* used) {
  const double scale = static_cast<double>(n) / static_cast<double>(m_total);
  const std::size_t count = std::min(n, m_total);
  double logdet = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    logdet += std::log(scale * spec.values(static_cast<Eigen::Index>(k)) + noise);
  }
  // The remaining n - count eigenvalues of the n x n matrix are the noise.
  logdet += static_cast<double>(n - count) * std::log(noise);
  if (used != nullptr) *used = count;
  return logdet;
}

}  // namespace

double kiss_nll(const KissGpModel& model, const Vector& y, const KissOptions& options) {
  const std::size_t n = model.n();
  if (static_cast<std::size_t>(y.size()) != n) {
    throw ShapeError("kiss_nll: y length mismatch");
  }
  const Vector r = y.array() - model.hp.mean_constant;
  const auto cg = linalg::conjugate_gradient([&](const Vector& v) { return kiss_mvm(model, v); },
                                             r, options.cg_tolerance, options.cg_max_iterations);
  const double quad = r.dot(cg.x);
  const double noise = model.hp.noise_variance();
  const double sigma2 = model.hp.signal_variance();
  double logdet = 0.0;
  if (use_dense_logdet(options, n)) {
    std::size_t clamped = 0;
    const auto st = stencils_for(model.latent, model.grid, &clamped);
    const Matrix A = dense_ski_covariance(per_dim_ski(st, model.factors), sigma2, noise);
    logdet = linalg::cholesky_logdet(linalg::cholesky_jittered(A));
  } else {
    logdet = eigen_logdet(kronecker_spectrum(model.factor_eigen, sigma2), n, model.grid.size(),
                          noise, nullptr);
  }
  return 0.5 * (quad + logdet + static_cast<double>(n) * kLog2Pi);
}

KissGradient kiss_nll_grad(const kernels::KernelHyperparams& hp, const Matrix& Z, const Vector& y,
                           const ProductGrid& grid, const KissOptions& options) {
  check_grid_matches(Z, grid, "kiss_nll_grad");
  const auto n = static_cast<std::size_t>(Z.rows());
  const std::size_t D = grid.dim_count();
  if (static_cast<std::size_t>(y.size()) != n) {
    throw ShapeError("kiss_nll_grad: y length mismatch");
  }
  std::size_t clamped = 0;
  const auto st = stencils_for(Z, grid, &clamped);
  warn_clamped(clamped, "kiss_nll_grad");
  std::vector<double> dW;
  const linalg::SparseRowMatrix W = assemble(st, grid, n, &dW);

  const Vector ls = hp.lengthscales();
  const double sigma2 = hp.signal_variance();
  const double noise = hp.noise_variance();
  std::vector<Matrix> factors;
  std::vector<Matrix> dfactors;
  for (std::size_t d = 0; d < D; ++d) {
    factors.push_back(grid_kernel_1d(grid.dims[d], ls(static_cast<Eigen::Index>(d))));
    dfactors.push_back(grid_kernel_dlog_lengthscale(grid.dims[d], ls(static_cast<Eigen::Index>(d))));
  }
  auto mvm = [&](const Vector& v) {
    const Vector u = linalg::sparse_matvec_transpose(W, v);
    return Vector(sigma2 * linalg::sparse_matvec(W, kron_mvm(factors, u)) + noise * v);
  };

  const Vector r = y.array() - hp.mean_constant;
  const Vector alpha =
      linalg::conjugate_gradient(mvm, r, options.cg_tolerance, options.cg_max_iterations).x;
  const double quad = r.dot(alpha);
  const Vector beta = linalg::sparse_matvec_transpose(W, alpha);
  const Vector kbeta = sigma2 * kron_mvm(factors, beta);

  KissGradient g;
  g.d_latent = Matrix::Zero(Z.rows(), Z.cols());
  g.d_log_lengthscales = Vector::Zero(static_cast<Eigen::Index>(D));

  // Quadratic term: d(r^T A^-1 r) = -alpha^T dA alpha + 2 alpha^T dr.
  g.d_mean_constant = -2.0 * alpha.sum();
  g.d_log_noise_variance = -noise * alpha.squaredNorm();
  g.d_log_signal_variance = -beta.dot(kbeta);
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<Matrix> swapped = factors;
    swapped[d] = dfactors[d];
    g.d_log_lengthscales(static_cast<Eigen::Index>(d)) = -sigma2 * beta.dot(kron_mvm(swapped, beta));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto cols = W.row_cols(i);
    const std::size_t start = W.row_offsets()[i];
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const double kb = kbeta(static_cast<Eigen::Index>(cols[k]));
      for (std::size_t d = 0; d < D; ++d) {
        g.d_latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) +=
            -2.0 * alpha(static_cast<Eigen::Index>(i)) * kb * dW[(start + k) * D + d];
      }
    }
  }

  // Log-determinant term.
  double logdet = 0.0;
  if (use_dense_logdet(options, n)) {
    const std::vector<Matrix> S = per_dim_ski(st, factors);
    const Matrix A = dense_ski_covariance(S, sigma2, noise);
    double applied = 0.0;
    const Matrix L = linalg::cholesky_jittered(A, &applied);
    logdet = linalg::cholesky_logdet(L);
    Matrix G = linalg::cholesky_solve(L, Matrix::Identity(A.rows(), A.cols()));
    // The jitter scales with mean(diag A); fold its derivative into G.
    G.diagonal().array() += applied / A.diagonal().sum() * G.trace();
    g.d_log_noise_variance += noise * G.trace();
    Matrix signal = A;
    signal.diagonal().array() -= noise;
    g.d_log_signal_variance += G.cwiseProduct(signal).sum();
    for (std::size_t d = 0; d < D; ++d) {
      Matrix others = Matrix::Constant(A.rows(), A.cols(), sigma2);
      for (std::size_t e = 0; e < D; ++e) {
        if (e != d) others = others.cwiseProduct(S[e]);
      }
      const Matrix dS = stencil_product(st[d].rows, dfactors[d], false);
      g.d_log_lengthscales(static_cast<Eigen::Index>(d)) += G.cwiseProduct(others).cwiseProduct(dS).sum();
      const Matrix T = stencil_product(st[d].rows, factors[d], true);
      const Vector dz = 2.0 * G.cwiseProduct(others).cwiseProduct(T).rowwise().sum();
      g.d_latent.col(static_cast<Eigen::Index>(d)) += dz;
    }
  } else {
    std::vector<linalg::EigenDecomposition> eig;
    for (const Matrix& f : factors) eig.push_back(linalg::sym_eigen(f));
    const KroneckerSpectrum spec = kronecker_spectrum(eig, sigma2);
    std::size_t used = 0;
    const std::size_t m_total = grid.size();
    logdet = eigen_logdet(spec, n, m_total, noise, &used);
    const double scale = static_cast<double>(n) / static_cast<double>(m_total);
    // Per-dimension eigenvalue derivatives v^T dK v.
    std::vector<Vector> deig(D);
    for (std::size_t d = 0; d < D; ++d) {
      deig[d] = (eig[d].vectors.transpose() * dfactors[d] * eig[d].vectors).diagonal();
    }
    g.d_log_noise_variance += static_cast<double>(n - used);
    for (std::size_t k = 0; k < used; ++k) {
      const double lam = spec.values(static_cast<Eigen::Index>(k));
      const double denom = scale * lam + noise;
      g.d_log_noise_variance += noise / denom;
      g.d_log_signal_variance += scale * lam / denom;
      for (std::size_t d = 0; d < D; ++d) {
        double prod = sigma2;
        for (std::size_t e = 0; e < D; ++e) {
          const auto idx = static_cast<Eigen::Index>(spec.index[k][e]);
          prod *= e == d ? deig[e](idx) : std::max(eig[e].values(idx), 0.0);
        }
        g.d_log_lengthscales(static_cast<Eigen::Index>(d)) += scale * prod / denom;
      }
    }
  }

  g.value = 0.5 * (quad + logdet + static_cast<double>(n) * kLog2Pi);
  g.d_latent *= 0.5;
  g.d_log_lengthscales *= 0.5;
  g.d_log_signal_variance *= 0.5;
  g.d_log_noise_variance *= 0.5;
  g.d_mean_constant *= 0.5;
  if (std::exp(hp.log_noise_variance) < kernels::kNoiseFloor) {
    g.d_log_noise_variance = 0.0;
  }
  return g;
}

gp::PosteriorPrediction kiss_predict(const KissGpModel& model, const Vector& y,
                                     const Matrix& Zstar, bool with_variance,
                                     const KissOptions& options) {
  if (static_cast<std::size_t>(y.size()) != model.n()) {
    throw ShapeError("kiss_predict: y length mismatch");
  }
  const linalg::SparseRowMatrix Wstar = interp_weights(Zstar, model.grid);
  const double sigma2 = model.hp.signal_variance();
  auto mvm = [&](const Vector& v) { return kiss_mvm(model, v); };
  const Vector r = y.array() - model.hp.mean_constant;
  const Vector alpha =
      linalg::conjugate_gradient(mvm, r, options.predict_cg_tolerance, options.cg_max_iterations).x;
  const Vector kbeta = sigma2 * kron_mvm(model.factors, linalg::sparse_matvec_transpose(model.W, alpha));

  gp::PosteriorPrediction pred;
  pred.includes_noise = false;
  pred.mean = linalg::sparse_matvec(Wstar, kbeta).array() + model.hp.mean_constant;
  if (!with_variance) {
    return pred;
  }
  pred.variance.resize(Zstar.rows());
  const auto m_total = static_cast<Eigen::Index>(model.grid.size());
  for (Eigen::Index j = 0; j < Zstar.rows(); ++j) {
    Vector e = Vector::Zero(m_total);
    const auto cols = Wstar.row_cols(static_cast<std::size_t>(j));
    const auto vals = Wstar.row_values(static_cast<std::size_t>(j));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      e(static_cast<Eigen::Index>(cols[k])) = vals[k];
    }
    const Vector q = sigma2 * linalg::sparse_matvec(model.W, kron_mvm(model.factors, e));
    const Vector sol = linalg::conjugate_gradient(mvm, q, options.predict_cg_tolerance,
                                                  options.cg_max_iterations).x;
    pred.variance(j) = std::max(0.0, sigma2 - q.dot(sol));
  }
  return pred;
}

}  // namespace dkgp::scalable
