#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's numerical code: loops, Gaussian elimination and closed forms only.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "dkgp/autodiff.hpp"
#include "dkgp/linalg.hpp"

namespace dkgp::oracle {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1.0,
                            double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) M(i, j) = u(rng);
  }
  return M;
}

// LU with partial pivoting, product of pivots.
inline double determinant(Matrix A) {
  const Eigen::Index n = A.rows();
  double det = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::abs(A(i, k)) > std::abs(A(p, k))) p = i;
    }
    if (A(p, k) == 0.0) return 0.0;
    if (p != k) {
      A.row(p).swap(A.row(k));
      det = -det;
    }
    det *= A(k, k);
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      for (Eigen::Index j = k; j < n; ++j) A(i, j) -= f * A(k, j);
    }
  }
  return det;
}

// log|det A| via the same elimination, robust to large n.
inline double log_abs_determinant(Matrix A) {
  const Eigen::Index n = A.rows();
  double logdet = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::abs(A(i, k)) > std::abs(A(p, k))) p = i;
    }
    if (p != k) A.row(p).swap(A.row(k));
    logdet += std::log(std::abs(A(k, k)));
    for (Eigen::Index i = k + 1; i < n; ++i) {
      const double f = A(i, k) / A(k, k);
      for (Eigen::Index j = k; j < n; ++j) A(i, j) -= f * A(k, j);
    }
  }
  return logdet;
}

// Gauss-Jordan elimination with partial pivoting on [A | B].
inline Matrix gauss_solve(Matrix A, Matrix B) {
  const Eigen::Index n = A.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::Index p = k;
    for (Eigen::Index i = k + 1; i < n; ++i) {
      if (std::abs(A(i, k)) > std::abs(A(p, k))) p = i;
    }
    if (p != k) {
      A.row(p).swap(A.row(k));
      B.row(p).swap(B.row(k));
    }
    const double piv = A(k, k);
    A.row(k) /= piv;
    B.row(k) /= piv;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == k) continue;
      const double f = A(i, k);
      if (f == 0.0) continue;
      A.row(i) -= f * A.row(k);
      B.row(i) -= f * B.row(k);
    }
  }
  return B;
}

inline Matrix inverse(const Matrix& A) {
  return gauss_solve(A, Matrix::Identity(A.rows(), A.cols()));
}

// sigma^2 exp(-0.5 sum_d (a_d - b_d)^2 / l_d^2), entry by entry.
inline Matrix rbf(const Matrix& A, const Matrix& B, const Vector& lengthscales, double sigma2) {
  Matrix K(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index d = 0; d < A.cols(); ++d) {
        const double t = (A(i, d) - B(j, d)) / lengthscales(d);
        s += t * t;
      }
      K(i, j) = sigma2 * std::exp(-0.5 * s);
    }
  }
  return K;
}

struct DensePosterior {
  Vector mean;
  Vector variance;
  double nll = 0.0;
};

// Textbook GP formulas through an explicit inverse and LU determinant.
// `jitter_fraction` reproduces the library's covariance jitter policy.
inline DensePosterior dense_gp(const Matrix& Z, const Vector& y, const Matrix& Zs, const Vector& lengthscales,
                               double sigma2, double noise, double mean_c, double jitter_fraction) {
  Matrix K = rbf(Z, Z, lengthscales, sigma2);
  K.diagonal().array() += noise;
  K.diagonal().array() += jitter_fraction * K.diagonal().mean();
  const Matrix Kinv = inverse(K);
  const Vector r = y.array() - mean_c;
  const Matrix Ks = rbf(Zs, Z, lengthscales, sigma2);
  DensePosterior out;
  out.mean = (Ks * (Kinv * r)).array() + mean_c;
  out.variance.resize(Zs.rows());
  for (Eigen::Index i = 0; i < Zs.rows(); ++i) {
    out.variance(i) = sigma2 - Ks.row(i).dot(Kinv * Ks.row(i).transpose());
  }
  const double n = static_cast<double>(y.size());
  out.nll = 0.5 * (r.dot(Kinv * r) + log_abs_determinant(K) + n * std::log(2.0 * std::numbers::pi));
  return out;
}

// Cubic B-spline on uniform knots t_j = t_0 + j h by its closed-form pieces:
// value of the basis function starting at knot index j.
inline double cardinal_cubic(double u, double t0, double h, int j) {
  const double s = (u - (t0 + j * h)) / h;  // in [0, 4) on support
  if (s < 0.0 || s >= 4.0) return 0.0;
  if (s < 1.0) return s * s * s / 6.0;
  if (s < 2.0) return (-3 * s * s * s + 12 * s * s - 12 * s + 4) / 6.0;
  if (s < 3.0) return (3 * s * s * s - 24 * s * s + 60 * s - 44) / 6.0;
  const double t = 4.0 - s;
  return t * t * t / 6.0;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

// One efficient-KAN layer with cubic splines on a uniform grid over [lo, hi]
// with G intervals: out[r][o] = sum_i bw*silu(x) + sc * sum_c sw_c B_c(clamp(x)).
inline Matrix kan_layer(const Matrix& X, const Matrix& base_weight, const Matrix& scaler,
                        const Matrix& spline_weight, int G, double lo, double hi) {
  const int k = 3;
  const int nb = G + k;
  const double h = (hi - lo) / G;
  const double t0 = lo - k * h;
  Matrix out = Matrix::Zero(X.rows(), base_weight.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index o = 0; o < base_weight.rows(); ++o) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < X.cols(); ++i) {
        const double x = X(r, i);
        double u = std::min(std::max(x, lo), hi);
        // Right end belongs to the last interval.
        if (u >= hi) u = std::nextafter(hi, lo);
        double spline = 0.0;
        for (int c = 0; c < nb; ++c) spline += spline_weight(o, i * nb + c) * cardinal_cubic(u, t0, h, c);
        acc += base_weight(o, i) * silu(x) + scaler(o, i) * spline;
      }
      out(r, o) = acc;
    }
  }
  return out;
}

// Central differences against the tape's gradient, scored as
// |analytic - fd| / (1 + |fd|) so near-zero components do not dominate.
inline double fd_mixed_error(const ad::TracedFunction& f, const std::vector<Matrix>& params, double step) {
  auto run = [&](const std::vector<Matrix>& values, std::vector<Matrix>* grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Matrix& p : values) leaves.push_back(tape.leaf(p));
    const ad::Var out = f(tape, leaves);
    if (grads) {
      const ad::Gradients g = tape.backward(out);
      for (const ad::Var& l : leaves) grads->push_back(g.of(l));
    }
    return out.scalar();
  };
  std::vector<Matrix> analytic;
  run(params, &analytic);
  std::vector<Matrix> probe = params;
  double worst = 0.0;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (Eigen::Index e = 0; e < probe[k].size(); ++e) {
      const double x = probe[k].data()[e];
      probe[k].data()[e] = x + step;
      const double up = run(probe, nullptr);
      probe[k].data()[e] = x - step;
      const double dn = run(probe, nullptr);
      probe[k].data()[e] = x;
      const double fd = (up - dn) / (2 * step);
      worst = std::max(worst, std::abs(analytic[k].data()[e] - fd) / (1.0 + std::abs(fd)));
    }
  }
  return worst;
}

}  // namespace dkgp::oracle
