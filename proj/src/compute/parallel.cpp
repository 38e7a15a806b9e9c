#include <omp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <string>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "dkgp/compute.hpp"

namespace dkgp::compute {

namespace {

constexpr int kMaxSplineOrder = 15;

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Matrix pairwise_sqdist(const Matrix& A, const Matrix& B, bool same_points) {
  if (A.cols() != B.cols()) {
    throw ShapeError("pairwise_sqdist: column mismatch " + std::to_string(A.cols()) + " vs " +
                     std::to_string(B.cols()));
  }
  const Vector na = A.rowwise().squaredNorm();
  const Vector nb = B.rowwise().squaredNorm();
  Matrix D = -2.0 * (A * B.transpose());
  const Eigen::Index rows = D.rows();
  const Eigen::Index cols = D.cols();
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      D(i, j) = std::max(0.0, D(i, j) + na(i) + nb(j));
    }
  }
  if (same_points) {
    D.diagonal().setZero();
    D.triangularView<Eigen::StrictlyLower>() = D.transpose();
  }
  return D;
}

Matrix silu(const Matrix& X) {
  Matrix Y(X.rows(), X.cols());
  const Eigen::Index size = X.size();
  const double* x = X.data();
  double* y = Y.data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < size; ++k) {
    y[k] = x[k] * sigmoid(x[k]);
  }
  return Y;
}

Matrix silu_derivative(const Matrix& X) {
  Matrix Y(X.rows(), X.cols());
  const Eigen::Index size = X.size();
  const double* x = X.data();
  double* y = Y.data();
#pragma omp parallel for schedule(static)
  for (Eigen::Index k = 0; k < size; ++k) {
    const double s = sigmoid(x[k]);
    y[k] = s * (1.0 + x[k] * (1.0 - s));
  }
  return Y;
}

std::size_t bspline_window(double u, std::span<const double> knots, int order,
                           std::span<double> values, std::span<double> derivative) {
  const auto p = static_cast<std::size_t>(order);
  const std::size_t basis_count = knots.size() - p - 1;
  const auto upper = std::upper_bound(knots.begin(), knots.end(), u);
  std::ptrdiff_t raw_span = (upper - knots.begin()) - 1;
  raw_span = std::clamp<std::ptrdiff_t>(raw_span, static_cast<std::ptrdiff_t>(p),
                                        static_cast<std::ptrdiff_t>(basis_count) - 1);
  const auto span = static_cast<std::size_t>(raw_span);

  std::array<double, kMaxSplineOrder + 1> N{};
  std::array<double, kMaxSplineOrder + 1> prev{};
  std::array<double, kMaxSplineOrder + 1> left{};
  std::array<double, kMaxSplineOrder + 1> right{};
  N[0] = 1.0;
  if (p == 1) {
    prev[0] = 1.0;
  }
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = u - knots[span + 1 - j];
    right[j] = knots[span + j] - u;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
    if (j + 1 == p) {
      std::copy_n(N.begin(), p, prev.begin());
    }
  }
  std::copy_n(N.begin(), p + 1, values.begin());

  if (!derivative.empty()) {
    if (p == 0) {
      derivative[0] = 0.0;
    } else {
      const double dp = static_cast<double>(p);
      for (std::size_t a = 0; a <= p; ++a) {
        const std::size_t i = span - p + a;
        const double lower = a >= 1 ? prev[a - 1] / (knots[i + p] - knots[i]) : 0.0;
        const double upper_term = a + 1 <= p ? prev[a] / (knots[i + p + 1] - knots[i + 1]) : 0.0;
        derivative[a] = dp * (lower - upper_term);
      }
    }
  }
  return span;
}

BsplineDesign bspline_design(const Matrix& X, std::span<const double> knots, int order, double lo,
                             double hi, bool with_derivative) {
  if (order < 0 || order > kMaxSplineOrder) {
    throw InvalidArgument("bspline_design: unsupported spline order " + std::to_string(order));
  }
  if (knots.size() < static_cast<std::size_t>(order) + 2) {
    throw InvalidArgument("bspline_design: too few knots");
  }
  BsplineDesign design;
  const std::size_t nb = knots.size() - static_cast<std::size_t>(order) - 1;
  design.basis_count = nb;
  const Eigen::Index n = X.rows();
  const Eigen::Index in = X.cols();
  const auto width = static_cast<Eigen::Index>(nb) * in;
  design.basis = Matrix::Zero(n, width);
  if (with_derivative) {
    design.derivative = Matrix::Zero(n, width);
  }
  const auto p = static_cast<std::size_t>(order);

#pragma omp parallel for schedule(static)
  for (Eigen::Index r = 0; r < n; ++r) {
    std::array<double, kMaxSplineOrder + 1> vals{};
    std::array<double, kMaxSplineOrder + 1> ders{};
    for (Eigen::Index i = 0; i < in; ++i) {
      const double u = X(r, i);
      const bool clamped = u < lo || u > hi;
      const double uc = std::clamp(u, lo, hi);
      const std::span<double> dspan =
          with_derivative ? std::span<double>(ders.data(), p + 1) : std::span<double>{};
      const std::size_t span = bspline_window(uc, knots, order, {vals.data(), p + 1}, dspan);
      const Eigen::Index base = i * static_cast<Eigen::Index>(nb) +
                                static_cast<Eigen::Index>(span - p);
      for (std::size_t a = 0; a <= p; ++a) {
        design.basis(r, base + static_cast<Eigen::Index>(a)) = vals[a];
        if (with_derivative && !clamped) {
          design.derivative(r, base + static_cast<Eigen::Index>(a)) = ders[a];
        }
      }
    }
  }
  return design;
}

void csr_matvec(std::span<const std::size_t> row_offsets, std::span<const std::size_t> cols,
                std::span<const double> values, std::span<const double> v, std::span<double> y) {
  const auto rows = static_cast<std::ptrdiff_t>(row_offsets.size()) - 1;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      acc += values[k] * v[cols[k]];
    }
    y[r] = acc;
  }
}

int configure_threads_from_env() {
  int threads = 1;
  if (const char* env = std::getenv("DKGP_THREADS"); env != nullptr && *env != '\0') {
    try {
      threads = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      threads = 1;
    }
  }
  omp_set_num_threads(threads);
  Eigen::setNbThreads(threads);
  return threads;
}

void enable_flush_to_zero() {
#if defined(__SSE2__)
  constexpr unsigned kFtzDaz = 0x8040;
  _mm_setcsr(_mm_getcsr() | kFtzDaz);
#pragma omp parallel
  _mm_setcsr(_mm_getcsr() | kFtzDaz);
#endif
}

}  // namespace dkgp::compute
