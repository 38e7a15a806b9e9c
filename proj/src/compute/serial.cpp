#include <algorithm>
#include <cmath>
#include <vector>

#include "dkgp/compute.hpp"

namespace dkgp::compute::serial {

Matrix pairwise_sqdist(const Matrix& A, const Matrix& B) {
  if (A.cols() != B.cols()) {
    throw ShapeError("pairwise_sqdist: column mismatch");
  }
  Matrix D(A.rows(), B.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < B.rows(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < A.cols(); ++k) {
        const double diff = A(i, k) - B(j, k);
        acc += diff * diff;
      }
      D(i, j) = acc;
    }
  }
  return D;
}

Matrix silu(const Matrix& X) {
  Matrix Y(X.rows(), X.cols());
  for (Eigen::Index k = 0; k < X.size(); ++k) {
    const double x = X.data()[k];
    Y.data()[k] = x / (1.0 + std::exp(-x));
  }
  return Y;
}

void cox_de_boor(double u, std::span<const double> knots, int order, std::span<double> out) {
  const std::size_t len = knots.size();
  std::vector<double> B(len - 1, 0.0);
  std::size_t last_cell = len - 1;
  for (std::size_t j = len - 1; j-- > 0;) {
    if (knots[j] < knots[j + 1]) {
      last_cell = j;
      break;
    }
  }
  for (std::size_t j = 0; j + 1 < len; ++j) {
    const bool inside = knots[j] <= u && u < knots[j + 1];
    const bool right_end = j == last_cell && u == knots[j + 1];
    B[j] = (inside || right_end) ? 1.0 : 0.0;
  }
  for (int d = 1; d <= order; ++d) {
    const auto du = static_cast<std::size_t>(d);
    for (std::size_t j = 0; j + du + 1 < len; ++j) {
      const double den1 = knots[j + du] - knots[j];
      const double den2 = knots[j + du + 1] - knots[j + 1];
      const double a = den1 > 0.0 ? (u - knots[j]) / den1 * B[j] : 0.0;
      const double b = den2 > 0.0 ? (knots[j + du + 1] - u) / den2 * B[j + 1] : 0.0;
      B[j] = a + b;
    }
  }
  const std::size_t nb = len - static_cast<std::size_t>(order) - 1;
  std::copy_n(B.begin(), nb, out.begin());
}

BsplineDesign bspline_design(const Matrix& X, std::span<const double> knots, int order, double lo,
                             double hi, bool with_derivative) {
  BsplineDesign design;
  const std::size_t nb = knots.size() - static_cast<std::size_t>(order) - 1;
  design.basis_count = nb;
  const auto nbi = static_cast<Eigen::Index>(nb);
  design.basis = Matrix::Zero(X.rows(), nbi * X.cols());
  if (with_derivative) {
    design.derivative = Matrix::Zero(X.rows(), nbi * X.cols());
  }
  std::vector<double> vals(nb);
  std::vector<double> lower(nb + 1);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index i = 0; i < X.cols(); ++i) {
      const double u = X(r, i);
      const double uc = std::clamp(u, lo, hi);
      cox_de_boor(uc, knots, order, vals);
      for (std::size_t c = 0; c < nb; ++c) {
        design.basis(r, i * nbi + static_cast<Eigen::Index>(c)) = vals[c];
      }
      if (!with_derivative || order == 0 || u < lo || u > hi) {
        continue;
      }
      // d/du B_{c,p} = p (B_{c,p-1}/(t_{c+p}-t_c) - B_{c+1,p-1}/(t_{c+p+1}-t_{c+1}))
      cox_de_boor(uc, knots, order - 1, lower);
      const auto p = static_cast<std::size_t>(order);
      for (std::size_t c = 0; c < nb; ++c) {
        const double den1 = knots[c + p] - knots[c];
        const double den2 = knots[c + p + 1] - knots[c + 1];
        const double a = den1 > 0.0 ? lower[c] / den1 : 0.0;
        const double b = den2 > 0.0 ? lower[c + 1] / den2 : 0.0;
        design.derivative(r, i * nbi + static_cast<Eigen::Index>(c)) =
            static_cast<double>(order) * (a - b);
      }
    }
  }
  return design;
}

void csr_matvec(std::span<const std::size_t> row_offsets, std::span<const std::size_t> cols,
                std::span<const double> values, std::span<const double> v, std::span<double> y) {
  for (std::size_t r = 0; r + 1 < row_offsets.size(); ++r) {
    double acc = 0.0;
    for (std::size_t k = row_offsets[r]; k < row_offsets[r + 1]; ++k) {
      acc += values[k] * v[cols[k]];
    }
    y[r] = acc;
  }
}

}  // namespace dkgp::compute::serial
