#pragma once

// Exact Gaussian-process regression with a deep kernel: negative log
// marginal likelihood, its gradient, and the predictive posterior.

#include <optional>
#include <string>
#include <vector>

#include "dkgp/autodiff.hpp"
#include "dkgp/kernels.hpp"
#include "dkgp/linalg.hpp"

namespace dkgp::gp {

struct PosteriorPrediction {
  Vector mean;
  Vector variance;
  std::optional<Matrix> covariance;  // only when requested
  bool includes_noise = false;
};

// 1/2 [ (y-c)^T (K + s^2 I)^{-1} (y-c) + log|K + s^2 I| + n log(2 pi) ]
double gp_nll(const kernels::DeepKernelParams& dk, const Matrix& X, const Vector& y);

// Derivative of the NLL with respect to the noisy kernel matrix:
//   1/2 (K^{-1} - K^{-1} y y^T K^{-1}).
Matrix dnll_dK(const Matrix& K_noisy, const Vector& y_centered);
// Same, from a lower Cholesky factor L of K and a = K^{-1} y.
Matrix dnll_dK_from_factor(const Matrix& L, const Vector& a);

// NLL together with its gradient, one matrix per parameter slot in
// DeepKernelParams::slots() order.
struct NllGradient {
  double value = 0.0;
  std::vector<Matrix> grads;
  std::vector<std::string> names;
};
NllGradient gp_nll_grad(const kernels::DeepKernelParams& dk, const Matrix& X, const Vector& y);

// Records the exact NLL on a tape. Leaves follow slot order.
struct TracedObjective {
  ad::Var loss;
  std::vector<ad::Var> leaves;
  ad::Var latent;  // feature-map output
};
TracedObjective trace_gp_nll(ad::Tape& tape, const kernels::DeepKernelParams& dk, const Matrix& X,
                             const Vector& y);

PosteriorPrediction gp_predict(const kernels::DeepKernelParams& dk, const Matrix& X,
                               const Vector& y, const Matrix& Xstar, bool include_noise,
                               bool full_covariance = false);

}  // namespace dkgp::gp
