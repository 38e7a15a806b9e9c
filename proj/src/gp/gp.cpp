#include "dkgp/gp.hpp"

#include <cmath>
#include <numbers>

namespace dkgp::gp {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix noisy_kernel(const kernels::DeepKernelParams& dk, const Matrix& Z) {
  Matrix K = kernels::rbf_matrix(dk.base, Z, Z);
  K.diagonal().array() += dk.base.noise_variance();
  return K;
}

// Clamp round-off negatives, fail loudly on real ones.
void clamp_variance(Vector& var, double scale) {
  for (Eigen::Index i = 0; i < var.size(); ++i) {
    if (var(i) < 0.0) {
      if (var(i) < -1e-8 * std::max(1.0, scale)) {
        throw NumericError("gp_predict: negative predictive variance " + std::to_string(var(i)));
      }
      var(i) = 0.0;
    }
  }
}

}  // namespace

double gp_nll(const kernels::DeepKernelParams& dk, const Matrix& X, const Vector& y) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw ShapeError("gp_nll: X has " + std::to_string(X.rows()) + " rows, y has " +
                     std::to_string(y.size()));
  }
  const Matrix Z = features::feature_forward(dk.feature, X);
  const Matrix L = linalg::cholesky_jittered(noisy_kernel(dk, Z));
  const Vector r = y.array() - dk.base.mean_constant;
  const Vector a = linalg::cholesky_solve(L, r);
  const double n = static_cast<double>(y.size());
  return 0.5 * (r.dot(a) + linalg::cholesky_logdet(L) + n * kLog2Pi);
}

Matrix dnll_dK_from_factor(const Matrix& L, const Vector& a) {
  const Matrix Kinv = linalg::cholesky_solve(L, Matrix::Identity(L.rows(), L.cols()));
  Matrix G = 0.5 * (Kinv - a * a.transpose());
  return 0.5 * (G + G.transpose());
}

Matrix dnll_dK(const Matrix& K_noisy, const Vector& y_centered) {
  if (K_noisy.rows() != y_centered.size()) {
    throw ShapeError("dnll_dK: size mismatch");
  }
  const Matrix L = linalg::cholesky_jittered(K_noisy);
  return dnll_dK_from_factor(L, linalg::cholesky_solve(L, y_centered));
}

TracedObjective trace_gp_nll(ad::Tape& tape, const kernels::DeepKernelParams& dk, const Matrix& X,
                             const Vector& y) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw ShapeError("trace_gp_nll: X/y size mismatch");
  }
  TracedObjective obj;
  const ad::Var Xc = tape.constant(X);
  obj.latent = features::trace_feature_forward(tape, dk.feature, Xc, obj.leaves);
  const kernels::TracedHyperparams hp = kernels::trace_hyperparams(tape, dk.base);
  obj.leaves.push_back(hp.log_lengthscales);
  obj.leaves.push_back(hp.log_signal_variance);
  obj.leaves.push_back(hp.log_noise_variance);
  obj.leaves.push_back(hp.mean_constant);

  const ad::Var K = kernels::trace_rbf(hp, obj.latent, obj.latent);
  const auto n = y.size();
  const ad::Var noise_eye =
      ad::multiply(kernels::trace_noise(tape, hp), tape.constant(Matrix::Identity(n, n)));
  const ad::Var r = ad::subtract(tape.constant(Matrix(y)), hp.mean_constant);
  const ad::Var fused = ad::cholesky_logdet_quadform(ad::add(K, noise_eye), r);
  obj.loss = ad::add(ad::scale(fused, 0.5), tape.constant(0.5 * static_cast<double>(n) * kLog2Pi));
  return obj;
}

NllGradient gp_nll_grad(const kernels::DeepKernelParams& dk, const Matrix& X, const Vector& y) {
  ad::Tape tape;
  const TracedObjective obj = trace_gp_nll(tape, dk, X, y);
  const ad::Gradients grads = tape.backward(obj.loss);
  NllGradient out;
  out.value = obj.loss.scalar();
  out.names = dk.slot_names();
  for (const ad::Var& leaf : obj.leaves) {
    out.grads.push_back(grads.of(leaf));
  }
  return out;
}

PosteriorPrediction gp_predict(const kernels::DeepKernelParams& dk, const Matrix& X,
                               const Vector& y, const Matrix& Xstar, bool include_noise,
                               bool full_covariance) {
  if (X.rows() != y.size() || y.size() < 1) {
    throw ShapeError("gp_predict: X/y size mismatch");
  }
  const Matrix Z = features::feature_forward(dk.feature, X);
  const Matrix Zs = features::feature_forward(dk.feature, Xstar);
  const Matrix L = linalg::cholesky_jittered(noisy_kernel(dk, Z));
  const Vector r = y.array() - dk.base.mean_constant;
  const Vector a = linalg::cholesky_solve(L, r);
  const Matrix Ks = kernels::rbf_matrix(dk.base, Zs, Z);

  PosteriorPrediction pred;
  pred.includes_noise = include_noise;
  pred.mean = (Ks * a).array() + dk.base.mean_constant;
  const Matrix V = L.triangularView<Eigen::Lower>().solve(Ks.transpose());
  const double sigma2 = dk.base.signal_variance();
  const double noise = include_noise ? dk.base.noise_variance() : 0.0;
  if (full_covariance) {
    Matrix cov = kernels::rbf_matrix(dk.base, Zs, Zs) - V.transpose() * V;
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += noise;
    pred.variance = cov.diagonal();
    clamp_variance(pred.variance, sigma2);
    cov.diagonal() = pred.variance;
    pred.covariance = std::move(cov);
  } else {
    pred.variance = (sigma2 - V.colwise().squaredNorm().array()).matrix().transpose();
    pred.variance.array() += noise;
    clamp_variance(pred.variance, sigma2);
  }
  return pred;
}

}  // namespace dkgp::gp
