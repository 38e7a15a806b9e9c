#pragma once

// ARD-RBF base kernel and its deep-kernel composition
//   k(x, x') = sigma^2 exp(-sum_d (phi_d(x) - phi_d(x'))^2 / (2 l_d^2)).
// Positive quantities are stored as logs.

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "dkgp/autodiff.hpp"
#include "dkgp/features.hpp"
#include "dkgp/linalg.hpp"
#include "dkgp/params.hpp"

namespace dkgp::kernels {

inline constexpr double kNoiseFloor = 1e-6;
inline constexpr double kSignalFloor = 1e-12;

struct KernelHyperparams {
  Vector log_lengthscales;
  double log_signal_variance = 0.0;
  double log_noise_variance = std::log(0.01);
  double mean_constant = 0.0;

  // Unit lengthscales and signal variance, noise 0.01, mean set to `y_mean`.
  static KernelHyperparams defaults(std::size_t dims, double y_mean = 0.0);

  Vector lengthscales() const { return log_lengthscales.array().exp().matrix(); }
  double signal_variance() const { return std::max(std::exp(log_signal_variance), kSignalFloor); }
  double noise_variance() const { return std::max(std::exp(log_noise_variance), kNoiseFloor); }

  // Pulls log_noise_variance back up to the floor if an update went below it.
  void project();
};

struct DeepKernelParams {
  features::FeatureMap feature;
  KernelHyperparams base;

  // Identity feature map over d inputs with default hyperparameters.
  static DeepKernelParams identity(std::size_t d, double y_mean = 0.0);
  static DeepKernelParams with_feature(features::FeatureMap feature, double y_mean = 0.0);

  // Feature slots first, then log_lengthscales, log_signal_variance,
  // log_noise_variance and mean_constant.
  std::vector<ParamSlot> slots();
  std::vector<std::string> slot_names() const;
  void validate() const;
};

Matrix rbf_matrix(const KernelHyperparams& hp, const Matrix& X1, const Matrix& X2);
Matrix deep_kernel_matrix(const DeepKernelParams& dk, const Matrix& X1, const Matrix& X2);
Vector kernel_diag(const DeepKernelParams& dk, const Matrix& X);

// Traced kernel hyperparameters, one leaf each (same order as the slots).
struct TracedHyperparams {
  ad::Var log_lengthscales;  // q x 1
  ad::Var log_signal_variance;
  ad::Var log_noise_variance;
  ad::Var mean_constant;
};
TracedHyperparams trace_hyperparams(ad::Tape& tape, const KernelHyperparams& hp);

// sigma^2 exp(-D/2) on lengthscale-scaled inputs; Z1 and Z2 may be the same
// variable, in which case the diagonal distance is exactly zero.
ad::Var trace_rbf(const TracedHyperparams& hp, const ad::Var& Z1, const ad::Var& Z2);
// Noise variance as a traced scalar, respecting the floor.
ad::Var trace_noise(ad::Tape& tape, const TracedHyperparams& hp);

nlohmann::json to_json(const KernelHyperparams& hp);
KernelHyperparams hyperparams_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DeepKernelParams& dk);
DeepKernelParams deep_kernel_from_json(const nlohmann::json& j);

}  // namespace dkgp::kernels
