#include "dkgp/kernels.hpp"

#include <string>

#include "dkgp/compute.hpp"

namespace dkgp::kernels {

using nlohmann::json;

KernelHyperparams KernelHyperparams::defaults(std::size_t dims, double y_mean) {
  KernelHyperparams hp;
  hp.log_lengthscales = Vector::Zero(static_cast<Eigen::Index>(dims));
  hp.mean_constant = y_mean;
  return hp;
}

void KernelHyperparams::project() {
  log_noise_variance = std::max(log_noise_variance, std::log(kNoiseFloor));
}

DeepKernelParams DeepKernelParams::identity(std::size_t d, double y_mean) {
  return with_feature(features::init_feature(features::FeatureSpec::identity(d), 0), y_mean);
}

DeepKernelParams DeepKernelParams::with_feature(features::FeatureMap feature, double y_mean) {
  DeepKernelParams dk;
  const std::size_t q = feature.output_dim();
  dk.feature = std::move(feature);
  dk.base = KernelHyperparams::defaults(q, y_mean);
  return dk;
}

std::vector<ParamSlot> DeepKernelParams::slots() {
  std::vector<ParamSlot> out = feature.slots();
  out.push_back(slot("kernel.log_lengthscales", base.log_lengthscales));
  out.push_back(slot("kernel.log_signal_variance", base.log_signal_variance));
  out.push_back(slot("kernel.log_noise_variance", base.log_noise_variance));
  out.push_back(slot("kernel.mean_constant", base.mean_constant));
  return out;
}

std::vector<std::string> DeepKernelParams::slot_names() const {
  std::vector<std::string> names;
  for (const ParamSlot& s : const_cast<DeepKernelParams*>(this)->slots()) {
    names.push_back(s.name);
  }
  return names;
}

void DeepKernelParams::validate() const {
  if (static_cast<std::size_t>(base.log_lengthscales.size()) != feature.output_dim()) {
    throw ShapeError("DeepKernelParams: " + std::to_string(base.log_lengthscales.size()) +
                     " lengthscales for a feature map of width " +
                     std::to_string(feature.output_dim()));
  }
}

Matrix rbf_matrix(const KernelHyperparams& hp, const Matrix& X1, const Matrix& X2) {
  const Eigen::Index q = hp.log_lengthscales.size();
  if (X1.cols() != q || X2.cols() != q) {
    throw ShapeError("rbf_matrix: inputs have " + std::to_string(X1.cols()) + "/" +
                     std::to_string(X2.cols()) + " columns, kernel has " + std::to_string(q) +
                     " lengthscales");
  }
  const RowVector inv = (-hp.log_lengthscales.array()).exp().matrix().transpose();
  const bool same = &X1 == &X2;
  const Matrix S1 = X1.array().rowwise() * inv.array();
  const Matrix D = same ? compute::pairwise_sqdist(S1, S1, true)
                        : compute::pairwise_sqdist(S1, X2.array().rowwise() * inv.array());
  return hp.signal_variance() * (-0.5 * D.array()).exp().matrix();
}

Matrix deep_kernel_matrix(const DeepKernelParams& dk, const Matrix& X1, const Matrix& X2) {
  if (&X1 == &X2) {
    const Matrix Z = features::feature_forward(dk.feature, X1);
    return rbf_matrix(dk.base, Z, Z);
  }
  const Matrix Z1 = features::feature_forward(dk.feature, X1);
  const Matrix Z2 = features::feature_forward(dk.feature, X2);
  return rbf_matrix(dk.base, Z1, Z2);
}

Vector kernel_diag(const DeepKernelParams& dk, const Matrix& X) {
  return Vector::Constant(X.rows(), dk.base.signal_variance());
}

TracedHyperparams trace_hyperparams(ad::Tape& tape, const KernelHyperparams& hp) {
  return {tape.leaf(Matrix(hp.log_lengthscales)), tape.leaf(hp.log_signal_variance),
          tape.leaf(hp.log_noise_variance), tape.leaf(hp.mean_constant)};
}

ad::Var trace_rbf(const TracedHyperparams& hp, const ad::Var& Z1, const ad::Var& Z2) {
  const ad::Var inv = ad::exp(ad::scale(ad::transpose(hp.log_lengthscales), -1.0));
  const ad::Var S1 = ad::multiply(Z1, inv);
  const ad::Var S2 = Z1.id() == Z2.id() ? S1 : ad::multiply(Z2, inv);
  const ad::Var D = ad::pairwise_sqdist(S1, S2);
  return ad::multiply(ad::exp(hp.log_signal_variance), ad::exp(ad::scale(D, -0.5)));
}

ad::Var trace_noise(ad::Tape& tape, const TracedHyperparams& hp) {
  if (hp.log_noise_variance.scalar() < std::log(kNoiseFloor)) {
    return tape.constant(kNoiseFloor);
  }
  return ad::exp(hp.log_noise_variance);
}

json to_json(const KernelHyperparams& hp) {
  return json{{"log_lengthscales",
               std::vector<double>(hp.log_lengthscales.data(),
                                   hp.log_lengthscales.data() + hp.log_lengthscales.size())},
              {"log_signal_variance", hp.log_signal_variance},
              {"log_noise_variance", hp.log_noise_variance},
              {"mean_constant", hp.mean_constant}};
}

KernelHyperparams hyperparams_from_json(const json& j) {
  KernelHyperparams hp;
  const auto ls = j.at("log_lengthscales").get<std::vector<double>>();
  hp.log_lengthscales = Eigen::Map<const Vector>(ls.data(), static_cast<Eigen::Index>(ls.size()));
  hp.log_signal_variance = j.at("log_signal_variance").get<double>();
  hp.log_noise_variance = j.at("log_noise_variance").get<double>();
  hp.mean_constant = j.at("mean_constant").get<double>();
  return hp;
}

json to_json(const DeepKernelParams& dk) {
  return json{{"feature", features::to_json(dk.feature)}, {"kernel", to_json(dk.base)}};
}

DeepKernelParams deep_kernel_from_json(const json& j) {
  DeepKernelParams dk;
  dk.feature = features::feature_map_from_json(j.at("feature"));
  dk.base = hyperparams_from_json(j.at("kernel"));
  dk.validate();
  return dk;
}

}  // namespace dkgp::kernels
