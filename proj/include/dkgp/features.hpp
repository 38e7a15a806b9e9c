#pragma once

// Feature extractors phi(x; beta) placed in front of the base kernel: the
// identity map, a silu MLP, or an efficient-KAN stack whose edges compute
//   w_b * silu(x) + w_s * sum_c c_c B_c(x).

#include <cstddef>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dkgp/autodiff.hpp"
#include "dkgp/linalg.hpp"
#include "dkgp/params.hpp"

namespace dkgp::features {

enum class FeatureKind { identity, mlp, kan };

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view name);

struct FeatureSpec {
  FeatureKind kind = FeatureKind::identity;
  // Input width first, output width last. Identity: a single entry {d}.
  std::vector<std::size_t> layer_widths;
  std::size_t grid_size = 5;
  int spline_order = 3;
  double grid_lo = -1.0;
  double grid_hi = 1.0;

  static FeatureSpec identity(std::size_t d);
  static FeatureSpec mlp(std::vector<std::size_t> widths);
  static FeatureSpec kan(std::vector<std::size_t> widths, std::size_t grid_size = 5,
                         int spline_order = 3, double lo = -1.0, double hi = 1.0);

  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t output_dim() const { return layer_widths.back(); }
  void validate() const;

  bool operator==(const FeatureSpec&) const = default;
};

struct MlpLayer {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out
};

struct KanLayerParams {
  Matrix base_weight;    // out x in
  Matrix spline_scaler;  // out x in
  // out x (in * basis_count); edge (o, i) owns columns i*basis_count .. +basis_count-1
  Matrix spline_weight;
  std::vector<double> knots;
  int spline_order = 3;
  double grid_lo = -1.0;
  double grid_hi = 1.0;

  std::size_t basis_count() const { return knots.size() - static_cast<std::size_t>(spline_order) - 1; }
  ad::SplineGrid grid() const { return {knots, spline_order, grid_lo, grid_hi}; }
};

// All trainable parameters of one feature extractor.
struct FeatureMap {
  FeatureSpec spec;
  std::uint64_t seed = 0;
  std::vector<MlpLayer> mlp;
  std::vector<KanLayerParams> kan;

  std::vector<ParamSlot> slots();
  std::size_t output_dim() const { return spec.output_dim(); }
};

// Uniform knots over [lo, hi] with `grid_size` intervals, extended by `order`
// knots on each side (grid_size + 2*order + 1 knots).
std::vector<double> uniform_knots(std::size_t grid_size, int order, double lo, double hi);

// Every basis value (knots.size() - order - 1 of them) at u, by Cox-de Boor.
std::vector<double> bspline_basis(double u, std::span<const double> knots, int order);

Matrix kan_layer_forward(const KanLayerParams& layer, const Matrix& X);
Matrix mlp_forward(std::span<const MlpLayer> layers, const Matrix& X);
Matrix feature_forward(const FeatureMap& map, const Matrix& X);

// Same computation recorded on a tape. Each parameter becomes a leaf, pushed
// onto `leaves` in slot order.
ad::Var trace_feature_forward(ad::Tape& tape, const FeatureMap& map, const ad::Var& X,
                              std::vector<ad::Var>& leaves);

std::size_t feature_param_count(const FeatureSpec& spec);
// Feature parameters plus one lengthscale per latent dimension, signal
// variance, noise variance and constant mean.
std::size_t model_param_count(const FeatureSpec& spec);

FeatureMap init_feature(const FeatureSpec& spec, std::uint64_t seed);

// Sum of |w| over all feature weights (biases and knots excluded).
double l1_norm(const FeatureMap& map);
void add_l1_gradient(const FeatureMap& map, double coefficient, std::vector<Matrix>& grads);

// Architecture for a named model and input width: gp, dkl-mlp, dkl-kan1,
// dkl-kan2. `hidden` overrides the hidden widths of the DKL models.
FeatureSpec model_feature_spec(std::string_view model, std::size_t d,
                               std::span<const std::size_t> hidden = {});
std::vector<std::string> known_models();

nlohmann::json to_json(const FeatureSpec& spec);
FeatureSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const FeatureMap& map);
FeatureMap feature_map_from_json(const nlohmann::json& j);

}  // namespace dkgp::features
