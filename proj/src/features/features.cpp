#include "dkgp/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dkgp/compute.hpp"

namespace dkgp::features {

using nlohmann::json;

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::identity:
      return "identity";
    case FeatureKind::mlp:
      return "mlp";
    case FeatureKind::kan:
      return "kan";
  }
  return "identity";
}

FeatureKind feature_kind_from_string(std::string_view name) {
  if (name == "identity") return FeatureKind::identity;
  if (name == "mlp") return FeatureKind::mlp;
  if (name == "kan") return FeatureKind::kan;
  throw InvalidArgument("unknown feature kind '" + std::string(name) + "'");
}

FeatureSpec FeatureSpec::identity(std::size_t d) {
  FeatureSpec s;
  s.kind = FeatureKind::identity;
  s.layer_widths = {d};
  return s;
}

FeatureSpec FeatureSpec::mlp(std::vector<std::size_t> widths) {
  FeatureSpec s;
  s.kind = FeatureKind::mlp;
  s.layer_widths = std::move(widths);
  s.validate();
  return s;
}

FeatureSpec FeatureSpec::kan(std::vector<std::size_t> widths, std::size_t grid_size,
                             int spline_order, double lo, double hi) {
  FeatureSpec s;
  s.kind = FeatureKind::kan;
  s.layer_widths = std::move(widths);
  s.grid_size = grid_size;
  s.spline_order = spline_order;
  s.grid_lo = lo;
  s.grid_hi = hi;
  s.validate();
  return s;
}

void FeatureSpec::validate() const {
  if (layer_widths.empty() ||
      std::any_of(layer_widths.begin(), layer_widths.end(), [](std::size_t w) { return w == 0; })) {
    throw InvalidArgument("FeatureSpec: layer widths must be positive");
  }
  if (kind == FeatureKind::identity) {
    if (layer_widths.size() != 1) {
      throw InvalidArgument("FeatureSpec: identity takes a single width");
    }
    return;
  }
  if (layer_widths.size() < 2) {
    throw InvalidArgument("FeatureSpec: need at least input and output widths");
  }
  if (kind == FeatureKind::kan) {
    if (grid_size < 1 || spline_order < 1) {
      throw InvalidArgument("FeatureSpec: grid_size and spline_order must be >= 1");
    }
    if (!(grid_lo < grid_hi)) {
      throw InvalidArgument("FeatureSpec: degenerate grid range");
    }
  }
}

std::vector<ParamSlot> FeatureMap::slots() {
  std::vector<ParamSlot> out;
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    const std::string p = "feature.layer" + std::to_string(l) + ".";
    out.push_back(slot(p + "weight", mlp[l].weight));
    out.push_back(slot(p + "bias", mlp[l].bias));
  }
  for (std::size_t l = 0; l < kan.size(); ++l) {
    const std::string p = "feature.layer" + std::to_string(l) + ".";
    out.push_back(slot(p + "base_weight", kan[l].base_weight));
    out.push_back(slot(p + "spline_scaler", kan[l].spline_scaler));
    out.push_back(slot(p + "spline_weight", kan[l].spline_weight));
  }
  return out;
}

std::vector<double> uniform_knots(std::size_t grid_size, int order, double lo, double hi) {
  const double h = (hi - lo) / static_cast<double>(grid_size);
  const auto count = grid_size + 2 * static_cast<std::size_t>(order) + 1;
  std::vector<double> knots(count);
  for (std::size_t j = 0; j < count; ++j) {
    knots[j] = lo + (static_cast<double>(j) - order) * h;
  }
  return knots;
}

std::vector<double> bspline_basis(double u, std::span<const double> knots, int order) {
  if (order < 0) {
    throw InvalidArgument("bspline_basis: negative order");
  }
  if (knots.size() < static_cast<std::size_t>(order) + 2) {
    throw InvalidArgument("bspline_basis: InvalidKnots (need at least order+2 knots)");
  }
  if (!std::is_sorted(knots.begin(), knots.end()) || knots.front() == knots.back()) {
    throw InvalidArgument("bspline_basis: InvalidKnots (knots must be nondecreasing)");
  }
  std::vector<double> out(knots.size() - static_cast<std::size_t>(order) - 1);
  compute::serial::cox_de_boor(u, knots, order, out);
  return out;
}

Matrix kan_layer_forward(const KanLayerParams& layer, const Matrix& X) {
  const Eigen::Index in = layer.base_weight.cols();
  if (X.cols() != in) {
    throw ShapeError("kan_layer_forward: input has " + std::to_string(X.cols()) +
                     " columns, layer expects " + std::to_string(in));
  }
  const auto nb = static_cast<Eigen::Index>(layer.basis_count());
  const compute::BsplineDesign design = compute::bspline_design(
      X, layer.knots, layer.spline_order, layer.grid_lo, layer.grid_hi, false);
  Matrix effective = layer.spline_weight;
  for (Eigen::Index i = 0; i < in; ++i) {
    effective.middleCols(i * nb, nb).array().colwise() *= layer.spline_scaler.col(i).array();
  }
  return compute::silu(X) * layer.base_weight.transpose() + design.basis * effective.transpose();
}

Matrix mlp_forward(std::span<const MlpLayer> layers, const Matrix& X) {
  Matrix h = X;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (h.cols() != layers[l].weight.cols()) {
      throw ShapeError("mlp_forward: layer " + std::to_string(l) + " expects " +
                       std::to_string(layers[l].weight.cols()) + " inputs, got " +
                       std::to_string(h.cols()));
    }
    Matrix z = h * layers[l].weight.transpose();
    z.rowwise() += layers[l].bias.row(0);
    h = (l + 1 < layers.size()) ? compute::silu(z) : std::move(z);
  }
  return h;
}

Matrix feature_forward(const FeatureMap& map, const Matrix& X) {
  switch (map.spec.kind) {
    case FeatureKind::identity:
      if (static_cast<std::size_t>(X.cols()) != map.spec.input_dim()) {
        throw ShapeError("feature_forward: identity map expects " +
                         std::to_string(map.spec.input_dim()) + " columns");
      }
      return X;
    case FeatureKind::mlp:
      return mlp_forward(map.mlp, X);
    case FeatureKind::kan: {
      Matrix h = X;
      for (const KanLayerParams& layer : map.kan) {
        h = kan_layer_forward(layer, h);
      }
      return h;
    }
  }
  return X;
}

ad::Var trace_feature_forward(ad::Tape& tape, const FeatureMap& map, const ad::Var& X,
                              std::vector<ad::Var>& leaves) {
  ad::Var h = X;
  switch (map.spec.kind) {
    case FeatureKind::identity:
      return h;
    case FeatureKind::mlp:
      for (std::size_t l = 0; l < map.mlp.size(); ++l) {
        const ad::Var w = tape.leaf(map.mlp[l].weight);
        const ad::Var b = tape.leaf(map.mlp[l].bias);
        leaves.push_back(w);
        leaves.push_back(b);
        ad::Var z = ad::add(ad::matmul(h, ad::transpose(w)), b);
        h = (l + 1 < map.mlp.size()) ? ad::silu(z) : z;
      }
      return h;
    case FeatureKind::kan:
      for (const KanLayerParams& layer : map.kan) {
        const ad::Var wb = tape.leaf(layer.base_weight);
        const ad::Var ws = tape.leaf(layer.spline_scaler);
        const ad::Var c = tape.leaf(layer.spline_weight);
        leaves.push_back(wb);
        leaves.push_back(ws);
        leaves.push_back(c);
        const ad::Var base = ad::matmul(ad::silu(h), ad::transpose(wb));
        const ad::Var spline = ad::bspline_combine(h, c, ws, layer.grid());
        h = ad::add(base, spline);
      }
      return h;
  }
  return h;
}

std::size_t feature_param_count(const FeatureSpec& spec) {
  spec.validate();
  std::size_t total = 0;
  const auto& w = spec.layer_widths;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    switch (spec.kind) {
      case FeatureKind::identity:
        break;
      case FeatureKind::mlp:
        total += (w[l] + 1) * w[l + 1];
        break;
      case FeatureKind::kan:
        total += w[l] * w[l + 1] *
                 (2 + spec.grid_size + static_cast<std::size_t>(spec.spline_order));
        break;
    }
  }
  return total;
}

std::size_t model_param_count(const FeatureSpec& spec) {
  return feature_param_count(spec) + spec.output_dim() + 3;
}

namespace {

Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  // Row-major fill order so the stream maps onto (out, in) the natural way.
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = dist(rng);
    }
  }
  return m;
}

double kaiming_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

}  // namespace

FeatureMap init_feature(const FeatureSpec& spec, std::uint64_t seed) {
  spec.validate();
  FeatureMap map;
  map.spec = spec;
  map.seed = seed;
  std::mt19937_64 rng(seed);
  const auto& w = spec.layer_widths;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(w[l]);
    const auto out = static_cast<Eigen::Index>(w[l + 1]);
    if (spec.kind == FeatureKind::mlp) {
      MlpLayer layer;
      layer.weight = uniform_matrix(rng, out, in, kaiming_bound(w[l]));
      layer.bias = Matrix::Zero(1, out);
      map.mlp.push_back(std::move(layer));
    } else if (spec.kind == FeatureKind::kan) {
      KanLayerParams layer;
      layer.knots = uniform_knots(spec.grid_size, spec.spline_order, spec.grid_lo, spec.grid_hi);
      layer.spline_order = spec.spline_order;
      layer.grid_lo = spec.grid_lo;
      layer.grid_hi = spec.grid_hi;
      const auto nb = static_cast<Eigen::Index>(layer.basis_count());
      layer.base_weight = uniform_matrix(rng, out, in, kaiming_bound(w[l]));
      layer.spline_scaler = uniform_matrix(rng, out, in, kaiming_bound(w[l]));
      layer.spline_weight = uniform_matrix(rng, out, in * nb, 0.1) / static_cast<double>(nb);
      map.kan.push_back(std::move(layer));
    }
  }
  return map;
}

double l1_norm(const FeatureMap& map) {
  double total = 0.0;
  for (const MlpLayer& l : map.mlp) {
    total += l.weight.cwiseAbs().sum();
  }
  for (const KanLayerParams& l : map.kan) {
    total += l.base_weight.cwiseAbs().sum() + l.spline_scaler.cwiseAbs().sum() +
             l.spline_weight.cwiseAbs().sum();
  }
  return total;
}

void add_l1_gradient(const FeatureMap& map, double coefficient, std::vector<Matrix>& grads) {
  if (coefficient == 0.0) {
    return;
  }
  auto sign = [](const Matrix& m) { return m.unaryExpr([](double v) { return double((v > 0) - (v < 0)); }); };
  std::size_t k = 0;
  for (const MlpLayer& l : map.mlp) {
    grads[k] += coefficient * sign(l.weight);
    k += 2;
  }
  for (const KanLayerParams& l : map.kan) {
    grads[k++] += coefficient * sign(l.base_weight);
    grads[k++] += coefficient * sign(l.spline_scaler);
    grads[k++] += coefficient * sign(l.spline_weight);
  }
}

FeatureSpec model_feature_spec(std::string_view model, std::size_t d,
                               std::span<const std::size_t> hidden) {
  auto widths = [&](std::initializer_list<std::size_t> defaults) {
    std::vector<std::size_t> w{d};
    if (hidden.empty()) {
      w.insert(w.end(), defaults.begin(), defaults.end());
    } else {
      w.insert(w.end(), hidden.begin(), hidden.end());
    }
    w.push_back(2);
    return w;
  };
  if (model == "gp") return FeatureSpec::identity(d);
  if (model == "dkl-mlp") return FeatureSpec::mlp(widths({1000, 500, 50}));
  if (model == "dkl-kan1") return FeatureSpec::kan(widths({1000, 500, 50}));
  if (model == "dkl-kan2") return FeatureSpec::kan(widths({256, 128, 64}));
  throw InvalidArgument("unknown model '" + std::string(model) + "'");
}

std::vector<std::string> known_models() { return {"gp", "dkl-mlp", "dkl-kan1", "dkl-kan2"}; }

namespace {

json row_major(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      flat.push_back(m(r, c));
    }
  }
  return flat;
}

Matrix from_row_major(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(rows * cols)) {
    throw DataError(std::string("parameter array '") + what + "' has " +
                    std::to_string(flat.size()) + " values, expected " +
                    std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = flat[k++];
    }
  }
  return m;
}

}  // namespace

json to_json(const FeatureSpec& spec) {
  return json{{"kind", std::string(to_string(spec.kind))},
              {"layer_widths", spec.layer_widths},
              {"grid_size", spec.grid_size},
              {"spline_order", spec.spline_order},
              {"grid_range", {spec.grid_lo, spec.grid_hi}}};
}

FeatureSpec spec_from_json(const json& j) {
  FeatureSpec spec;
  spec.kind = feature_kind_from_string(j.at("kind").get<std::string>());
  spec.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
  spec.grid_size = j.value("grid_size", std::size_t{5});
  spec.spline_order = j.value("spline_order", 3);
  if (j.contains("grid_range")) {
    const auto range = j.at("grid_range").get<std::vector<double>>();
    if (range.size() != 2) {
      throw DataError("grid_range must have two entries");
    }
    spec.grid_lo = range[0];
    spec.grid_hi = range[1];
  }
  spec.validate();
  return spec;
}

json to_json(const FeatureMap& map) {
  json layers = json::array();
  for (const MlpLayer& l : map.mlp) {
    layers.push_back({{"weight", row_major(l.weight)}, {"bias", row_major(l.bias)}});
  }
  for (const KanLayerParams& l : map.kan) {
    layers.push_back({{"base_weight", row_major(l.base_weight)},
                      {"spline_scaler", row_major(l.spline_scaler)},
                      {"spline_weight", row_major(l.spline_weight)},
                      {"knots", l.knots}});
  }
  return json{{"spec", to_json(map.spec)}, {"seed", map.seed}, {"layers", layers}};
}

FeatureMap feature_map_from_json(const json& j) {
  FeatureMap map = init_feature(spec_from_json(j.at("spec")), j.value("seed", std::uint64_t{0}));
  const json& layers = j.at("layers");
  const auto& w = map.spec.layer_widths;
  const std::size_t expected = map.spec.kind == FeatureKind::identity ? 0 : w.size() - 1;
  if (layers.size() != expected) {
    throw DataError("feature map has " + std::to_string(layers.size()) + " layers, expected " +
                    std::to_string(expected));
  }
  for (std::size_t l = 0; l < expected; ++l) {
    const auto in = static_cast<Eigen::Index>(w[l]);
    const auto out = static_cast<Eigen::Index>(w[l + 1]);
    const json& lj = layers[l];
    if (map.spec.kind == FeatureKind::mlp) {
      map.mlp[l].weight = from_row_major(lj.at("weight"), out, in, "weight");
      map.mlp[l].bias = from_row_major(lj.at("bias"), 1, out, "bias");
    } else {
      KanLayerParams& layer = map.kan[l];
      const auto nb = static_cast<Eigen::Index>(layer.basis_count());
      layer.base_weight = from_row_major(lj.at("base_weight"), out, in, "base_weight");
      layer.spline_scaler = from_row_major(lj.at("spline_scaler"), out, in, "spline_scaler");
      layer.spline_weight = from_row_major(lj.at("spline_weight"), out, in * nb, "spline_weight");
      if (lj.contains("knots")) {
        layer.knots = lj.at("knots").get<std::vector<double>>();
      }
    }
  }
  return map;
}

}  // namespace dkgp::features
