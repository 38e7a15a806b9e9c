#include "dkgp/train.hpp"

#include <cmath>
#include <limits>

#include "dkgp/compute.hpp"
#include "dkgp/gp.hpp"

namespace dkgp::train {

using nlohmann::json;

std::string_view to_string(ScalableMode mode) {
  switch (mode) {
    case ScalableMode::exact:
      return "exact";
    case ScalableMode::kiss:
      return "kiss";
    case ScalableMode::skip:
      return "skip";
    case ScalableMode::automatic:
      return "auto";
  }
  return "auto";
}

ScalableMode scalable_mode_from_string(std::string_view name) {
  if (name == "exact") return ScalableMode::exact;
  if (name == "kiss") return ScalableMode::kiss;
  if (name == "skip") return ScalableMode::skip;
  if (name == "auto") return ScalableMode::automatic;
  throw ConfigError("unknown scalable_mode '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must lie in (0, 1]");
  if (patience > epochs) throw ConfigError("patience must not exceed epochs");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (grid_m_per_dim < 4) throw ConfigError("grid_m_per_dim must be at least 4");
  if (grid_rebuild_every < 1) throw ConfigError("grid_rebuild_every must be at least 1");
  if (skip_rank < 1) throw ConfigError("skip_rank must be at least 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (!(l1 >= 0.0)) throw ConfigError("l1 must be nonnegative");
}

json to_json(const TrainConfig& cfg) {
  return json{{"lr0", cfg.lr0},
              {"decay", cfg.decay},
              {"epochs", cfg.epochs},
              {"patience", cfg.patience},
              {"seed", cfg.seed},
              {"adam_beta1", cfg.adam_beta1},
              {"adam_beta2", cfg.adam_beta2},
              {"adam_eps", cfg.adam_eps},
              {"scalable_mode", std::string(to_string(cfg.scalable_mode))},
              {"grid_m_per_dim", cfg.grid_m_per_dim},
              {"grid_rebuild_every", cfg.grid_rebuild_every},
              {"grid_padding", cfg.grid_padding},
              {"skip_rank", cfg.skip_rank},
              {"clip_norm", cfg.clip_norm},
              {"l1", cfg.l1}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "lr0") cfg.lr0 = value.get<double>();
      else if (key == "decay") cfg.decay = value.get<double>();
      else if (key == "epochs") cfg.epochs = value.get<std::size_t>();
      else if (key == "patience") cfg.patience = value.get<std::size_t>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "adam_beta1") cfg.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") cfg.adam_beta2 = value.get<double>();
      else if (key == "adam_eps") cfg.adam_eps = value.get<double>();
      else if (key == "scalable_mode") cfg.scalable_mode = scalable_mode_from_string(value.get<std::string>());
      else if (key == "grid_m_per_dim") cfg.grid_m_per_dim = value.get<std::size_t>();
      else if (key == "grid_rebuild_every") cfg.grid_rebuild_every = value.get<std::size_t>();
      else if (key == "grid_padding") cfg.grid_padding = value.get<double>();
      else if (key == "skip_rank") cfg.skip_rank = value.get<std::size_t>();
      else if (key == "clip_norm") cfg.clip_norm = value.get<double>();
      else if (key == "l1") cfg.l1 = value.get<double>();
      else throw ConfigError("unknown training config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch));
}

AdamState AdamState::zeros_like(std::span<const ParamSlot> params) {
  AdamState s;
  for (const ParamSlot& p : params) {
    s.m.push_back(Matrix::Zero(p.rows, p.cols));
    s.v.push_back(Matrix::Zero(p.rows, p.cols));
  }
  return s;
}

void adam_step(AdamState& state, std::span<const ParamSlot> params, std::span<const Matrix> grads,
               double lr, const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: ShapeMismatch (" + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(state.m.size()) +
                     " moments)");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].rows() != params[k].rows || grads[k].cols() != params[k].cols ||
        state.m[k].rows() != params[k].rows || state.m[k].cols() != params[k].cols) {
      throw ShapeError("adam_step: ShapeMismatch for '" + params[k].name + "'");
    }
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grads[k];
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grads[k].cwiseProduct(grads[k]);
    auto theta = params[k].map();
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_eps);
  }
}

double clip_global_norm(std::vector<Matrix>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Matrix& g : grads) g *= factor;
  }
  return norm;
}

OptimizeResult optimize(std::span<const ParamSlot> params, const Objective& objective,
                        const TrainConfig& cfg, const std::function<void()>& after_step) {
  cfg.validate();
  OptimizeResult result;
  AdamState state = AdamState::zeros_like(params);
  std::vector<Matrix> best;
  for (const ParamSlot& p : params) best.emplace_back(p.map());
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<Matrix> grads;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    grads.clear();
    for (const ParamSlot& p : params) grads.push_back(Matrix::Zero(p.rows, p.cols));
    const double loss = objective(epoch, grads);
    if (!std::isfinite(loss)) throw NonFiniteLoss(epoch, loss);
    result.loss_history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      result.best_epoch = epoch;
      for (std::size_t k = 0; k < params.size(); ++k) best[k] = params[k].map();
    }
    if (epoch - result.best_epoch > cfg.patience) {
      result.stopped_early = true;
      break;
    }
    for (const Matrix& g : grads) {
      if (!g.allFinite()) throw NonFiniteLoss(epoch, std::numeric_limits<double>::quiet_NaN());
    }
    clip_global_norm(grads, cfg.clip_norm);
    adam_step(state, params, grads, lr_at_epoch(cfg, epoch), cfg);
    if (after_step) after_step();
  }
  for (std::size_t k = 0; k < params.size(); ++k) params[k].map() = best[k];
  return result;
}

ScalableMode resolve_mode(const TrainConfig& cfg, std::size_t n, const features::FeatureMap& feature) {
  if (cfg.scalable_mode != ScalableMode::automatic) return cfg.scalable_mode;
  if (n <= kAutoScalableThreshold) return ScalableMode::exact;
  if (feature.spec.kind == features::FeatureKind::identity && feature.output_dim() > scalable::kMaxGridDims) {
    return ScalableMode::skip;
  }
  return ScalableMode::kiss;
}

namespace {

// Kernel leaves are the last four slots.
void add_l1(const kernels::DeepKernelParams& dk, const TrainConfig& cfg, double& loss,
            std::vector<Matrix>& grads) {
  if (cfg.l1 == 0.0) return;
  loss += cfg.l1 * features::l1_norm(dk.feature);
  features::add_l1_gradient(dk.feature, cfg.l1, grads);
}

Objective exact_objective(kernels::DeepKernelParams& dk, const TrainConfig& cfg,
                          const data::Dataset& train) {
  return [&dk, &cfg, &train](std::size_t, std::vector<Matrix>& grads) {
    ad::Tape tape;
    const gp::TracedObjective obj = gp::trace_gp_nll(tape, dk, train.X, train.y);
    const ad::Gradients g = tape.backward(obj.loss);
    for (std::size_t k = 0; k < obj.leaves.size(); ++k) grads[k] = g.of(obj.leaves[k]);
    double loss = obj.loss.scalar();
    add_l1(dk, cfg, loss, grads);
    return loss;
  };
}

Objective kiss_objective(kernels::DeepKernelParams& dk, const TrainConfig& cfg,
                         const data::Dataset& train, scalable::ProductGrid& grid) {
  return [&dk, &cfg, &train, &grid](std::size_t epoch, std::vector<Matrix>& grads) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    const ad::Var latent = features::trace_feature_forward(tape, dk.feature, tape.constant(train.X), leaves);
    const kernels::TracedHyperparams hp = kernels::trace_hyperparams(tape, dk.base);
    leaves.insert(leaves.end(), {hp.log_lengthscales, hp.log_signal_variance, hp.log_noise_variance,
                                 hp.mean_constant});
    if (epoch % cfg.grid_rebuild_every == 0 || grid.dim_count() == 0) {
      grid = scalable::build_grid(latent.value(), cfg.grid_m_per_dim, cfg.grid_padding);
    }
    const scalable::KissGradient kg = scalable::kiss_nll_grad(dk.base, latent.value(), train.y, grid);
    const ad::Var loss = tape.record(
        {latent, hp.log_lengthscales, hp.log_signal_variance, hp.log_noise_variance, hp.mean_constant},
        Matrix::Constant(1, 1, kg.value), [kg](const Matrix& adj) {
          const double a = adj(0, 0);
          return std::vector<Matrix>{a * kg.d_latent, a * Matrix(kg.d_log_lengthscales),
                                     Matrix::Constant(1, 1, a * kg.d_log_signal_variance),
                                     Matrix::Constant(1, 1, a * kg.d_log_noise_variance),
                                     Matrix::Constant(1, 1, a * kg.d_mean_constant)};
        });
    const ad::Gradients g = tape.backward(loss);
    for (std::size_t k = 0; k < leaves.size(); ++k) grads[k] = g.of(leaves[k]);
    double value = kg.value;
    add_l1(dk, cfg, value, grads);
    return value;
  };
}

// Kernel hyperparameters only; central differences on the SKIP NLL.
Objective skip_objective(kernels::DeepKernelParams& dk, const TrainConfig& cfg,
                         const data::Dataset& train) {
  return [&dk, &cfg, &train](std::size_t, std::vector<Matrix>& grads) {
    std::vector<ParamSlot> slots = dk.slots();
    const std::size_t first = slots.size() - 4;
    auto eval = [&] {
      return scalable::skip_nll(dk.base, train.X, train.y, cfg.grid_m_per_dim, cfg.skip_rank);
    };
    const double value = eval();
    constexpr double h = 1e-4;
    for (std::size_t k = first; k < slots.size(); ++k) {
      auto theta = slots[k].map();
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double saved = theta(i);
        theta(i) = saved + h;
        const double up = eval();
        theta(i) = saved - h;
        const double down = eval();
        theta(i) = saved;
        grads[k](i) = (up - down) / (2.0 * h);
      }
    }
    return value;
  };
}

}  // namespace

FitResult fit(const kernels::DeepKernelParams& dk_init, const TrainConfig& cfg,
              const data::Dataset& train) {
  cfg.validate();
  dk_init.validate();
  compute::enable_flush_to_zero();
  if (train.X.cols() != static_cast<Eigen::Index>(dk_init.feature.spec.input_dim())) {
    throw ShapeError("fit: data has " + std::to_string(train.X.cols()) + " columns, model expects " +
                     std::to_string(dk_init.feature.spec.input_dim()));
  }
  FitResult result;
  result.best_params = dk_init;
  kernels::DeepKernelParams& dk = result.best_params;
  result.mode = resolve_mode(cfg, train.rows(), dk.feature);
  scalable::ProductGrid grid;
  Objective objective;
  switch (result.mode) {
    case ScalableMode::kiss:
      objective = kiss_objective(dk, cfg, train, grid);
      break;
    case ScalableMode::skip:
      if (dk.feature.spec.kind != features::FeatureKind::identity) {
        throw InvalidArgument("fit: skip mode supports the identity feature map only");
      }
      objective = skip_objective(dk, cfg, train);
      break;
    default:
      objective = exact_objective(dk, cfg, train);
      break;
  }
  const std::vector<ParamSlot> slots = dk.slots();
  const OptimizeResult opt = optimize(slots, objective, cfg, [&dk] { dk.base.project(); });
  result.loss_history = opt.loss_history;
  result.best_epoch = opt.best_epoch;
  result.stopped_early = opt.stopped_early;
  return result;
}

gp::PosteriorPrediction predict(const kernels::DeepKernelParams& dk, ScalableMode mode,
                                const TrainConfig& cfg, const data::Dataset& train,
                                const Matrix& Xstar) {
  switch (mode) {
    case ScalableMode::kiss: {
      const scalable::KissGpModel model =
          scalable::make_kiss_model(dk, train.X, cfg.grid_m_per_dim, cfg.grid_padding);
      return scalable::kiss_predict(model, train.y, features::feature_forward(dk.feature, Xstar));
    }
    case ScalableMode::skip: {
      // Mean only: exact cross-covariance against SKIP-solved weights.
      const scalable::SkipOperator op(
          scalable::make_skip_factors(train.X, dk.base.lengthscales(), cfg.grid_m_per_dim, cfg.grid_padding),
          cfg.skip_rank);
      const double sigma2 = dk.base.signal_variance();
      const double noise = dk.base.noise_variance();
      const Vector r = train.y.array() - dk.base.mean_constant;
      const Vector alpha =
          linalg::conjugate_gradient([&](const Vector& v) { return Vector(sigma2 * op.apply(v) + noise * v); },
                                     r, 1e-6, 1000)
              .x;
      gp::PosteriorPrediction pred;
      pred.mean = (kernels::rbf_matrix(dk.base, Xstar, train.X) * alpha).array() + dk.base.mean_constant;
      pred.variance = Vector::Constant(Xstar.rows(), std::numeric_limits<double>::quiet_NaN());
      return pred;
    }
    default:
      return gp::gp_predict(dk, train.X, train.y, Xstar, false);
  }
}

json to_json(const Checkpoint& ck) {
  return json{{"config", to_json(ck.config)},
              {"epoch", ck.epoch},
              {"params", kernels::to_json(ck.params)},
              {"loss_history", ck.loss_history}};
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint ck;
  ck.config = train_config_from_json(j.at("config"));
  ck.epoch = j.at("epoch").get<std::size_t>();
  ck.params = kernels::deep_kernel_from_json(j.at("params"));
  ck.loss_history = j.at("loss_history").get<std::vector<double>>();
  return ck;
}

}  // namespace dkgp::train
