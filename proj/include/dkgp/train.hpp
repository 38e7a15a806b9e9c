#pragma once

// Full-batch Adam training of deep-kernel parameters on the GP marginal
// likelihood, with exponential learning-rate decay and early stopping on the
// training loss.

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dkgp/data.hpp"
#include "dkgp/kernels.hpp"
#include "dkgp/params.hpp"
#include "dkgp/scalable.hpp"

namespace dkgp::train {

enum class ScalableMode { exact, kiss, skip, automatic };
std::string_view to_string(ScalableMode mode);
ScalableMode scalable_mode_from_string(std::string_view name);

// Above this many training rows, automatic mode leaves the exact GP.
inline constexpr std::size_t kAutoScalableThreshold = 20000;

struct TrainConfig {
  double lr0 = 0.075;
  double decay = 0.997;
  std::size_t epochs = 2500;
  std::size_t patience = 1000;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  ScalableMode scalable_mode = ScalableMode::automatic;
  std::size_t grid_m_per_dim = 100;
  std::size_t grid_rebuild_every = 50;
  double grid_padding = 0.1;
  std::size_t skip_rank = 50;
  double clip_norm = 10.0;
  double l1 = 0.0;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Overrides the fields present in `j` on top of `base`; unknown keys throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::size_t t = 0;

  static AdamState zeros_like(std::span<const ParamSlot> params);
};

// One bias-corrected Adam update of the parameters behind `params`.
void adam_step(AdamState& state, std::span<const ParamSlot> params, std::span<const Matrix> grads,
               double lr, const TrainConfig& cfg);

// Rescales `grads` so their joint Euclidean norm is at most `max_norm`.
// Returns the norm before clipping.
double clip_global_norm(std::vector<Matrix>& grads, double max_norm);

// Loss at the current parameter values for the given epoch; fills `grads`
// (one matrix per slot).
using Objective = std::function<double(std::size_t epoch, std::vector<Matrix>& grads)>;

struct OptimizeResult {
  std::vector<double> loss_history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

// Adam loop with early stopping: stops once epoch - best_epoch > patience.
// On return the parameters hold the best snapshot. `after_step` runs after
// every update (parameter projection).
OptimizeResult optimize(std::span<const ParamSlot> params, const Objective& objective,
                        const TrainConfig& cfg, const std::function<void()>& after_step = {});

// Mode fit() will use for n rows through the given feature map.
ScalableMode resolve_mode(const TrainConfig& cfg, std::size_t n, const features::FeatureMap& feature);

struct FitResult {
  kernels::DeepKernelParams best_params;
  std::vector<double> loss_history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  ScalableMode mode = ScalableMode::exact;
};

FitResult fit(const kernels::DeepKernelParams& dk_init, const TrainConfig& cfg,
              const data::Dataset& train);

// Predictive mean and noise-free variance after fit, using the same mode.
gp::PosteriorPrediction predict(const kernels::DeepKernelParams& dk, ScalableMode mode,
                                const TrainConfig& cfg, const data::Dataset& train,
                                const Matrix& Xstar);

struct Checkpoint {
  TrainConfig config;
  std::size_t epoch = 0;
  kernels::DeepKernelParams params;
  std::vector<double> loss_history;
};

nlohmann::json to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

}  // namespace dkgp::train
