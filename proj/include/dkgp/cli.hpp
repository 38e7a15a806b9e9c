#pragma once

// Command implementations behind the dkgp executable. Each command returns a
// process exit code: 0 success, 1 configuration error, 2 data error,
// 3 numeric failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dkgp/data.hpp"
#include "dkgp/train.hpp"

namespace dkgp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

struct RunConfig {
  std::string dataset;  // registry name or CSV path
  std::optional<std::filesystem::path> registry;
  std::string model = "gp";
  std::vector<std::size_t> hidden;  // empty: the model's default widths
  train::TrainConfig train;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 0;
  bool normalize = true;
  std::filesystem::path base_dir;  // relative paths resolve here
};

// Keys: dataset, registry, model, hidden, train, train_fraction, split_seed,
// normalize. Unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

struct BenchmarkConfig {
  std::vector<std::string> datasets;
  std::optional<std::filesystem::path> registry;
  std::vector<std::string> models;
  std::map<std::string, std::vector<std::size_t>> hidden;  // per-model width override
  std::size_t partitions = 5;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  bool normalize = true;
  train::TrainConfig train;
  std::filesystem::path base_dir;
};

// Keys: datasets, registry, models, hidden, partitions, train_fraction,
// seed, normalize, train.
BenchmarkConfig benchmark_config_from_json(const nlohmann::json& j,
                                           const std::filesystem::path& base_dir);

nlohmann::json load_json_file(const std::filesystem::path& path);

data::Dataset resolve_dataset(const std::string& dataset,
                              const std::optional<std::filesystem::path>& registry,
                              const std::filesystem::path& base_dir);

// One train/test evaluation of a model on a dataset.
struct EvalResult {
  train::FitResult fit;
  double train_nll = 0.0;
  double test_rmse = 0.0;
};

EvalResult train_and_evaluate(const data::Dataset& dataset, const std::string& model,
                              const std::vector<std::size_t>& hidden, const train::TrainConfig& cfg,
                              const data::Split& split, bool normalize);

struct BenchmarkRow {
  std::string dataset;
  std::string model;
  bool ok = false;
  std::string error;
  std::vector<double> rmses;
  double rmse_mean = 0.0;
  double rmse_std = 0.0;
  std::size_t param_count = 0;
  double wall_time_seconds = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;
};

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg);
nlohmann::json to_json(const BenchmarkReport& report);
// Fixed-width table; failed cells read "failed".
std::string format_table(const BenchmarkReport& report);

// Sample standard deviation; zero for a single value.
double sample_std(const std::vector<double>& values);

struct StepModelOutput {
  std::string name;
  Vector mean;
  Vector std;
  std::optional<Matrix> latent;  // test-point features for the DKL models
  double test_rmse = 0.0;
};

struct StepDemoResult {
  Vector x_train;
  Vector y_train;
  Vector x_test;
  Vector y_test;
  std::vector<StepModelOutput> models;  // gp, dkl-mlp, dkl-kan
};

double step_function(double x);
StepDemoResult run_step_demo(std::uint64_t seed, const train::TrainConfig& cfg);

int cmd_train(const std::filesystem::path& config, const std::filesystem::path& out, std::ostream& err);
int cmd_benchmark(const std::filesystem::path& config, const std::filesystem::path& out,
                  std::ostream& out_stream, std::ostream& err);
int cmd_param_count(const std::string& model, std::size_t dims, std::ostream& out, std::ostream& err);
int cmd_step_demo(const std::filesystem::path& out, std::uint64_t seed, std::ostream& err);

}  // namespace dkgp::cli
