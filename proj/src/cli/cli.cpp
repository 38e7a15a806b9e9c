#include "dkgp/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "dkgp/gp.hpp"

namespace dkgp::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

template <typename T>
T get_field(const json& value, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_relative() ? base / p : p;
}

// Re-raises numeric failures with the stage that produced them.
template <typename F>
auto in_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const NonFiniteLoss& e) {
    throw NumericError(stage + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(stage + ": " + e.what());
  }
}

int report_error(std::ostream& err, int code, const std::string& what) {
  err << "dkgp: " << what << "\n";
  return code;
}

template <typename F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    return report_error(err, kExitConfig, std::string("config error: ") + e.what());
  } catch (const InvalidArgument& e) {
    return report_error(err, kExitConfig, std::string("config error: ") + e.what());
  } catch (const json::exception& e) {
    return report_error(err, kExitConfig, std::string("config error: ") + e.what());
  } catch (const DataError& e) {
    return report_error(err, kExitData, std::string("data error: ") + e.what());
  } catch (const ShapeError& e) {
    return report_error(err, kExitData, std::string("data error: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, kExitData, std::string("data error: ") + e.what());
  } catch (const NumericError& e) {
    return report_error(err, kExitNumeric, std::string("numeric failure: ") + e.what());
  } catch (const std::exception& e) {
    return report_error(err, kExitNumeric, std::string("failure: ") + e.what());
  }
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  for (const auto& [key, value] : j.items()) {
    if (key == "dataset") cfg.dataset = get_field<std::string>(value, key);
    else if (key == "registry") cfg.registry = get_field<std::string>(value, key);
    else if (key == "model") cfg.model = get_field<std::string>(value, key);
    else if (key == "hidden") cfg.hidden = get_field<std::vector<std::size_t>>(value, key);
    else if (key == "train") cfg.train = train::train_config_from_json(value);
    else if (key == "train_fraction") cfg.train_fraction = get_field<double>(value, key);
    else if (key == "split_seed") cfg.split_seed = get_field<std::uint64_t>(value, key);
    else if (key == "normalize") cfg.normalize = get_field<bool>(value, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (cfg.dataset.empty()) throw ConfigError("config needs a 'dataset'");
  features::model_feature_spec(cfg.model, 1, cfg.hidden);
  return cfg;
}

BenchmarkConfig benchmark_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("benchmark config must be a JSON object");
  BenchmarkConfig cfg;
  cfg.base_dir = base_dir;
  for (const auto& [key, value] : j.items()) {
    if (key == "datasets") cfg.datasets = get_field<std::vector<std::string>>(value, key);
    else if (key == "registry") cfg.registry = get_field<std::string>(value, key);
    else if (key == "models") cfg.models = get_field<std::vector<std::string>>(value, key);
    else if (key == "hidden") cfg.hidden = get_field<std::map<std::string, std::vector<std::size_t>>>(value, key);
    else if (key == "partitions") cfg.partitions = get_field<std::size_t>(value, key);
    else if (key == "train_fraction") cfg.train_fraction = get_field<double>(value, key);
    else if (key == "seed") cfg.seed = get_field<std::uint64_t>(value, key);
    else if (key == "normalize") cfg.normalize = get_field<bool>(value, key);
    else if (key == "train") cfg.train = train::train_config_from_json(value);
    else throw ConfigError("unknown benchmark config key '" + key + "'");
  }
  if (cfg.datasets.empty()) throw ConfigError("benchmark needs at least one dataset");
  if (cfg.models.empty()) throw ConfigError("benchmark needs at least one model");
  if (cfg.partitions < 1) throw ConfigError("partitions must be at least 1");
  for (const std::string& m : cfg.models) {
    const auto it = cfg.hidden.find(m);
    features::model_feature_spec(m, 1, it == cfg.hidden.end() ? std::vector<std::size_t>{} : it->second);
  }
  return cfg;
}

data::Dataset resolve_dataset(const std::string& dataset, const std::optional<fs::path>& registry,
                              const fs::path& base_dir) {
  if (registry) {
    const data::Registry reg = data::load_registry(resolve(*registry, base_dir));
    const auto it = reg.find(dataset);
    if (it != reg.end()) {
      data::Dataset ds = data::load_csv(it->second);
      ds.name = dataset;
      return ds;
    }
  }
  const fs::path p = resolve(dataset, base_dir);
  if (!fs::exists(p)) throw DataError("dataset file not found: " + p.string());
  return data::load_csv(p);
}

EvalResult train_and_evaluate(const data::Dataset& dataset, const std::string& model,
                              const std::vector<std::size_t>& hidden, const train::TrainConfig& cfg,
                              const data::Split& split, bool normalize) {
  data::Dataset tr = dataset.select(split.train);
  data::Dataset te = dataset.select(split.test);
  if (normalize) {
    const data::EcdfMap map = data::ecdf_fit(tr.X);
    tr.X = data::ecdf_transform(map, tr.X);
    te.X = data::ecdf_transform(map, te.X);
  }
  const features::FeatureSpec spec = features::model_feature_spec(model, dataset.dims(), hidden);
  const kernels::DeepKernelParams init =
      kernels::DeepKernelParams::with_feature(features::init_feature(spec, cfg.seed), tr.y.mean());
  EvalResult r;
  r.fit = in_stage("training", [&] { return train::fit(init, cfg, tr); });
  r.train_nll = r.fit.loss_history.empty()
                    ? in_stage("evaluation", [&] { return gp::gp_nll(r.fit.best_params, tr.X, tr.y); })
                    : r.fit.loss_history[r.fit.best_epoch];
  const gp::PosteriorPrediction pred = in_stage(
      "prediction", [&] { return train::predict(r.fit.best_params, r.fit.mode, cfg, tr, te.X); });
  r.test_rmse = data::rmse(pred.mean, te.y);
  return r;
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg) {
  BenchmarkReport report;
  for (const std::string& name : cfg.datasets) {
    std::optional<data::Dataset> ds;
    std::string load_error;
    try {
      ds = resolve_dataset(name, cfg.registry, cfg.base_dir);
    } catch (const std::exception& e) {
      load_error = e.what();
    }
    for (const std::string& model : cfg.models) {
      BenchmarkRow row;
      row.dataset = name;
      row.model = model;
      const auto hit = cfg.hidden.find(model);
      const std::vector<std::size_t> hidden =
          hit == cfg.hidden.end() ? std::vector<std::size_t>{} : hit->second;
      const auto start = std::chrono::steady_clock::now();
      try {
        if (!ds) throw DataError(load_error);
        row.param_count = features::model_param_count(features::model_feature_spec(model, ds->dims(), hidden));
        const data::SplitPlan plan = data::partition(ds->rows(), cfg.partitions, cfg.train_fraction, cfg.seed);
        for (const data::Split& split : plan.splits) {
          row.rmses.push_back(train_and_evaluate(*ds, model, hidden, cfg.train, split, cfg.normalize).test_rmse);
        }
        double mean = 0.0;
        for (double v : row.rmses) mean += v;
        row.rmse_mean = mean / static_cast<double>(row.rmses.size());
        row.rmse_std = sample_std(row.rmses);
        row.ok = true;
      } catch (const std::exception& e) {
        row.ok = false;
        row.error = e.what();
      }
      row.wall_time_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

json to_json(const BenchmarkReport& report) {
  json rows = json::array();
  for (const BenchmarkRow& r : report.rows) {
    json row{{"dataset", r.dataset}, {"model", r.model}, {"status", r.ok ? "ok" : "failed"},
             {"param_count", r.param_count}, {"wall_time_seconds", r.wall_time_seconds}};
    if (r.ok) {
      row["rmse_mean"] = r.rmse_mean;
      row["rmse_std"] = r.rmse_std;
      row["rmse"] = r.rmses;
    } else {
      row["error"] = r.error;
    }
    rows.push_back(std::move(row));
  }
  return json{{"rows", rows}};
}

std::string format_table(const BenchmarkReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "dataset" << std::setw(10) << "model" << std::right
     << std::setw(22) << "rmse" << std::setw(12) << "params" << std::setw(12) << "time_s" << "\n";
  for (const BenchmarkRow& r : report.rows) {
    std::ostringstream cell;
    if (r.ok) {
      cell << std::fixed << std::setprecision(4) << r.rmse_mean << " ± " << r.rmse_std;
    } else {
      cell << "failed";
    }
    // The plus-minus sign is two bytes but one column wide.
    const int width = r.ok ? 23 : 22;
    os << std::left << std::setw(16) << r.dataset << std::setw(10) << r.model << std::right
       << std::setw(width) << cell.str() << std::setw(12) << r.param_count << std::setw(12)
       << std::fixed << std::setprecision(2) << r.wall_time_seconds << "\n";
  }
  return os.str();
}

double step_function(double x) { return x > 0.0 ? 1.0 : 0.0; }

StepDemoResult run_step_demo(std::uint64_t seed, const train::TrainConfig& cfg) {
  constexpr std::size_t kTrain = 100;
  constexpr std::size_t kTest = 500;
  constexpr double kNoise = 0.01;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  StepDemoResult out;
  out.x_train.resize(kTrain);
  out.y_train.resize(kTrain);
  for (std::size_t i = 0; i < kTrain; ++i) {
    const double x = normal(rng);
    out.x_train(static_cast<Eigen::Index>(i)) = x;
    out.y_train(static_cast<Eigen::Index>(i)) = step_function(x) + kNoise * normal(rng);
  }
  out.x_test = Vector::LinSpaced(kTest, -5.0, 5.0);
  out.y_test.resize(kTest);
  for (std::size_t i = 0; i < kTest; ++i) {
    out.y_test(static_cast<Eigen::Index>(i)) =
        step_function(out.x_test(static_cast<Eigen::Index>(i))) + kNoise * normal(rng);
  }
  data::Dataset tr{"step", Matrix(out.x_train), out.y_train};
  const Matrix Xs = out.x_test;

  const std::vector<std::pair<std::string, features::FeatureSpec>> models{
      {"gp", features::FeatureSpec::identity(1)},
      {"dkl-mlp", features::FeatureSpec::mlp({1, 6, 2})},
      {"dkl-kan", features::FeatureSpec::kan({1, 6, 2})}};
  train::TrainConfig run_cfg = cfg;
  run_cfg.scalable_mode = train::ScalableMode::exact;
  for (const auto& [name, spec] : models) {
    const kernels::DeepKernelParams init =
        kernels::DeepKernelParams::with_feature(features::init_feature(spec, seed), tr.y.mean());
    const train::FitResult fr = in_stage("training " + name, [&] { return train::fit(init, run_cfg, tr); });
    const gp::PosteriorPrediction pred =
        in_stage("prediction " + name, [&] { return gp::gp_predict(fr.best_params, tr.X, tr.y, Xs, false); });
    StepModelOutput m;
    m.name = name;
    m.mean = pred.mean;
    m.std = pred.variance.array().sqrt();
    if (spec.kind != features::FeatureKind::identity) {
      m.latent = features::feature_forward(fr.best_params.feature, Xs);
    }
    m.test_rmse = data::rmse(pred.mean, out.y_test);
    out.models.push_back(std::move(m));
  }
  return out;
}

int cmd_train(const fs::path& config, const fs::path& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = run_config_from_json(load_json_file(config), config.parent_path());
    const data::Dataset ds = resolve_dataset(cfg.dataset, cfg.registry, cfg.base_dir);
    const data::SplitPlan plan = data::partition(ds.rows(), 1, cfg.train_fraction, cfg.split_seed);
    const EvalResult r = train_and_evaluate(ds, cfg.model, cfg.hidden, cfg.train, plan.splits[0], cfg.normalize);
    const train::Checkpoint ck{cfg.train, r.fit.best_epoch, r.fit.best_params, r.fit.loss_history};
    const json metrics{{"train_nll", r.train_nll},
                       {"test_rmse", r.test_rmse},
                       {"epochs_run", r.fit.loss_history.size()},
                       {"best_epoch", r.fit.best_epoch}};
    write_file_atomic(out / "checkpoint.json", train::to_json(ck).dump(2) + "\n");
    write_file_atomic(out / "metrics.json", metrics.dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_benchmark(const fs::path& config, const fs::path& out, std::ostream& out_stream,
                  std::ostream& err) {
  return guarded(err, [&] {
    const BenchmarkConfig cfg = benchmark_config_from_json(load_json_file(config), config.parent_path());
    const BenchmarkReport report = run_benchmark(cfg);
    const std::string table = format_table(report);
    write_file_atomic(out / "report.json", to_json(report).dump(2) + "\n");
    write_file_atomic(out / "report.txt", table);
    out_stream << table;
    return kExitOk;
  });
}

int cmd_param_count(const std::string& model, std::size_t dims, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (dims < 1) throw ConfigError("--dims must be at least 1");
    std::vector<std::string> models;
    if (model == "all") {
      models = features::known_models();
    } else {
      models.push_back(model);
    }
    std::ostringstream os;
    os << std::left << std::setw(10) << "model" << std::right << std::setw(8) << "d" << std::setw(12)
       << "params" << "\n";
    for (const std::string& m : models) {
      const std::size_t count = features::model_param_count(features::model_feature_spec(m, dims));
      os << std::left << std::setw(10) << m << std::right << std::setw(8) << dims << std::setw(12) << count
         << "\n";
    }
    out << os.str();
    return kExitOk;
  });
}

int cmd_step_demo(const fs::path& out, std::uint64_t seed, std::ostream& err) {
  return guarded(err, [&] {
    train::TrainConfig cfg;
    cfg.seed = seed;
    const StepDemoResult r = run_step_demo(seed, cfg);
    for (const StepModelOutput& m : r.models) {
      std::ostringstream pred;
      pred << "x,mean,std\n";
      for (Eigen::Index i = 0; i < r.x_test.size(); ++i) {
        pred << csv_number(r.x_test(i)) << ',' << csv_number(m.mean(i)) << ',' << csv_number(m.std(i)) << '\n';
      }
      write_file_atomic(out / m.name / "predictions.csv", pred.str());
      if (m.latent) {
        std::ostringstream lat;
        lat << "x,z1,z2\n";
        for (Eigen::Index i = 0; i < r.x_test.size(); ++i) {
          lat << csv_number(r.x_test(i)) << ',' << csv_number((*m.latent)(i, 0)) << ','
              << csv_number((*m.latent)(i, 1)) << '\n';
        }
        write_file_atomic(out / m.name / "latent.csv", lat.str());
      }
    }
    return kExitOk;
  });
}

}  // namespace dkgp::cli
