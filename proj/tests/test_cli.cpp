#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dkgp/cli.hpp"

namespace dkgp::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dkgp_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Smooth 3-input regression problem written as CSV.
void write_synthetic(const fs::path& p, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::ofstream out(p);
  out.precision(17);
  out << "a,b,c,target\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    out << a << "," << b << "," << c << "," << std::sin(2 * a) + b * c + noise(rng) << "\n";
  }
}

json quick_train() { return {{"epochs", 20}, {"patience", 20}}; }

TEST(AtomicWrite, ReplacesWithoutLeavingTemporaries) {
  const fs::path dir = scratch("atomic");
  write_file_atomic(dir / "f.txt", "one");
  write_file_atomic(dir / "f.txt", "two");
  EXPECT_EQ(slurp(dir / "f.txt"), "two");
  std::size_t count = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++count;
  EXPECT_EQ(count, 1u);
}

TEST(SampleStd, Values) {
  EXPECT_EQ(sample_std({4.2}), 0.0);
  EXPECT_DOUBLE_EQ(sample_std({1.0, 3.0}), std::sqrt(2.0));
}

TEST(CmdTrain, HappyPathWritesBothFiles) {
  const fs::path dir = scratch("train_ok");
  write_synthetic(dir / "d.csv", 60, 1);
  write(dir / "cfg.json", json{{"dataset", "d.csv"}, {"model", "dkl-kan2"}, {"hidden", {4}}, {"train", quick_train()}}.dump());
  std::ostringstream err;
  ASSERT_EQ(cmd_train(dir / "cfg.json", dir / "out", err), kExitOk) << err.str();
  const json metrics = json::parse(slurp(dir / "out" / "metrics.json"));
  for (const char* key : {"train_nll", "test_rmse", "epochs_run", "best_epoch"}) {
    EXPECT_TRUE(metrics.contains(key)) << key;
  }
  EXPECT_EQ(metrics["epochs_run"], 20);
  EXPECT_TRUE(std::isfinite(metrics["test_rmse"].get<double>()));
  const json ck = json::parse(slurp(dir / "out" / "checkpoint.json"));
  EXPECT_TRUE(ck.contains("params"));
}

TEST(CmdTrain, MissingDatasetIsDataError) {
  const fs::path dir = scratch("train_missing");
  write(dir / "cfg.json", json{{"dataset", "nowhere.csv"}, {"model", "gp"}}.dump());
  std::ostringstream err;
  EXPECT_EQ(cmd_train(dir / "cfg.json", dir / "out", err), kExitData);
  EXPECT_NE(err.str().find("nowhere.csv"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(dir / "out" / "metrics.json"));
}

TEST(CmdTrain, BadConfigIsConfigError) {
  const fs::path dir = scratch("train_bad");
  write_synthetic(dir / "d.csv", 30, 2);
  std::ostringstream err;
  write(dir / "a.json", json{{"dataset", "d.csv"}, {"modle", "gp"}}.dump());
  EXPECT_EQ(cmd_train(dir / "a.json", dir / "out", err), kExitConfig);
  write(dir / "b.json", "{not json");
  EXPECT_EQ(cmd_train(dir / "b.json", dir / "out", err), kExitConfig);
  write(dir / "c.json", json{{"dataset", "d.csv"}, {"model", "dkl-rnn"}}.dump());
  EXPECT_EQ(cmd_train(dir / "c.json", dir / "out", err), kExitConfig);
  write(dir / "d.json", json{{"dataset", "d.csv"}, {"train", {{"lr", 0.1}}}}.dump());
  EXPECT_EQ(cmd_train(dir / "d.json", dir / "out", err), kExitConfig);
  EXPECT_EQ(cmd_train(dir / "absent.json", dir / "out", err), kExitConfig);
}

TEST(CmdTrain, ZeroEpochsReportsUntrainedModel) {
  const fs::path dir = scratch("train_zero");
  write_synthetic(dir / "d.csv", 40, 3);
  write(dir / "cfg.json",
        json{{"dataset", "d.csv"}, {"model", "gp"}, {"train", {{"epochs", 0}, {"patience", 0}}}}.dump());
  std::ostringstream err;
  ASSERT_EQ(cmd_train(dir / "cfg.json", dir / "out", err), kExitOk) << err.str();
  const json metrics = json::parse(slurp(dir / "out" / "metrics.json"));
  EXPECT_EQ(metrics["epochs_run"], 0);
  EXPECT_TRUE(std::isfinite(metrics["train_nll"].get<double>()));
}

TEST(CmdBenchmark, ReportRowsFailuresAndDeterminism) {
  const fs::path dir = scratch("bench");
  write_synthetic(dir / "d.csv", 80, 4);
  write(dir / "bad.csv", "a,t\n1,2\n3\n");
  write(dir / "registry.json", json{{"syn", "d.csv"}, {"bad", "bad.csv"}}.dump());
  const json cfg{{"datasets", {"syn", "bad"}},
                 {"registry", "registry.json"},
                 {"models", {"gp", "dkl-mlp"}},
                 {"hidden", {{"dkl-mlp", {5}}}},
                 {"partitions", 1},
                 {"train", quick_train()}};
  write(dir / "cfg.json", cfg.dump());
  std::ostringstream out, err;
  ASSERT_EQ(cmd_benchmark(dir / "cfg.json", dir / "out", out, err), kExitOk) << err.str();
  const json report = json::parse(slurp(dir / "out" / "report.json"));
  ASSERT_EQ(report["rows"].size(), 4u);
  std::size_t failed = 0;
  for (const json& row : report["rows"]) {
    if (row["status"] == "ok") {
      EXPECT_EQ(row["rmse_std"].get<double>(), 0.0);
      EXPECT_GE(row["wall_time_seconds"].get<double>(), 0.0);
    } else {
      ++failed;
      EXPECT_EQ(row["dataset"], "bad");
      EXPECT_TRUE(row.contains("error"));
    }
  }
  EXPECT_EQ(failed, 2u);
  EXPECT_NE(out.str().find("failed"), std::string::npos);
  EXPECT_NE(out.str().find("±"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "out" / "report.txt"));

  std::ostringstream out2;
  ASSERT_EQ(cmd_benchmark(dir / "cfg.json", dir / "out2", out2, err), kExitOk);
  const json again = json::parse(slurp(dir / "out2" / "report.json"));
  for (std::size_t i = 0; i < 4; ++i) {
    if (report["rows"][i]["status"] == "ok") {
      EXPECT_EQ(report["rows"][i]["rmse_mean"], again["rows"][i]["rmse_mean"]);
    }
  }
}

TEST(CmdBenchmark, MultiplePartitionsGiveNonNegativeStd) {
  const fs::path dir = scratch("bench_k");
  write_synthetic(dir / "d.csv", 60, 5);
  write(dir / "cfg.json", json{{"datasets", {"d.csv"}}, {"models", {"gp"}}, {"partitions", 3}, {"train", quick_train()}}.dump());
  std::ostringstream out, err;
  ASSERT_EQ(cmd_benchmark(dir / "cfg.json", dir / "out", out, err), kExitOk) << err.str();
  const json row = json::parse(slurp(dir / "out" / "report.json"))["rows"][0];
  EXPECT_EQ(row["rmse"].size(), 3u);
  EXPECT_GE(row["rmse_std"].get<double>(), 0.0);
}

TEST(CmdParamCount, PrintsTable) {
  std::ostringstream out, err;
  ASSERT_EQ(cmd_param_count("all", 10, out, err), kExitOk);
  for (const char* needle : {"gp", "13", "536657", "5351005", "436485"}) {
    EXPECT_NE(out.str().find(needle), std::string::npos) << needle;
  }
  std::ostringstream one;
  ASSERT_EQ(cmd_param_count("gp", 128, one, err), kExitOk);
  EXPECT_NE(one.str().find("131"), std::string::npos);
  EXPECT_EQ(cmd_param_count("dkl-rnn", 3, one, err), kExitConfig);
  EXPECT_EQ(cmd_param_count("gp", 0, one, err), kExitConfig);
}

TEST(CmdStepDemo, WritesFiveCsvsWithExactHeaders) {
  const fs::path dir = scratch("step");
  std::ostringstream err;
  ASSERT_EQ(cmd_step_demo(dir, 0, err), kExitOk) << err.str();
  for (const char* model : {"gp", "dkl-mlp", "dkl-kan"}) {
    std::ifstream in(dir / model / "predictions.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,mean,std");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 500u) << model;
  }
  EXPECT_FALSE(fs::exists(dir / "gp" / "latent.csv"));
  for (const char* model : {"dkl-mlp", "dkl-kan"}) {
    std::ifstream in(dir / model / "latent.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "x,z1,z2");
  }
}

}  // namespace
}  // namespace dkgp::cli
