#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <string>

#include "dkgp/cli.hpp"
#include "dkgp/compute.hpp"

int main(int argc, char** argv) {
  dkgp::compute::configure_threads_from_env();
  dkgp::compute::enable_flush_to_zero();

  CLI::App app{"Deep-kernel Gaussian process regression"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  auto* train = app.add_subcommand("train", "Train one model and write checkpoint.json and metrics.json");
  train->add_option("--config", config, "JSON run config")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* bench = app.add_subcommand("benchmark", "Run models over datasets and partitions");
  bench->add_option("--config", config, "JSON benchmark config")->required();
  bench->add_option("--out", out, "Output directory")->required();

  std::string model = "all";
  std::size_t dims = 0;
  auto* count = app.add_subcommand("param-count", "Print trainable parameter counts");
  count->add_option("--model", model, "gp, dkl-mlp, dkl-kan1, dkl-kan2 or all");
  count->add_option("--dims", dims, "Input dimension")->required();

  std::uint64_t seed = 0;
  auto* step = app.add_subcommand("step-demo", "Step-function experiment, writes plot-data CSVs");
  step->add_option("--out", out, "Output directory")->required();
  step->add_option("--seed", seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dkgp::cli::kExitConfig;
  }

  if (*train) return dkgp::cli::cmd_train(config, out, std::cerr);
  if (*bench) return dkgp::cli::cmd_benchmark(config, out, std::cout, std::cerr);
  if (*count) return dkgp::cli::cmd_param_count(model, dims, std::cout, std::cerr);
  return dkgp::cli::cmd_step_demo(out, seed, std::cerr);
}
