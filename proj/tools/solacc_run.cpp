// Command-line front end: runs one experiment described by a key=value file.
//
//   solacc_run --config run.cfg --out results/ [--threads 4] [--seed 7]
//   solacc_run --config run.cfg --validate
//
// Exit status: 0 success, 2 invalid configuration, 3 runtime failure.

#include <iostream>

#include <CLI11.hpp>

#include "solacc/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Soliton dynamics in random potentials: experiment runner"};
  std::string config_path;
  std::string out_dir = "out";
  bool validate_only = false;
  int threads = 0;
  std::uint64_t seed = 0;

  app.add_option("--config", config_path, "experiment configuration (key = value)")->required()->check(CLI::ExistingFile);
  app.add_flag("--validate", validate_only, "check the configuration and exit without running");
  app.add_option("--out", out_dir, "output directory");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads for ensembles")->check(CLI::PositiveNumber);
  auto* seed_opt = app.add_option("--seed", seed, "base seed (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : solacc::kExitValidation;
  }

  solacc::RunOptions options;
  options.out = out_dir;
  options.validate_only = validate_only;
  if (*threads_opt) options.threads = threads;
  if (*seed_opt) options.seed = seed;

  solacc::Config config;
  try {
    config = solacc::Config::load(config_path);
  } catch (const std::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return solacc::kExitValidation;
  }
  return solacc::execute(config, options, validate_only ? std::cout : std::cerr);
}
