// cpsdyn command line: run / converge / validate an experiment config.
// Exit status: 0 pass, 1 usage or config error, 2 validation failure.

#include "cpsdyn/cli.hpp"
#include "cpsdyn/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-based TCF simulator on constraint phase space"};
  app.set_version_flag("--version", cpsdyn::version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::optional<long> seed;
  std::optional<int> threads;
  std::optional<std::string> out_dir;
  app.add_option("--seed", seed, "override tcf.seed")->check(CLI::NonNegativeNumber);
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory");

  auto* run = app.add_subcommand("run", "estimate TCFs and compare with the exact reference");
  run->add_option("config", config_path, "experiment config (INI)")->required();

  std::string n_list;
  int replicates = 1;
  auto* conv = app.add_subcommand("converge", "error vs ensemble size and fitted log-log slope");
  conv->add_option("config", config_path, "experiment config (INI)")->required();
  conv->add_option("--n", n_list, "comma-separated ensemble sizes, e.g. 1e3,1e4,1e5")->required();
  conv->add_option("--replicates", replicates, "independent seeds averaged per size")
      ->check(CLI::PositiveNumber);

  auto* val = app.add_subcommand("validate", "run only the oracle and invariant suites");
  val->add_option("config", config_path, "experiment config (INI)")->required();

  // options are accepted before or after the subcommand
  for (auto* sub : {run, conv, val}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cpsdyn::ExperimentConfig cfg = cpsdyn::load_config(config_path);
    if (seed) cfg.seed = static_cast<std::uint64_t>(*seed);
    if (threads) cfg.threads = *threads;
    if (out_dir) cfg.out_dir = *out_dir;

    if (*run) {
      const auto sum = cpsdyn::run_experiment(cfg, std::cout);
      return sum.passed ? 0 : 2;
    }
    if (*conv) {
      cpsdyn::convergence_study(cfg, cpsdyn::parse_count_list(n_list), replicates, std::cout);
      return 0;
    }
    if (cfg.validate.exact_mapping || cfg.validate.invariant_drift || cfg.validate.moments) {
      return cpsdyn::validate_experiment(cfg, std::cout).passed ? 0 : 2;
    }
    cfg.validate.exact_mapping = cfg.validate.invariant_drift = cfg.validate.moments = true;
    return cpsdyn::validate_experiment(cfg, std::cout).passed ? 0 : 2;
  } catch (const cpsdyn::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
