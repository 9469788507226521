#pragma once

// Experiment runner behind the cpsdyn command line tool.
//
// Config files are INI with sections [model], [method], [tcf], [validate].
// State indices in config files are 1-based.

#include "cpsdyn/dynamics.hpp"
#include "cpsdyn/estimators.hpp"
#include "cpsdyn/models.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cpsdyn {

struct IndexPair {
  int n = 0, m = 0, k = 0, l = 0;  // 0-based
};

struct ValidationToggles {
  bool exact = true;  // compare every row with the exact reference
  double k_se = 5.0;
  double abs_tol = 1e-3;
  bool exact_mapping = false;
  bool invariant_drift = false;
  bool moments = false;
  long n_check = 100000;
};

struct ExperimentConfig {
  ModelSpec model;
  MethodSpec method;
  std::vector<IndexPair> pairs;
  double t_max = 10.0;
  int n_times = 21;
  long n_traj = 100000;
  std::uint64_t seed = 1;
  Backend backend;
  int threads = 1;
  std::string out_dir = ".";
  ValidationToggles validate;
  std::string source;  // where the config came from
};

/// Strict parse: unknown sections or keys, malformed values and invalid
/// combinations raise ParseError naming the key path (e.g. "tcf.n_times").
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

std::vector<double> time_grid(const ExperimentConfig& cfg);

struct RunSummary {
  bool passed = true;
  std::size_t rows = 0;
  std::size_t failed_rows = 0;
  double max_err_over_se = 0.0;
  std::string results_path;
};

/// Writes results.csv and manifest.txt into cfg.out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg, std::ostream& log);

struct ConvergenceRow {
  long n_traj = 0;
  double max_abs_err = 0.0;  // max over t and index pairs, averaged over replicates
};

struct ConvergenceSummary {
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;  // least-squares log-log
  double intercept = 0.0;
  std::string path;
};

/// Needs at least three ensemble sizes. Replicate r uses seed + r.
ConvergenceSummary convergence_study(const ExperimentConfig& cfg,
                                     const std::vector<long>& n_list, int replicates,
                                     std::ostream& log);

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationSummary {
  bool passed = true;
  std::vector<CheckOutcome> checks;
};

/// Runs only the oracle suites enabled in cfg.validate (exact mapping,
/// invariant drift, sphere moments) without estimating any TCF.
ValidationSummary validate_experiment(const ExperimentConfig& cfg, std::ostream& log);

/// "1e3,1e4,100000" -> {1000, 10000, 100000}.
std::vector<long> parse_count_list(const std::string& text);

/// Version string of the build (git describe).
std::string version_string();

}  // namespace cpsdyn
