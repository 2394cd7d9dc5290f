#pragma once

#include <map>
#include <string>
#include <vector>

#include "vreg/solver.hpp"

namespace vreg {

/// Flat `key = value` config with one [section] header per module namespace.
/// Keys are stored as "section.key"; the command line overrides file values.
struct ExperimentConfig {
  std::map<std::string, std::string> kv;

  static ExperimentConfig parse_text(const std::string& text);
  void apply_assignment(const std::string& assignment);  // "section.key=value"
  void merge_defaults(const ExperimentConfig& defaults);  // fills missing keys only

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback = "") const;
  double get_num(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunResult {
  int exit_code = 0;  // 0 success, 2 config error, 3 numerical failure
  std::vector<std::string> artifacts;
  std::string message;
  std::string table;  // human-readable table (exponents kind)
};

/// Runs one experiment; writes every artifact plus manifest.json into
/// output_dir. Deterministic for a fixed config and seed.
RunResult run_experiment(ExperimentConfig cfg, const std::string& output_dir);

const std::map<std::string, std::string>& builtin_presets();

/// Builds the ProblemSpec described by the [problem] section (used by the
/// runners and by the test suites).
ProblemSpec problem_from_config(const ExperimentConfig& cfg);
SolverConfig solver_from_config(const ExperimentConfig& cfg);

/// The angular competitor of the checkerboard Lavrentiev experiment.
ClosedFormField checkerboard_competitor();

}  // namespace vreg
