#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/model.hpp"

namespace pdmp {

/// Experiment description read from a line-oriented config file:
///
///   # comment
///   seed = 42                 top-level keys come before the first section
///   [model]
///   name = "dirac-trap"       registry name; the other keys are model parameters
///   lambda = 1.0
///   [simulation]
///   init = [1.0]              numbers, "strings", true/false and [number, ...] lists
///
/// Sections: model, simulation, metric, rate, correspond, diagnose,
/// constants, output. See render() for the full key list with defaults.
struct ExperimentConfig {
  std::uint64_t seed = 0;

  std::string model;
  ModelParams params;  // model parameters given explicitly

  // [simulation]
  std::vector<double> init;  // empty: 1 in every coordinate
  int init_mode = 1;
  std::size_t n_traj = 100;
  std::size_t n_steps = 100;
  std::size_t burn_in = 200;
  std::size_t n_keep = 100;
  std::size_t thin = 1;

  // [metric]
  double c = 1.0;

  // [rate]
  int rate_n_max = 10;
  std::size_t rate_n_rep = 10000;
  std::size_t rate_n_boot = 5;

  // [correspond]
  std::size_t correspond_n_boot = 5;

  // [diagnose]
  std::vector<std::string> checks{"rank", "positivity", "accessibility", "small-set", "hypotheses", "anchors"};
  std::vector<double> y_hat;  // empty: first suggested anchor
  int anchor_mode = 1;
  std::vector<double> path_modes;
  std::vector<double> path_times;
  std::vector<double> path_thetas;
  double fd_step = 0.0;
  double svd_rtol = 1e-8;
  double radius = 1e-3;
  std::vector<double> starts;       // flattened coordinates, d per start
  std::vector<double> start_modes;  // one per start
  int access_n_max = 8;
  int access_attempts = 200;
  double access_t_max = 10.0;
  int small_set_n = 1;
  std::size_t small_set_n_mc = 100000;
  std::size_t n_pairs = 100000;

  // [constants] overrides of the built-in hypothesis constants
  std::optional<double> alpha;
  std::optional<double> L;
  std::optional<double> L_w;
  std::optional<double> L_p;
  std::optional<double> c_pi;
  std::optional<double> c_p;

  // [output]
  std::string out_dir = "out";
  std::string format = "csv";
  int workers = 1;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct ConfigIssue {
  std::size_t line = 0;  // 0 when the issue is not tied to a line
  std::string message;
};

/// All problems found in a config file, one per line of what().
class ConfigError : public PreconditionError {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Parses and validates; throws ConfigError listing every issue. `seed` and
/// `[model] name` are required.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text with every key; parse_config(render(c)) == c.
std::string render(const ExperimentConfig& config);

PdmpModel make_model(const ExperimentConfig& config);

}  // namespace pdmp
