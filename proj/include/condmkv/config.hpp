#pragma once

// Experiment configuration files (INI):
//
//   [experiment]  name, seed
//   [model]       T, steps, sigma, sigma0, drift, init
//   [run]         N, k, reps, ref_reps, h, steps_list, eps, dy, configs
//   [metric]      M_bl, slices, bootstrap
//
// List-valued keys take comma-separated values. CONDMKV_SEED and
// CONDMKV_OUT override the seed and the output directory.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "condmkv/core.hpp"

namespace condmkv::cli {

struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 0;

  double T = 1.0;
  int steps = 256;
  double sigma = 0.0;
  double sigma0 = 1.0;
  std::string drift = "tanh_gap";
  std::string init = "two_point:-1,1,0.5";

  std::vector<int> N_list;
  int k = 1;
  int reps = 1000;
  /// Replications of a reference computation (limit samples, density runs).
  int ref_reps = 1000;
  std::vector<double> h_list;
  std::vector<int> steps_list;
  double eps = 0.1;
  double dy = 0.05;
  /// Randomized configurations (scheme identities).
  int configs = 100;

  /// Cap of the bounded-Lipschitz distance; defaults to k.
  std::optional<double> M_bl;
  int slices = 16;
  int bootstrap = 200;

  std::string out_dir = "results";
  int workers = 1;

  double bl_cap() const { return M_bl.value_or(static_cast<double>(k)); }
  SimConfig sim() const;
  /// Key-value pairs echoed into reports, in a fixed order.
  std::vector<std::pair<std::string, std::string>> echo() const;
};

/// Parses an INI file; unknown sections or keys are configuration errors.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// CONDMKV_SEED / CONDMKV_OUT.
void apply_environment(ExperimentConfig& config);

/// Shared checks of numeric fields, run before any compute.
void validate(const ExperimentConfig& config);

std::string format_number(double v);

}  // namespace condmkv::cli
