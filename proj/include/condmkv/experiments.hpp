#pragma once

#include <string>
#include <vector>

#include "condmkv/config.hpp"
#include "condmkv/report.hpp"

namespace condmkv::cli {

struct ExperimentInfo {
  std::string name;
  std::string criterion;
  std::string description;
};

/// Named experiments, one per acceptance criterion, in criterion order.
const std::vector<ExperimentInfo>& registry();

/// Throws ConfigError listing the registry for unknown names.
const ExperimentInfo& find_experiment(const std::string& name);

/// Validates the configuration, runs the experiment and returns its report.
Report run_experiment(const ExperimentConfig& config);

}  // namespace condmkv::cli
