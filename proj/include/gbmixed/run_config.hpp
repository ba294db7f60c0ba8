#pragma once

#include "gbmixed/boosting.hpp"
#include "gbmixed/data.hpp"

#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace gbmixed {

using Setting = std::pair<std::string, std::string>;

/// Flat `key = value` run configuration; `#` starts a comment.
struct RunConfig {
  ColumnSchema schema;
  FitConfig fit;
  std::vector<std::string> force_include;  // feature names, resolved against the data
  std::string model_path = "model.gbm";
};

/// Reads `key = value` lines. Duplicate keys and malformed lines are rejected.
std::vector<Setting> read_settings(std::istream& in, const std::string& source);

/// Applies fit-related settings; `variant` is applied first so learner keys can
/// override its defaults. Returns the settings it did not recognize.
std::vector<Setting> apply_fit_settings(FitConfig& config, const std::vector<Setting>& settings);

RunConfig parse_run_config(std::istream& in, const std::string& source = "config");
RunConfig load_run_config(const std::string& path);

/// Maps force-include names to feature indices of `data` and validates the result.
void resolve_force_include(RunConfig& config, const GroupedDataset& data);

}  // namespace gbmixed
