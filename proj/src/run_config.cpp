#include "gbmixed/run_config.hpp"

#include "gbmixed/error.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

namespace gbmixed {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const std::string item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_real(const Setting& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.second.data(), s.second.data() + s.second.size(), v);
  if (r.ec != std::errc() || r.ptr != s.second.data() + s.second.size()) {
    throw ConfigError(s.first + ": expected a number, got '" + s.second + "'");
  }
  return v;
}

template <typename Int>
Int to_int(const Setting& s) {
  Int v{};
  const auto r = std::from_chars(s.second.data(), s.second.data() + s.second.size(), v);
  if (r.ec != std::errc() || r.ptr != s.second.data() + s.second.size()) {
    throw ConfigError(s.first + ": expected an integer, got '" + s.second + "'");
  }
  return v;
}

bool to_bool(const Setting& s) {
  const std::string& v = s.second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(s.first + ": expected true or false, got '" + v + "'");
}

LearnerKind to_kind(const Setting& s) {
  try {
    return parse_learner_kind(s.second);
  } catch (const ConfigError&) {
    throw ConfigError(s.first + ": unknown learner kind '" + s.second + "' (expected constant, linear or tree)");
  }
}

}  // namespace

std::vector<Setting> read_settings(std::istream& in, const std::string& source) {
  std::vector<Setting> out;
  std::set<std::string> seen;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(no) + ": expected key = value");
    Setting s{trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (s.first.empty()) throw ConfigError(source + ":" + std::to_string(no) + ": empty key");
    if (!seen.insert(s.first).second) {
      throw ConfigError(source + ":" + std::to_string(no) + ": duplicate key '" + s.first + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Setting> apply_fit_settings(FitConfig& c, const std::vector<Setting>& settings) {
  for (const auto& s : settings) {
    if (s.first != "variant") continue;
    try {
      const Variant v = parse_variant(s.second);
      FitConfig fresh = FitConfig::for_variant(v);
      c.variant = v;
      c.G_learner.kind = fresh.G_learner.kind;
      c.R_learner.kind = fresh.R_learner.kind;
    } catch (const ConfigError&) {
      throw ConfigError("variant: unknown value '" + s.second + "' (expected base, rboost, gboost or grboost)");
    }
  }
  std::vector<Setting> rest;
  auto all_specs = [&](auto&& fn) {
    fn(c.mean_learner);
    fn(c.G_learner);
    fn(c.R_learner);
  };
  for (const auto& s : settings) {
    const std::string& k = s.first;
    if (k == "variant") continue;
    if (k == "max_iterations") c.max_iterations = to_int<int>(s);
    else if (k == "nu") c.nu_mu = c.nu_G = c.nu_R = to_real(s);
    else if (k == "nu_mu") c.nu_mu = to_real(s);
    else if (k == "nu_G") c.nu_G = to_real(s);
    else if (k == "nu_R") c.nu_R = to_real(s);
    else if (k == "group_fraction") c.group_fraction = to_real(s);
    else if (k == "feature_fraction") c.feature_fraction = to_real(s);
    else if (k == "lookback") c.lookback = to_int<int>(s);
    else if (k == "tolerance") c.tolerance = to_real(s);
    else if (k == "early_stopping") c.early_stopping = to_bool(s);
    else if (k == "eval_fraction") c.eval_fraction = to_real(s);
    else if (k == "seed") c.seed = to_int<std::uint64_t>(s);
    else if (k == "verbose") c.verbose = to_bool(s);
    else if (k == "mean_learner") c.mean_learner.kind = to_kind(s);
    else if (k == "G_learner") c.G_learner.kind = to_kind(s);
    else if (k == "R_learner") c.R_learner.kind = to_kind(s);
    else if (k == "tree_max_depth") { const int v = to_int<int>(s); all_specs([&](LearnerSpec& l) { l.tree_max_depth = v; }); }
    else if (k == "tree_min_parent") { const int v = to_int<int>(s); all_specs([&](LearnerSpec& l) { l.tree_min_parent = v; }); }
    else if (k == "tree_min_child") { const int v = to_int<int>(s); all_specs([&](LearnerSpec& l) { l.tree_min_child = v; }); }
    else if (k == "ridge_epsilon") { const double v = to_real(s); all_specs([&](LearnerSpec& l) { l.ridge_epsilon = v; }); }
    else rest.push_back(s);
  }
  return rest;
}

RunConfig parse_run_config(std::istream& in, const std::string& source) {
  RunConfig rc;
  const auto rest = apply_fit_settings(rc.fit, read_settings(in, source));
  for (const auto& s : rest) {
    const std::string& k = s.first;
    if (k == "group_column") rc.schema.group_column = s.second;
    else if (k == "response_column") rc.schema.response_column = s.second;
    else if (k == "feature_columns") rc.schema.feature_columns = split_list(s.second);
    else if (k == "z_columns") rc.schema.z_columns = split_list(s.second);
    else if (k == "categorical_columns") rc.schema.categorical_columns = split_list(s.second);
    else if (k == "treatment_column") rc.schema.treatment_column = s.second;
    else if (k == "force_include") rc.force_include = split_list(s.second);
    else if (k == "model_path") rc.model_path = s.second;
    else throw ConfigError(source + ": unknown key '" + k + "'");
  }
  if (rc.schema.group_column.empty()) throw ConfigError(source + ": group_column is required");
  if (rc.schema.response_column.empty()) throw ConfigError(source + ": response_column is required");
  if (rc.schema.feature_columns.empty()) throw ConfigError(source + ": feature_columns is required");
  rc.fit.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_run_config(in, path);
}

void resolve_force_include(RunConfig& config, const GroupedDataset& data) {
  config.fit.force_include_features.clear();
  for (const auto& name : config.force_include) {
    const auto idx = data.feature_index(name);
    if (!idx) throw ConfigError("force_include names unknown feature '" + name + "'");
    config.fit.force_include_features.push_back(*idx);
  }
  config.fit.validate();
}

}  // namespace gbmixed
