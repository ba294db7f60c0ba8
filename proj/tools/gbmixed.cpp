// Command-line front end: fit, predict, simulate, diagnose.

#include "gbmixed/boosting.hpp"
#include "gbmixed/data.hpp"
#include "gbmixed/diagnostics.hpp"
#include "gbmixed/error.hpp"
#include "gbmixed/inference.hpp"
#include "gbmixed/model_io.hpp"
#include "gbmixed/run_config.hpp"
#include "gbmixed/simulation.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace {

using namespace gbmixed;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Writes to a file when a path is given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw DataError("cannot open '" + path + "' for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

ColumnSchema schema_from_model(const FittedModel& m, const std::string& group_col) {
  ColumnSchema s;
  s.group_column = group_col.empty() ? m.group_column : group_col;
  s.response_column = m.response_column;
  s.feature_columns = m.feature_names;
  if (!(m.z_names.size() == 1 && m.z_names[0] == "(intercept)")) s.z_columns = m.z_names;
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
    if (j < m.categorical.size() && m.categorical[j]) s.categorical_columns.push_back(m.feature_names[j]);
  }
  if (m.treatment_column) s.treatment_column = m.feature_names[static_cast<std::size_t>(*m.treatment_column)];
  return s;
}

struct FitArgs {
  std::string config;
  std::string data;
  std::string out;
  bool verbose = false;
};

int cmd_fit(const FitArgs& a) {
  const auto t0 = Clock::now();
  RunConfig rc = load_run_config(a.config);
  if (a.verbose) rc.fit.verbose = true;
  const GroupedDataset data = load_csv(a.data, rc.schema);
  resolve_force_include(rc, data);
  FittedModel model = fit(data, rc.fit);
  model.group_column = rc.schema.group_column;
  model.response_column = rc.schema.response_column;
  const std::string path = a.out.empty() ? rc.model_path : a.out;
  save_model(model, path);
  std::printf("model=%s\n", path.c_str());
  std::printf("iterations_run=%d\n", model.iterations_run);
  std::printf("best_iteration=%d\n", model.best_iteration);
  std::printf("eval_loglik=%.10g\n", model.history[static_cast<std::size_t>(model.best_iteration)]);
  std::printf("final_eval_loglik=%.10g\n", model.history.back());
  std::printf("wall_seconds=%.3f\n", seconds_since(t0));
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out;
  std::string group_col;
  double alpha = 0.1;
  bool cate = false;
  bool reduced = false;
};

int cmd_predict(const PredictArgs& a) {
  const FittedModel model = load_model(a.model);
  const GroupedDataset data = load_csv(a.data, schema_from_model(model, a.group_col), ResponsePolicy::kOptional);
  if (data.num_features() != model.num_features()) throw SchemaError("data feature count does not match the model");
  if (a.cate && !model.treatment_column) throw ConfigError("--cate requires a model fitted with a treatment column");
  const double z = normal_quantile(1.0 - a.alpha / 2.0);

  Output out(a.out);
  auto& os = out.stream();
  os << "group_id,mu_marginal,mu_conditional,var_total,lo,hi";
  if (a.cate) os << ",cate,ite_var,cate_lo,cate_hi";
  os << '\n';
  std::optional<Eigen::Index> slope;
  if (a.cate) {
    const std::string& tname = model.feature_names[static_cast<std::size_t>(*model.treatment_column)];
    for (std::size_t k = 0; k < model.z_names.size(); ++k) {
      if (model.z_names[k] == tname) slope = static_cast<Eigen::Index>(k);
    }
  }
  for (const auto& g : data.groups) {
    PredictionRequest req;
    req.X = g.X;
    req.Z = g.Z;
    req.group_id = g.id;
    req.alpha = a.alpha;
    req.reduced_new_group_variance = a.reduced;
    const PredictionResult r = predict(model, req);
    Eigen::VectorXd tau, iv;
    if (a.cate) {
      const Eigen::VectorXd xt = r.known_group ? model.find_group(g.id)->x_tilde : g.x_tilde;
      tau = cate(model, g.X, *model.treatment_column);
      iv = ite_variance(model, g.X, g.Z, xt, *model.treatment_column, slope);
    }
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      os << g.id << ',' << format_double(r.mu_marginal(i)) << ',' << format_double(r.mu_conditional(i)) << ','
         << format_double(r.var_total(i)) << ',' << format_double(r.interval_lo(i)) << ','
         << format_double(r.interval_hi(i));
      if (a.cate) {
        const double half = z * std::sqrt(iv(i));
        os << ',' << format_double(tau(i)) << ',' << format_double(iv(i)) << ',' << format_double(tau(i) - half)
           << ',' << format_double(tau(i) + half);
      }
      os << '\n';
    }
  }
  return 0;
}

struct SimulateArgs {
  std::string scenario;
  int reps = 1;
  int n = 10000;
  int p = 0;
  std::uint64_t seed = 1;
  std::string config;
  std::vector<std::string> set;
  std::string out;
  std::string data_out;
};

int cmd_simulate(const SimulateArgs& a) {
  const auto t0 = Clock::now();
  SimulationScenario sc = SimulationScenario::preset(a.scenario);
  sc.n = a.n;
  sc.seed = a.seed;
  if (a.p > 0) sc.p = a.p;
  sc.validate();
  FitConfig cfg = sc.default_config();

  std::vector<Setting> overrides;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config file '" + a.config + "'");
    overrides = read_settings(in, a.config);
  }
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
  }
  const auto rest = apply_fit_settings(cfg, overrides);
  if (!rest.empty()) throw ConfigError("unknown simulate setting '" + rest.front().first + "'");
  cfg.validate();

  if (!a.data_out.empty()) {
    const SimulatedData sim = generate(sc);
    write_csv(sim.data, a.data_out + "_data.csv");
    std::ofstream truth(a.data_out + "_truth.csv", std::ios::binary);
    if (!truth) throw DataError("cannot open '" + a.data_out + "_truth.csv' for writing");
    write_truth_csv(sim.data, sim.truth, truth);
  }

  const ReplicationReport report = run_replications(sc, cfg, a.reps);
  Output out(a.out);
  write_report_csv(report, out.stream());
  std::fprintf(stderr, "wall_seconds=%.3f\n", seconds_since(t0));
  return 0;
}

struct DiagnoseArgs {
  std::string model;
  std::string data;
  std::string component = "mean";
  std::string feature;
  std::string entry = "0,0";
  bool importance = false;
  int grid_points = 25;
  std::string out;
};

int cmd_diagnose(const DiagnoseArgs& a) {
  const Component component = parse_component(a.component);
  if (!a.importance && a.feature.empty()) throw ConfigError("diagnose needs --importance or --feature");
  const FittedModel model = load_model(a.model);
  Output out(a.out);
  if (a.importance) write_importance_csv(variable_importance(model, component), out.stream());
  if (a.feature.empty()) return 0;

  const auto it = std::find(model.feature_names.begin(), model.feature_names.end(), a.feature);
  if (it == model.feature_names.end()) throw ConfigError("unknown feature '" + a.feature + "'");
  std::pair<Eigen::Index, Eigen::Index> entry{0, 0};
  {
    char comma = 0;
    std::istringstream es(a.entry);
    if (!(es >> entry.first >> comma >> entry.second) || comma != ',') {
      throw ConfigError("--entry expects row,col");
    }
  }
  const GroupedDataset data = load_csv(a.data, schema_from_model(model, ""), ResponsePolicy::kOptional);
  const auto f = static_cast<Eigen::Index>(it - model.feature_names.begin());
  const auto grid = default_grid(background_column(data, component, f), a.grid_points);
  write_pdp_csv(partial_dependence(model, component, a.feature, grid, data, entry), out.stream());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient boosted mixed models for clustered data"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model from a config file and a CSV");
  fit_cmd->add_option("config", fa.config, "Run configuration (key = value)")->required();
  fit_cmd->add_option("data", fa.data, "Training CSV")->required();
  fit_cmd->add_option("-o,--out", fa.out, "Model file (default: model_path from the config)");
  fit_cmd->add_flag("-v,--verbose", fa.verbose, "Per-iteration progress on stderr");

  PredictArgs pa;
  auto* pred_cmd = app.add_subcommand("predict", "Predict from a saved model");
  pred_cmd->add_option("model", pa.model, "Model file")->required();
  pred_cmd->add_option("data", pa.data, "CSV to predict")->required();
  pred_cmd->add_option("--alpha", pa.alpha, "Interval significance level")->check(CLI::Range(1e-12, 1.0 - 1e-12));
  pred_cmd->add_flag("--cate", pa.cate, "Add treatment-effect columns");
  pred_cmd->add_option("--group-col", pa.group_col, "Group column name (default: as fitted)");
  pred_cmd->add_flag("--reduced-new-group-variance", pa.reduced, "Use R(x) alone for unseen groups");
  pred_cmd->add_option("-o,--out", pa.out, "Output CSV (default: stdout)");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation scenario");
  sim_cmd->add_option("scenario", sa.scenario, "expA, expB, expC or expC-sd")->required();
  sim_cmd->add_option("--reps", sa.reps, "Replications")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--n", sa.n, "Observations per replication");
  sim_cmd->add_option("--p", sa.p, "Covariates (default: scenario preset)");
  sim_cmd->add_option("--seed", sa.seed, "Base seed");
  sim_cmd->add_option("--config", sa.config, "File of fit overrides (key = value)");
  sim_cmd->add_option("--set", sa.set, "Fit override key=value (repeatable)");
  sim_cmd->add_option("-o,--out", sa.out, "Report CSV (default: stdout)");
  sim_cmd->add_option("--data-out", sa.data_out, "Write replication-1 data and truth to <prefix>_data.csv/_truth.csv");

  DiagnoseArgs da;
  auto* diag_cmd = app.add_subcommand("diagnose", "Variable importance and partial dependence");
  diag_cmd->add_option("model", da.model, "Model file")->required();
  diag_cmd->add_option("data", da.data, "Background CSV")->required();
  diag_cmd->add_option("--component", da.component, "mean, G or R");
  diag_cmd->add_option("--feature", da.feature, "Feature for partial dependence");
  diag_cmd->add_option("--entry", da.entry, "G entry row,col");
  diag_cmd->add_flag("--importance", da.importance, "Emit feature,score importance");
  diag_cmd->add_option("--grid-points", da.grid_points, "Partial dependence grid size")->check(CLI::PositiveNumber);
  diag_cmd->add_option("-o,--out", da.out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (*fit_cmd) return cmd_fit(fa);
    if (*pred_cmd) return cmd_predict(pa);
    if (*sim_cmd) return cmd_simulate(sa);
    if (*diag_cmd) return cmd_diagnose(da);
  } catch (const Error& e) {
    std::fprintf(stderr, "gbmixed: error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "gbmixed: error: internal: %s\n", e.what());
    return static_cast<int>(ErrorKind::kNumerical);
  }
  return static_cast<int>(ErrorKind::kUsage);
}
