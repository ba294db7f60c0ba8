#include "gbmixed/simulation.hpp"

#include "gbmixed/error.hpp"
#include "gbmixed/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace gbmixed {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-20.0 * (x - 1.0 / 3.0))); }

SimulationScenario SimulationScenario::preset(const std::string& name) {
  SimulationScenario s;
  s.name = name;
  if (name == "expA") {
    s.kind = ScenarioKind::kExpA;
    s.p = 300;
  } else if (name == "expB") {
    s.kind = ScenarioKind::kExpB;
  } else if (name == "expC") {
    s.kind = ScenarioKind::kExpC;
  } else if (name == "expC-sd") {
    s.kind = ScenarioKind::kExpCTwoGroup;
  } else {
    throw ConfigError("unknown scenario '" + name + "' (expected expA, expB, expC or expC-sd)");
  }
  return s;
}

void SimulationScenario::validate() const {
  if (n < 4 || n % 2 != 0) throw ConfigError("scenario n must be even and >= 4");
  const int min_p = kind == ScenarioKind::kExpA ? 7 : 5;
  if (p < min_p) throw ConfigError("scenario " + name + " needs at least " + std::to_string(min_p) + " covariates");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
}

double SimulationScenario::mean_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (kind == ScenarioKind::kExpA) {
    return 0.5 * std::sin(x(0)) + 0.1 * x(1) * x(1) + 0.1 * x(2) * x(3) + 0.3 * std::log(x(3) + 1.0) * x(4) +
           x(0) * x(4);
  }
  return 2.0 * x(0) + 1.0;
}

double SimulationScenario::tau_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (kind == ScenarioKind::kExpA) return sigmoid(x(5)) * sigmoid(x(6));
  return sigmoid(x(0)) * sigmoid(x(1));
}

double SimulationScenario::residual_fn(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  switch (kind) {
    case ScenarioKind::kExpA: return 0.47;
    case ScenarioKind::kExpB: return 0.3 + 0.4 * std::abs(x(1) - 0.5) + (x(4) >= 0.5 ? 0.4 : 0.0);
    case ScenarioKind::kExpC:
    case ScenarioKind::kExpCTwoGroup: return 0.4 + 0.4 * std::abs(x(4) - 0.5);
  }
  return 1.0;
}

double SimulationScenario::group_variance(const Eigen::Ref<const Eigen::RowVectorXd>& x_tilde) const {
  switch (kind) {
    case ScenarioKind::kExpA: return 2.25;
    case ScenarioKind::kExpB: return 0.25;
    case ScenarioKind::kExpC: return 0.5 + 1.5 * std::abs(x_tilde(2) - 0.5);
    case ScenarioKind::kExpCTwoGroup: return x_tilde(2) < 0.5 ? 0.25 : 4.0;
  }
  return 1.0;
}

bool SimulationScenario::heteroscedastic_R() const { return kind != ScenarioKind::kExpA; }

bool SimulationScenario::heterogeneous_G() const {
  return kind == ScenarioKind::kExpC || kind == ScenarioKind::kExpCTwoGroup;
}

FitConfig SimulationScenario::default_config() const {
  Variant v = Variant::kBase;
  double nu = 0.03;
  if (kind == ScenarioKind::kExpB) {
    v = Variant::kRBoost;
    nu = 0.01;
  } else if (heterogeneous_G()) {
    v = Variant::kGRBoost;
  }
  FitConfig c = FitConfig::for_variant(v);
  c.nu_mu = c.nu_G = c.nu_R = nu;
  c.early_stopping = kind != ScenarioKind::kExpA;
  c.seed = seed;
  return c;
}

SimulatedData generate(const SimulationScenario& s) {
  s.validate();
  Rng rng(s.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> wide(0.0, 2.0);
  std::bernoulli_distribution coin(0.5);
  std::poisson_distribution<int> counts(1.5);

  const Eigen::Index p = s.p;
  SimulatedData out;
  auto& ds = out.data;
  for (Eigen::Index j = 0; j < p; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
  ds.feature_names.push_back("w");
  ds.z_names = {"(intercept)"};
  ds.categorical.assign(static_cast<std::size_t>(p + 1), false);
  ds.treatment_column = p;
  ds.q = 1;
  const AggregationRule rule{ds.categorical};

  const int pairs = s.n / 2;
  ds.groups.reserve(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) {
    GroupBlock g;
    g.id = std::to_string(i + 1);
    g.X.resize(2, p + 1);
    for (int r = 0; r < 2; ++r) {
      for (Eigen::Index j = 0; j < p; ++j) {
        double v = 0.0;
        if (s.kind == ScenarioKind::kExpA) {
          switch (j) {
            case 1: v = wide(rng); break;
            case 2: v = coin(rng) ? 1.0 : 0.0; break;
            case 3: v = static_cast<double>(counts(rng)); break;
            default: v = normal(rng); break;
          }
        } else {
          v = unit(rng);
        }
        g.X(r, j) = v;
      }
    }
    if (s.heterogeneous_G()) {
      // x3 is a pair-level covariate so that its group summary is the generating value.
      g.X.col(2).setConstant(unit(rng));
    }
    const int treated = coin(rng) ? 1 : 0;
    g.X(treated, p) = 1.0;
    g.X(1 - treated, p) = 0.0;
    g.Z = Eigen::MatrixXd::Ones(2, 1);
    g.x_tilde = summarize_rows(g.X, rule);

    TruthBlock t;
    t.G = s.group_variance(g.x_tilde.head(p).transpose());
    const double alpha = std::sqrt(t.G) * normal(rng);
    t.tau.resize(2);
    t.y0.resize(2);
    t.y1.resize(2);
    t.R.resize(2);
    g.y.resize(2);
    for (int r = 0; r < 2; ++r) {
      const Eigen::RowVectorXd x = g.X.row(r).head(p);
      const double m = s.mean_fn(x);
      t.tau(r) = s.tau_fn(x);
      t.R(r) = s.residual_fn(x);
      const double sd = std::sqrt(t.R(r));
      const double e0 = sd * normal(rng);
      const double e1 = sd * normal(rng);
      t.y0(r) = alpha + m + e0;
      t.y1(r) = alpha + m + t.tau(r) + e1;
      g.y(r) = r == treated ? t.y1(r) : t.y0(r);
    }
    out.truth.emplace(g.id, std::move(t));
    ds.groups.push_back(std::move(g));
  }
  canonicalize(ds);
  ds.validate();
  return out;
}

namespace {

const TruthBlock& truth_of(const GroundTruth& truth, const std::string& id) {
  const auto it = truth.find(id);
  if (it == truth.end()) throw DataError("no ground truth for group '" + id + "'");
  return it->second;
}

}  // namespace

ReplicationRow score_predictions(const GroupedDataset& test, const GroundTruth& truth,
                                 const Eigen::VectorXd& tau_hat, const Eigen::VectorXd& ite_var, double alpha) {
  const auto n = static_cast<Eigen::Index>(test.num_observations());
  if (n == 0) throw DataError("test set is empty");
  if (tau_hat.size() != n || ite_var.size() != n) throw ShapeError("prediction vectors do not match the test set");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  double se = 0.0;
  Eigen::Index covered = 0;
  Eigen::Index off = 0;
  for (const auto& g : test.groups) {
    const TruthBlock& t = truth_of(truth, g.id);
    for (Eigen::Index r = 0; r < g.size(); ++r, ++off) {
      const double d = tau_hat(off) - t.tau(r);
      se += d * d;
      const double realized = t.y1(r) - t.y0(r);
      if (std::abs(realized - tau_hat(off)) <= z * std::sqrt(ite_var(off))) ++covered;
    }
  }
  ReplicationRow row;
  row.cate_mse = se / static_cast<double>(n);
  row.coverage_pct = 100.0 * static_cast<double>(covered) / static_cast<double>(n);
  return row;
}

ReplicationRow score(const FittedModel& model, const GroupedDataset& test, const GroundTruth& truth, double alpha) {
  if (!model.treatment_column) throw ConfigError("scoring requires a treatment column");
  const Eigen::Index t = *model.treatment_column;
  const auto n = static_cast<Eigen::Index>(test.num_observations());
  Eigen::VectorXd tau_hat(n);
  Eigen::VectorXd ite_var(n);
  Eigen::Index off = 0;
  for (const auto& g : test.groups) {
    tau_hat.segment(off, g.size()) = cate(model, g.X, t);
    ite_var.segment(off, g.size()) = ite_variance(model, g.X, g.Z, g.x_tilde, t);
    off += g.size();
  }
  ReplicationRow row = score_predictions(test, truth, tau_hat, ite_var, alpha);

  if (model.config.R_learner.kind != LearnerKind::kConstant) {
    double se = 0.0;
    for (const auto& g : test.groups) se += (model.R_at(g.X) - truth_of(truth, g.id).R).squaredNorm();
    row.r_mse = se / static_cast<double>(n);
  }
  if (model.config.G_learner.kind != LearnerKind::kConstant) {
    double se = 0.0;
    for (const auto& g : test.groups) {
      const double d = model.G_at(g.x_tilde)(0, 0) - truth_of(truth, g.id).G;
      se += d * d;
    }
    row.g_mse = se / static_cast<double>(test.num_groups());
  }
  return row;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return a;
}

ReplicationReport summarize(const std::string& method, std::vector<ReplicationRow> rows) {
  std::sort(rows.begin(), rows.end(),
            [](const ReplicationRow& a, const ReplicationRow& b) { return a.replication < b.replication; });
  ReplicationReport rep;
  rep.method = method;
  std::vector<double> cate_v, cov_v, r_v, g_v;
  bool all_r = !rows.empty();
  bool all_g = !rows.empty();
  for (const auto& r : rows) {
    cate_v.push_back(r.cate_mse);
    cov_v.push_back(r.coverage_pct);
    if (r.r_mse) r_v.push_back(*r.r_mse); else all_r = false;
    if (r.g_mse) g_v.push_back(*r.g_mse); else all_g = false;
  }
  rep.cate_mse = aggregate(cate_v);
  rep.coverage_pct = aggregate(cov_v);
  if (all_r) rep.r_mse = aggregate(r_v);
  if (all_g) rep.g_mse = aggregate(g_v);
  rep.rows = std::move(rows);
  return rep;
}

std::string method_name(Variant v) {
  switch (v) {
    case Variant::kBase: return "GBMixed-Base";
    case Variant::kRBoost: return "RBoost";
    case Variant::kGBoost: return "GBoost";
    case Variant::kGRBoost: return "GRBoost";
  }
  return "GBMixed";
}

ReplicationReport run_replications(const SimulationScenario& scenario, const FitConfig& config, int reps,
                                   const FitObserver& fit_observer, const ReplicationObserver& rep_observer) {
  if (reps < 1) throw ConfigError("reps must be >= 1");
  scenario.validate();
  config.validate();
  std::vector<ReplicationRow> rows;
  for (int r = 0; r < reps; ++r) {
    try {
      SimulationScenario sc = scenario;
      sc.seed = scenario.seed + static_cast<std::uint64_t>(r);
      const SimulatedData sim = generate(sc);
      const auto [train, test] = split_by_groups(sim.data, sc.train_fraction, sc.seed);
      FitConfig cfg = config;
      cfg.seed = sc.seed;
      const Eigen::Index t = *sim.data.treatment_column;
      if (std::find(cfg.force_include_features.begin(), cfg.force_include_features.end(), t) ==
          cfg.force_include_features.end()) {
        cfg.force_include_features.push_back(t);
      }
      const auto start = std::chrono::steady_clock::now();
      const FittedModel model = fit(train, cfg, fit_observer);
      ReplicationRow row = score(model, test, sim.truth);
      row.replication = r + 1;
      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (rep_observer) rep_observer(r + 1, model, test, sim.truth);
      rows.push_back(row);
    } catch (const Error& e) {
      throw Error(e.kind(), "replication " + std::to_string(r + 1) + ": " + e.what());
    }
  }
  return summarize(method_name(config.variant), std::move(rows));
}

namespace {

std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

}  // namespace

void write_report_csv(const ReplicationReport& report, std::ostream& out) {
  out << "replication,method,cate_mse,cate_mse_sd,coverage,coverage_sd,r_mse,g_mse\n";
  for (const auto& r : report.rows) {
    out << r.replication << ',' << report.method << ',' << format_double(r.cate_mse) << ",,"
        << format_double(r.coverage_pct) << ",," << opt(r.r_mse) << ',' << opt(r.g_mse) << '\n';
  }
  out << "all," << report.method << ',' << format_double(report.cate_mse.mean) << ','
      << format_double(report.cate_mse.sd) << ',' << format_double(report.coverage_pct.mean) << ','
      << format_double(report.coverage_pct.sd) << ','
      << (report.r_mse ? format_double(report.r_mse->mean) : "") << ','
      << (report.g_mse ? format_double(report.g_mse->mean) : "") << '\n';
}

void write_truth_csv(const GroupedDataset& data, const GroundTruth& truth, std::ostream& out) {
  out << "group,tau,y0,y1,R,G\n";
  for (const auto& g : data.groups) {
    const TruthBlock& t = truth_of(truth, g.id);
    for (Eigen::Index r = 0; r < g.size(); ++r) {
      out << g.id << ',' << format_double(t.tau(r)) << ',' << format_double(t.y0(r)) << ','
          << format_double(t.y1(r)) << ',' << format_double(t.R(r)) << ',' << format_double(t.G) << '\n';
    }
  }
}

}  // namespace gbmixed
