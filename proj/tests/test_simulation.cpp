#include "gbmixed/error.hpp"
#include "gbmixed/simulation.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace gbmixed;

namespace {

SimulatedData small(const std::string& name, int n, std::uint64_t seed = 1) {
  auto sc = SimulationScenario::preset(name);
  sc.n = n;
  sc.seed = seed;
  if (name == "expA") sc.p = 20;
  return generate(sc);
}

Eigen::VectorXd stacked(const GroupedDataset& ds, const GroundTruth& truth,
                        Eigen::VectorXd TruthBlock::*field) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(ds.num_observations()));
  Eigen::Index off = 0;
  for (const auto& g : ds.groups) {
    const Eigen::VectorXd& v = truth.at(g.id).*field;
    out.segment(off, g.size()) = v;
    off += g.size();
  }
  return out;
}

}  // namespace

TEST(Sigmoid, Values) {
  EXPECT_DOUBLE_EQ(sigmoid(1.0 / 3.0), 0.5);
  EXPECT_NEAR(sigmoid(10.0), 1.0, 1e-9);
  EXPECT_NEAR(sigmoid(0.0), 0.00127102, 1e-7);
  EXPECT_NEAR(sigmoid(0.0), 1.0 / (1.0 + std::exp(20.0 / 3.0)), 1e-15);
}

TEST(Scenario, ComponentFunctions) {
  const auto b = SimulationScenario::preset("expB");
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Constant(30, 0.2);
  x(1) = 0.5;
  x(4) = 0.3;
  EXPECT_DOUBLE_EQ(b.residual_fn(x), 0.3);
  x(4) = 0.5;
  EXPECT_NEAR(b.residual_fn(x), 0.7, 1e-15);

  const auto c = SimulationScenario::preset("expC");
  Eigen::RowVectorXd xt = Eigen::RowVectorXd::Zero(30);
  xt(2) = 0.5;
  EXPECT_DOUBLE_EQ(c.group_variance(xt), 0.5);
  xt(2) = 0.0;
  EXPECT_DOUBLE_EQ(c.group_variance(xt), 1.25);

  const auto sd = SimulationScenario::preset("expC-sd");
  xt(2) = 0.2;
  EXPECT_DOUBLE_EQ(sd.group_variance(xt), 0.25);
  xt(2) = 0.7;
  EXPECT_DOUBLE_EQ(sd.group_variance(xt), 4.0);

  const auto a = SimulationScenario::preset("expA");
  EXPECT_EQ(a.p, 300);
  Eigen::RowVectorXd xa = Eigen::RowVectorXd::Zero(300);
  xa(5) = xa(6) = 1.0;
  EXPECT_NEAR(a.tau_fn(xa), sigmoid(1.0) * sigmoid(1.0), 1e-15);
  EXPECT_NEAR(a.tau_fn(xa), 0.9999968, 1e-7);
  EXPECT_DOUBLE_EQ(a.residual_fn(xa), 0.47);
  EXPECT_DOUBLE_EQ(a.group_variance(xa), 2.25);

  EXPECT_THROW(SimulationScenario::preset("expD"), ConfigError);
  auto odd = b;
  odd.n = 11;
  EXPECT_THROW(odd.validate(), ConfigError);
}

TEST(Generate, MatchedPairs) {
  for (const char* name : {"expA", "expB", "expC", "expC-sd"}) {
    const auto sim = small(name, 400);
    const auto& ds = sim.data;
    ASSERT_EQ(ds.num_groups(), 200u);
    const Eigen::Index t = *ds.treatment_column;
    EXPECT_EQ(ds.feature_names[static_cast<std::size_t>(t)], "w");
    EXPECT_EQ(t, ds.num_features() - 1);
    int treated_first = 0;
    for (const auto& g : ds.groups) {
      ASSERT_EQ(g.size(), 2);
      EXPECT_DOUBLE_EQ(g.X(0, t) + g.X(1, t), 1.0);
      treated_first += g.X(0, t) == 1.0 ? 1 : 0;
      const auto& truth = sim.truth.at(g.id);
      for (int r = 0; r < 2; ++r) {
        const double observed = g.X(r, t) == 1.0 ? truth.y1(r) : truth.y0(r);
        EXPECT_EQ(g.y(r), observed);
      }
      if (std::string(name).rfind("expC", 0) == 0) EXPECT_EQ(g.X(0, 2), g.X(1, 2));
    }
    EXPECT_GT(treated_first, 60);
    EXPECT_LT(treated_first, 140);
  }
}

TEST(Generate, RandomInterceptVarianceMatches) {
  for (const char* name : {"expA", "expB", "expC"}) {
    const auto sim = small(name, 40000, 3);
    auto sc = SimulationScenario::preset(name);
    if (std::string(name) == "expA") sc.p = 20;
    double cov = 0.0, mean_G = 0.0;
    for (const auto& g : sim.data.groups) {
      const auto& t = sim.truth.at(g.id);
      const double a = t.y0(0) - sc.mean_fn(g.X.row(0).head(sc.p));
      const double b = t.y0(1) - sc.mean_fn(g.X.row(1).head(sc.p));
      cov += a * b;
      mean_G += t.G;
    }
    const auto C = static_cast<double>(sim.data.num_groups());
    EXPECT_NEAR(cov / C, mean_G / C, 0.05 * mean_G / C) << name;
  }
}

TEST(Generate, PotentialOutcomeResidualsPerArm) {
  const auto sim = small("expB", 40000, 4);
  const Eigen::VectorXd tau = stacked(sim.data, sim.truth, &TruthBlock::tau);
  const Eigen::VectorXd d = stacked(sim.data, sim.truth, &TruthBlock::y1) - stacked(sim.data, sim.truth, &TruthBlock::y0) - tau;
  const Eigen::VectorXd R = stacked(sim.data, sim.truth, &TruthBlock::R);
  EXPECT_NEAR(d.squaredNorm() / static_cast<double>(d.size()), 2.0 * R.mean(), 0.03 * 2.0 * R.mean());
}

TEST(Generate, Deterministic) {
  const auto a = small("expC", 200, 9);
  const auto b = small("expC", 200, 9);
  for (std::size_t i = 0; i < a.data.num_groups(); ++i) {
    EXPECT_TRUE(a.data.groups[i].X == b.data.groups[i].X);
    EXPECT_TRUE(a.data.groups[i].y == b.data.groups[i].y);
  }
  std::ostringstream ta, tb;
  write_truth_csv(a.data, a.truth, ta);
  write_truth_csv(b.data, b.truth, tb);
  EXPECT_EQ(ta.str(), tb.str());
  EXPECT_EQ(ta.str().substr(0, ta.str().find('\n')), "group,tau,y0,y1,R,G");
}

TEST(TauSecondMoment, MonteCarlo) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u;
  double s = 0.0;
  const int draws = 1000000;
  for (int k = 0; k < draws; ++k) {
    const double t = sigmoid(u(rng)) * sigmoid(u(rng));
    s += t * t;
  }
  EXPECT_NEAR(s / draws, 0.3802, 1e-3);
}

TEST(Score, ZeroEffectOnExperimentB) {
  const auto sim = small("expB", 10000, 5);
  const auto n = static_cast<Eigen::Index>(sim.data.num_observations());
  const Eigen::VectorXd tau = stacked(sim.data, sim.truth, &TruthBlock::tau);
  const auto row = score_predictions(sim.data, sim.truth, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n), 0.1);
  EXPECT_NEAR(row.cate_mse, tau.squaredNorm() / static_cast<double>(n), 1e-12);
  EXPECT_NEAR(row.cate_mse, 0.3802, 0.015);
}

TEST(Score, OracleModel) {
  const auto sim = small("expB", 20000, 6);
  const Eigen::VectorXd tau = stacked(sim.data, sim.truth, &TruthBlock::tau);
  const Eigen::VectorXd R = stacked(sim.data, sim.truth, &TruthBlock::R);
  const auto row = score_predictions(sim.data, sim.truth, tau, 2.0 * R, 0.1);
  EXPECT_EQ(row.cate_mse, 0.0);
  EXPECT_NEAR(row.coverage_pct, 90.0, 1.5);
  EXPECT_THROW(score_predictions(sim.data, sim.truth, tau.head(3), R, 0.1), ShapeError);
}

TEST(Aggregate, MeanAndSampleSd) {
  const auto a = aggregate({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  EXPECT_DOUBLE_EQ(a.sd, 1.0);
  const auto one = aggregate({0.5});
  EXPECT_DOUBLE_EQ(one.mean, 0.5);
  EXPECT_DOUBLE_EQ(one.sd, 0.0);
}

TEST(RunReplications, SingleRepAndDeterminism) {
  auto sc = SimulationScenario::preset("expB");
  sc.n = 800;
  sc.p = 8;
  FitConfig c = sc.default_config();
  c.max_iterations = 15;
  const auto one = run_replications(sc, c, 1);
  ASSERT_EQ(one.rows.size(), 1u);
  EXPECT_EQ(one.method, "RBoost");
  EXPECT_DOUBLE_EQ(one.cate_mse.mean, one.rows[0].cate_mse);
  EXPECT_DOUBLE_EQ(one.coverage_pct.mean, one.rows[0].coverage_pct);
  ASSERT_TRUE(one.r_mse.has_value());
  EXPECT_FALSE(one.g_mse.has_value());

  std::ostringstream a, b;
  write_report_csv(run_replications(sc, c, 2), a);
  write_report_csv(run_replications(sc, c, 2), b);
  EXPECT_EQ(a.str(), b.str());
  std::istringstream lines(a.str());
  std::string header, r1, r2, all;
  std::getline(lines, header);
  std::getline(lines, r1);
  std::getline(lines, r2);
  std::getline(lines, all);
  EXPECT_EQ(header, "replication,method,cate_mse,cate_mse_sd,coverage,coverage_sd,r_mse,g_mse");
  EXPECT_EQ(r1.substr(0, 9), "1,RBoost,");
  EXPECT_EQ(all.substr(0, 11), "all,RBoost,");
  EXPECT_EQ(all.back(), ',');

  EXPECT_THROW(run_replications(sc, c, 0), ConfigError);
}

TEST(RunReplications, ErrorsNameReplication) {
  auto sc = SimulationScenario::preset("expC");
  sc.n = 8;
  sc.p = 5;
  FitConfig c = sc.default_config();
  c.max_iterations = 2;
  c.group_fraction = 0.1;
  try {
    run_replications(sc, c, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("replication 1"), std::string::npos);
  }
}
