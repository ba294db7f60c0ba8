#include "gbmixed/error.hpp"
#include "gbmixed/run_config.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace gbmixed;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in, "test.cfg");
}

const char* kBase =
    "# columns\n"
    "group_column = pair\n"
    "response_column = y\n"
    "feature_columns = x1, x2, w\n"
    "treatment_column = w\n";

}  // namespace

TEST(RunConfig, ParsesSchemaAndFit) {
  const auto rc = parse(std::string(kBase) +
                        "variant = rboost\n"
                        "max_iterations = 40   # short run\n"
                        "nu = 0.05\n"
                        "nu_R = 0.02\n"
                        "R_learner = linear\n"
                        "tree_max_depth = 2\n"
                        "force_include = w\n"
                        "early_stopping = false\n"
                        "model_path = out.gbm\n");
  EXPECT_EQ(rc.schema.group_column, "pair");
  EXPECT_EQ(rc.schema.feature_columns, (std::vector<std::string>{"x1", "x2", "w"}));
  EXPECT_EQ(rc.schema.treatment_column, std::optional<std::string>("w"));
  EXPECT_TRUE(rc.schema.intercept_only());
  EXPECT_EQ(rc.fit.variant, Variant::kRBoost);
  EXPECT_EQ(rc.fit.max_iterations, 40);
  EXPECT_DOUBLE_EQ(rc.fit.nu_mu, 0.05);
  EXPECT_DOUBLE_EQ(rc.fit.nu_G, 0.05);
  EXPECT_DOUBLE_EQ(rc.fit.nu_R, 0.02);
  EXPECT_EQ(rc.fit.R_learner.kind, LearnerKind::kLinear);
  EXPECT_EQ(rc.fit.mean_learner.tree_max_depth, 2);
  EXPECT_FALSE(rc.fit.early_stopping);
  EXPECT_EQ(rc.force_include, std::vector<std::string>{"w"});
  EXPECT_EQ(rc.model_path, "out.gbm");
}

TEST(RunConfig, RejectsBadInput) {
  auto expect_named = [](const std::string& text, const std::string& needle) {
    try {
      parse(text);
      FAIL() << text;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
      EXPECT_EQ(e.exit_code(), 2);
    }
  };
  expect_named(std::string(kBase) + "variant = lmer\n", "variant");
  expect_named(std::string(kBase) + "learning_speed = 3\n", "learning_speed");
  expect_named(std::string(kBase) + "nu = 0.1\nnu = 0.2\n", "nu");
  expect_named(std::string(kBase) + "max_iterations\n", "test.cfg:6");
  expect_named(std::string(kBase) + "max_iterations = many\n", "max_iterations");
  expect_named("group_column = g\nresponse_column = y\n", "feature_columns");
  expect_named(std::string(kBase) + "variant = base\nR_learner = tree\n", "R");
  expect_named(std::string(kBase) + "group_fraction = 0\n", "group_fraction");
}

TEST(RunConfig, ResolveForceInclude) {
  auto rc = parse(std::string(kBase) + "force_include = w\n");
  GroupedDataset ds;
  ds.feature_names = {"x1", "x2", "w"};
  resolve_force_include(rc, ds);
  EXPECT_EQ(rc.fit.force_include_features, std::vector<Eigen::Index>{2});
  rc.force_include = {"nope"};
  EXPECT_THROW(resolve_force_include(rc, ds), ConfigError);
}

TEST(ReadSettings, CommentsAndWhitespace) {
  std::istringstream in("  # only comment\n\n a = 1 \nb=two words # trailing\n");
  const auto s = read_settings(in, "x");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], Setting("a", "1"));
  EXPECT_EQ(s[1], Setting("b", "two words"));
}

TEST(ApplyFitSettings, ReturnsUnrecognized) {
  FitConfig c;
  const auto rest = apply_fit_settings(c, {{"seed", "42"}, {"group_column", "g"}, {"variant", "grboost"}});
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.variant, Variant::kGRBoost);
  ASSERT_EQ(rest.size(), 1u);
  EXPECT_EQ(rest[0].first, "group_column");
}
