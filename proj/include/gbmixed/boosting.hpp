#pragma once

#include "gbmixed/data.hpp"
#include "gbmixed/learners.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace gbmixed {

enum class Variant { kBase, kRBoost, kGBoost, kGRBoost };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

/// Lower bound applied to the diagonal of every evaluated Cholesky factor.
inline constexpr double kCholeskyDiagonalFloor = 1e-6;

struct FitConfig {
  int max_iterations = 500;
  double nu_mu = 0.03;
  double nu_G = 0.03;
  double nu_R = 0.03;
  double group_fraction = 0.2;    // pi
  double feature_fraction = 0.7;  // xi
  int lookback = 25;              // k
  double tolerance = 1e-3;        // delta
  bool early_stopping = true;
  Variant variant = Variant::kBase;
  LearnerSpec mean_learner{LearnerKind::kTree};
  LearnerSpec G_learner{LearnerKind::kConstant};
  LearnerSpec R_learner{LearnerKind::kConstant};
  double eval_fraction = 0.25;
  std::uint64_t seed = 1;
  std::vector<Eigen::Index> force_include_features;
  bool verbose = false;
  /// When false only the mean ensemble is boosted; variance components stay at initialization.
  bool boost_variance = true;

  /// Default configuration with tree learners on the components the variant boosts.
  static FitConfig for_variant(Variant v);
  void validate() const;
};

/// Additive ensemble: initial + rate * sum_m h_m(x).
struct Ensemble {
  double initial = 0.0;
  double rate = 0.0;
  std::vector<FittedLearner> learners;

  double predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
  /// Adds rate * h(X) to `current`, summing in the same order as predict().
  void accumulate(const FittedLearner& h, const Eigen::MatrixXd& X, Eigen::VectorXd& current) const;
  void truncate(std::size_t iterations);
};

/// Posterior random effect of one training group, stored so prediction does not need the data.
struct GroupEffect {
  std::string id;
  Eigen::VectorXd x_tilde;
  Eigen::VectorXd u_hat;
};

struct FittedModel {
  Ensemble mean;
  std::vector<Ensemble> L_entries;  // lower triangle, row by row: (0,0), (1,0), (1,1), ...
  Ensemble log_R;
  FitConfig config;
  std::vector<double> history;  // evaluation log-likelihood, index 0 = initialization
  int best_iteration = 0;
  int iterations_run = 0;

  Eigen::Index q = 1;
  std::vector<std::string> feature_names;
  std::vector<std::string> z_names;
  std::vector<bool> categorical;
  std::optional<Eigen::Index> treatment_column;
  std::string group_column = "group";
  std::string response_column = "y";
  std::vector<GroupEffect> group_effects;

  Eigen::Index num_features() const { return static_cast<Eigen::Index>(feature_names.size()); }

  Eigen::VectorXd mean_at(const Eigen::MatrixXd& X) const;
  Eigen::VectorXd R_at(const Eigen::MatrixXd& X) const;
  /// Cholesky factor at a group-level covariate vector, diagonal floored.
  Eigen::MatrixXd L_at(const Eigen::VectorXd& x_tilde) const;
  Eigen::MatrixXd G_at(const Eigen::VectorXd& x_tilde) const;

  const GroupEffect* find_group(const std::string& id) const;
};

/// Pair (a, b) with b <= a for lower-triangular entry index e.
std::pair<Eigen::Index, Eigen::Index> lower_entry(Eigen::Index e);
Eigen::Index lower_entry_count(Eigen::Index q);
/// Assembles a lower-triangular factor from entry values, flooring the diagonal.
Eigen::MatrixXd assemble_cholesky(const Eigen::Ref<const Eigen::RowVectorXd>& entries, Eigen::Index q);

using Rng = std::mt19937_64;

/// Iteration-0 state: grand mean, between/within variance split, constant ensembles.
FittedModel initialize(const GroupedDataset& train, const FitConfig& config);

struct IterationSample {
  std::vector<std::size_t> groups;     // sorted
  std::vector<Eigen::Index> features;  // sorted, includes forced features
};

IterationSample sample_iteration(std::size_t C, Eigen::Index p, const FitConfig& config, Rng& rng);

/// |history[m] - history[m-k]| < delta with at least k+1 entries.
bool check_convergence(const std::vector<double>& history, int k, double delta);

/// Evaluated components for every row of a dataset.
struct ComponentSnapshot {
  Eigen::VectorXd mu;         // per observation, stacked in group order
  Eigen::VectorXd log_R;      // per observation
  Eigen::MatrixXd L_entries;  // groups x lower entry count, before flooring

  Eigen::VectorXd R() const { return log_R.array().exp().matrix(); }
};

/// Called after every boosting iteration with the evaluated training and evaluation components.
using FitObserver = std::function<void(int iteration, const FittedModel& model, const ComponentSnapshot& train,
                                       const ComponentSnapshot& eval)>;

/// Runs the boosting loop on fixed training and evaluation sets.
class Booster {
 public:
  Booster(const GroupedDataset& train, const GroupedDataset& eval, const FitConfig& config);
  /// Resumes from an existing model state with the given random stream.
  Booster(const GroupedDataset& train, const GroupedDataset& eval, const FitConfig& config, FittedModel start,
          Rng rng);

  /// One iteration of sampling, gradients, learner fits and shrunken updates.
  void step();
  bool converged() const;

  const FittedModel& model() const { return model_; }
  FittedModel& model() { return model_; }
  const ComponentSnapshot& train_components() const { return train_; }
  const ComponentSnapshot& eval_components() const { return eval_; }
  double eval_loglik() const;
  const Rng& rng() const { return rng_; }

 private:
  double loglik(const GroupedDataset& data, const ComponentSnapshot& comp) const;
  void prepare();

  const GroupedDataset& train_data_;
  const GroupedDataset& eval_data_;
  FitConfig config_;
  FittedModel model_;
  Rng rng_;
  Eigen::MatrixXd train_X_, eval_X_;
  Eigen::MatrixXd train_xt_, eval_xt_;
  std::vector<Eigen::Index> train_offsets_, eval_offsets_;
  ComponentSnapshot train_, eval_;
};

FittedModel boost_step(FittedModel model, const GroupedDataset& train, const GroupedDataset& eval,
                       const FitConfig& config, Rng& rng);

/// Full fit: held-out evaluation groups, boosting until M or convergence,
/// truncation at the best evaluation log-likelihood, stored BLUPs for every group.
FittedModel fit(const GroupedDataset& train, const FitConfig& config, const FitObserver& observer = {});

/// Training log-likelihood of a dataset under a fitted model.
double dataset_loglik(const FittedModel& model, const GroupedDataset& data);

/// Copies names and dimensions from a dataset into the model.
void attach_schema(FittedModel& model, const GroupedDataset& data);

}  // namespace gbmixed
