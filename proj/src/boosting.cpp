#include "gbmixed/boosting.hpp"

#include "gbmixed/error.hpp"
#include "gbmixed/inference.hpp"
#include "gbmixed/likelihood.hpp"
#include "gbmixed/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>

namespace gbmixed {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kBase: return "base";
    case Variant::kRBoost: return "rboost";
    case Variant::kGBoost: return "gboost";
    case Variant::kGRBoost: return "grboost";
  }
  return "base";
}

Variant parse_variant(const std::string& text) {
  if (text == "base") return Variant::kBase;
  if (text == "rboost") return Variant::kRBoost;
  if (text == "gboost") return Variant::kGBoost;
  if (text == "grboost") return Variant::kGRBoost;
  throw ConfigError("unknown variant '" + text + "' (expected base, rboost, gboost or grboost)");
}

FitConfig FitConfig::for_variant(Variant v) {
  FitConfig c;
  c.variant = v;
  const bool g = v == Variant::kGBoost || v == Variant::kGRBoost;
  const bool r = v == Variant::kRBoost || v == Variant::kGRBoost;
  c.G_learner.kind = g ? LearnerKind::kTree : LearnerKind::kConstant;
  c.R_learner.kind = r ? LearnerKind::kTree : LearnerKind::kConstant;
  return c;
}

namespace {

bool in_unit_interval(double v) { return std::isfinite(v) && v > 0.0 && v <= 1.0; }

}  // namespace

void FitConfig::validate() const {
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  for (double nu : {nu_mu, nu_G, nu_R}) {
    if (!std::isfinite(nu) || nu < 0.0) throw ConfigError("learning rates must be finite and >= 0");
  }
  if (!in_unit_interval(group_fraction)) throw ConfigError("group_fraction must lie in (0, 1]");
  if (!in_unit_interval(feature_fraction)) throw ConfigError("feature_fraction must lie in (0, 1]");
  if (lookback < 1) throw ConfigError("lookback must be >= 1");
  if (!std::isfinite(tolerance) || tolerance <= 0.0) throw ConfigError("tolerance must be positive");
  if (!std::isfinite(eval_fraction) || eval_fraction < 0.0 || eval_fraction >= 1.0) {
    throw ConfigError("eval_fraction must lie in [0, 1)");
  }
  mean_learner.validate();
  G_learner.validate();
  R_learner.validate();
  const bool g = G_learner.kind != LearnerKind::kConstant;
  const bool r = R_learner.kind != LearnerKind::kConstant;
  const bool want_g = variant == Variant::kGBoost || variant == Variant::kGRBoost;
  const bool want_r = variant == Variant::kRBoost || variant == Variant::kGRBoost;
  if (g != want_g || r != want_r) {
    throw ConfigError("variant " + to_string(variant) + " requires " + (want_g ? "non-constant" : "constant") +
                      " G learner and " + (want_r ? "non-constant" : "constant") + " R learner");
  }
  for (Eigen::Index f : force_include_features) {
    if (f < 0) throw ConfigError("force_include_features holds a negative index");
  }
}

double Ensemble::predict_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double v = initial;
  for (const auto& h : learners) v += rate * h.predict_row(x);
  return v;
}

Eigen::VectorXd Ensemble::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(X.rows(), initial);
  for (const auto& h : learners) accumulate(h, X, out);
  return out;
}

void Ensemble::accumulate(const FittedLearner& h, const Eigen::MatrixXd& X, Eigen::VectorXd& current) const {
  const Eigen::VectorXd step = h.predict(X);
  for (Eigen::Index i = 0; i < current.size(); ++i) current(i) += rate * step(i);
}

void Ensemble::truncate(std::size_t iterations) {
  if (learners.size() > iterations) learners.resize(iterations);
}

Eigen::VectorXd FittedModel::mean_at(const Eigen::MatrixXd& X) const {
  if (X.cols() != num_features()) {
    throw ShapeError("expected " + std::to_string(num_features()) + " feature columns, got " +
                     std::to_string(X.cols()));
  }
  return mean.predict(X);
}

Eigen::VectorXd FittedModel::R_at(const Eigen::MatrixXd& X) const {
  if (X.cols() != num_features()) {
    throw ShapeError("expected " + std::to_string(num_features()) + " feature columns, got " +
                     std::to_string(X.cols()));
  }
  return log_R.predict(X).array().exp().matrix();
}

Eigen::MatrixXd FittedModel::L_at(const Eigen::VectorXd& x_tilde) const {
  if (x_tilde.size() != num_features()) {
    throw ShapeError("expected " + std::to_string(num_features()) + " group-level covariates, got " +
                     std::to_string(x_tilde.size()));
  }
  Eigen::RowVectorXd entries(static_cast<Eigen::Index>(L_entries.size()));
  const Eigen::RowVectorXd row = x_tilde.transpose();
  for (std::size_t e = 0; e < L_entries.size(); ++e) entries(static_cast<Eigen::Index>(e)) = L_entries[e].predict_row(row);
  return assemble_cholesky(entries, q);
}

Eigen::MatrixXd FittedModel::G_at(const Eigen::VectorXd& x_tilde) const {
  const Eigen::MatrixXd L = L_at(x_tilde);
  return L * L.transpose();
}

const GroupEffect* FittedModel::find_group(const std::string& id) const {
  for (const auto& g : group_effects) {
    if (g.id == id) return &g;
  }
  return nullptr;
}

std::pair<Eigen::Index, Eigen::Index> lower_entry(Eigen::Index e) {
  Eigen::Index a = 0;
  while ((a + 1) * (a + 2) / 2 <= e) ++a;
  return {a, e - a * (a + 1) / 2};
}

Eigen::Index lower_entry_count(Eigen::Index q) { return q * (q + 1) / 2; }

Eigen::MatrixXd assemble_cholesky(const Eigen::Ref<const Eigen::RowVectorXd>& entries, Eigen::Index q) {
  if (entries.size() != lower_entry_count(q)) throw ShapeError("Cholesky entry count does not match q");
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(q, q);
  Eigen::Index e = 0;
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b <= a; ++b, ++e) {
      L(a, b) = a == b ? std::max(entries(e), kCholeskyDiagonalFloor) : entries(e);
    }
  }
  return L;
}

void attach_schema(FittedModel& model, const GroupedDataset& data) {
  model.q = data.q;
  model.feature_names = data.feature_names;
  model.z_names = data.z_names;
  model.categorical = data.categorical;
  model.treatment_column = data.treatment_column;
}

FittedModel initialize(const GroupedDataset& train, const FitConfig& config) {
  if (train.empty()) throw DataError("training data has no groups");
  if (train.q < 1) throw ShapeError("random-effects dimension q must be >= 1");
  const Eigen::VectorXd y = train.stacked_y();
  const auto n = static_cast<double>(y.size());
  const double grand = y.mean();
  const double var_y = y.size() > 1 ? (y.array() - grand).square().sum() / (n - 1.0) : 0.0;
  if (!(var_y > 0.0)) throw DataError("degenerate response: y is constant");

  const auto C = static_cast<double>(train.num_groups());
  Eigen::VectorXd means(train.num_groups());
  double within = 0.0;
  for (std::size_t i = 0; i < train.num_groups(); ++i) {
    const auto& g = train.groups[i];
    means(static_cast<Eigen::Index>(i)) = g.y.mean();
    within += (g.y.array() - g.y.mean()).square().sum();
  }
  const double v_b = C > 1.0 ? (means.array() - means.mean()).square().sum() / (C - 1.0) : 0.0;
  const double v_w = n > C ? within / (n - C) : 0.0;
  const double floor = 0.01 * var_y;

  FittedModel model;
  model.config = config;
  attach_schema(model, train);
  model.mean.initial = grand;
  model.mean.rate = config.nu_mu;
  const double l0 = std::sqrt(std::max(v_b, floor));
  model.L_entries.resize(static_cast<std::size_t>(lower_entry_count(train.q)));
  for (std::size_t e = 0; e < model.L_entries.size(); ++e) {
    const auto [a, b] = lower_entry(static_cast<Eigen::Index>(e));
    model.L_entries[e].initial = a == b ? l0 : 0.0;
    model.L_entries[e].rate = config.nu_G;
  }
  model.log_R.initial = std::log(std::max(v_w, floor));
  model.log_R.rate = config.nu_R;
  return model;
}

namespace {

template <typename Index>
std::vector<Index> draw_without_replacement(Index total, Index count, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (count < total) {
    for (Index k = 0; k < count; ++k) {
      std::uniform_int_distribution<Index> pick(k, total - 1);
      std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(count));
  }
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

IterationSample sample_iteration(std::size_t C, Eigen::Index p, const FitConfig& config, Rng& rng) {
  const auto n_groups = static_cast<std::size_t>(std::floor(config.group_fraction * static_cast<double>(C)));
  if (n_groups == 0) {
    throw ConfigError("group_fraction " + format_double(config.group_fraction) + " selects no groups out of " +
                      std::to_string(C));
  }
  const auto n_features = static_cast<Eigen::Index>(std::floor(config.feature_fraction * static_cast<double>(p)));
  if (n_features == 0) {
    throw ConfigError("feature_fraction " + format_double(config.feature_fraction) +
                      " selects no features out of " + std::to_string(p));
  }
  IterationSample s;
  s.groups = draw_without_replacement<std::size_t>(C, n_groups, rng);
  s.features = draw_without_replacement<Eigen::Index>(p, n_features, rng);
  for (Eigen::Index f : config.force_include_features) {
    if (f >= p) throw ConfigError("force-included feature index " + std::to_string(f) + " out of range");
    s.features.push_back(f);
  }
  std::sort(s.features.begin(), s.features.end());
  s.features.erase(std::unique(s.features.begin(), s.features.end()), s.features.end());
  return s;
}

bool check_convergence(const std::vector<double>& history, int k, double delta) {
  if (k < 1 || history.size() <= static_cast<std::size_t>(k)) return false;
  const std::size_t m = history.size() - 1;
  return std::abs(history[m] - history[m - static_cast<std::size_t>(k)]) < delta;
}

namespace {

std::vector<Eigen::Index> offsets_of(const GroupedDataset& data) {
  std::vector<Eigen::Index> off(data.num_groups() + 1, 0);
  for (std::size_t i = 0; i < data.num_groups(); ++i) off[i + 1] = off[i] + data.groups[i].size();
  return off;
}

ComponentSnapshot snapshot(const FittedModel& model, const Eigen::MatrixXd& X, const Eigen::MatrixXd& xt) {
  ComponentSnapshot s;
  s.mu = model.mean.predict(X);
  s.log_R = model.log_R.predict(X);
  s.L_entries.resize(xt.rows(), static_cast<Eigen::Index>(model.L_entries.size()));
  for (std::size_t e = 0; e < model.L_entries.size(); ++e) {
    s.L_entries.col(static_cast<Eigen::Index>(e)) = model.L_entries[e].predict(xt);
  }
  return s;
}

VarianceComponents components_of(const ComponentSnapshot& s, std::size_t group, Eigen::Index offset,
                                 Eigen::Index n, Eigen::Index q) {
  VarianceComponents vc;
  vc.L = assemble_cholesky(s.L_entries.row(static_cast<Eigen::Index>(group)), q);
  vc.R_diag = s.log_R.segment(offset, n).array().exp().matrix();
  return vc;
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

Booster::Booster(const GroupedDataset& train, const GroupedDataset& eval, const FitConfig& config)
    : Booster(train, eval, config, initialize(train, config), Rng(config.seed)) {}

Booster::Booster(const GroupedDataset& train, const GroupedDataset& eval, const FitConfig& config,
                 FittedModel start, Rng rng)
    : train_data_(train), eval_data_(eval), config_(config), model_(std::move(start)), rng_(rng) {
  config_.validate();
  if (train.empty()) throw DataError("training data has no groups");
  if (eval.empty()) throw DataError("evaluation data has no groups");
  if (train.num_features() != model_.num_features() || eval.num_features() != model_.num_features()) {
    throw ShapeError("dataset feature count does not match the model");
  }
  if (train.q != model_.q || eval.q != model_.q) throw ShapeError("dataset q does not match the model");
  prepare();
}

void Booster::prepare() {
  train_X_ = train_data_.stacked_X();
  eval_X_ = eval_data_.stacked_X();
  train_xt_ = train_data_.stacked_x_tilde();
  eval_xt_ = eval_data_.stacked_x_tilde();
  train_offsets_ = offsets_of(train_data_);
  eval_offsets_ = offsets_of(eval_data_);
  train_ = snapshot(model_, train_X_, train_xt_);
  eval_ = snapshot(model_, eval_X_, eval_xt_);
  if (model_.history.empty()) model_.history.push_back(eval_loglik());
}

double Booster::loglik(const GroupedDataset& data, const ComponentSnapshot& comp) const {
  const auto& offsets = &data == &train_data_ ? train_offsets_ : eval_offsets_;
  std::vector<double> parts(data.num_groups(), 0.0);
  parallel_for(data.num_groups(), [&](std::size_t i) {
    const auto& g = data.groups[i];
    const VarianceComponents vc = components_of(comp, i, offsets[i], g.size(), model_.q);
    parts[i] = group_loglik(g.y, comp.mu.segment(offsets[i], g.size()), g.Z, vc, g.id);
  });
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

double Booster::eval_loglik() const { return loglik(eval_data_, eval_); }

bool Booster::converged() const {
  return config_.early_stopping && check_convergence(model_.history, config_.lookback, config_.tolerance);
}

void Booster::step() {
  const int iteration = model_.iterations_run + 1;
  const IterationSample sample =
      sample_iteration(train_data_.num_groups(), train_data_.num_features(), config_, rng_);
  const std::size_t S = sample.groups.size();

  std::vector<GroupEvaluation> evals(S);
  parallel_for(S, [&](std::size_t k) {
    const std::size_t i = sample.groups[k];
    const auto& g = train_data_.groups[i];
    const Eigen::Index off = train_offsets_[i];
    const VarianceComponents vc = components_of(train_, i, off, g.size(), model_.q);
    evals[k] = evaluate_group(g.y, train_.mu.segment(off, g.size()), g.Z, vc, g.id);
  });

  Eigen::Index rows = 0;
  for (std::size_t i : sample.groups) rows += train_data_.groups[i].size();
  const Eigen::Index p = train_data_.num_features();
  const auto E = static_cast<Eigen::Index>(model_.L_entries.size());
  Eigen::MatrixXd Xs(rows, p);
  Eigen::VectorXd d_mu(rows);
  Eigen::VectorXd d_logR(rows);
  Eigen::MatrixXd xt(static_cast<Eigen::Index>(S), p);
  Eigen::MatrixXd d_L(static_cast<Eigen::Index>(S), E);
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < S; ++k) {
    const std::size_t i = sample.groups[k];
    const auto& g = train_data_.groups[i];
    const auto& grads = evals[k].grads;
    if (!all_finite(grads.d_mu) || !all_finite(grads.d_L) || !all_finite(grads.d_logR)) {
      throw NumericalError("non-finite gradient at iteration " + std::to_string(iteration) + " in group " + g.id);
    }
    Xs.middleRows(r, g.size()) = train_X_.middleRows(train_offsets_[i], g.size());
    d_mu.segment(r, g.size()) = grads.d_mu;
    d_logR.segment(r, g.size()) = grads.d_logR;
    xt.row(static_cast<Eigen::Index>(k)) = train_xt_.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index e = 0; e < E; ++e) {
      const auto [a, b] = lower_entry(e);
      d_L(static_cast<Eigen::Index>(k), e) = grads.d_L(a, b);
    }
    r += g.size();
  }

  const FittedLearner h_mu = fit_learner(config_.mean_learner, Xs, d_mu, sample.features);
  model_.mean.learners.push_back(h_mu);
  model_.mean.accumulate(h_mu, train_X_, train_.mu);
  model_.mean.accumulate(h_mu, eval_X_, eval_.mu);

  if (config_.boost_variance) {
    const FittedLearner h_R = fit_learner(config_.R_learner, Xs, d_logR, sample.features);
    model_.log_R.learners.push_back(h_R);
    model_.log_R.accumulate(h_R, train_X_, train_.log_R);
    model_.log_R.accumulate(h_R, eval_X_, eval_.log_R);

    std::vector<FittedLearner> h_L(static_cast<std::size_t>(E));
    parallel_for(static_cast<std::size_t>(E), [&](std::size_t e) {
      const Eigen::VectorXd target = d_L.col(static_cast<Eigen::Index>(e));
      h_L[e] = fit_learner(config_.G_learner, xt, target, sample.features);
    });
    for (Eigen::Index e = 0; e < E; ++e) {
      auto& ens = model_.L_entries[static_cast<std::size_t>(e)];
      ens.learners.push_back(h_L[static_cast<std::size_t>(e)]);
      Eigen::VectorXd col = train_.L_entries.col(e);
      ens.accumulate(ens.learners.back(), train_xt_, col);
      train_.L_entries.col(e) = col;
      col = eval_.L_entries.col(e);
      ens.accumulate(ens.learners.back(), eval_xt_, col);
      eval_.L_entries.col(e) = col;
    }
  }

  const double ll = eval_loglik();
  if (!std::isfinite(ll)) {
    throw NumericalError("non-finite evaluation log-likelihood at iteration " + std::to_string(iteration));
  }
  model_.history.push_back(ll);
  model_.iterations_run = iteration;

  if (config_.verbose) {
    const Eigen::VectorXd R = train_.R();
    double g_diag = 0.0;
    for (Eigen::Index a = 0; a < model_.q; ++a) {
      const Eigen::Index e = a * (a + 1) / 2 + a;
      g_diag += train_.L_entries.col(e).array().max(kCholeskyDiagonalFloor).square().mean();
    }
    std::fprintf(stderr, "iter=%d eval_ll=%.6f mean_R=%.6g trace_G=%.6g |grad_mu|=%.6g\n", iteration, ll,
                 R.mean(), g_diag, d_mu.norm());
  }
}

FittedModel boost_step(FittedModel model, const GroupedDataset& train, const GroupedDataset& eval,
                       const FitConfig& config, Rng& rng) {
  Booster booster(train, eval, config, std::move(model), rng);
  booster.step();
  rng = booster.rng();
  return booster.model();
}

double dataset_loglik(const FittedModel& model, const GroupedDataset& data) {
  std::vector<double> parts(data.num_groups(), 0.0);
  parallel_for(data.num_groups(), [&](std::size_t i) {
    const auto& g = data.groups[i];
    VarianceComponents vc;
    vc.L = model.L_at(g.x_tilde);
    vc.R_diag = model.R_at(g.X);
    parts[i] = group_loglik(g.y, model.mean_at(g.X), g.Z, vc, g.id);
  });
  double total = 0.0;
  for (double v : parts) total += v;
  return total;
}

FittedModel fit(const GroupedDataset& train, const FitConfig& config, const FitObserver& observer) {
  config.validate();
  if (train.num_groups() < 2) throw DataError("fitting requires at least 2 groups");

  GroupedDataset inner;
  GroupedDataset eval;
  if (config.eval_fraction > 0.0) {
    auto parts = split_by_groups(train, 1.0 - config.eval_fraction, config.seed);
    inner = std::move(parts.first);
    eval = std::move(parts.second);
  } else {
    inner = train;
    eval = train;
  }

  std::seed_seq seq{config.seed, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  Rng rng(seq);
  Booster booster(inner, eval, config, initialize(inner, config), rng);
  for (int m = 1; m <= config.max_iterations; ++m) {
    booster.step();
    if (observer) observer(m, booster.model(), booster.train_components(), booster.eval_components());
    if (booster.converged()) break;
  }

  FittedModel model = booster.model();
  const auto best = std::max_element(model.history.begin(), model.history.end());
  model.best_iteration = static_cast<int>(best - model.history.begin());
  const auto keep = static_cast<std::size_t>(model.best_iteration);
  model.mean.truncate(keep);
  model.log_R.truncate(keep);
  for (auto& e : model.L_entries) e.truncate(keep);

  model.group_effects.resize(train.num_groups());
  parallel_for(train.num_groups(), [&](std::size_t i) {
    const auto& g = train.groups[i];
    model.group_effects[i] = GroupEffect{g.id, g.x_tilde, blup(model, g)};
  });
  return model;
}

}  // namespace gbmixed
