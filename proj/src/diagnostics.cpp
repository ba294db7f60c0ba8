#include "gbmixed/diagnostics.hpp"

#include "gbmixed/error.hpp"

#include <algorithm>
#include <cmath>

namespace gbmixed {

std::string to_string(Component c) {
  switch (c) {
    case Component::kMean: return "mean";
    case Component::kG: return "G";
    case Component::kR: return "R";
  }
  return "mean";
}

Component parse_component(const std::string& text) {
  if (text == "mean" || text == "mu") return Component::kMean;
  if (text == "G" || text == "g") return Component::kG;
  if (text == "R" || text == "r") return Component::kR;
  throw ConfigError("unknown component '" + text + "' (expected mean, G or R)");
}

ImportanceReport variable_importance(const FittedModel& model, Component component) {
  std::vector<double> counts(static_cast<std::size_t>(model.num_features()), 0.0);
  auto tally = [&](const Ensemble& ens) {
    for (const auto& h : ens.learners) h.count_selections(counts);
  };
  switch (component) {
    case Component::kMean: tally(model.mean); break;
    case Component::kR: tally(model.log_R); break;
    case Component::kG:
      for (const auto& e : model.L_entries) tally(e);
      break;
  }
  ImportanceReport report;
  report.component = component;
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return report;
  for (std::size_t j = 0; j < counts.size(); ++j) report.scores[model.feature_names[j]] = counts[j] / total;
  return report;
}

std::vector<double> default_grid(const Eigen::VectorXd& values, int points) {
  if (values.size() == 0) throw DataError("cannot build a grid from an empty column");
  if (points < 1) throw ConfigError("grid needs at least one point");
  std::vector<double> v(values.data(), values.data() + values.size());
  std::sort(v.begin(), v.end());
  auto percentile = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  const double a = percentile(0.02);
  const double b = percentile(0.98);
  if (!(b > a) || points == 1) return {a};
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) grid[static_cast<std::size_t>(k)] = a + (b - a) * k / (points - 1);
  return grid;
}

Eigen::VectorXd background_column(const GroupedDataset& background, Component component, Eigen::Index feature) {
  if (component == Component::kG) return background.stacked_x_tilde().col(feature);
  return background.stacked_X().col(feature);
}

PDPCurve partial_dependence(const FittedModel& model, Component component, const std::string& feature,
                            const std::vector<double>& grid, const GroupedDataset& background,
                            std::pair<Eigen::Index, Eigen::Index> entry) {
  const auto it = std::find(model.feature_names.begin(), model.feature_names.end(), feature);
  if (it == model.feature_names.end()) throw ConfigError("unknown feature '" + feature + "'");
  if (grid.empty()) throw ConfigError("partial dependence grid is empty");
  if (background.empty() || background.num_observations() == 0) throw DataError("background data is empty");
  if (component == Component::kG &&
      (entry.first < 0 || entry.first >= model.q || entry.second < 0 || entry.second >= model.q)) {
    throw ConfigError("G entry out of range");
  }
  const auto f = static_cast<Eigen::Index>(it - model.feature_names.begin());

  PDPCurve curve;
  curve.component = component;
  curve.feature = feature;
  curve.entry = entry;
  curve.grid = grid;
  curve.values.reserve(grid.size());
  if (component == Component::kG) {
    Eigen::MatrixXd xt = background.stacked_x_tilde();
    for (double g : grid) {
      xt.col(f).setConstant(g);
      double sum = 0.0;
      for (Eigen::Index i = 0; i < xt.rows(); ++i) {
        sum += model.G_at(xt.row(i).transpose())(entry.first, entry.second);
      }
      curve.values.push_back(sum / static_cast<double>(xt.rows()));
    }
    return curve;
  }
  Eigen::MatrixXd X = background.stacked_X();
  for (double g : grid) {
    X.col(f).setConstant(g);
    const Eigen::VectorXd out = component == Component::kMean ? model.mean_at(X) : model.R_at(X);
    curve.values.push_back(out.mean());
  }
  return curve;
}

void write_importance_csv(const ImportanceReport& report, std::ostream& out) {
  out << "feature,score\n";
  for (const auto& [name, score] : report.scores) out << name << ',' << format_double(score) << '\n';
}

void write_pdp_csv(const PDPCurve& curve, std::ostream& out) {
  out << "grid,value\n";
  for (std::size_t k = 0; k < curve.grid.size(); ++k) {
    out << format_double(curve.grid[k]) << ',' << format_double(curve.values[k]) << '\n';
  }
}

}  // namespace gbmixed
