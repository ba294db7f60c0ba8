#pragma once

#include "gbmixed/boosting.hpp"
#include "gbmixed/data.hpp"

#include <Eigen/Dense>

#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace gbmixed {

enum class Component { kMean, kG, kR };

std::string to_string(Component c);
Component parse_component(const std::string& text);

struct ImportanceReport {
  Component component = Component::kMean;
  std::map<std::string, double> scores;  // empty when no learner selected a feature
};

/// Selection frequencies over every learner of the component, normalized to sum to 1.
ImportanceReport variable_importance(const FittedModel& model, Component component);

struct PDPCurve {
  Component component = Component::kMean;
  std::string feature;
  std::pair<Eigen::Index, Eigen::Index> entry{0, 0};  // G entry (row, col)
  std::vector<double> grid;
  std::vector<double> values;
};

/// Equally spaced points between the 2nd and 98th percentile of `values`.
std::vector<double> default_grid(const Eigen::VectorXd& values, int points = 25);

/// Background column the curve varies: observation rows for mean and R,
/// group-level rows for G.
Eigen::VectorXd background_column(const GroupedDataset& background, Component component, Eigen::Index feature);

/// Averages the component output over background rows with `feature` overwritten
/// by each grid value. R is averaged on the variance scale, G after L L^T.
PDPCurve partial_dependence(const FittedModel& model, Component component, const std::string& feature,
                            const std::vector<double>& grid, const GroupedDataset& background,
                            std::pair<Eigen::Index, Eigen::Index> entry = {0, 0});

void write_importance_csv(const ImportanceReport& report, std::ostream& out);
void write_pdp_csv(const PDPCurve& curve, std::ostream& out);

}  // namespace gbmixed
