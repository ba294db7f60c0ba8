#pragma once

// Synthetic datasets shared by the unit and acceptance tests.

#include "gbmixed/data.hpp"

#include <random>
#include <string>

namespace fixture {

/// y = 1 + 2 x1 + alpha_i + eps with alpha ~ N(0, sigma_a2), eps ~ N(0, sigma_e2), x ~ N(0, 1).
inline gbmixed::GroupedDataset linear_lmm(int C, int n_i, std::uint64_t seed, double sigma_a2 = 0.25,
                                          double sigma_e2 = 0.5, int extra_features = 0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  gbmixed::GroupedDataset ds;
  const int p = 1 + extra_features;
  for (int k = 0; k < p; ++k) ds.feature_names.push_back("x" + std::to_string(k + 1));
  ds.categorical.assign(static_cast<std::size_t>(p), false);
  ds.z_names = {"(intercept)"};
  for (int i = 0; i < C; ++i) {
    gbmixed::GroupBlock g;
    g.id = std::to_string(i + 1);
    g.X.resize(n_i, p);
    g.y.resize(n_i);
    g.Z = Eigen::MatrixXd::Ones(n_i, 1);
    const double alpha = std::sqrt(sigma_a2) * n(rng);
    for (int j = 0; j < n_i; ++j) {
      for (int k = 0; k < p; ++k) g.X(j, k) = n(rng);
      g.y(j) = 1.0 + 2.0 * g.X(j, 0) + alpha + std::sqrt(sigma_e2) * n(rng);
    }
    ds.groups.push_back(std::move(g));
  }
  canonicalize(ds);
  return gbmixed::group_summaries(ds, {});
}

}  // namespace fixture
