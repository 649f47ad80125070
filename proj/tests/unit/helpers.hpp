#pragma once

#include <random>
#include <string>
#include <vector>

#include "dcee/data.hpp"

namespace testing {

inline dcee::Trajectory make_traj(const std::string& id, const std::vector<dcee::DecisionRow>& rows,
                                  const std::vector<std::vector<double>>& covs, double y) {
  dcee::Trajectory traj;
  traj.person_id = id;
  traj.width = covs.empty() ? 0 : covs.front().size();
  traj.outcome = y;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    traj.push_row(rows[i], covs.empty() ? std::vector<double>{} : covs[i]);
  }
  return traj;
}

/// Arbitrary valid dataset with covariates {X (continuous), Z (binary)}; uses
/// its own generator so it does not share code with the library simulator.
inline dcee::MrtDataset random_dataset(unsigned seed, std::size_t n, int T, double elig_rate = 0.7) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  dcee::MrtDataset ds({"X", "Z"}, T);
  for (std::size_t i = 0; i < n; ++i) {
    dcee::Trajectory traj;
    traj.person_id = "p" + std::to_string(i);
    traj.width = 2;
    double y = norm(gen);
    for (int t = 1; t <= T; ++t) {
      dcee::DecisionRow row;
      row.t = t;
      row.elig = unif(gen) < elig_rate ? 1 : 0;
      const double x = norm(gen);
      const double z = unif(gen) < 0.4 ? 1.0 : 0.0;
      if (row.elig) {
        row.prob = 0.1 + 0.8 * unif(gen);
        row.treat = unif(gen) < row.prob ? 1 : 0;
      }
      y += 0.3 * x + 0.5 * z + row.treat * (1.0 + 0.5 * z);
      const std::vector<double> covs{x, z};
      traj.push_row(row, covs);
    }
    traj.outcome = y;
    ds.add(std::move(traj));
  }
  return ds;
}

}  // namespace testing
