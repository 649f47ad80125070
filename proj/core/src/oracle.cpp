#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dcee/error.hpp"
#include "dcee/parallel.hpp"
#include "dcee/simulator.hpp"

namespace dcee {

namespace {

constexpr std::size_t kBlocks = 256;
constexpr std::uint64_t kCommonStream = 0x63726eULL;
// simulator covariates, in dataset column order
const std::vector<std::string> kSimCovariates{"X", "Z"};

using LevelKey = std::array<double, 2>;

struct Welford {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double y) {
    ++n;
    const double d = y - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (y - mean);
  }
  void merge(const Welford& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double total = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / total;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / total;
    n += o.n;
  }
  double variance_of_mean() const { return n < 2 ? 0.0 : m2 / static_cast<double>(n - 1) / static_cast<double>(n); }
};

using Cells = std::vector<std::pair<LevelKey, Welford>>;

Welford& cell_for(Cells& cells, const LevelKey& key) {
  for (auto& c : cells) {
    if (c.first == key) return c.second;
  }
  if (cells.size() >= kMaxModeratorLevels) {
    throw ValidationError("oracle moderators must be discrete with at most " + std::to_string(kMaxModeratorLevels) +
                          " levels");
  }
  cells.emplace_back(key, Welford{});
  return cells.back().second;
}

/// Which simulator columns the union of moderators uses, in a fixed order.
std::vector<std::size_t> moderator_union(const std::vector<EstimandSpec>& specs) {
  std::vector<std::size_t> cols;
  for (const auto& spec : specs) {
    for (const auto& name : spec.moderators) {
      const auto it = std::find(kSimCovariates.begin(), kSimCovariates.end(), name);
      if (it == kSimCovariates.end()) throw ValidationError("unknown moderator '" + name + "' for the simulator");
      cols.push_back(static_cast<std::size_t>(it - kSimCovariates.begin()));
    }
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

LevelKey key_of(const SimStep& s, const std::vector<std::size_t>& cols) {
  LevelKey key{0.0, 0.0};
  const double values[2] = {s.x, s.z};
  for (std::size_t j = 0; j < cols.size(); ++j) key[j] = values[cols[j]];
  return key;
}

std::pair<std::size_t, std::size_t> block_range(std::size_t b, std::size_t blocks, std::size_t m) {
  return {b * m / blocks, (b + 1) * m / blocks};
}

/// Outcome moments by moderator level at t0 under excursion(t0, a).
Cells excursion_cells(const SimParams& params, std::size_t m, std::uint64_t seed, const PolicySpec& policy,
                      std::uint64_t stream, const std::vector<std::size_t>& cols, unsigned threads) {
  const std::size_t blocks = std::min(kBlocks, m);
  std::vector<Cells> partial(blocks);
  parallel_for(blocks, threads, [&](std::size_t b) {
    const auto [lo, hi] = block_range(b, blocks, m);
    Cells cells;
    for (std::size_t i = lo; i < hi; ++i) {
      LevelKey key{};
      const double y = simulate_person(params, person_stream(seed, stream, i), policy, [&](const SimStep& s) {
        if (s.t == policy.t0) key = key_of(s, cols);
      });
      cell_for(cells, key).add(y);
    }
    partial[b] = std::move(cells);
  });
  Cells merged;
  for (const auto& cells : partial) {
    for (const auto& [key, acc] : cells) cell_for(merged, key).merge(acc);
  }
  std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return merged;
}

struct SpecCell {
  Welford treated, control;
  double share = 0.0;  // P(S_t = s) from the MRT-policy sample
  Vector f;
  Vector resid;  // omega (tau - f' beta) f
};

}  // namespace

std::vector<OracleResult> compute_oracle_betas(const SimParams& params, const std::vector<EstimandSpec>& specs,
                                               std::size_t mc_size, std::uint64_t seed, const OracleOptions& options) {
  params.check();
  if (mc_size < kMinOracleSize) {
    throw ValidationError("oracle mc_size must be at least " + std::to_string(kMinOracleSize));
  }
  if (specs.empty()) throw ValidationError("no estimands given to the oracle");
  const auto cols = moderator_union(specs);
  const int T = params.T;
  const auto m = mc_size;
  auto stream_for = [&](const PolicySpec& p) { return options.common_random_numbers ? kCommonStream : p.stream_id(); };

  // excursion samples: cells[t - 1][a]
  std::vector<std::array<Cells, 2>> cells(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    for (int a = 0; a <= 1; ++a) {
      const auto policy = PolicySpec::excursion(t, a);
      cells[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(a)] =
          excursion_cells(params, m, seed, policy, stream_for(policy), cols, options.threads);
    }
  }

  // global level registry
  std::vector<LevelKey> levels;
  for (const auto& pair : cells) {
    for (const auto& arm : pair) {
      for (const auto& c : arm) levels.push_back(c.first);
    }
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() > kMaxModeratorLevels) {
    throw ValidationError("oracle moderators must be discrete with at most " + std::to_string(kMaxModeratorLevels) +
                          " levels");
  }

  // MRT-policy sample: level index of every (person, t)
  constexpr std::uint8_t kUnseen = 0xff;
  std::vector<std::uint8_t> level_of(m * static_cast<std::size_t>(T), kUnseen);
  {
    const auto policy = PolicySpec::mrt();
    const auto stream = stream_for(policy);
    const std::size_t blocks = std::min(kBlocks, m);
    parallel_for(blocks, options.threads, [&](std::size_t b) {
      const auto [lo, hi] = block_range(b, blocks, m);
      for (std::size_t i = lo; i < hi; ++i) {
        std::uint8_t* row = level_of.data() + i * static_cast<std::size_t>(T);
        simulate_person(params, person_stream(seed, stream, i), policy, [&](const SimStep& s) {
          const auto key = key_of(s, cols);
          const auto it = std::lower_bound(levels.begin(), levels.end(), key);
          if (it != levels.end() && *it == key) row[s.t - 1] = static_cast<std::uint8_t>(it - levels.begin());
        });
      }
    });
  }
  if (std::find(level_of.begin(), level_of.end(), kUnseen) != level_of.end()) {
    throw NumericalError("a moderator level of the MRT-policy sample never occurs in the excursion samples; "
                         "increase mc_size");
  }

  std::vector<OracleResult> results;
  for (const auto& spec : specs) {
    const FeatureMap map(spec, T, kSimCovariates);
    const auto weights = build_weights(T, spec.weight);
    const auto p = static_cast<Eigen::Index>(map.dimension());
    // positions of this spec's moderators inside the union key
    std::vector<std::size_t> pick;
    for (const auto& name : spec.moderators) {
      const auto col = static_cast<std::size_t>(std::find(kSimCovariates.begin(), kSimCovariates.end(), name) -
                                                kSimCovariates.begin());
      pick.push_back(static_cast<std::size_t>(std::find(cols.begin(), cols.end(), col) - cols.begin()));
    }
    // sub-level of each global level, and the distinct sub-levels
    std::vector<std::vector<double>> sublevels;
    std::vector<std::size_t> sub_of(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
      std::vector<double> sub;
      for (std::size_t j : pick) sub.push_back(levels[l][j]);
      auto it = std::find(sublevels.begin(), sublevels.end(), sub);
      if (it == sublevels.end()) {
        sublevels.push_back(sub);
        it = sublevels.end() - 1;
      }
      sub_of[l] = static_cast<std::size_t>(it - sublevels.begin());
    }
    const std::size_t S = sublevels.size();
    std::vector<SpecCell> grid(static_cast<std::size_t>(T) * S);
    auto at = [&](int t, std::size_t s) -> SpecCell& { return grid[static_cast<std::size_t>(t - 1) * S + s]; };

    for (int t = 1; t <= T; ++t) {
      const auto& pair = cells[static_cast<std::size_t>(t - 1)];
      for (int a = 0; a <= 1; ++a) {
        for (const auto& [key, acc] : pair[static_cast<std::size_t>(a)]) {
          const auto l = static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), key) - levels.begin());
          auto& c = at(t, sub_of[l]);
          (a == 1 ? c.treated : c.control).merge(acc);
        }
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (int t = 1; t <= T; ++t) at(t, sub_of[level_of[i * static_cast<std::size_t>(T) + static_cast<std::size_t>(t - 1)]]).share += 1.0;
    }

    std::vector<double> covs(kSimCovariates.size(), 0.0);
    Matrix bread = Matrix::Zero(p, p);
    Vector score = Vector::Zero(p);
    for (int t = 1; t <= T; ++t) {
      const double w = weights[static_cast<std::size_t>(t - 1)];
      for (std::size_t s = 0; s < S; ++s) {
        auto& c = at(t, s);
        c.share /= static_cast<double>(m);
        std::fill(covs.begin(), covs.end(), 0.0);
        for (std::size_t j = 0; j < pick.size(); ++j) covs[cols[pick[j]]] = sublevels[s][j];
        c.f = map.evaluate(t, covs);
        if (c.share == 0.0 || w == 0.0) continue;
        if (c.treated.n < 2 || c.control.n < 2) {
          throw NumericalError("moderator level at t=" + std::to_string(t) +
                               " has fewer than two excursion draws in an arm; increase mc_size");
        }
        const double tau = c.treated.mean - c.control.mean;
        bread.noalias() += (w * c.share) * c.f * c.f.transpose();
        score.noalias() += (w * c.share * tau) * c.f;
      }
    }
    OracleResult out;
    out.names = map.names();
    out.mc_size = m;
    out.seed = seed;
    out.common_random_numbers = options.common_random_numbers;
    out.beta_star = solve_checked(bread, score, 1e-12, "oracle projection matrix sum_t omega E(f f')");

    // delta-method Monte-Carlo error: tau noise plus the noise of the MRT-sample shares
    Matrix middle = Matrix::Zero(p, p);
    for (int t = 1; t <= T; ++t) {
      const double w = weights[static_cast<std::size_t>(t - 1)];
      for (std::size_t s = 0; s < S; ++s) {
        auto& c = at(t, s);
        c.resid = Vector::Zero(p);
        if (c.treated.n >= 1 && c.control.n >= 1) {
          TauCell cell;
          cell.t = t;
          cell.level = sublevels[s];
          cell.tau = c.treated.mean - c.control.mean;
          cell.se = std::sqrt(c.treated.variance_of_mean() + c.control.variance_of_mean());
          cell.n1 = c.treated.n;
          cell.n0 = c.control.n;
          out.per_t_tau.push_back(cell);
        }
        if (c.share == 0.0 || w == 0.0) continue;
        const Vector cc = (w * c.share) * c.f;
        middle.noalias() += (c.treated.variance_of_mean() + c.control.variance_of_mean()) * cc * cc.transpose();
        const double tau = c.treated.mean - c.control.mean;
        c.resid = (w * (tau - c.f.dot(out.beta_star))) * c.f;
      }
    }
    Matrix psi_cov = Matrix::Zero(p, p);
    Vector psi_mean = Vector::Zero(p);
    Vector psi(p);
    for (std::size_t i = 0; i < m; ++i) {
      psi.setZero();
      for (int t = 1; t <= T; ++t) {
        psi += at(t, sub_of[level_of[i * static_cast<std::size_t>(T) + static_cast<std::size_t>(t - 1)]]).resid;
      }
      psi_mean += psi;
      psi_cov.noalias() += psi * psi.transpose();
    }
    psi_mean /= static_cast<double>(m);
    psi_cov = psi_cov / static_cast<double>(m) - psi_mean * psi_mean.transpose();
    middle += psi_cov / static_cast<double>(m);
    const Matrix bread_inv = inverse_checked(bread, 1e-12, "oracle projection matrix sum_t omega E(f f')");
    const Matrix cov = bread_inv * middle * bread_inv.transpose();
    out.mc_se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    results.push_back(std::move(out));
  }
  return results;
}

OracleResult compute_oracle_beta(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size,
                                 std::uint64_t seed, const OracleOptions& options) {
  return compute_oracle_betas(params, {spec}, mc_size, seed, options).front();
}

}  // namespace dcee
