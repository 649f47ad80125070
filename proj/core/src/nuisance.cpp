#include "dcee/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dcee/error.hpp"
#include "dcee/rng.hpp"

namespace dcee {

void LearnerSpec::check() const {
  if (spline_df < 1) throw ValidationError("nuisance spline_df must be >= 1");
  if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) throw ValidationError("nuisance ridge_lambda must be >= 0");
  if (!std::isfinite(constant_value)) throw ValidationError("nuisance constant_value must be finite");
}

std::size_t NuisanceRecipe::width() const {
  std::size_t w = 1 + raw_columns.size();
  for (const auto& [col, basis] : spline_columns) w += static_cast<std::size_t>(basis.size());
  return w;
}

std::size_t NuisanceRecipe::covariate_span() const {
  std::size_t span = 0;
  for (std::size_t col : raw_columns) span = std::max(span, col + 1);
  for (const auto& [col, basis] : spline_columns) span = std::max(span, col + 1);
  return span;
}

void NuisanceRecipe::design_row(std::span<const double> covariates, std::span<double> out) const {
  std::size_t k = 0;
  out[k++] = 1.0;
  for (const auto& [col, basis] : spline_columns) {
    const double x = covariates[col];
    if (!std::isfinite(x)) throw ValidationError("missing covariate value in nuisance prediction");
    basis.evaluate(x, out.subspan(k, static_cast<std::size_t>(basis.size())));
    k += static_cast<std::size_t>(basis.size());
  }
  for (std::size_t col : raw_columns) {
    const double x = covariates[col];
    if (!std::isfinite(x)) throw ValidationError("missing covariate value in nuisance prediction");
    out[k++] = x;
  }
}

OutcomeModel::OutcomeModel(LearnerKind kind, NuisanceRecipe recipe, std::array<Vector, 2> coefficients,
                           std::array<ArmDiagnostics, 2> diagnostics)
    : kind_(kind), recipe_(std::move(recipe)), coefficients_(std::move(coefficients)), diagnostics_(diagnostics) {}

double OutcomeModel::predict(std::span<const double> covariates, int arm) const {
  if (arm != 0 && arm != 1) throw ValidationError("arm must be 0 or 1");
  const Vector& beta = coefficients_[static_cast<std::size_t>(arm)];
  if (kind_ == LearnerKind::mean_only || kind_ == LearnerKind::constant) return beta(0);
  if (covariates.size() < recipe_.covariate_span()) {
    throw ValidationError("covariate row does not cover the nuisance recipe");
  }
  double design[64];
  std::vector<double> heap;
  const std::size_t w = recipe_.width();
  std::span<double> row;
  if (w <= 64) {
    row = std::span<double>(design, w);
  } else {
    heap.resize(w);
    row = heap;
  }
  recipe_.design_row(covariates, row);
  double value = 0.0;
  for (std::size_t j = 0; j < w; ++j) value += row[j] * beta(static_cast<Eigen::Index>(j));
  return value;
}

namespace {

/// Mean computed around the first value, so a constant sample reproduces its
/// value exactly.
double shifted_mean(std::span<const double> y) {
  const double shift = y.front();
  double acc = 0.0;
  for (double v : y) acc += v - shift;
  return shift + acc / static_cast<double>(y.size());
}

bool is_binary_column(const MrtDataset& ds, std::span<const std::size_t> include, std::size_t col) {
  for (std::size_t i : include) {
    const auto& traj = ds[i];
    for (std::size_t r = 0; r < traj.rows.size(); ++r) {
      if (!traj.rows[r].elig) continue;
      const double v = traj.covariates(r)[col];
      if (v != 0.0 && v != 1.0) return false;
    }
  }
  return true;
}

}  // namespace

OutcomeModel fit_outcome_model(const MrtDataset& ds, std::span<const std::size_t> include, const LearnerSpec& spec) {
  spec.check();
  if (include.empty()) throw ValidationError("nuisance fit needs a nonempty set of persons");

  // eligible rows per arm
  std::array<std::vector<std::pair<std::size_t, std::size_t>>, 2> arm_rows;
  for (std::size_t i : include) {
    if (i >= ds.size()) throw ValidationError("nuisance fit person index out of range");
    const auto& traj = ds[i];
    for (std::size_t r = 0; r < traj.rows.size(); ++r) {
      if (traj.rows[r].elig) arm_rows[static_cast<std::size_t>(traj.rows[r].treat)].emplace_back(i, r);
    }
  }

  if (spec.kind == LearnerKind::constant) {
    Vector c = Vector::Constant(1, spec.constant_value);
    return OutcomeModel(LearnerKind::constant, {}, {c, c},
                        {ArmDiagnostics{arm_rows[0].size(), 0.0}, ArmDiagnostics{arm_rows[1].size(), 0.0}});
  }

  NuisanceRecipe recipe;
  if (spec.kind != LearnerKind::mean_only) {
    std::vector<std::size_t> used;
    if (spec.covariates) {
      for (const auto& name : *spec.covariates) used.push_back(ds.require_covariate(name));
    } else {
      for (std::size_t j = 0; j < ds.covariate_names().size(); ++j) used.push_back(j);
    }
    std::vector<std::size_t> continuous;
    if (spec.kind == LearnerKind::ridge_spline) {
      if (spec.continuous_covariates) {
        for (const auto& name : *spec.continuous_covariates) {
          const std::size_t col = ds.require_covariate(name);
          if (std::find(used.begin(), used.end(), col) == used.end()) used.push_back(col);
          continuous.push_back(col);
        }
      } else {
        for (std::size_t col : used) {
          if (!is_binary_column(ds, include, col)) continuous.push_back(col);
        }
      }
    }
    for (std::size_t col : used) {
      if (std::find(continuous.begin(), continuous.end(), col) != continuous.end()) {
        std::vector<double> values;
        for (const auto& rows : arm_rows) {
          for (auto [i, r] : rows) values.push_back(ds[i].covariates(r)[col]);
        }
        recipe.spline_columns.emplace_back(col, BSplineBasis::from_sample(values, spec.spline_df));
      } else {
        recipe.raw_columns.push_back(col);
      }
    }
  }

  const std::size_t width = spec.kind == LearnerKind::mean_only ? 1 : recipe.width();
  std::array<Vector, 2> coefficients;
  std::array<ArmDiagnostics, 2> diagnostics;
  for (int arm = 0; arm < 2; ++arm) {
    const auto& rows = arm_rows[static_cast<std::size_t>(arm)];
    if (rows.size() < width) {
      throw NumericalError("nuisance arm a=" + std::to_string(arm) + " has " + std::to_string(rows.size()) +
                           " eligible rows, needs at least " + std::to_string(width));
    }
    std::vector<double> y;
    y.reserve(rows.size());
    for (auto [i, r] : rows) y.push_back(ds[i].outcome);
    Vector beta;
    double ssr = 0.0;
    if (spec.kind == LearnerKind::mean_only) {
      beta = Vector::Constant(1, shifted_mean(y));
      for (double v : y) ssr += (v - beta(0)) * (v - beta(0));
    } else {
      const auto w = static_cast<Eigen::Index>(width);
      Matrix gram = Matrix::Zero(w, w);
      Vector rhs = Vector::Zero(w);
      Vector d(w);
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto [i, r] = rows[k];
        recipe.design_row(ds[i].covariates(r), std::span<double>(d.data(), width));
        gram.selfadjointView<Eigen::Lower>().rankUpdate(d);
        rhs += y[k] * d;
      }
      gram = gram.selfadjointView<Eigen::Lower>();
      for (Eigen::Index j = 1; j < w; ++j) gram(j, j) += spec.ridge_lambda;
      beta = solve_checked(gram, rhs, 1e-13, "nuisance normal equations (arm a=" + std::to_string(arm) + ")");
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto [i, r] = rows[k];
        recipe.design_row(ds[i].covariates(r), std::span<double>(d.data(), width));
        const double e = y[k] - d.dot(beta);
        ssr += e * e;
      }
    }
    coefficients[static_cast<std::size_t>(arm)] = std::move(beta);
    diagnostics[static_cast<std::size_t>(arm)] = {rows.size(), std::sqrt(ssr / static_cast<double>(rows.size()))};
  }
  return OutcomeModel(spec.kind, std::move(recipe), std::move(coefficients), diagnostics);
}

OutcomeModel fit_outcome_model(const MrtDataset& ds, const LearnerSpec& spec) {
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_outcome_model(ds, all, spec);
}

// ---------------------------------------------------------------------------
// Folds

int FoldAssignment::fold_of(const std::string& person_id) const {
  for (std::size_t i = 0; i < person_ids.size(); ++i) {
    if (person_ids[i] == person_id) return fold[i];
  }
  throw ValidationError("person '" + person_id + "' has no fold");
}

std::vector<std::size_t> FoldAssignment::members(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] == k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::complement(int k) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    if (fold[i] != k) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldAssignment::sizes() const {
  std::vector<std::size_t> out(static_cast<std::size_t>(K), 0);
  for (int f : fold) ++out[static_cast<std::size_t>(f)];
  return out;
}

FoldAssignment make_folds(std::span<const std::string> person_ids, int K, std::uint64_t seed) {
  const auto n = person_ids.size();
  if (K < 2) throw ValidationError("cross-fitting needs K >= 2, got " + std::to_string(K));
  if (static_cast<std::size_t>(K) > n) {
    throw ValidationError("cross-fitting needs K <= n, got K=" + std::to_string(K) + " with n=" + std::to_string(n));
  }
  // Fisher-Yates on a counter stream; position i in the shuffled order goes to fold i mod K
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const CounterStream stream(seed, 0x666f6c6473ULL /* "folds" */, n);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(stream.uniform(i) * static_cast<double>(i));
    std::swap(order[i - 1], order[std::min(j, i - 1)]);
  }
  FoldAssignment folds;
  folds.K = K;
  folds.seed = seed;
  folds.person_ids.assign(person_ids.begin(), person_ids.end());
  folds.fold.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) folds.fold[order[pos]] = static_cast<int>(pos % static_cast<std::size_t>(K));
  return folds;
}

FoldAssignment make_folds(const MrtDataset& ds, int K, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(ds.size());
  for (const auto& traj : ds.trajectories()) ids.push_back(traj.person_id);
  return make_folds(ids, K, seed);
}

}  // namespace dcee
