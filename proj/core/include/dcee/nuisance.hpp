#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcee/bspline.hpp"
#include "dcee/data.hpp"
#include "dcee/linalg.hpp"

namespace dcee {

enum class LearnerKind {
  mean_only,     ///< per-arm mean of Y
  linear,        ///< intercept + raw covariates
  ridge_spline,  ///< intercept + B-splines of continuous covariates + raw binary covariates
  constant,      ///< fixed value, ignores the data
};

/// Outcome-regression learner, pooled over decision points.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::ridge_spline;
  int spline_df = 4;
  double ridge_lambda = 1e-6;
  /// Covariates entering the design; nullopt uses every dataset covariate.
  std::optional<std::vector<std::string>> covariates;
  /// Covariates expanded in a spline basis; nullopt treats every covariate
  /// that is not 0/1-valued in the training rows as continuous.
  std::optional<std::vector<std::string>> continuous_covariates;
  double constant_value = 0.0;

  void check() const;
};

/// Maps a covariate row to the nuisance design row.
struct NuisanceRecipe {
  std::vector<std::size_t> raw_columns;
  std::vector<std::pair<std::size_t, BSplineBasis>> spline_columns;

  std::size_t width() const;  ///< includes the intercept
  std::size_t covariate_span() const;  ///< covariate row length the recipe reads
  void design_row(std::span<const double> covariates, std::span<double> out) const;
};

struct ArmDiagnostics {
  std::size_t rows = 0;
  double residual_scale = 0.0;  ///< root mean squared residual on the training rows
};

/// Fitted mu_t(H_t, a) for a = 0, 1.
class OutcomeModel {
 public:
  OutcomeModel(LearnerKind kind, NuisanceRecipe recipe, std::array<Vector, 2> coefficients,
               std::array<ArmDiagnostics, 2> diagnostics);

  double predict(std::span<const double> covariates, int arm) const;
  double predict(const Trajectory& traj, std::size_t row, int arm) const {
    return predict(traj.covariates(row), arm);
  }

  LearnerKind kind() const noexcept { return kind_; }
  const NuisanceRecipe& recipe() const noexcept { return recipe_; }
  const Vector& coefficients(int arm) const { return coefficients_.at(static_cast<std::size_t>(arm)); }
  const ArmDiagnostics& diagnostics(int arm) const { return diagnostics_.at(static_cast<std::size_t>(arm)); }

 private:
  LearnerKind kind_;
  NuisanceRecipe recipe_;
  std::array<Vector, 2> coefficients_;
  std::array<ArmDiagnostics, 2> diagnostics_;
};

/// Fits both arms on the eligible rows of the listed persons (dataset indices).
OutcomeModel fit_outcome_model(const MrtDataset& ds, std::span<const std::size_t> include, const LearnerSpec& spec);
OutcomeModel fit_outcome_model(const MrtDataset& ds, const LearnerSpec& spec);

inline double predict_mu(const OutcomeModel& model, std::span<const double> covariates, int arm) {
  return model.predict(covariates, arm);
}

/// Person-level K-fold partition. Folds differ in size by at most one.
struct FoldAssignment {
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> person_ids;
  std::vector<int> fold;  ///< aligned with person_ids, values in [0, K)

  int fold_of(const std::string& person_id) const;
  std::vector<std::size_t> members(int k) const;
  std::vector<std::size_t> complement(int k) const;
  std::vector<std::size_t> sizes() const;
};

FoldAssignment make_folds(std::span<const std::string> person_ids, int K, std::uint64_t seed);
FoldAssignment make_folds(const MrtDataset& ds, int K, std::uint64_t seed);

}  // namespace dcee
