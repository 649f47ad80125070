#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcee/data.hpp"
#include "dcee/estimand.hpp"
#include "dcee/linalg.hpp"
#include "dcee/nuisance.hpp"

namespace dcee {

/// mu_t(H_t, 1) and mu_t(H_t, 0) at one row.
struct MuPrediction {
  double mu1 = 0.0;
  double mu0 = 0.0;
};

/// I_t (-1)^(1-A_t) / p_t(A_t | H_t) * {Y - p_t(0|H_t) mu1 - p_t(1|H_t) mu0}.
/// Zero at ineligible rows, where prob is never read. Throws ValidationError
/// when an eligible row's probability is outside (0, 1).
double residual_term(const DecisionRow& row, double outcome, double mu1, double mu0);

/// Per-row ingredients of the estimating function, in person-major row order.
struct PhiTerms {
  Vector ipw;                        ///< U_t, zero where ineligible
  Matrix features;                   ///< f(t, S_t) for every row
  std::vector<double> weights;       ///< omega(t), indexed by t - 1
  std::vector<int> t;                ///< decision point of each row
  std::vector<std::size_t> offsets;  ///< first row of each person; persons() + 1 entries

  std::size_t persons() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t dimension() const noexcept { return static_cast<std::size_t>(features.cols()); }
};

PhiTerms make_phi_terms(const MrtDataset& ds, std::span<const MuPrediction> mu, const EstimandSpec& spec);

/// Terms of the preliminary (pure inverse-probability-weighted) estimating function.
PhiTerms make_xi_terms(const MrtDataset& ds, const EstimandSpec& spec);

/// phi(beta) for one person: sum_t omega(t) [U_t - f' beta] f. The centering
/// part contributes at every decision point, eligible or not.
Vector phi_person(const PhiTerms& terms, std::size_t person, const Vector& beta);

/// Weighted averages over persons of sum_t omega f f' (the bread, which is
/// -d phi / d beta) and of sum_t omega U f (the score at beta = 0).
struct EquationMoments {
  Matrix bread;
  Vector score;
};

/// Person weights 1/n.
std::vector<double> uniform_person_weights(std::size_t n);
/// Person weights 1/(K n_k), which turn a weighted sum into K^-1 sum_k P_{n,k}.
std::vector<double> crossfit_person_weights(const FoldAssignment& folds);

EquationMoments equation_moments(const PhiTerms& terms, std::span<const double> person_weights);

inline constexpr double kMinBreadRcond = 1e-10;

/// Closed-form root of the (affine) estimating equation.
Vector solve_beta(const PhiTerms& terms, std::span<const double> person_weights);
Vector solve_beta(const MrtDataset& ds, std::span<const MuPrediction> mu, const EstimandSpec& spec);

/// B^-1 M B^-T / n: the covariance of the estimate (not of sqrt(n) times it).
Matrix sandwich_variance(const PhiTerms& terms, const Vector& beta, std::span<const double> person_weights);
Matrix sandwich_variance(const MrtDataset& ds, const Vector& beta, std::span<const MuPrediction> mu,
                         const EstimandSpec& spec, const FoldAssignment* folds = nullptr);

struct EstimationConfig {
  EstimandSpec estimand = EstimandSpec::marginal();
  LearnerSpec nuisance;
  int crossfit_K = 0;  ///< 0 disables cross-fitting
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  bool t_quantile = false;  ///< t_{n-p} critical values instead of normal
  double clip = kDefaultClip;
};

struct DceeDiagnostics {
  double bread_condition = 0.0;
  double max_residual = 0.0;  ///< max |P_n phi(beta_hat)|
  std::uint64_t seed = 0;
  std::size_t persons = 0;
  std::size_t rows = 0;
  std::vector<int> fallback_folds;  ///< folds whose nuisance fit fell back to a simpler learner
};

struct DceeFit {
  std::vector<std::string> names;
  Vector beta;
  Matrix vcov;
  Vector se;
  std::vector<std::array<double, 2>> ci;
  double ci_level = 0.95;
  int crossfit_K = 0;
  DceeDiagnostics diagnostics;
};

/// Two-stage estimator: nuisance fit, then closed-form solve and sandwich
/// variance. crossfit_K > 0 selects the cross-fitted variant.
DceeFit estimate_dcee(const MrtDataset& ds, const EstimationConfig& config);

/// Stage 2 only, with caller-supplied nuisance predictions (one per row).
/// `folds` switches the averaging to the per-fold form.
DceeFit fit_with_predictions(const MrtDataset& ds, const EstimandSpec& spec, std::span<const MuPrediction> mu,
                             const FoldAssignment* folds = nullptr, double ci_level = 0.95, bool t_quantile = false);

/// Nuisance predictions for every row: a single model, or fold-specific
/// models fitted on the complement of each fold. Fills `fallback_folds`.
std::vector<MuPrediction> predict_rows(const MrtDataset& ds, const OutcomeModel& model);
std::vector<MuPrediction> crossfit_predictions(const MrtDataset& ds, const FoldAssignment& folds,
                                               const LearnerSpec& learner, std::vector<int>* fallback_folds = nullptr);

/// Root of the preliminary estimating function.
Vector xi_estimate(const MrtDataset& ds, const EstimandSpec& spec);

/// Two-sided critical value for the given confidence level.
double critical_value(double level, bool t_quantile = false, double dof = 0.0);

}  // namespace dcee
