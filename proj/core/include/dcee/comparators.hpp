#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dcee/data.hpp"
#include "dcee/estimand.hpp"
#include "dcee/linalg.hpp"

namespace dcee {

enum class ComparatorMethod { gee, wcls };

std::string to_string(ComparatorMethod method);

struct ComparatorOptions {
  /// Control covariates; nullopt uses every dataset covariate.
  std::optional<std::vector<std::string>> controls;
  /// WCLS centering probability; nullopt uses the treatment rate among eligible rows.
  std::optional<double> ptilde;
  double ci_level = 0.95;
};

/// Treatment-term coefficients with person-clustered sandwich inference.
struct ComparatorFit {
  ComparatorMethod method = ComparatorMethod::gee;
  std::vector<std::string> names;
  Vector beta;
  Matrix vcov;
  Vector se;
  std::vector<std::array<double, 2>> ci;
  double ci_level = 0.95;
  double ptilde = 0.0;  ///< WCLS only
};

/// Pooled least squares of Y on [1, controls, A_t f(t, S_t)] over every
/// decision point (working independence). Reports the A_t f terms.
ComparatorFit estimate_gee(const MrtDataset& ds, const EstimandSpec& spec, const ComparatorOptions& options = {});

/// Weighted least squares of Y on [1, controls, (A_t - ptilde) f(t, S_t)]
/// over eligible decision points, weighted by wcls_weight. Reports the
/// centered treatment terms.
ComparatorFit estimate_wcls(const MrtDataset& ds, const EstimandSpec& spec, const ComparatorOptions& options = {});

ComparatorFit estimate_comparator(ComparatorMethod method, const MrtDataset& ds, const EstimandSpec& spec,
                                  const ComparatorOptions& options = {});

/// ptilde^A (1 - ptilde)^(1 - A) / p_t(A | H_t).
double wcls_weight(int treat, double prob, double ptilde);

}  // namespace dcee
