#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dcee/bspline.hpp"
#include "dcee/linalg.hpp"

namespace dcee {

class MrtDataset;

enum class TermKind {
  intercept,       ///< 1
  polynomial,      ///< (t - offset)^k, k = 1..degree
  bspline,         ///< B-spline basis in day = floor((t - 1) / period) + 1
  moderator,       ///< S value
  moderator_time,  ///< S * (t - offset)^k, k = 1..degree
};

struct FeatureTerm {
  TermKind kind = TermKind::intercept;
  int degree = 1;
  int offset = 1;
  int df = 0;
  int period = 1;
  std::string moderator;

  static FeatureTerm intercept() { return {}; }
  static FeatureTerm polynomial(int degree, int offset = 1);
  static FeatureTerm bspline(int df, int period = 1);
  static FeatureTerm moderator_main(std::string name);
  static FeatureTerm moderator_time(std::string name, int degree = 1, int offset = 1);
};

enum class WeightKind { uniform, point_mass, explicit_values };

struct WeightSpec {
  WeightKind kind = WeightKind::uniform;
  int t0 = 1;
  std::vector<double> values;

  static WeightSpec uniform() { return {}; }
  static WeightSpec point_mass(int t0) { return {WeightKind::point_mass, t0, {}}; }
  static WeightSpec explicit_values(std::vector<double> v) { return {WeightKind::explicit_values, 1, std::move(v)}; }
};

/// Defines the projection target: moderators S_t, feature map f(t, S_t) and
/// the decision-point weights omega(t).
struct EstimandSpec {
  std::vector<std::string> moderators;
  std::vector<FeatureTerm> terms;
  WeightSpec weight;

  /// f = 1, omega uniform.
  static EstimandSpec marginal();
  /// f = (1, S), omega uniform.
  static EstimandSpec moderated_by(const std::string& moderator);
};

/// EstimandSpec compiled against a horizon and a covariate layout.
class FeatureMap {
 public:
  FeatureMap(const EstimandSpec& spec, int horizon, std::span<const std::string> covariate_names);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  /// Covariate columns of the moderators, in spec order.
  const std::vector<std::size_t>& moderator_columns() const noexcept { return moderator_columns_; }

  /// f(t, S_t) from a full covariate row.
  void evaluate(int t, std::span<const double> covariates, std::span<double> out) const;
  Vector evaluate(int t, std::span<const double> covariates) const;

 private:
  struct Compiled {
    FeatureTerm term;
    std::size_t column = 0;  // moderator covariate column
    BSplineBasis basis;
  };
  std::vector<Compiled> terms_;
  std::vector<std::size_t> moderator_columns_;
  std::vector<std::string> names_;
  std::size_t dimension_ = 0;
  int horizon_ = 0;
};

/// f(t, S_t) for every row of the dataset, eligible or not, in person-major row order.
Matrix build_features(const MrtDataset& ds, const EstimandSpec& spec);

/// omega(1..T); entries nonnegative and summing to one.
std::vector<double> build_weights(int horizon, const WeightSpec& weight);
inline std::vector<double> build_weights(int horizon, const EstimandSpec& spec) {
  return build_weights(horizon, spec.weight);
}

}  // namespace dcee
