#pragma once

#include <span>
#include <vector>

namespace dcee {

/// B-spline basis without the leading column, matching the usual regression
/// convention where an intercept is supplied separately. `df` columns,
/// degree min(3, df), df - degree interior knots.
class BSplineBasis {
 public:
  BSplineBasis() = default;
  BSplineBasis(double lower, double upper, std::vector<double> interior_knots, int degree);

  /// Places interior knots at empirical quantiles of `values` (type-7
  /// quantiles) and boundary knots at their range. Requires at least `df`
  /// distinct values.
  static BSplineBasis from_sample(std::span<const double> values, int df);

  int size() const noexcept { return static_cast<int>(interior_.size()) + degree_; }
  int degree() const noexcept { return degree_; }
  double lower() const noexcept { return lower_; }
  double upper() const noexcept { return upper_; }
  const std::vector<double>& interior_knots() const noexcept { return interior_; }

  /// Writes size() basis values at x. Points outside the boundary knots are
  /// clamped to the nearest boundary.
  void evaluate(double x, std::span<double> out) const;
  std::vector<double> evaluate(double x) const;

 private:
  double lower_ = 0.0;
  double upper_ = 1.0;
  std::vector<double> interior_;
  int degree_ = 3;
  std::vector<double> knots_;  // full knot vector with repeated boundaries
};

}  // namespace dcee
