#include "dcee/bspline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dcee/error.hpp"

namespace dcee {

BSplineBasis::BSplineBasis(double lower, double upper, std::vector<double> interior_knots, int degree)
    : lower_(lower), upper_(upper), interior_(std::move(interior_knots)), degree_(degree) {
  if (degree_ < 1) throw ValidationError("spline degree must be at least 1");
  if (!(upper_ > lower_)) throw ValidationError("spline boundary knots must satisfy lower < upper");
  if (!std::is_sorted(interior_.begin(), interior_.end())) {
    throw ValidationError("spline interior knots must be sorted");
  }
  for (double k : interior_) {
    if (!(k > lower_ && k < upper_)) throw ValidationError("spline interior knot outside the boundary");
  }
  knots_.assign(static_cast<std::size_t>(degree_ + 1), lower_);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree_ + 1), upper_);
}

BSplineBasis BSplineBasis::from_sample(std::span<const double> values, int df) {
  if (df < 1) throw ValidationError("spline degrees of freedom must be at least 1");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw ValidationError("spline input contains non-finite values");
  }
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> uniq(sorted);
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (static_cast<int>(uniq.size()) < std::max(df, 2)) {
    throw ValidationError("spline with " + std::to_string(df) + " degrees of freedom needs at least " +
                          std::to_string(std::max(df, 2)) + " distinct values, got " +
                          std::to_string(uniq.size()));
  }
  const int degree = std::min(3, df);
  const int n_interior = df - degree;
  std::vector<double> interior;
  interior.reserve(static_cast<std::size_t>(n_interior));
  const auto n = static_cast<double>(sorted.size());
  for (int k = 1; k <= n_interior; ++k) {
    const double prob = static_cast<double>(k) / (n_interior + 1);
    const double h = (n - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    interior.push_back(sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]));
  }
  // tied quantiles on coarse data would create repeated knots; spread them
  // onto the distinct values instead so the basis stays full rank
  interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
  if (static_cast<int>(interior.size()) < n_interior) {
    interior.clear();
    for (int k = 1; k <= n_interior; ++k) {
      const auto idx = static_cast<std::size_t>(
          std::lround(static_cast<double>(k) * (uniq.size() - 1) / (n_interior + 1)));
      interior.push_back(uniq[idx]);
    }
    interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
  }
  interior.erase(std::remove_if(interior.begin(), interior.end(),
                                [&](double k) { return !(k > uniq.front() && k < uniq.back()); }),
                 interior.end());
  if (static_cast<int>(interior.size()) != n_interior) {
    throw ValidationError("cannot place " + std::to_string(n_interior) +
                          " distinct interior spline knots on this data");
  }
  return BSplineBasis(uniq.front(), uniq.back(), std::move(interior), degree);
}

void BSplineBasis::evaluate(double x, std::span<double> out) const {
  const int m = size();
  if (static_cast<int>(out.size()) != m) throw ValidationError("spline output span has wrong size");
  x = std::clamp(x, lower_, upper_);
  const int p = degree_;
  // knot span: largest i with knots_[i] <= x < knots_[i+1], capped at the last
  // non-degenerate span so x == upper belongs to it
  const int last_span = static_cast<int>(knots_.size()) - p - 2;
  int span = p;
  while (span < last_span && x >= knots_[static_cast<std::size_t>(span + 1)]) ++span;

  // Cox-de Boor triangular evaluation of the p + 1 non-zero basis functions
  std::vector<double> values(static_cast<std::size_t>(p + 1), 0.0);
  std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
  values[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - knots_[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots_[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom == 0.0 ? 0.0 : values[r] / denom;
      values[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    values[j] = saved;
  }
  std::fill(out.begin(), out.end(), 0.0);
  // full basis index of values[r] is span - p + r; column 0 of the full basis is dropped
  for (int r = 0; r <= p; ++r) {
    const int full = span - p + r;
    if (full >= 1 && full <= m) out[static_cast<std::size_t>(full - 1)] = values[r];
  }
}

std::vector<double> BSplineBasis::evaluate(double x) const {
  std::vector<double> out(static_cast<std::size_t>(size()));
  evaluate(x, out);
  return out;
}

}  // namespace dcee
