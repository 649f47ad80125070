#include "dcee/comparators.hpp"

#include <cmath>

#include "dcee/error.hpp"
#include "dcee/estimator.hpp"

namespace dcee {

std::string to_string(ComparatorMethod method) { return method == ComparatorMethod::gee ? "gee" : "wcls"; }

double wcls_weight(int treat, double prob, double ptilde) {
  if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("WCLS weight needs prob in (0, 1)");
  return treat == 1 ? ptilde / prob : (1.0 - ptilde) / (1.0 - prob);
}

namespace {

std::vector<std::size_t> control_columns(const MrtDataset& ds, const ComparatorOptions& options) {
  std::vector<std::size_t> cols;
  if (!options.controls) {
    for (std::size_t j = 0; j < ds.covariate_names().size(); ++j) cols.push_back(j);
  } else {
    for (const auto& name : *options.controls) cols.push_back(ds.require_covariate(name));
  }
  return cols;
}

/// Weighted least squares with person-clustered sandwich covariance. Rows of
/// `x` are grouped by person through `cluster_end` (exclusive row bounds).
ComparatorFit clustered_wls(const Matrix& x, const Vector& y, const Vector& w,
                            const std::vector<std::size_t>& cluster_end, Eigen::Index first_effect) {
  const Eigen::Index k = x.cols();
  const Matrix xtw = x.transpose() * w.asDiagonal();
  const Matrix xtwx = xtw * x;
  const Vector coef = solve_checked(xtwx, xtw * y, 1e-12, "comparator design X'WX");
  const Vector resid = y - x * coef;
  Matrix meat = Matrix::Zero(k, k);
  Vector u(k);
  std::size_t start = 0;
  for (std::size_t end : cluster_end) {
    u.setZero();
    for (std::size_t r = start; r < end; ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      u += (w(row) * resid(row)) * x.row(row).transpose();
    }
    meat.noalias() += u * u.transpose();
    start = end;
  }
  const Matrix inv = inverse_checked(xtwx, 1e-12, "comparator design X'WX");
  Matrix v = inv * meat * inv.transpose();
  v = (0.5 * (v + v.transpose())).eval();
  ComparatorFit fit;
  const Eigen::Index p = k - first_effect;
  fit.beta = coef.tail(p);
  fit.vcov = v.bottomRightCorner(p, p);
  fit.se = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

void attach_ci(ComparatorFit& fit, double level) {
  const double z = critical_value(level);
  fit.ci_level = level;
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    fit.ci.push_back({fit.beta(j) - z * fit.se(j), fit.beta(j) + z * fit.se(j)});
  }
}

}  // namespace

ComparatorFit estimate_gee(const MrtDataset& ds, const EstimandSpec& spec, const ComparatorOptions& options) {
  if (ds.size() == 0) throw ValidationError("empty dataset");
  const FeatureMap map(spec, ds.horizon(), ds.covariate_names());
  const auto controls = control_columns(ds, options);
  const auto p = static_cast<Eigen::Index>(map.dimension());
  const auto c = static_cast<Eigen::Index>(controls.size());
  const auto n_rows = static_cast<Eigen::Index>(ds.row_count());
  Matrix x = Matrix::Zero(n_rows, 1 + c + p);
  Vector y(n_rows);
  std::vector<std::size_t> ends;
  Vector f(p);
  Eigen::Index r = 0;
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t k = 0; k < traj.rows.size(); ++k, ++r) {
      const auto covs = traj.covariates(k);
      x(r, 0) = 1.0;
      for (Eigen::Index j = 0; j < c; ++j) x(r, 1 + j) = covs[controls[static_cast<std::size_t>(j)]];
      if (traj.rows[k].treat) {
        map.evaluate(traj.rows[k].t, covs, {f.data(), static_cast<std::size_t>(p)});
        x.block(r, 1 + c, 1, p) = f.transpose();
      }
      y(r) = traj.outcome;
    }
    ends.push_back(static_cast<std::size_t>(r));
  }
  ComparatorFit fit = clustered_wls(x, y, Vector::Ones(n_rows), ends, 1 + c);
  fit.method = ComparatorMethod::gee;
  for (const auto& name : map.names()) fit.names.push_back("A:" + name);
  attach_ci(fit, options.ci_level);
  return fit;
}

ComparatorFit estimate_wcls(const MrtDataset& ds, const EstimandSpec& spec, const ComparatorOptions& options) {
  if (ds.size() == 0) throw ValidationError("empty dataset");
  const FeatureMap map(spec, ds.horizon(), ds.covariate_names());
  const auto controls = control_columns(ds, options);
  std::size_t eligible = 0, treated = 0;
  for (const auto& traj : ds.trajectories()) {
    for (const auto& row : traj.rows) {
      eligible += static_cast<std::size_t>(row.elig);
      treated += static_cast<std::size_t>(row.elig && row.treat);
    }
  }
  if (eligible == 0) throw NumericalError("WCLS: no eligible decision points");
  const double ptilde = options.ptilde.value_or(static_cast<double>(treated) / static_cast<double>(eligible));
  if (!(ptilde > 0.0 && ptilde < 1.0)) throw ValidationError("WCLS ptilde must be in (0, 1)");

  const auto p = static_cast<Eigen::Index>(map.dimension());
  const auto c = static_cast<Eigen::Index>(controls.size());
  const auto n_rows = static_cast<Eigen::Index>(eligible);
  Matrix x(n_rows, 1 + c + p);
  Vector y(n_rows), w(n_rows), f(p);
  std::vector<std::size_t> ends;
  Eigen::Index r = 0;
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t k = 0; k < traj.rows.size(); ++k) {
      const auto& row = traj.rows[k];
      if (!row.elig) continue;
      const auto covs = traj.covariates(k);
      x(r, 0) = 1.0;
      for (Eigen::Index j = 0; j < c; ++j) x(r, 1 + j) = covs[controls[static_cast<std::size_t>(j)]];
      map.evaluate(row.t, covs, {f.data(), static_cast<std::size_t>(p)});
      x.block(r, 1 + c, 1, p) = (row.treat - ptilde) * f.transpose();
      w(r) = wcls_weight(row.treat, row.prob, ptilde);
      y(r) = traj.outcome;
      ++r;
    }
    ends.push_back(static_cast<std::size_t>(r));
  }
  ComparatorFit fit = clustered_wls(x, y, w, ends, 1 + c);
  fit.method = ComparatorMethod::wcls;
  fit.ptilde = ptilde;
  for (const auto& name : map.names()) fit.names.push_back("A:" + name);
  attach_ci(fit, options.ci_level);
  return fit;
}

ComparatorFit estimate_comparator(ComparatorMethod method, const MrtDataset& ds, const EstimandSpec& spec,
                                  const ComparatorOptions& options) {
  return method == ComparatorMethod::gee ? estimate_gee(ds, spec, options) : estimate_wcls(ds, spec, options);
}

}  // namespace dcee
