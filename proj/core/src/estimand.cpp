#include "dcee/estimand.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dcee/data.hpp"
#include "dcee/error.hpp"

namespace dcee {

FeatureTerm FeatureTerm::polynomial(int degree, int offset) {
  FeatureTerm term;
  term.kind = TermKind::polynomial;
  term.degree = degree;
  term.offset = offset;
  return term;
}

FeatureTerm FeatureTerm::bspline(int df, int period) {
  FeatureTerm term;
  term.kind = TermKind::bspline;
  term.df = df;
  term.period = period;
  return term;
}

FeatureTerm FeatureTerm::moderator_main(std::string name) {
  FeatureTerm term;
  term.kind = TermKind::moderator;
  term.moderator = std::move(name);
  return term;
}

FeatureTerm FeatureTerm::moderator_time(std::string name, int degree, int offset) {
  FeatureTerm term;
  term.kind = TermKind::moderator_time;
  term.moderator = std::move(name);
  term.degree = degree;
  term.offset = offset;
  return term;
}

EstimandSpec EstimandSpec::marginal() {
  EstimandSpec spec;
  spec.terms = {FeatureTerm::intercept()};
  return spec;
}

EstimandSpec EstimandSpec::moderated_by(const std::string& moderator) {
  EstimandSpec spec;
  spec.moderators = {moderator};
  spec.terms = {FeatureTerm::intercept(), FeatureTerm::moderator_main(moderator)};
  return spec;
}

namespace {

int derived_time(int t, int period) { return (t - 1) / period + 1; }

std::string time_label(int offset) { return offset == 0 ? "t" : "(t-" + std::to_string(offset) + ")"; }

std::string power_label(const std::string& base, int k) {
  return k == 1 ? base : base + "^" + std::to_string(k);
}

}  // namespace

FeatureMap::FeatureMap(const EstimandSpec& spec, int horizon, std::span<const std::string> covariate_names)
    : horizon_(horizon) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  auto column_of = [&](const std::string& name) {
    for (std::size_t j = 0; j < covariate_names.size(); ++j) {
      if (covariate_names[j] == name) return j;
    }
    throw ValidationError("unknown covariate '" + name + "' in estimand");
  };
  for (const auto& m : spec.moderators) moderator_columns_.push_back(column_of(m));

  for (const auto& term : spec.terms) {
    Compiled c{term, 0, {}};
    switch (term.kind) {
      case TermKind::intercept:
        names_.push_back("(Intercept)");
        break;
      case TermKind::polynomial:
        if (term.degree < 1) throw ValidationError("polynomial term needs degree >= 1");
        for (int k = 1; k <= term.degree; ++k) names_.push_back(power_label(time_label(term.offset), k));
        break;
      case TermKind::bspline: {
        if (term.period < 1) throw ValidationError("bspline period must be >= 1");
        std::vector<double> values;
        for (int t = 1; t <= horizon; ++t) {
          const double d = derived_time(t, term.period);
          if (values.empty() || values.back() != d) values.push_back(d);
        }
        if (static_cast<int>(values.size()) < term.df) {
          throw ValidationError("bspline with df=" + std::to_string(term.df) + " needs at least that many distinct time values, got " +
                                std::to_string(values.size()));
        }
        c.basis = BSplineBasis::from_sample(values, term.df);
        const std::string var = term.period == 1 ? "t" : "day";
        for (int k = 1; k <= term.df; ++k) names_.push_back("bs(" + var + ")" + std::to_string(k));
        break;
      }
      case TermKind::moderator:
      case TermKind::moderator_time: {
        bool declared = false;
        for (const auto& m : spec.moderators) declared = declared || m == term.moderator;
        if (!declared) throw ValidationError("feature term uses '" + term.moderator + "' which is not a declared moderator");
        c.column = column_of(term.moderator);
        if (term.kind == TermKind::moderator) {
          names_.push_back(term.moderator);
        } else {
          if (term.degree < 1) throw ValidationError("moderator-time term needs degree >= 1");
          for (int k = 1; k <= term.degree; ++k) {
            names_.push_back(term.moderator + ":" + power_label(time_label(term.offset), k));
          }
        }
        break;
      }
    }
    terms_.push_back(std::move(c));
  }
  dimension_ = names_.size();
  if (dimension_ == 0) throw ValidationError("estimand must have at least one feature term");
}

void FeatureMap::evaluate(int t, std::span<const double> covariates, std::span<double> out) const {
  if (out.size() != dimension_) throw ValidationError("feature output span has wrong size");
  std::size_t k = 0;
  for (const auto& c : terms_) {
    switch (c.term.kind) {
      case TermKind::intercept:
        out[k++] = 1.0;
        break;
      case TermKind::polynomial: {
        const double base = t - c.term.offset;
        double power = 1.0;
        for (int d = 1; d <= c.term.degree; ++d) out[k++] = (power *= base);
        break;
      }
      case TermKind::bspline:
        c.basis.evaluate(derived_time(t, c.term.period), out.subspan(k, static_cast<std::size_t>(c.term.df)));
        k += static_cast<std::size_t>(c.term.df);
        break;
      case TermKind::moderator:
        out[k++] = covariates[c.column];
        break;
      case TermKind::moderator_time: {
        const double s = covariates[c.column];
        const double base = t - c.term.offset;
        double power = 1.0;
        for (int d = 1; d <= c.term.degree; ++d) out[k++] = s * (power *= base);
        break;
      }
    }
  }
}

Vector FeatureMap::evaluate(int t, std::span<const double> covariates) const {
  Vector f(static_cast<Eigen::Index>(dimension_));
  evaluate(t, covariates, std::span<double>(f.data(), dimension_));
  return f;
}

Matrix build_features(const MrtDataset& ds, const EstimandSpec& spec) {
  const FeatureMap map(spec, ds.horizon(), ds.covariate_names());
  const auto p = map.dimension();
  // row-major scratch so each row is a contiguous span
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(
      static_cast<Eigen::Index>(ds.row_count()), static_cast<Eigen::Index>(p));
  Eigen::Index row = 0;
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t i = 0; i < traj.rows.size(); ++i, ++row) {
      map.evaluate(traj.rows[i].t, traj.covariates(i), std::span<double>(f.row(row).data(), p));
    }
  }
  return f;
}

std::vector<double> build_weights(int horizon, const WeightSpec& weight) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  const auto T = static_cast<std::size_t>(horizon);
  switch (weight.kind) {
    case WeightKind::uniform:
      return std::vector<double>(T, 1.0 / horizon);
    case WeightKind::point_mass: {
      if (weight.t0 < 1 || weight.t0 > horizon) {
        throw ValidationError("point-mass weight t0=" + std::to_string(weight.t0) + " outside [1, " +
                              std::to_string(horizon) + "]");
      }
      std::vector<double> w(T, 0.0);
      w[static_cast<std::size_t>(weight.t0 - 1)] = 1.0;
      return w;
    }
    case WeightKind::explicit_values: {
      if (weight.values.size() != T) {
        throw ValidationError("explicit weight vector has length " + std::to_string(weight.values.size()) +
                              ", expected " + std::to_string(T));
      }
      double sum = 0.0;
      for (double v : weight.values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("weights must be finite and nonnegative");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "weights must sum to 1, got " << sum;
        throw ValidationError(msg.str());
      }
      return weight.values;
    }
  }
  throw ValidationError("unknown weight kind");
}

}  // namespace dcee
