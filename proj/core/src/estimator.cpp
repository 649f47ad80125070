#include "dcee/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "dcee/error.hpp"

namespace dcee {

double residual_term(const DecisionRow& row, double outcome, double mu1, double mu0) {
  if (row.elig == 0) return 0.0;
  const double p1 = row.prob;
  if (!(p1 > 0.0 && p1 < 1.0)) {
    std::ostringstream msg;
    msg << "randomization probability " << p1 << " outside (0, 1) at eligible decision point t=" << row.t;
    throw ValidationError(msg.str());
  }
  const double p0 = 1.0 - p1;
  const double sign = row.treat == 1 ? 1.0 : -1.0;
  const double p_observed = row.treat == 1 ? p1 : p0;
  return sign / p_observed * (outcome - p0 * mu1 - p1 * mu0);
}

namespace {

PhiTerms skeleton(const MrtDataset& ds, const EstimandSpec& spec) {
  PhiTerms terms;
  terms.features = build_features(ds, spec);
  terms.weights = build_weights(ds.horizon(), spec.weight);
  terms.offsets = ds.row_offsets();
  terms.ipw = Vector::Zero(static_cast<Eigen::Index>(ds.row_count()));
  terms.t.reserve(ds.row_count());
  for (const auto& traj : ds.trajectories()) {
    for (const auto& row : traj.rows) {
      if (row.t < 1 || row.t > ds.horizon()) {
        throw ValidationError("person " + traj.person_id + " has decision point " + std::to_string(row.t) +
                              " outside 1..T");
      }
      terms.t.push_back(row.t);
    }
  }
  return terms;
}

}  // namespace

PhiTerms make_phi_terms(const MrtDataset& ds, std::span<const MuPrediction> mu, const EstimandSpec& spec) {
  if (mu.size() != ds.row_count()) {
    throw ValidationError("nuisance predictions: expected " + std::to_string(ds.row_count()) + " rows, got " +
                          std::to_string(mu.size()));
  }
  PhiTerms terms = skeleton(ds, spec);
  Eigen::Index k = 0;
  for (const auto& traj : ds.trajectories()) {
    for (const auto& row : traj.rows) {
      const auto& m = mu[static_cast<std::size_t>(k)];
      terms.ipw(k) = row.elig ? residual_term(row, traj.outcome, m.mu1, m.mu0) : 0.0;
      ++k;
    }
  }
  return terms;
}

PhiTerms make_xi_terms(const MrtDataset& ds, const EstimandSpec& spec) {
  PhiTerms terms = skeleton(ds, spec);
  Eigen::Index k = 0;
  for (const auto& traj : ds.trajectories()) {
    const double y = traj.outcome;
    for (const auto& row : traj.rows) {
      if (row.elig && !(row.prob > 0.0 && row.prob < 1.0)) {
        throw ValidationError("randomization probability outside (0, 1) at an eligible row of person " +
                              traj.person_id);
      }
      // P(A_t = I_t | H_t) and P(A_t = 0 | H_t); both are 1 when ineligible
      const double p_match = row.elig ? row.prob : 1.0;
      const double p_zero = row.elig ? 1.0 - row.prob : 1.0;
      const double treated_part = row.treat == row.elig ? y / p_match : 0.0;
      const double control_part = row.treat == 0 ? y / p_zero : 0.0;
      terms.ipw(k++) = treated_part - control_part;
    }
  }
  return terms;
}

Vector phi_person(const PhiTerms& terms, std::size_t person, const Vector& beta) {
  if (person >= terms.persons()) throw ValidationError("person index out of range");
  if (static_cast<std::size_t>(beta.size()) != terms.dimension()) {
    throw ValidationError("beta has dimension " + std::to_string(beta.size()) + ", features have " +
                          std::to_string(terms.dimension()));
  }
  Vector phi = Vector::Zero(beta.size());
  for (std::size_t r = terms.offsets[person]; r < terms.offsets[person + 1]; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const double w = terms.weights[static_cast<std::size_t>(terms.t[r] - 1)];
    const auto f = terms.features.row(row);
    phi += (w * (terms.ipw(row) - f.dot(beta))) * f.transpose();
  }
  return phi;
}

std::vector<double> uniform_person_weights(std::size_t n) {
  if (n == 0) throw ValidationError("no persons");
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

std::vector<double> crossfit_person_weights(const FoldAssignment& folds) {
  const auto sizes = folds.sizes();
  std::vector<double> w(folds.fold.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto k = static_cast<std::size_t>(folds.fold[i]);
    w[i] = 1.0 / static_cast<double>(static_cast<std::size_t>(folds.K) * sizes[k]);
  }
  return w;
}

EquationMoments equation_moments(const PhiTerms& terms, std::span<const double> person_weights) {
  const auto n = terms.persons();
  if (person_weights.size() != n) throw ValidationError("person weights do not match the number of persons");
  const auto p = static_cast<Eigen::Index>(terms.dimension());
  EquationMoments m{Matrix::Zero(p, p), Vector::Zero(p)};
  Matrix person_bread(p, p);
  Vector person_score(p);
  for (std::size_t i = 0; i < n; ++i) {
    person_bread.setZero();
    person_score.setZero();
    for (std::size_t r = terms.offsets[i]; r < terms.offsets[i + 1]; ++r) {
      const auto row = static_cast<Eigen::Index>(r);
      const double w = terms.weights[static_cast<std::size_t>(terms.t[r] - 1)];
      if (w == 0.0) continue;
      const auto f = terms.features.row(row);
      person_bread.noalias() += w * f.transpose() * f;
      person_score.noalias() += (w * terms.ipw(row)) * f.transpose();
    }
    m.bread += person_weights[i] * person_bread;
    m.score += person_weights[i] * person_score;
  }
  return m;
}

Vector solve_beta(const PhiTerms& terms, std::span<const double> person_weights) {
  const auto m = equation_moments(terms, person_weights);
  return solve_checked(m.bread, m.score, kMinBreadRcond, "bread matrix P_n sum_t omega f f'");
}

Vector solve_beta(const MrtDataset& ds, std::span<const MuPrediction> mu, const EstimandSpec& spec) {
  const auto terms = make_phi_terms(ds, mu, spec);
  return solve_beta(terms, uniform_person_weights(terms.persons()));
}

Matrix sandwich_variance(const PhiTerms& terms, const Vector& beta, std::span<const double> person_weights) {
  const auto n = terms.persons();
  const auto m = equation_moments(terms, person_weights);
  const Matrix bread_inv = inverse_checked(m.bread, kMinBreadRcond, "bread matrix P_n sum_t omega f f'");
  const auto p = static_cast<Eigen::Index>(terms.dimension());
  Matrix meat = Matrix::Zero(p, p);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector phi = phi_person(terms, i, beta);
    meat.noalias() += person_weights[i] * phi * phi.transpose();
  }
  Matrix v = bread_inv * meat * bread_inv.transpose() / static_cast<double>(n);
  return 0.5 * (v + v.transpose());
}

Matrix sandwich_variance(const MrtDataset& ds, const Vector& beta, std::span<const MuPrediction> mu,
                         const EstimandSpec& spec, const FoldAssignment* folds) {
  const auto terms = make_phi_terms(ds, mu, spec);
  const auto w = folds ? crossfit_person_weights(*folds) : uniform_person_weights(terms.persons());
  return sandwich_variance(terms, beta, w);
}

double critical_value(double level, bool t_quantile, double dof) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError("confidence level must be in (0, 1)");
  const double q = 0.5 * (1.0 + level);
  if (t_quantile) {
    if (!(dof >= 1.0)) throw ValidationError("t quantile needs at least one degree of freedom");
    return boost::math::quantile(boost::math::students_t(dof), q);
  }
  return boost::math::quantile(boost::math::normal(), q);
}

namespace {

DceeFit finish_fit(const PhiTerms& terms, std::span<const double> person_weights, std::vector<std::string> names,
                   double ci_level, bool t_quantile) {
  const auto m = equation_moments(terms, person_weights);
  DceeFit fit;
  fit.names = std::move(names);
  fit.diagnostics.bread_condition = condition_number(m.bread);
  fit.beta = solve_checked(m.bread, m.score, kMinBreadRcond, "bread matrix P_n sum_t omega f f'");
  const Vector residual = m.score - m.bread * fit.beta;
  fit.diagnostics.max_residual = residual.cwiseAbs().maxCoeff();
  const double tolerance = 1e-10 * (1.0 + m.score.cwiseAbs().maxCoeff());
  if (!(fit.diagnostics.max_residual <= tolerance)) {
    std::ostringstream msg;
    msg << "estimating equation residual " << fit.diagnostics.max_residual << " exceeds tolerance " << tolerance;
    throw NumericalError(msg.str());
  }
  fit.vcov = sandwich_variance(terms, fit.beta, person_weights);
  fit.se = fit.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  const double n = static_cast<double>(terms.persons());
  const double z = critical_value(ci_level, t_quantile, n - static_cast<double>(fit.beta.size()));
  fit.ci_level = ci_level;
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    fit.ci.push_back({fit.beta(j) - z * fit.se(j), fit.beta(j) + z * fit.se(j)});
  }
  fit.diagnostics.persons = terms.persons();
  fit.diagnostics.rows = static_cast<std::size_t>(terms.ipw.size());
  return fit;
}

template <class E>
[[noreturn]] void rethrow_with_seed(const E& e, std::uint64_t seed) {
  throw E(std::string(e.what()) + " (seed " + std::to_string(seed) + ")");
}

}  // namespace

DceeFit fit_with_predictions(const MrtDataset& ds, const EstimandSpec& spec, std::span<const MuPrediction> mu,
                             const FoldAssignment* folds, double ci_level, bool t_quantile) {
  const auto terms = make_phi_terms(ds, mu, spec);
  const auto w = folds ? crossfit_person_weights(*folds) : uniform_person_weights(terms.persons());
  const FeatureMap map(spec, ds.horizon(), ds.covariate_names());
  DceeFit fit = finish_fit(terms, w, map.names(), ci_level, t_quantile);
  fit.crossfit_K = folds ? folds->K : 0;
  if (folds) fit.diagnostics.seed = folds->seed;
  return fit;
}

std::vector<MuPrediction> predict_rows(const MrtDataset& ds, const OutcomeModel& model) {
  std::vector<MuPrediction> out;
  out.reserve(ds.row_count());
  for (const auto& traj : ds.trajectories()) {
    for (std::size_t r = 0; r < traj.rows.size(); ++r) {
      // mu is only consumed at eligible rows
      if (traj.rows[r].elig) {
        out.push_back({model.predict(traj, r, 1), model.predict(traj, r, 0)});
      } else {
        out.push_back({0.0, 0.0});
      }
    }
  }
  return out;
}

std::vector<MuPrediction> crossfit_predictions(const MrtDataset& ds, const FoldAssignment& folds,
                                               const LearnerSpec& learner, std::vector<int>* fallback_folds) {
  if (folds.fold.size() != ds.size()) throw ValidationError("fold assignment does not match the dataset");
  const auto offsets = ds.row_offsets();
  std::vector<MuPrediction> out(ds.row_count());
  for (int k = 0; k < folds.K; ++k) {
    const auto train = folds.complement(k);
    std::optional<OutcomeModel> model;
    try {
      model.emplace(fit_outcome_model(ds, train, learner));
    } catch (const NumericalError&) {
      // an arm too small to fit on this fold's training persons
      if (fallback_folds) fallback_folds->push_back(k);
      LearnerSpec simple;
      simple.kind = LearnerKind::mean_only;
      try {
        model.emplace(fit_outcome_model(ds, train, simple));
      } catch (const NumericalError&) {
        double sum = 0.0;
        for (std::size_t i : train) sum += ds[i].outcome;
        simple.kind = LearnerKind::constant;
        simple.constant_value = sum / static_cast<double>(train.size());
        model.emplace(fit_outcome_model(ds, train, simple));
      }
    }
    for (std::size_t i : folds.members(k)) {
      const auto& traj = ds[i];
      for (std::size_t r = 0; r < traj.rows.size(); ++r) {
        if (!traj.rows[r].elig) continue;
        out[offsets[i] + r] = {model->predict(traj, r, 1), model->predict(traj, r, 0)};
      }
    }
  }
  return out;
}

DceeFit estimate_dcee(const MrtDataset& ds, const EstimationConfig& config) {
  try {
    config.nuisance.check();
    if (config.crossfit_K != 0 && (config.crossfit_K < 2 || static_cast<std::size_t>(config.crossfit_K) > ds.size())) {
      throw ValidationError("crossfit_K must be 0 or in [2, n]; got " + std::to_string(config.crossfit_K) +
                            " with n=" + std::to_string(ds.size()));
    }
    std::optional<std::vector<std::string>> used = config.nuisance.covariates;
    if (used) {
      if (config.nuisance.continuous_covariates) {
        used->insert(used->end(), config.nuisance.continuous_covariates->begin(),
                     config.nuisance.continuous_covariates->end());
      }
      used->insert(used->end(), config.estimand.moderators.begin(), config.estimand.moderators.end());
    }
    if (config.nuisance.kind == LearnerKind::mean_only || config.nuisance.kind == LearnerKind::constant) {
      used = config.estimand.moderators;
    }
    const auto report = validate(ds, config.clip, used);
    if (!report.ok()) {
      throw ValidationError("dataset failed validation (" + std::to_string(report.issues.size()) + " issues):\n" +
                            report.summary());
    }

    if (config.crossfit_K == 0) {
      const auto model = fit_outcome_model(ds, config.nuisance);
      const auto mu = predict_rows(ds, model);
      DceeFit fit = fit_with_predictions(ds, config.estimand, mu, nullptr, config.ci_level, config.t_quantile);
      fit.diagnostics.seed = config.seed;
      return fit;
    }
    const auto folds = make_folds(ds, config.crossfit_K, config.seed);
    std::vector<int> fallback;
    const auto mu = crossfit_predictions(ds, folds, config.nuisance, &fallback);
    DceeFit fit = fit_with_predictions(ds, config.estimand, mu, &folds, config.ci_level, config.t_quantile);
    fit.diagnostics.fallback_folds = std::move(fallback);
    fit.diagnostics.seed = config.seed;
    return fit;
  } catch (const ValidationError& e) {
    rethrow_with_seed(e, config.seed);
  } catch (const NumericalError& e) {
    rethrow_with_seed(e, config.seed);
  }
}

Vector xi_estimate(const MrtDataset& ds, const EstimandSpec& spec) {
  const auto terms = make_xi_terms(ds, spec);
  return solve_beta(terms, uniform_person_weights(terms.persons()));
}

}  // namespace dcee
