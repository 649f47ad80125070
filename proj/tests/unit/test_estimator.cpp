#include <doctest.h>

#include <cmath>
#include <numeric>

#include "dcee/error.hpp"
#include "dcee/estimator.hpp"
#include "dcee/simulator.hpp"
#include "helpers.hpp"

using namespace dcee;

namespace {

/// Hand-built terms: one feature (f = 1), given U per row, given weights.
PhiTerms scalar_terms(const std::vector<std::vector<double>>& u_by_person, const std::vector<double>& weights) {
  PhiTerms terms;
  std::size_t rows = 0;
  for (const auto& u : u_by_person) rows += u.size();
  terms.ipw.resize(static_cast<Eigen::Index>(rows));
  terms.features = Matrix::Ones(static_cast<Eigen::Index>(rows), 1);
  terms.weights = weights;
  terms.offsets = {0};
  Eigen::Index k = 0;
  for (const auto& u : u_by_person) {
    for (std::size_t t = 0; t < u.size(); ++t) {
      terms.ipw(k++) = u[t];
      terms.t.push_back(static_cast<int>(t + 1));
    }
    terms.offsets.push_back(static_cast<std::size_t>(k));
  }
  return terms;
}

std::vector<MuPrediction> zero_mu(const MrtDataset& ds) { return std::vector<MuPrediction>(ds.row_count()); }

LearnerSpec constant_learner(double c) {
  LearnerSpec spec;
  spec.kind = LearnerKind::constant;
  spec.constant_value = c;
  return spec;
}

}  // namespace

TEST_SUITE("estimator") {
  TEST_CASE("residual_term examples") {
    CHECK(residual_term({1, 1, 1, 0.5}, 2.0, 0.0, 0.0) == 4.0);
    CHECK(residual_term({1, 1, 0, 0.5}, 2.0, 0.0, 0.0) == -4.0);
    CHECK(residual_term({1, 0, 0}, 2.0, 0.0, 0.0) == 0.0);
    CHECK(residual_term({1, 0, 1, 0.0}, 7.0, 3.0, 1.0) == 0.0);
    // Y - p(0) mu1 - p(1) mu0 with prob = 0.25, A = 1
    CHECK(residual_term({1, 1, 1, 0.25}, 5.0, 2.0, 4.0) == doctest::Approx((5.0 - 0.75 * 2.0 - 0.25 * 4.0) / 0.25));
    CHECK_THROWS_AS(residual_term({1, 1, 1, 1.0}, 1.0, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(residual_term({1, 1, 0, 0.0}, 1.0, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(residual_term({1, 1, 0, kMissing}, 1.0, 0.0, 0.0), ValidationError);
  }

  TEST_CASE("phi_person examples") {
    const Vector four = Vector::Constant(1, 4.0);
    CHECK(phi_person(scalar_terms({{4.0}}, {1.0}), 0, four)(0) == 0.0);
    CHECK(phi_person(scalar_terms({{4.0, 0.0}}, {0.5, 0.5}), 0, Vector::Zero(1))(0) == 2.0);
    // all-ineligible: U = 0 everywhere, only the centering term remains
    const double b = 1.75;
    const auto terms = scalar_terms({{0.0, 0.0, 0.0, 0.0}}, {0.25, 0.25, 0.25, 0.25});
    CHECK(phi_person(terms, 0, Vector::Constant(1, b))(0) == doctest::Approx(-b));
    CHECK_THROWS_AS(phi_person(terms, 0, Vector::Zero(2)), ValidationError);
  }

  TEST_CASE("ineligible rows keep the centering term") {
    MrtDataset ds({}, 2);
    ds.add(testing::make_traj("a", {{1, 0, 0}, {2, 0, 0}}, {}, 3.0));
    const auto terms = make_phi_terms(ds, zero_mu(ds), EstimandSpec::marginal());
    CHECK(terms.ipw(0) == 0.0);
    CHECK(terms.ipw(1) == 0.0);
    CHECK(phi_person(terms, 0, Vector::Constant(1, 2.0))(0) == doctest::Approx(-2.0));
  }

  TEST_CASE("solve_beta is the mean of U for f = 1, T = 1") {
    MrtDataset ds({}, 1);
    ds.add(testing::make_traj("a", {{1, 1, 1, 0.5}}, {}, 2.0));   // U = 4
    ds.add(testing::make_traj("b", {{1, 1, 0, 0.5}}, {}, 1.0));   // U = -2
    CHECK(solve_beta(ds, zero_mu(ds), EstimandSpec::marginal())(0) == doctest::Approx(1.0));
  }

  TEST_CASE("sandwich reduces to the variance of a mean") {
    const std::vector<double> u{4.0, -2.0, 3.5, 0.25, 1.0, -1.5, 2.0};
    std::vector<std::vector<double>> persons;
    for (double v : u) persons.push_back({v});
    const auto terms = scalar_terms(persons, {1.0});
    const auto w = uniform_person_weights(u.size());
    const Vector beta = solve_beta(terms, w);
    const double n = static_cast<double>(u.size());
    const double mean = std::accumulate(u.begin(), u.end(), 0.0) / n;
    CHECK(beta(0) == doctest::Approx(mean).epsilon(1e-14));
    double ss = 0.0;
    for (double v : u) ss += (v - mean) * (v - mean);
    CHECK(sandwich_variance(terms, beta, w)(0, 0) == doctest::Approx(ss / n / n).epsilon(1e-13));

    // U and -U paired, beta = 0
    std::vector<std::vector<double>> sym;
    double sq = 0.0;
    for (double v : u) {
      sym.push_back({v});
      sym.push_back({-v});
      sq += 2 * v * v;
    }
    const auto st = scalar_terms(sym, {1.0});
    const auto sw = uniform_person_weights(sym.size());
    const double m = static_cast<double>(sym.size());
    CHECK(solve_beta(st, sw)(0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(sandwich_variance(st, Vector::Zero(1), sw)(0, 0) == doctest::Approx(sq / m / m).epsilon(1e-13));
  }

  TEST_CASE("affinity of phi in beta") {
    const auto ds = testing::random_dataset(3, 30, 5);
    auto mu = zero_mu(ds);
    for (std::size_t k = 0; k < mu.size(); ++k) mu[k] = {0.1 * static_cast<double>(k % 7), -0.3};
    const auto terms = make_phi_terms(ds, mu, EstimandSpec::moderated_by("Z"));
    const Vector b1 = (Vector(2) << 0.7, -1.2).finished();
    const Vector b2 = (Vector(2) << -2.0, 3.0).finished();
    for (double s : {0.0, 0.25, 0.5, 0.9, 1.0}) {
      for (std::size_t i = 0; i < terms.persons(); ++i) {
        const Vector lhs = phi_person(terms, i, s * b1 + (1 - s) * b2);
        const Vector rhs = s * phi_person(terms, i, b1) + (1 - s) * phi_person(terms, i, b2);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
      }
    }
  }

  TEST_CASE("root residual on random data") {
    for (unsigned seed = 1; seed <= 10; ++seed) {
      const auto ds = testing::random_dataset(seed, 40, 6);
      EstimationConfig cfg;
      cfg.estimand = EstimandSpec::moderated_by("Z");
      const auto fit = estimate_dcee(ds, cfg);
      const auto mu = predict_rows(ds, fit_outcome_model(ds, cfg.nuisance));
      const auto terms = make_phi_terms(ds, mu, cfg.estimand);
      Vector mean = Vector::Zero(2);
      for (std::size_t i = 0; i < terms.persons(); ++i) mean += phi_person(terms, i, fit.beta);
      mean /= static_cast<double>(terms.persons());
      const auto m = equation_moments(terms, uniform_person_weights(terms.persons()));
      CHECK(mean.cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + m.score.cwiseAbs().maxCoeff()));
      CHECK(fit.diagnostics.max_residual <= 1e-10 * (1.0 + m.score.cwiseAbs().maxCoeff()));
    }
  }

  TEST_CASE("fit invariants: symmetric PSD vcov, CI contains beta") {
    const auto ds = simulate_dataset(default_paper_params(), 150, 77);
    EstimationConfig cfg;
    cfg.estimand.moderators = {"Z"};
    cfg.estimand.terms = {FeatureTerm::intercept(), FeatureTerm::moderator_main("Z"), FeatureTerm::polynomial(1)};
    for (int K : {0, 5}) {
      cfg.crossfit_K = K;
      const auto fit = estimate_dcee(ds, cfg);
      CHECK(fit.vcov == fit.vcov.transpose());
      CHECK(min_symmetric_eigenvalue(fit.vcov) >= -1e-10 * fit.vcov.trace());
      CHECK(fit.se == fit.vcov.diagonal().cwiseSqrt());
      for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        CHECK(fit.ci[k][0] <= fit.beta(j));
        CHECK(fit.beta(j) <= fit.ci[k][1]);
        CHECK(fit.ci[k][1] - fit.beta(j) == doctest::Approx(1.959963984540054 * fit.se(j)));
      }
      CHECK(fit.crossfit_K == K);
      CHECK(fit.names.size() == 3);
    }
  }

  TEST_CASE("t quantile flag") {
    CHECK(critical_value(0.95) == doctest::Approx(1.959963984540054).epsilon(1e-14));
    CHECK(critical_value(0.95, true, 10) == doctest::Approx(2.228138851986274).epsilon(1e-12));
    CHECK(critical_value(0.90) == doctest::Approx(1.6448536269514722).epsilon(1e-14));
    CHECK_THROWS_AS(critical_value(1.0), ValidationError);
    const auto ds = testing::random_dataset(9, 20, 3);
    EstimationConfig cfg;
    cfg.t_quantile = true;
    const auto fit = estimate_dcee(ds, cfg);
    CHECK(fit.ci[0][1] - fit.beta(0) == doctest::Approx(critical_value(0.95, true, 19) * fit.se(0)));
  }

  TEST_CASE("xi estimate equals estimate with zero nuisance") {
    for (unsigned seed = 20; seed < 30; ++seed) {
      const auto ds = testing::random_dataset(seed, 35, 5);
      for (const auto& spec : {EstimandSpec::marginal(), EstimandSpec::moderated_by("Z")}) {
        const Vector xi = xi_estimate(ds, spec);
        EstimationConfig cfg;
        cfg.estimand = spec;
        cfg.nuisance = constant_learner(0.0);
        const Vector beta = estimate_dcee(ds, cfg).beta;
        CHECK((xi - beta).cwiseAbs().maxCoeff() <= 1e-10);
      }
    }
  }

  TEST_CASE("xi estimate, T = 1, prob 0.5") {
    MrtDataset ds({}, 1);
    const double ys[] = {1.0, 4.0, -2.0, 0.5, 3.0, 7.0};
    double treated = 0.0, control = 0.0;
    for (int i = 0; i < 6; ++i) {
      const int a = i % 3 == 0 ? 1 : 0;
      ds.add(testing::make_traj("p" + std::to_string(i), {{1, 1, a, 0.5}}, {}, ys[i]));
      (a ? treated : control) += ys[i];
    }
    CHECK(xi_estimate(ds, EstimandSpec::marginal())(0) == doctest::Approx(2.0 * treated / 6 - 2.0 * control / 6));
  }

  TEST_CASE("constant learner: cross-fit equals no cross-fit bit for bit") {
    const auto ds = simulate_dataset(default_paper_params(), 100, 31);
    EstimationConfig cfg;
    cfg.estimand = EstimandSpec::moderated_by("Z");
    cfg.nuisance = constant_learner(2.5);
    const auto plain = estimate_dcee(ds, cfg);
    cfg.crossfit_K = 5;
    const auto cf = estimate_dcee(ds, cfg);
    CHECK(plain.beta == cf.beta);
    CHECK(plain.vcov == cf.vcov);
  }

  TEST_CASE("mean-only learner with equal outcomes is fold invariant") {
    MrtDataset ds({"X"}, 3);
    for (int i = 0; i < 20; ++i) {
      ds.add(testing::make_traj("p" + std::to_string(i),
                                {{1, 1, i % 2, 0.4}, {2, i % 3 != 0, (i % 3 != 0) && (i % 4 == 0), 0.6}, {3, 1, 1 - i % 2, 0.5}},
                                {{0.1 * i}, {0.2}, {-0.3 * i}}, 5.0));
    }
    EstimationConfig cfg;
    cfg.nuisance.kind = LearnerKind::mean_only;
    const auto plain = estimate_dcee(ds, cfg);
    cfg.crossfit_K = 5;
    CHECK(estimate_dcee(ds, cfg).beta == plain.beta);
  }

  TEST_CASE("null effect gives beta near zero") {
    const auto ds = simulate_dataset(null_effect_params(), 1000, 2024);
    const auto fit = estimate_dcee(ds, EstimationConfig{});
    CHECK(std::abs(fit.beta(0)) <= 3.0 * fit.se(0));
    const Vector xi = xi_estimate(ds, EstimandSpec::marginal());
    const auto xi_terms = make_xi_terms(ds, EstimandSpec::marginal());
    const double xi_se = std::sqrt(sandwich_variance(xi_terms, xi, uniform_person_weights(ds.size()))(0, 0));
    CHECK(std::abs(xi(0)) <= 3.0 * xi_se);
    CHECK(xi_se > fit.se(0));
  }

  TEST_CASE("errors") {
    const auto ds = testing::random_dataset(4, 20, 3);
    EstimationConfig cfg;
    cfg.estimand.terms = {FeatureTerm::intercept(), FeatureTerm::intercept()};
    try {
      estimate_dcee(ds, cfg);
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("condition number") != std::string::npos);
    }
    cfg = EstimationConfig{};
    cfg.crossfit_K = 21;
    CHECK_THROWS_AS(estimate_dcee(ds, cfg), ValidationError);
    cfg.crossfit_K = 1;
    CHECK_THROWS_AS(estimate_dcee(ds, cfg), ValidationError);

    MrtDataset bad({}, 1);
    bad.add(testing::make_traj("a", {{1, 0, 1}}, {}, 1.0));
    cfg = EstimationConfig{};
    cfg.seed = 4242;
    try {
      estimate_dcee(bad, cfg);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("ineligible-treated") != std::string::npos);
      CHECK(std::string(e.what()).find("4242") != std::string::npos);
    }

    // no eligible treated rows at all
    MrtDataset untreated({}, 2);
    for (int i = 0; i < 10; ++i) untreated.add(testing::make_traj("p" + std::to_string(i), {{1, 1, 0, 0.5}, {2, 0, 0}}, {}, i));
    CHECK_THROWS_AS(estimate_dcee(untreated, EstimationConfig{}), NumericalError);
  }

  TEST_CASE("degenerate fold falls back and records it") {
    MrtDataset ds({"X"}, 2);
    ds.add(testing::make_traj("t", {{1, 1, 1, 0.5}, {2, 1, 0, 0.5}}, {{0.3}, {0.1}}, 2.0));
    for (int i = 0; i < 5; ++i) {
      ds.add(testing::make_traj("c" + std::to_string(i), {{1, 1, 0, 0.5}, {2, 0, 0}}, {{0.1 * i}, {0.2 * i}}, 1.0 * i));
    }
    EstimationConfig cfg;
    CHECK_THROWS_AS(estimate_dcee(ds, cfg), NumericalError);
    cfg.crossfit_K = 3;
    const auto fit = estimate_dcee(ds, cfg);
    CHECK_FALSE(fit.diagnostics.fallback_folds.empty());
    CHECK(fit.beta.allFinite());
  }

  TEST_CASE("explicit and point-mass weights") {
    const auto ds = testing::random_dataset(8, 50, 4);
    EstimandSpec spec;
    spec.terms = {FeatureTerm::intercept()};
    spec.weight = WeightSpec::point_mass(2);
    const auto mu = zero_mu(ds);
    const Vector beta = solve_beta(ds, mu, spec);
    // with omega = e_2 and f = 1 the root is the mean of U at t = 2
    const auto terms = make_phi_terms(ds, mu, spec);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) total += terms.ipw(static_cast<Eigen::Index>(terms.offsets[i] + 1));
    CHECK(beta(0) == doctest::Approx(total / 50.0));
  }
}
