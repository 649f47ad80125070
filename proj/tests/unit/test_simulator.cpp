#include <doctest.h>

#include <cmath>

#include "dcee/error.hpp"
#include "dcee/estimator.hpp"
#include "dcee/simulator.hpp"

using namespace dcee;

namespace {

double eligible_rate(const MrtDataset& ds) {
  double elig = 0.0;
  for (const auto& traj : ds.trajectories()) {
    for (const auto& row : traj.rows) elig += row.elig;
  }
  return elig / static_cast<double>(ds.row_count());
}

EstimandSpec at_time(int t0) {
  EstimandSpec spec = EstimandSpec::marginal();
  spec.weight = WeightSpec::point_mass(t0);
  return spec;
}

}  // namespace

TEST_SUITE("simulator") {
  TEST_CASE("parameter ramps") {
    const auto p = default_paper_params();
    CHECK(p.T == 30);
    CHECK(p.alpha.front() == 1.0);
    CHECK(p.alpha.back() == doctest::Approx(3.0));
    CHECK(p.nu.back() == doctest::Approx(2.0));
    CHECK(p.gamma.back() == doctest::Approx(1.5));
    CHECK(p.lambda.front() == -1.0);
    CHECK(p.lambda.back() == doctest::Approx(-2.0));
    CHECK(p.xi.back() == doctest::Approx(2.0));
    CHECK(p.alpha[14] == doctest::Approx(1.0 + 2.0 * 14.0 / 29.0));
    CHECK_NOTHROW(p.check());
    auto bad = p;
    bad.alpha.pop_back();
    CHECK_THROWS_AS(bad.check(), ValidationError);
  }

  TEST_CASE("beta(2, 2) density and expit") {
    CHECK(beta22_density(0.5) == 1.5);
    CHECK(beta22_density(0.0) == 0.0);
    CHECK(beta22_density(1.0) == 0.0);
    CHECK(beta22_density(1.2) == 0.0);
    CHECK(beta22_density(-0.1) == 0.0);
    CHECK(expit(0.0) == 0.5);
    CHECK(expit(800.0) == 1.0);
    CHECK(expit(-800.0) == 0.0);
    CHECK(std::isfinite(expit(-1e308)));
    CHECK(expit(2.0) + expit(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("deterministic and thread invariant") {
    const auto p = default_paper_params(10);
    const auto a = simulate_dataset(p, 200, 5);
    CHECK(a == simulate_dataset(p, 200, 5));
    CHECK(a == simulate_dataset(p, 200, 5, PolicySpec::mrt(), std::nullopt, 4));
    CHECK_FALSE(a == simulate_dataset(p, 200, 6));
    CHECK(a.size() == 200);
    CHECK(a[0].person_id == "1");
    CHECK(a.covariate_names() == std::vector<std::string>{"X", "Z"});
  }

  TEST_CASE("policies") {
    const auto p = default_paper_params(8);
    const std::uint64_t common = 99;
    const auto mrt = simulate_dataset(p, 300, 11, PolicySpec::mrt(), common);
    for (int a : {0, 1}) {
      const auto exc = simulate_dataset(p, 300, 11, PolicySpec::excursion(4, a), common);
      for (std::size_t i = 0; i < exc.size(); ++i) {
        const auto& rows = exc[i].rows;
        // shared draws: everything before the excursion point matches the MRT run
        for (std::size_t k = 0; k < 3; ++k) {
          CHECK(rows[k].t == mrt[i].rows[k].t);
          CHECK(rows[k].treat == mrt[i].rows[k].treat);
          CHECK(exc[i].covariates(k)[0] == mrt[i].covariates(k)[0]);
        }
        const auto& r = rows[3];
        CHECK(r.treat == (a == 1 ? r.elig : 0));
        CHECK(std::isnan(r.prob));
        for (const auto& row : rows) {
          if (!row.elig) CHECK(row.treat == 0);
          if (row.elig && row.t != 4) CHECK((row.prob > 0.0 && row.prob < 1.0));
        }
      }
    }
    CHECK_THROWS_AS(simulate_dataset(p, 10, 1, PolicySpec::excursion(9, 1)), ValidationError);
    CHECK_THROWS_AS(simulate_dataset(p, 10, 1, PolicySpec::excursion(2, 2)), ValidationError);
    CHECK_THROWS_AS(simulate_dataset(p, 0, 1), ValidationError);
  }

  TEST_CASE("eligibility rate") {
    const auto ds = simulate_dataset(default_paper_params(), 20000, 3, PolicySpec::mrt(), std::nullopt, 0);
    CHECK(std::abs(eligible_rate(ds) - 0.8) <= 0.005);
  }

  TEST_CASE("eligibility-feedback model closed form") {
    CHECK(closed_form_tau1_example4(0.5, 0.8, 0.3, 1.0, 1.0, 0.0) == doctest::Approx(0.85));
    Example4Params e;
    e.rho1 = 0.0;
    e.alpha = 0.0;
    CHECK(closed_form_tau1_example4(e) == e.beta1);

    // E[Y | A1 = a] written out from the model
    auto mean_y = [](const Example4Params& e, int a1) {
      const double elig2 = e.rho0 - e.rho1 * a1;
      return e.beta0 + e.beta1 * a1 + (e.beta2 - e.alpha * a1) * elig2 * e.p;
    };
    for (double rho1 : {0.0, 0.3, 0.6}) {
      for (double alpha : {0.0, 0.7}) {
        Example4Params q;
        q.rho1 = rho1;
        q.alpha = alpha;
        CHECK(closed_form_tau1_example4(q) == doctest::Approx(mean_y(q, 1) - mean_y(q, 0)).epsilon(1e-14));
      }
    }

    Example4Params q;
    const auto ds = simulate_example4(q, 40000, 8);
    double treated = 0.0, elig2 = 0.0;
    for (const auto& traj : ds.trajectories()) {
      if (traj.rows[0].treat == 1) {
        treated += 1.0;
        elig2 += traj.rows[1].elig;
      }
    }
    CHECK(elig2 / treated == doctest::Approx(q.rho0 - q.rho1).epsilon(0.02));
    const auto fit = estimate_dcee(ds, EstimationConfig{at_time(1), {}, 0, 0, 0.95, false, kDefaultClip});
    CHECK(std::abs(fit.beta(0) - closed_form_tau1_example4(q)) <= 4.0 * fit.se(0));

    const auto treated_ds = simulate_example4(q, 20000, 9, PolicySpec::excursion(1, 1));
    const auto control_ds = simulate_example4(q, 20000, 9, PolicySpec::excursion(1, 0));
    const auto contrast = mean_outcome_contrast(treated_ds, control_ds);
    CHECK(std::abs(contrast.estimate - closed_form_tau1_example4(q)) <= 4.0 * contrast.se);
    CHECK_THROWS_AS(simulate_example4(Example4Params{0.5, 0.3, 0.8}, 10, 1), ValidationError);
  }

  TEST_CASE("exogenous covariates") {
    auto e = ExogenousParams::independent(3, 0.4);
    e.m = {0.5, -1.0, 2.0};
    e.a = {1.0, 0.5, -0.5};
    e.b = {0.2, 1.0, 0.3};
    e.g = {1.0, 1.0, 1.0};
    for (int t = 1; t <= 3; ++t) {
      const auto k = static_cast<std::size_t>(t - 1);
      CHECK(closed_form_tau_exogenous(e, t) == doctest::Approx(e.a[k] + e.b[k] * e.m[k]));
    }
    e.rho = {0.0, 0.8, -0.4};
    e.c = {0.3, 0.6, 0.0};
    for (int t = 1; t <= 3; ++t) {
      const double expected = closed_form_tau_exogenous(e, t);
      const auto treated = simulate_exogenous(e, 20000, 12, PolicySpec::excursion(t, 1));
      const auto control = simulate_exogenous(e, 20000, 12, PolicySpec::excursion(t, 0));
      const auto contrast = mean_outcome_contrast(treated, control);
      CHECK(std::abs(contrast.estimate - expected) <= 4.0 * contrast.se);

      const auto ds = simulate_exogenous(e, 20000, 13);
      EstimationConfig cfg;
      cfg.estimand = at_time(t);
      const auto fit = estimate_dcee(ds, cfg);
      CHECK(std::abs(fit.beta(0) - expected) <= 4.0 * fit.se(0));
    }
  }

  TEST_CASE("oracle under the null is zero") {
    const auto p = null_effect_params(5);
    const auto res = compute_oracle_beta(p, EstimandSpec::moderated_by("Z"), kMinOracleSize, 4);
    REQUIRE(res.beta_star.size() == 2);
    for (Eigen::Index j = 0; j < 2; ++j) CHECK(std::abs(res.beta_star(j)) <= 4.0 * res.mc_se(j));
    CHECK(res.mc_size == kMinOracleSize);
    CHECK(res.names.size() == 2);
  }

  TEST_CASE("oracle marginal equals averaged excursion contrasts") {
    const auto p = default_paper_params(4);
    const std::size_t m = 20000;
    const auto res = compute_oracle_beta(p, EstimandSpec::marginal(), m, 21);
    double sum = 0.0, var = 0.0;
    for (int t = 1; t <= 4; ++t) {
      const auto c = mean_outcome_contrast(simulate_dataset(p, m, 77, PolicySpec::excursion(t, 1)),
                                           simulate_dataset(p, m, 77, PolicySpec::excursion(t, 0)));
      sum += c.estimate / 4.0;
      var += c.se * c.se / 16.0;
    }
    const double se = std::sqrt(var + res.mc_se(0) * res.mc_se(0));
    CHECK(std::abs(res.beta_star(0) - sum) <= 4.0 * se);
    CHECK(res.mc_se(0) == doctest::Approx(std::sqrt(var)).epsilon(0.25));
  }

  TEST_CASE("oracle is deterministic across thread counts") {
    const auto p = default_paper_params(3);
    const auto a = compute_oracle_beta(p, EstimandSpec::moderated_by("Z"), kMinOracleSize, 2, {false, 1});
    const auto b = compute_oracle_beta(p, EstimandSpec::moderated_by("Z"), kMinOracleSize, 2, {false, 4});
    CHECK(a.beta_star == b.beta_star);
    CHECK(a.mc_se == b.mc_se);
    const auto crn = compute_oracle_beta(p, EstimandSpec::moderated_by("Z"), kMinOracleSize, 2, {true, 0});
    CHECK(crn.common_random_numbers);
    CHECK((crn.beta_star - a.beta_star).cwiseAbs().maxCoeff() <= 5.0 * (a.mc_se + crn.mc_se).maxCoeff());
  }

  TEST_CASE("estimator agrees with the oracle in large samples") {
    const auto p = default_paper_params(10);
    const auto oracle = compute_oracle_beta(p, EstimandSpec::marginal(), 40000, 31);
    const auto ds = simulate_dataset(p, 40000, 32, PolicySpec::mrt(), std::nullopt, 0);
    EstimationConfig cfg;
    cfg.nuisance.kind = LearnerKind::linear;
    const auto fit = estimate_dcee(ds, cfg);
    const double se = std::hypot(fit.se(0), oracle.mc_se(0));
    CHECK(std::abs(fit.beta(0) - oracle.beta_star(0)) <= 4.0 * se);
    CHECK(std::abs(fit.beta(0) - oracle.beta_star(0)) <= 0.05);
  }

  TEST_CASE("oracle errors") {
    const auto p = default_paper_params(3);
    CHECK_THROWS_AS(compute_oracle_beta(p, EstimandSpec::marginal(), kMinOracleSize - 1, 1), ValidationError);
    CHECK_THROWS_AS(compute_oracle_beta(p, EstimandSpec::moderated_by("X"), kMinOracleSize, 1), ValidationError);
    CHECK_THROWS_AS(compute_oracle_beta(p, EstimandSpec::moderated_by("W"), kMinOracleSize, 1), ValidationError);
    CHECK_THROWS_AS(compute_oracle_betas(p, {}, kMinOracleSize, 1), ValidationError);
  }
}
