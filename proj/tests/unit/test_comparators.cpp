#include <doctest.h>

#include "dcee/comparators.hpp"
#include "dcee/error.hpp"
#include "dcee/linalg.hpp"
#include "helpers.hpp"

using namespace dcee;

namespace {

MrtDataset shift_outcome(const MrtDataset& ds, double scale, double shift) {
  MrtDataset out(ds.covariate_names(), ds.horizon());
  for (auto traj : ds.trajectories()) {
    traj.outcome = scale * traj.outcome + shift;
    out.add(std::move(traj));
  }
  return out;
}

}  // namespace

TEST_SUITE("comparators") {
  TEST_CASE("wcls weights") {
    CHECK(wcls_weight(1, 0.3, 0.3) == 1.0);
    CHECK(wcls_weight(0, 0.3, 0.3) == 1.0);
    CHECK(wcls_weight(1, 0.25, 0.5) == 2.0);
    CHECK(wcls_weight(0, 0.75, 0.5) == 2.0);
    CHECK_THROWS_AS(wcls_weight(1, 0.0, 0.5), ValidationError);
    CHECK_THROWS_AS(wcls_weight(1, kMissing, 0.5), ValidationError);
  }

  TEST_CASE("single decision point reduces to a difference of means") {
    MrtDataset ds({"X"}, 1);
    const double ys[] = {1.0, 3.0, 2.0, 8.0, -1.0, 0.5, 4.0, 2.5};
    double s1 = 0.0, s0 = 0.0, n1 = 0.0, n0 = 0.0;
    for (int i = 0; i < 8; ++i) {
      const int a = i % 2;
      ds.add(testing::make_traj("p" + std::to_string(i), {{1, 1, a, 0.5}}, {{0.1 * i}}, ys[i]));
      (a ? s1 : s0) += ys[i];
      (a ? n1 : n0) += 1.0;
    }
    ComparatorOptions opts;
    opts.controls = std::vector<std::string>{};
    const double diff = s1 / n1 - s0 / n0;
    CHECK(estimate_gee(ds, EstimandSpec::marginal(), opts).beta(0) == doctest::Approx(diff));
    opts.ptilde = 0.5;
    const auto wcls = estimate_wcls(ds, EstimandSpec::marginal(), opts);
    CHECK(wcls.beta(0) == doctest::Approx(diff));
    CHECK(wcls.ptilde == 0.5);
    CHECK(wcls.names == std::vector<std::string>{"A:(Intercept)"});
  }

  TEST_CASE("outcome transformations") {
    const auto ds = testing::random_dataset(5, 60, 4);
    const auto spec = EstimandSpec::moderated_by("Z");
    for (auto method : {ComparatorMethod::gee, ComparatorMethod::wcls}) {
      const auto base = estimate_comparator(method, ds, spec);
      CHECK(estimate_comparator(method, shift_outcome(ds, 0.0, 0.0), spec).beta.cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(estimate_comparator(method, shift_outcome(ds, 0.0, 3.0), spec).beta.cwiseAbs().maxCoeff() <= 1e-9);
      const auto shifted = estimate_comparator(method, shift_outcome(ds, 1.0, 7.0), spec);
      CHECK((shifted.beta - base.beta).cwiseAbs().maxCoeff() <= 1e-9);
      const auto scaled = estimate_comparator(method, shift_outcome(ds, -2.0, 0.0), spec);
      CHECK((scaled.beta + 2.0 * base.beta).cwiseAbs().maxCoeff() <= 1e-9);

      CHECK(base.vcov == base.vcov.transpose());
      CHECK(min_symmetric_eigenvalue(base.vcov) >= -1e-12);
      for (Eigen::Index j = 0; j < base.beta.size(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        CHECK(base.ci[k][0] < base.beta(j));
        CHECK(base.beta(j) < base.ci[k][1]);
      }
      CHECK(base.method == method);
    }
  }

  TEST_CASE("default ptilde is the eligible treatment rate") {
    const auto ds = testing::random_dataset(6, 40, 5);
    double elig = 0.0, treated = 0.0;
    for (const auto& traj : ds.trajectories()) {
      for (const auto& row : traj.rows) {
        elig += row.elig;
        treated += row.elig * row.treat;
      }
    }
    CHECK(estimate_wcls(ds, EstimandSpec::marginal()).ptilde == doctest::Approx(treated / elig));
  }

  TEST_CASE("errors") {
    const auto ds = testing::random_dataset(7, 30, 3);
    ComparatorOptions opts;
    opts.ptilde = 0.0;
    CHECK_THROWS_AS(estimate_wcls(ds, EstimandSpec::marginal(), opts), ValidationError);
    opts.ptilde = 1.0;
    CHECK_THROWS_AS(estimate_wcls(ds, EstimandSpec::marginal(), opts), ValidationError);
    opts = ComparatorOptions{};
    opts.controls = std::vector<std::string>{"nope"};
    CHECK_THROWS_AS(estimate_gee(ds, EstimandSpec::marginal(), opts), ValidationError);
    CHECK_THROWS_AS(estimate_gee(MrtDataset({}, 1), EstimandSpec::marginal()), ValidationError);
    // a control equal to the treatment column makes the design singular
    MrtDataset dup({"D"}, 1);
    for (int i = 0; i < 10; ++i) dup.add(testing::make_traj("p" + std::to_string(i), {{1, 1, i % 2, 0.5}}, {{1.0 * (i % 2)}}, i));
    CHECK_THROWS_AS(estimate_gee(dup, EstimandSpec::marginal()), NumericalError);
  }
}
