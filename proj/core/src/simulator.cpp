#include "dcee/simulator.hpp"

#include <cmath>
#include <string>

#include "dcee/error.hpp"
#include "dcee/parallel.hpp"

namespace dcee {

namespace {

void require_length(const std::vector<double>& v, int T, const char* name) {
  if (static_cast<int>(v.size()) != T) {
    throw ValidationError(std::string("parameter vector ") + name + " has length " + std::to_string(v.size()) +
                          ", expected T=" + std::to_string(T));
  }
  for (double x : v) {
    if (!std::isfinite(x)) throw ValidationError(std::string("parameter vector ") + name + " is not finite");
  }
}

std::vector<double> ramp(int T, double start, double slope) {
  std::vector<double> v(static_cast<std::size_t>(T));
  for (int t = 1; t <= T; ++t) {
    const double s = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
    v[static_cast<std::size_t>(t - 1)] = start + slope * s;
  }
  return v;
}

Trajectory empty_trajectory(std::size_t person, std::size_t width, int T) {
  Trajectory traj;
  traj.person_id = std::to_string(person + 1);
  traj.width = width;
  traj.rows.reserve(static_cast<std::size_t>(T));
  traj.covariate_values.reserve(static_cast<std::size_t>(T) * width);
  return traj;
}

}  // namespace

void SimParams::check() const {
  if (T < 1) throw ValidationError("T must be at least 1");
  if (!(elig_prob > 0.0 && elig_prob <= 1.0)) throw ValidationError("elig_prob must be in (0, 1]");
  for (double v : theta) {
    if (!std::isfinite(v)) throw ValidationError("theta is not finite");
  }
  for (double v : zeta) {
    if (!std::isfinite(v)) throw ValidationError("zeta is not finite");
  }
  if (!(eta_sd >= 0.0) || !(eps_sd >= 0.0)) throw ValidationError("noise scales must be nonnegative");
  require_length(alpha, T, "alpha");
  require_length(nu, T, "nu");
  require_length(gamma, T, "gamma");
  require_length(lambda, T, "lambda");
  require_length(xi, T, "xi");
}

SimParams default_paper_params(int T) {
  if (T < 1) throw ValidationError("T must be at least 1");
  SimParams p;
  p.T = T;
  p.alpha = ramp(T, 1.0, 2.0);
  p.nu = ramp(T, 1.0, 1.0);
  p.gamma = ramp(T, 1.0, 0.5);
  p.lambda = ramp(T, -1.0, -1.0);
  p.xi = ramp(T, 1.0, 1.0);
  return p;
}

SimParams null_effect_params(int T) {
  SimParams p = default_paper_params(T);
  const std::vector<double> zero(static_cast<std::size_t>(T), 0.0);
  p.alpha = p.nu = p.gamma = p.lambda = zero;
  p.theta[1] = 0.0;
  p.zeta[1] = 0.0;
  return p;
}

void PolicySpec::check(int horizon) const {
  if (kind == Kind::mrt) return;
  if (t0 < 1 || t0 > horizon) {
    throw ValidationError("excursion point t0=" + std::to_string(t0) + " outside [1, " + std::to_string(horizon) + "]");
  }
  if (a != 0 && a != 1) throw ValidationError("excursion treatment must be 0 or 1");
}

MrtDataset simulate_dataset(const SimParams& params, std::size_t n, std::uint64_t seed, const PolicySpec& policy,
                            std::optional<std::uint64_t> stream, unsigned threads) {
  params.check();
  policy.check(params.T);
  if (n == 0) throw ValidationError("simulate_dataset needs n >= 1");
  const std::uint64_t key = stream.value_or(policy.stream_id());
  std::vector<Trajectory> people(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Trajectory traj = empty_trajectory(i, 2, params.T);
    const auto rng = person_stream(seed, key, i);
    traj.outcome = simulate_person(params, rng, policy, [&](const SimStep& s) {
      const double covs[2] = {s.x, s.z};
      traj.push_row({s.t, s.elig, s.treat, s.prob}, covs);
    });
    people[i] = std::move(traj);
  });
  MrtDataset ds({"X", "Z"}, params.T);
  for (auto& traj : people) ds.add(std::move(traj));
  return ds;
}

void Example4Params::check() const {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("eligibility-feedback model: p must be in (0, 1)");
  const double r = rho0 - rho1;
  if (!(r > 0.0 && r < 1.0)) throw ValidationError("eligibility-feedback model: rho0 - rho1 must be in (0, 1)");
  if (!(rho0 >= 0.0 && rho0 <= 1.0)) throw ValidationError("eligibility-feedback model: rho0 must be in [0, 1]");
  if (!(eps_sd >= 0.0)) throw ValidationError("eligibility-feedback model: eps_sd must be nonnegative");
}

MrtDataset simulate_example4(const Example4Params& e, std::size_t n, std::uint64_t seed, const PolicySpec& policy) {
  e.check();
  policy.check(2);
  if (n == 0) throw ValidationError("simulate_example4 needs n >= 1");
  MrtDataset ds({}, 2);
  const std::uint64_t key = combine_key(0x657834ULL, policy.stream_id());
  for (std::size_t i = 0; i < n; ++i) {
    const auto rng = person_stream(seed, key, i);
    Trajectory traj = empty_trajectory(i, 0, 2);
    DecisionRow r1{1, 1, 0, e.p};
    if (policy.is_excursion_point(1)) {
      r1.treat = policy.a;
      r1.prob = kMissing;
    } else {
      r1.treat = rng.bernoulli(1, e.p) ? 1 : 0;
    }
    DecisionRow r2{2, 0, 0, kMissing};
    r2.elig = rng.bernoulli(2, e.rho0 - e.rho1 * r1.treat) ? 1 : 0;
    if (policy.is_excursion_point(2)) {
      r2.treat = policy.a == 1 ? r2.elig : 0;
    } else if (r2.elig) {
      r2.prob = e.p;
      r2.treat = rng.bernoulli(3, e.p) ? 1 : 0;
    }
    traj.push_row(r1, {});
    traj.push_row(r2, {});
    traj.outcome = e.beta0 + e.beta1 * r1.treat + e.beta2 * r2.treat - e.alpha * r1.treat * r2.treat +
                   e.eps_sd * rng.normal(4);
    ds.add(std::move(traj));
  }
  return ds;
}

double closed_form_tau1_example4(double p, double rho0, double rho1, double beta1, double beta2, double alpha) {
  return beta1 - p * rho0 * alpha + p * rho1 * alpha - p * rho1 * beta2;
}

void ExogenousParams::check() const {
  if (T < 1) throw ValidationError("T must be at least 1");
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("p must be in (0, 1)");
  require_length(m, T, "m");
  require_length(rho, T, "rho");
  require_length(g, T, "g");
  require_length(a, T, "a");
  require_length(b, T, "b");
  require_length(c, T, "c");
  if (!(eps_sd >= 0.0)) throw ValidationError("eps_sd must be nonnegative");
}

ExogenousParams ExogenousParams::independent(int T, double p) {
  ExogenousParams e;
  e.T = T;
  e.p = p;
  const std::vector<double> zero(static_cast<std::size_t>(T), 0.0);
  e.m = e.rho = e.g = e.a = e.b = e.c = zero;
  return e;
}

MrtDataset simulate_exogenous(const ExogenousParams& e, std::size_t n, std::uint64_t seed, const PolicySpec& policy) {
  e.check();
  policy.check(e.T);
  if (n == 0) throw ValidationError("simulate_exogenous needs n >= 1");
  MrtDataset ds({"X"}, e.T);
  const std::uint64_t key = combine_key(0x65786fULL, policy.stream_id());
  for (std::size_t i = 0; i < n; ++i) {
    const auto rng = person_stream(seed, key, i);
    Trajectory traj = empty_trajectory(i, 1, e.T);
    double y = 0.0;
    int a_prev = 0;
    for (int t = 1; t <= e.T; ++t) {
      const auto k = static_cast<std::size_t>(t - 1);
      const double x = e.m[k] + (t > 1 ? e.rho[k] * a_prev : 0.0) + rng.normal(sim_detail::counter(t, 0));
      DecisionRow row{t, 1, 0, e.p};
      if (policy.is_excursion_point(t)) {
        row.treat = policy.a;
        row.prob = kMissing;
      } else {
        row.treat = rng.bernoulli(sim_detail::counter(t, 1), e.p) ? 1 : 0;
      }
      y += e.g[k] * x + row.treat * (e.a[k] + e.b[k] * x);
      if (t > 1) y -= e.c[k - 1] * a_prev * row.treat;
      const double covs[1] = {x};
      traj.push_row(row, covs);
      a_prev = row.treat;
    }
    traj.outcome = y + e.eps_sd * rng.normal(sim_detail::counter(0, 0));
    ds.add(std::move(traj));
  }
  return ds;
}

double closed_form_tau_exogenous(const ExogenousParams& e, int t) {
  e.check();
  if (t < 1 || t > e.T) throw ValidationError("t outside [1, T]");
  const auto k = static_cast<std::size_t>(t - 1);
  const double mean_x = e.m[k] + (t > 1 ? e.rho[k] * e.p : 0.0);
  double tau = e.a[k] + e.b[k] * mean_x;
  if (t > 1) tau -= e.c[k - 1] * e.p;
  if (t < e.T) tau += -e.c[k] * e.p + e.rho[k + 1] * (e.g[k + 1] + e.b[k + 1] * e.p);
  return tau;
}

MeanContrast mean_outcome_contrast(const MrtDataset& treated, const MrtDataset& control) {
  auto moments = [](const MrtDataset& ds) {
    if (ds.size() < 2) throw ValidationError("mean contrast needs at least two persons per group");
    double mean = 0.0, m2 = 0.0;
    std::size_t k = 0;
    for (const auto& traj : ds.trajectories()) {
      ++k;
      const double d = traj.outcome - mean;
      mean += d / static_cast<double>(k);
      m2 += d * (traj.outcome - mean);
    }
    return std::pair{mean, m2 / static_cast<double>(k - 1) / static_cast<double>(k)};
  };
  const auto [m1, v1] = moments(treated);
  const auto [m0, v0] = moments(control);
  return {m1 - m0, std::sqrt(v1 + v0)};
}

}  // namespace dcee
