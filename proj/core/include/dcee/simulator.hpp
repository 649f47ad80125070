#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dcee/data.hpp"
#include "dcee/estimand.hpp"
#include "dcee/linalg.hpp"
#include "dcee/rng.hpp"

namespace dcee {

/// Logistic function, evaluated without overflow for large |x|.
inline double expit(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Beta(2, 2) density, 0 outside [0, 1].
inline double beta22_density(double u) noexcept {
  return (u >= 0.0 && u <= 1.0) ? 6.0 * u * (1.0 - u) : 0.0;
}

/// Parameters of the longitudinal generative model with covariates X (continuous)
/// and Z (binary):
///   X_t = theta0 + theta1 A_{t-1} + theta2 X_{t-1} + eta_t
///   Z_t ~ Bern(expit(zeta0 + zeta1 A_{t-1} + zeta2 Z_{t-1}))
///   I_t ~ Bern(elig_prob), A_t ~ Bern(expit((t - T/2)/T + Z_t - 0.5 + X_t/6)) if I_t = 1
///   Y = sum_t xi_t {g(X_t/12 + 0.5) + Z_t} + sum_t A_t (alpha_t + nu_t X_t + gamma_t Z_t + lambda_t A_{t-1}) + eps
struct SimParams {
  int T = 30;
  std::array<double, 3> theta{-0.5, 0.5, 0.5};
  std::array<double, 3> zeta{-1.0, 1.0, 1.0};
  double elig_prob = 0.8;
  std::vector<double> alpha, nu, gamma, lambda, xi;
  double eta_sd = 1.0;
  double eps_sd = 1.0;

  void check() const;
  bool operator==(const SimParams&) const = default;
};

SimParams default_paper_params(int T = 30);

/// Default parameters with every path from A_t to Y removed: effect vectors and
/// the carry-over coefficients theta1, zeta1 are zero, so tau(t, s) = 0.
SimParams null_effect_params(int T = 30);

/// Treatment policy: the MRT randomization, or the MRT with decision point t0
/// set deterministically (a = 1: A = I, a = 0: A = 0).
struct PolicySpec {
  enum class Kind { mrt, excursion };
  Kind kind = Kind::mrt;
  int t0 = 0;
  int a = 0;

  static PolicySpec mrt() { return {}; }
  static PolicySpec excursion(int t0, int a) { return {Kind::excursion, t0, a}; }

  void check(int horizon) const;
  bool is_excursion_point(int t) const noexcept { return kind == Kind::excursion && t == t0; }
  /// Stream used when policies draw independently.
  std::uint64_t stream_id() const noexcept {
    return kind == Kind::mrt ? 0x6d7274ULL : 0x657863ULL + 2ULL * static_cast<std::uint64_t>(t0) + static_cast<std::uint64_t>(a);
  }
  bool operator==(const PolicySpec&) const = default;
};

/// State of one decision point as seen by simulate_person's callback.
struct SimStep {
  int t = 0;
  double x = 0.0;
  double z = 0.0;
  int elig = 0;
  int treat = 0;
  double prob = kMissing;  ///< MRT randomization probability; NaN when ineligible or at the excursion point
};

namespace sim_detail {
// counter layout: slot t owns counters [8t, 8t + 8); slot 0 holds the outcome noise
inline constexpr std::uint64_t kEps = 0, kEta = 0, kZ = 1, kElig = 2, kTreat = 3;
inline constexpr std::uint64_t counter(int t, std::uint64_t tag) { return 8ULL * static_cast<std::uint64_t>(t) + tag; }
}  // namespace sim_detail

/// Simulates one person under `policy` and returns Y. `on_step` sees every
/// decision point in order. Draws are addressed by (t, variable), so two
/// policies run on the same stream share every draw they have in common.
template <class OnStep>
double simulate_person(const SimParams& p, const CounterStream& rng, const PolicySpec& policy, OnStep&& on_step) {
  using namespace sim_detail;
  const double T = static_cast<double>(p.T);
  double x_prev = 0.0, z_prev = 0.0;
  int a_prev = 0;
  double y = 0.0;
  for (int t = 1; t <= p.T; ++t) {
    const auto i = static_cast<std::size_t>(t - 1);
    SimStep s;
    s.t = t;
    s.x = p.theta[0] + p.theta[1] * a_prev + p.theta[2] * x_prev + p.eta_sd * rng.normal(counter(t, kEta));
    s.z = rng.bernoulli(counter(t, kZ), expit(p.zeta[0] + p.zeta[1] * a_prev + p.zeta[2] * z_prev)) ? 1.0 : 0.0;
    s.elig = rng.bernoulli(counter(t, kElig), p.elig_prob) ? 1 : 0;
    if (policy.is_excursion_point(t)) {
      s.treat = policy.a == 1 ? s.elig : 0;
    } else if (s.elig) {
      s.prob = expit((t - T / 2.0) / T + s.z - 0.5 + s.x / 6.0);
      s.treat = rng.bernoulli(counter(t, kTreat), s.prob) ? 1 : 0;
    }
    y += p.xi[i] * (beta22_density(s.x / 12.0 + 0.5) + s.z);
    if (s.treat) y += p.alpha[i] + p.nu[i] * s.x + p.gamma[i] * s.z + p.lambda[i] * a_prev;
    on_step(s);
    x_prev = s.x;
    z_prev = s.z;
    a_prev = s.treat;
  }
  return y + p.eps_sd * rng.normal(counter(0, kEps));
}

/// Per-person stream for (seed, stream, person index).
inline CounterStream person_stream(std::uint64_t seed, std::uint64_t stream, std::size_t person) {
  return CounterStream(seed, stream, static_cast<std::uint64_t>(person));
}

/// n persons with ids "1".."n" and covariates {X, Z}. `stream` overrides the
/// policy's own stream (used for common random numbers).
MrtDataset simulate_dataset(const SimParams& params, std::size_t n, std::uint64_t seed,
                            const PolicySpec& policy = PolicySpec::mrt(),
                            std::optional<std::uint64_t> stream = std::nullopt, unsigned threads = 1);

struct OracleOptions {
  bool common_random_numbers = false;
  unsigned threads = 0;
};

/// One Monte-Carlo cell of tau(t, s).
struct TauCell {
  int t = 0;
  std::vector<double> level;  ///< moderator values, in the spec's moderator order
  double tau = 0.0;
  double se = 0.0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
};

struct OracleResult {
  std::vector<std::string> names;
  Vector beta_star;
  Vector mc_se;
  std::vector<TauCell> per_t_tau;
  std::size_t mc_size = 0;
  std::uint64_t seed = 0;
  bool common_random_numbers = false;
};

inline constexpr std::size_t kMinOracleSize = 10000;
inline constexpr std::size_t kMaxModeratorLevels = 64;

/// Monte-Carlo projection target beta* for `spec`: per decision point, mc_size
/// persons under each excursion give tau(t, s) by difference of means within
/// moderator levels; a third MRT-policy sample of mc_size persons supplies the
/// distribution of (t, S_t) for the weighted least-squares projection.
/// Moderators must be discrete (at most 64 levels).
OracleResult compute_oracle_beta(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size,
                                 std::uint64_t seed, const OracleOptions& options = {});

/// Several estimands sharing one set of simulated excursion samples.
std::vector<OracleResult> compute_oracle_betas(const SimParams& params, const std::vector<EstimandSpec>& specs,
                                               std::size_t mc_size, std::uint64_t seed,
                                               const OracleOptions& options = {});

/// Two-decision-point model where treatment at t = 1 changes eligibility at t = 2.
struct Example4Params {
  double p = 0.5;
  double rho0 = 0.8;
  double rho1 = 0.3;
  double beta0 = 0.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double alpha = 0.0;
  double eps_sd = 1.0;

  void check() const;
};

/// Dataset with T = 2 and no covariates. Under an excursion policy A_1 is
/// fixed and prob at t = 1 is left missing.
MrtDataset simulate_example4(const Example4Params& params, std::size_t n, std::uint64_t seed,
                             const PolicySpec& policy = PolicySpec::mrt());

double closed_form_tau1_example4(double p, double rho0, double rho1, double beta1, double beta2, double alpha);
inline double closed_form_tau1_example4(const Example4Params& e) {
  return closed_form_tau1_example4(e.p, e.rho0, e.rho1, e.beta1, e.beta2, e.alpha);
}

/// Exogenous-covariate model behind the simpler worked examples:
///   X_t = m_t + rho_t A_{t-1} + N(0, 1), A_t ~ Bern(p), I_t = 1,
///   Y = sum_t g_t X_t + sum_t A_t (a_t + b_t X_t) - sum_{t<T} c_t A_t A_{t+1} + eps.
/// rho = 0, c = 0 gives covariates untouched by treatment; rho != 0 adds a
/// mediated path; c != 0 adds interaction with the next treatment.
struct ExogenousParams {
  int T = 3;
  double p = 0.5;
  std::vector<double> m, rho, g, a, b, c;
  double eps_sd = 1.0;

  void check() const;
  static ExogenousParams independent(int T, double p);
};

/// Covariate "X"; ids "1".."n".
MrtDataset simulate_exogenous(const ExogenousParams& params, std::size_t n, std::uint64_t seed,
                              const PolicySpec& policy = PolicySpec::mrt());

/// tau(t) = a_t + b_t (m_t + rho_t p) - (c_{t-1} + c_t) p + rho_{t+1} (g_{t+1} + b_{t+1} p).
double closed_form_tau_exogenous(const ExogenousParams& params, int t);

/// Difference of mean outcomes between two datasets with its standard error.
struct MeanContrast {
  double estimate = 0.0;
  double se = 0.0;
};
MeanContrast mean_outcome_contrast(const MrtDataset& treated, const MrtDataset& control);

}  // namespace dcee
