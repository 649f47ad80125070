#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dcee/estimand.hpp"
#include "dcee/linalg.hpp"
#include "dcee/nuisance.hpp"
#include "dcee/simulator.hpp"

namespace dcee {

enum class Method { dcee, dcee_cf, gee, wcls };

std::string to_string(Method method);
Method method_from_string(const std::string& name);

struct BenchmarkConfig {
  std::vector<std::size_t> sample_sizes{30, 100, 300};
  int replicates = 500;
  std::vector<Method> methods{Method::dcee};
  EstimandSpec estimand = EstimandSpec::marginal();
  LearnerSpec learner;
  int crossfit_K = 5;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  SimParams params = default_paper_params();
  /// Target values. When absent, the oracle is run (or read from the cache).
  std::optional<std::vector<double>> beta_star;
  std::size_t oracle_mc_size = 1000000;
  std::uint64_t oracle_seed = 1;
  /// Directory holding cached oracle results; empty disables the cache.
  std::string oracle_cache;
  double max_failure_rate = 0.05;
  unsigned threads = 0;

  /// Throws ValidationError before any work is done.
  void check() const;
};

/// Seed of replicate r of size n for `method`; injective in (method, n, r) for a fixed base seed.
std::uint64_t replicate_seed(std::uint64_t base, Method method, std::size_t n, int r);

struct ReplicateResult {
  Method method = Method::dcee;
  std::size_t n = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  Vector beta;
  Vector se;
  std::vector<std::array<double, 2>> ci;
};

/// Summary over the successful replicates of one (method, n, coefficient).
/// Every *_mcse field is the Monte-Carlo standard error of the summary next to it.
struct SummaryRow {
  Method method = Method::dcee;
  std::size_t n = 0;
  std::string coefficient;
  double beta_star = 0.0;
  double bias = 0.0;
  double bias_mcse = 0.0;
  double sd = 0.0;
  double sd_mcse = 0.0;
  double mean_se = 0.0;
  double mean_se_mcse = 0.0;
  double coverage = 0.0;
  double coverage_mcse = 0.0;
  int ok = 0;
  int failed = 0;

  bool operator==(const SummaryRow&) const = default;
};

struct BenchmarkReport {
  std::string tool_version;
  BenchmarkConfig config;
  std::vector<std::string> names;
  Vector beta_star;
  std::vector<SummaryRow> rows;
  std::vector<ReplicateResult> replicates;  ///< JSON output only

  const SummaryRow& row(Method method, std::size_t n, std::size_t coefficient) const;
};

/// Fits one replicate dataset with `method`; returns beta, se and ci.
ReplicateResult fit_replicate(const BenchmarkConfig& cfg, Method method, std::size_t n, int r);

/// beta* for cfg.estimand: supplied, cached or computed.
Vector resolve_beta_star(const BenchmarkConfig& cfg);

/// Simulates, fits and summarizes every (method, n). Failed replicates are
/// excluded and counted; more than cfg.max_failure_rate failures in any cell
/// aborts with NumericalError. `log` receives one line per finished (method, n).
BenchmarkReport run_benchmark(const BenchmarkConfig& cfg,
                              const std::function<void(const std::string&)>& log = {});

/// Oracle with a JSON cache in `cache_dir` keyed by a hash of (params, spec, mc_size, seed).
OracleResult cached_oracle(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size, std::uint64_t seed,
                           const std::string& cache_dir, const OracleOptions& options = {});
/// Several estimands at once: cached entries are read, the rest share one oracle run.
std::vector<OracleResult> cached_oracles(const SimParams& params, const std::vector<EstimandSpec>& specs,
                                         std::size_t mc_size, std::uint64_t seed, const std::string& cache_dir,
                                         const OracleOptions& options = {});
std::string oracle_cache_key(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size,
                             std::uint64_t seed);

enum class ReportFormat { json, csv };

void emit_report(const BenchmarkReport& report, ReportFormat format, std::ostream& out);
/// Parses the csv form back (summary rows, names, beta*, version and config).
BenchmarkReport read_report_csv(std::istream& in);

}  // namespace dcee
