// dcee: simulate, oracle, estimate, compare and benchmark from the command line.
//
// Exit codes: 0 ok, 2 validation error (bad input or config), 3 numerical failure.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "dcee/benchmark.hpp"
#include "dcee/comparators.hpp"
#include "dcee/data.hpp"
#include "dcee/error.hpp"
#include "dcee/estimator.hpp"
#include "dcee/json_io.hpp"
#include "dcee/simulator.hpp"

namespace {

using dcee::Json;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_path;
  std::string format;
  unsigned threads = 0;
};

Json load_config(const Globals& g) {
  if (g.config_path.empty()) return Json::object();
  Json j = dcee::read_json_file(g.config_path);
  dcee::require_keys(j,
                     {"estimand", "nuisance", "crossfit_K", "seed", "ci_level", "t_quantile", "clip", "schema",
                      "simulation", "oracle", "comparator", "benchmark"},
                     "config");
  return j;
}

template <class T>
T section(const Json& config, const char* key, T fallback) {
  return config.contains(key) ? config.at(key).get<T>() : fallback;
}

/// Writes to --out or stdout. Output goes through a string so a failed run
/// never leaves a half-written file behind.
void write_output(const Globals& g, const std::string& text) {
  if (g.out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(g.out_path, std::ios::binary);
  if (!out) throw dcee::ValidationError("cannot write " + g.out_path);
  out << text;
}

std::string format_or(const Globals& g, const std::string& fallback) { return g.format.empty() ? fallback : g.format; }

dcee::EstimationConfig estimation_config(const Json& config, const Globals& g) {
  Json j = Json::object();
  for (const char* key : {"estimand", "nuisance", "crossfit_K", "seed", "ci_level", "t_quantile", "clip"}) {
    if (config.contains(key)) j[key] = config.at(key);
  }
  auto ec = j.get<dcee::EstimationConfig>();
  if (g.seed) ec.seed = *g.seed;
  return ec;
}

std::string coefficient_csv(const std::vector<std::string>& names, const dcee::Vector& beta, const dcee::Vector& se,
                            const std::vector<std::array<double, 2>>& ci) {
  std::ostringstream out;
  out.precision(17);
  out << "coefficient,estimate,se,ci_lo,ci_hi\n";
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    out << '"' << names[k] << "\"," << beta(j) << ',' << se(j) << ',' << ci[k][0] << ',' << ci[k][1] << '\n';
  }
  return out.str();
}

int run_simulate(const Globals& g, std::optional<std::size_t> n_flag, const std::string& policy_flag, int t0, int a) {
  const Json config = load_config(g);
  const Json sim = section(config, "simulation", Json::object());
  dcee::require_keys(sim, {"params", "n", "policy"}, "simulation");
  const auto params = section(sim, "params", dcee::default_paper_params());
  const std::size_t n = n_flag.value_or(section<std::size_t>(sim, "n", 300));
  auto policy = section(sim, "policy", dcee::PolicySpec::mrt());
  if (policy_flag == "excursion") policy = dcee::PolicySpec::excursion(t0, a);
  if (policy_flag == "mrt") policy = dcee::PolicySpec::mrt();
  const std::uint64_t seed = g.seed.value_or(section<std::uint64_t>(config, "seed", 1));
  if (format_or(g, "csv") != "csv") throw dcee::ValidationError("simulate writes csv only");
  const auto ds = dcee::simulate_dataset(params, n, seed, policy, std::nullopt, g.threads);
  std::ostringstream out;
  dcee::write_csv(ds, out, section(config, "schema", dcee::CsvSchema{}));
  write_output(g, out.str());
  return 0;
}

int run_oracle(const Globals& g, std::optional<std::size_t> mc_flag, bool crn_flag) {
  const Json config = load_config(g);
  const Json sim = section(config, "simulation", Json::object());
  const Json orc = section(config, "oracle", Json::object());
  dcee::require_keys(orc, {"mc_size", "common_random_numbers", "cache"}, "oracle");
  const auto params = section(sim, "params", dcee::default_paper_params());
  const auto spec = section(config, "estimand", dcee::EstimandSpec::marginal());
  dcee::OracleOptions opt;
  opt.threads = g.threads;
  opt.common_random_numbers = crn_flag || section(orc, "common_random_numbers", false);
  const std::size_t mc = mc_flag.value_or(section<std::size_t>(orc, "mc_size", 1000000));
  const std::uint64_t seed = g.seed.value_or(section<std::uint64_t>(config, "seed", 1));
  if (format_or(g, "json") != "json") throw dcee::ValidationError("oracle writes json only");
  const auto result = dcee::cached_oracle(params, spec, mc, seed, section<std::string>(orc, "cache", ""), opt);
  write_output(g, Json(result).dump(2) + "\n");
  return 0;
}

int run_estimate(const Globals& g, const std::string& data, std::optional<int> k_flag) {
  const Json config = load_config(g);
  auto ec = estimation_config(config, g);
  if (k_flag) ec.crossfit_K = *k_flag;
  const auto ds = dcee::load_csv(data, section(config, "schema", dcee::CsvSchema{}));
  const auto fit = dcee::estimate_dcee(ds, ec);
  const auto fmt = format_or(g, "json");
  if (fmt == "json") {
    Json j = fit;
    j["config"] = ec;
    write_output(g, j.dump(2) + "\n");
  } else {
    write_output(g, coefficient_csv(fit.names, fit.beta, fit.se, fit.ci));
  }
  return 0;
}

int run_compare(const Globals& g, const std::string& data, const std::string& method) {
  const Json config = load_config(g);
  const Json cmp = section(config, "comparator", Json::object());
  dcee::require_keys(cmp, {"controls", "ptilde"}, "comparator");
  dcee::ComparatorOptions opt;
  if (cmp.contains("controls")) opt.controls = cmp.at("controls").get<std::vector<std::string>>();
  if (cmp.contains("ptilde")) opt.ptilde = cmp.at("ptilde").get<double>();
  opt.ci_level = section(config, "ci_level", 0.95);
  const auto spec = section(config, "estimand", dcee::EstimandSpec::marginal());
  const auto ds = dcee::load_csv(data, section(config, "schema", dcee::CsvSchema{}));
  const auto report = dcee::validate(ds, section(config, "clip", dcee::kDefaultClip));
  if (!report.ok()) throw dcee::ValidationError("dataset failed validation:\n" + report.summary());
  const auto fit = dcee::estimate_comparator(
      method == "gee" ? dcee::ComparatorMethod::gee : dcee::ComparatorMethod::wcls, ds, spec, opt);
  if (format_or(g, "json") == "json") {
    write_output(g, Json(fit).dump(2) + "\n");
  } else {
    write_output(g, coefficient_csv(fit.names, fit.beta, fit.se, fit.ci));
  }
  return 0;
}

int run_benchmark(const Globals& g, std::optional<int> replicates, const std::string& cache) {
  const Json config = load_config(g);
  auto cfg = section(config, "benchmark", dcee::BenchmarkConfig{});
  if (g.seed) cfg.seed = *g.seed;
  if (replicates) cfg.replicates = *replicates;
  if (!cache.empty()) cfg.oracle_cache = cache;
  cfg.threads = g.threads;
  const auto report = dcee::run_benchmark(cfg, [](const std::string& line) { std::cerr << line << '\n'; });
  std::ostringstream out;
  dcee::emit_report(report, format_or(g, "json") == "csv" ? dcee::ReportFormat::csv : dcee::ReportFormat::json, out);
  write_output(g, out.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distal causal excursion effects for micro-randomized trials"};
  app.set_version_flag("--version", std::string(DCEE_VERSION));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out_path, "Output file (default: stdout)");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.fallthrough();

  auto* sim = app.add_subcommand("simulate", "Simulate a trial dataset as long CSV");
  std::optional<std::size_t> sim_n;
  std::string policy;
  int t0 = 1, a = 1;
  sim->add_option("-n,--n", sim_n, "Number of persons");
  sim->add_option("--policy", policy, "Treatment policy")->check(CLI::IsMember({"mrt", "excursion"}));
  sim->add_option("--t0", t0, "Excursion decision point");
  sim->add_option("--a", a, "Excursion treatment (0 or 1)");

  auto* orc = app.add_subcommand("oracle", "Monte-Carlo true value beta* of the configured estimand");
  std::optional<std::size_t> mc_size;
  bool crn = false;
  orc->add_option("--mc-size", mc_size, "Persons per simulated sample");
  orc->add_flag("--crn", crn, "Common random numbers across policies");

  auto* est = app.add_subcommand("estimate", "Fit the DCEE estimator to a dataset");
  std::string data;
  std::optional<int> crossfit_k;
  est->add_option("--data", data, "Long-format CSV")->required()->check(CLI::ExistingFile);
  est->add_option("--crossfit-K", crossfit_k, "Cross-fitting folds (0 disables)");

  auto* cmp = app.add_subcommand("compare", "Fit a GEE or WCLS comparator");
  std::string method;
  cmp->add_option("--data", data, "Long-format CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--method", method, "Comparator")->required()->check(CLI::IsMember({"gee", "wcls"}));

  auto* bench = app.add_subcommand("benchmark", "Bias, SD and coverage over simulated replicates");
  std::optional<int> replicates;
  std::string cache;
  bench->add_option("--replicates", replicates, "Replicates per (method, n)");
  bench->add_option("--oracle-cache", cache, "Directory for cached oracle results");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*sim) return run_simulate(g, sim_n, policy, t0, a);
    if (*orc) return run_oracle(g, mc_size, crn);
    if (*est) return run_estimate(g, data, crossfit_k);
    if (*cmp) return run_compare(g, data, method);
    if (*bench) return run_benchmark(g, replicates, cache);
  } catch (const dcee::NumericalError& e) {
    std::cerr << "dcee: numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const dcee::ValidationError& e) {
    std::cerr << "dcee: " << e.what() << '\n';
    return 2;
  } catch (const Json::exception& e) {
    std::cerr << "dcee: config: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
