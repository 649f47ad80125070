#include "dcee/benchmark.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dcee/comparators.hpp"
#include "dcee/error.hpp"
#include "dcee/estimator.hpp"
#include "dcee/json_io.hpp"
#include "dcee/parallel.hpp"

namespace dcee {

std::string to_string(Method method) {
  switch (method) {
    case Method::dcee: return "dcee";
    case Method::dcee_cf: return "dcee-cf";
    case Method::gee: return "gee";
    case Method::wcls: return "wcls";
  }
  return "?";
}

Method method_from_string(const std::string& name) {
  if (name == "dcee") return Method::dcee;
  if (name == "dcee-cf" || name == "dcee_cf") return Method::dcee_cf;
  if (name == "gee") return Method::gee;
  if (name == "wcls") return Method::wcls;
  throw ValidationError("unknown method '" + name + "' (expected dcee, dcee-cf, gee or wcls)");
}

void BenchmarkConfig::check() const {
  if (methods.empty()) throw ValidationError("benchmark: methods must not be empty");
  if (sample_sizes.empty()) throw ValidationError("benchmark: sample_sizes must not be empty");
  if (replicates < 2) throw ValidationError("benchmark: replicates must be at least 2");
  if (replicates >= (1 << 24)) throw ValidationError("benchmark: too many replicates");
  for (auto n : sample_sizes) {
    if (n < 10) throw ValidationError("benchmark: sample sizes must be at least 10");
    if (n >= (std::size_t{1} << 32)) throw ValidationError("benchmark: sample size too large");
  }
  for (auto m : methods) {
    if (m == Method::dcee_cf) {
      for (auto n : sample_sizes) {
        if (crossfit_K < 2 || static_cast<std::size_t>(crossfit_K) > n) {
          throw ValidationError("benchmark: crossfit_K must be in [2, n] for dcee-cf");
        }
      }
    }
  }
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ValidationError("benchmark: ci_level must be in (0, 1)");
  if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0)) {
    throw ValidationError("benchmark: max_failure_rate must be in [0, 1)");
  }
  learner.check();
  params.check();
  // resolves moderators and feature terms against the simulator's covariates
  const std::vector<std::string> covs{"X", "Z"};
  const FeatureMap map(estimand, params.T, covs);
  build_weights(params.T, estimand.weight);
  if (beta_star && beta_star->size() != map.dimension()) {
    throw ValidationError("benchmark: beta_star has " + std::to_string(beta_star->size()) + " entries, estimand has " +
                          std::to_string(map.dimension()));
  }
  if (!beta_star && oracle_mc_size < kMinOracleSize) {
    throw ValidationError("benchmark: oracle_mc_size must be at least " + std::to_string(kMinOracleSize));
  }
}

std::uint64_t replicate_seed(std::uint64_t base, Method method, std::size_t n, int r) {
  // (method, n, r) packed into disjoint bit ranges; combine_key is a bijection
  // in its second argument for a fixed first argument
  const std::uint64_t packed = (static_cast<std::uint64_t>(method) << 56) | (static_cast<std::uint64_t>(n) << 24) |
                               static_cast<std::uint64_t>(r);
  return combine_key(base, packed);
}

ReplicateResult fit_replicate(const BenchmarkConfig& cfg, Method method, std::size_t n, int r) {
  ReplicateResult out;
  out.method = method;
  out.n = n;
  out.replicate = r;
  out.seed = replicate_seed(cfg.seed, method, n, r);
  try {
    const auto ds = simulate_dataset(cfg.params, n, out.seed);
    if (method == Method::dcee || method == Method::dcee_cf) {
      EstimationConfig ec;
      ec.estimand = cfg.estimand;
      ec.nuisance = cfg.learner;
      ec.crossfit_K = method == Method::dcee_cf ? cfg.crossfit_K : 0;
      ec.seed = out.seed;
      ec.ci_level = cfg.ci_level;
      const auto fit = estimate_dcee(ds, ec);
      out.beta = fit.beta;
      out.se = fit.se;
      out.ci = fit.ci;
    } else {
      ComparatorOptions opt;
      opt.ci_level = cfg.ci_level;
      const auto fit = estimate_comparator(method == Method::gee ? ComparatorMethod::gee : ComparatorMethod::wcls, ds,
                                           cfg.estimand, opt);
      out.beta = fit.beta;
      out.se = fit.se;
      out.ci = fit.ci;
    }
    out.ok = out.beta.allFinite() && out.se.allFinite();
    if (!out.ok) out.error = "non-finite estimate";
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

std::string oracle_cache_key(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size,
                             std::uint64_t seed) {
  const Json key = {{"params", params}, {"estimand", spec}, {"mc_size", mc_size}, {"seed", seed}};
  char buf[17];
  const auto h = json_hash(key);
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

OracleResult cached_oracle(const SimParams& params, const EstimandSpec& spec, std::size_t mc_size, std::uint64_t seed,
                           const std::string& cache_dir, const OracleOptions& options) {
  return cached_oracles(params, {spec}, mc_size, seed, cache_dir, options).front();
}

std::vector<OracleResult> cached_oracles(const SimParams& params, const std::vector<EstimandSpec>& specs,
                                         std::size_t mc_size, std::uint64_t seed, const std::string& cache_dir,
                                         const OracleOptions& options) {
  if (cache_dir.empty()) return compute_oracle_betas(params, specs, mc_size, seed, options);
  namespace fs = std::filesystem;
  std::vector<OracleResult> results(specs.size());
  std::vector<std::size_t> missing;
  std::vector<fs::path> paths;
  std::vector<std::string> keys;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    keys.push_back(oracle_cache_key(params, specs[k], mc_size, seed) + (options.common_random_numbers ? "-crn" : ""));
    paths.push_back(fs::path(cache_dir) / ("oracle-" + keys.back() + ".json"));
    if (fs::exists(paths.back())) {
      results[k] = read_json_file(paths.back().string()).at("oracle").get<OracleResult>();
    } else {
      missing.push_back(k);
    }
  }
  if (missing.empty()) return results;
  std::vector<EstimandSpec> todo;
  for (auto k : missing) todo.push_back(specs[k]);
  auto computed = compute_oracle_betas(params, todo, mc_size, seed, options);
  fs::create_directories(cache_dir);
  for (std::size_t m = 0; m < missing.size(); ++m) {
    const auto k = missing[m];
    results[k] = std::move(computed[m]);
    const Json doc = {{"key", keys[k]}, {"params", params}, {"estimand", specs[k]}, {"oracle", results[k]}};
    // write then rename so a concurrent reader never sees a partial file
    const fs::path tmp = paths[k].string() + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw ValidationError("cannot write oracle cache " + tmp.string());
      out << doc.dump(2) << '\n';
    }
    fs::rename(tmp, paths[k]);
  }
  return results;
}

Vector resolve_beta_star(const BenchmarkConfig& cfg) {
  if (cfg.beta_star) return Eigen::Map<const Vector>(cfg.beta_star->data(), static_cast<Eigen::Index>(cfg.beta_star->size()));
  OracleOptions opt;
  opt.threads = cfg.threads;
  return cached_oracle(cfg.params, cfg.estimand, cfg.oracle_mc_size, cfg.oracle_seed, cfg.oracle_cache, opt).beta_star;
}

const SummaryRow& BenchmarkReport::row(Method method, std::size_t n, std::size_t coefficient) const {
  for (const auto& r : rows) {
    if (r.method == method && r.n == n && r.coefficient == names.at(coefficient)) return r;
  }
  throw ValidationError("no summary row for " + to_string(method) + " n=" + std::to_string(n));
}

namespace {

std::vector<SummaryRow> summarize(Method method, std::size_t n, const std::vector<ReplicateResult>& reps,
                                  const std::vector<std::string>& names, const Vector& beta_star) {
  std::vector<SummaryRow> rows;
  int ok = 0;
  for (const auto& r : reps) ok += r.ok ? 1 : 0;
  const int failed = static_cast<int>(reps.size()) - ok;
  const double R = ok;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    SummaryRow row;
    row.method = method;
    row.n = n;
    row.coefficient = names[k];
    row.beta_star = beta_star(j);
    row.ok = ok;
    row.failed = failed;
    double mean = 0.0, mean_se = 0.0, covered = 0.0;
    for (const auto& r : reps) {
      if (!r.ok) continue;
      mean += r.beta(j);
      mean_se += r.se(j);
      covered += (r.ci[k][0] <= beta_star(j) && beta_star(j) <= r.ci[k][1]) ? 1.0 : 0.0;
    }
    mean /= R;
    mean_se /= R;
    double ss = 0.0, ss_se = 0.0;
    for (const auto& r : reps) {
      if (!r.ok) continue;
      ss += (r.beta(j) - mean) * (r.beta(j) - mean);
      ss_se += (r.se(j) - mean_se) * (r.se(j) - mean_se);
    }
    row.bias = mean - beta_star(j);
    row.sd = std::sqrt(ss / (R - 1.0));
    row.bias_mcse = row.sd / std::sqrt(R);
    row.sd_mcse = row.sd / std::sqrt(2.0 * (R - 1.0));
    row.mean_se = mean_se;
    row.mean_se_mcse = std::sqrt(ss_se / (R - 1.0)) / std::sqrt(R);
    row.coverage = covered / R;
    row.coverage_mcse = std::sqrt(row.coverage * (1.0 - row.coverage) / R);
    rows.push_back(row);
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "NaN") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ValidationError("report csv: bad number '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

constexpr const char* kCsvHeader =
    "method,n,coefficient,beta_star,bias,bias_mcse,sd,sd_mcse,mean_se,mean_se_mcse,coverage,coverage_mcse,ok,failed";

}  // namespace

BenchmarkReport run_benchmark(const BenchmarkConfig& cfg, const std::function<void(const std::string&)>& log) {
  cfg.check();
  BenchmarkReport report;
  report.tool_version = DCEE_VERSION;
  report.config = cfg;
  report.names = FeatureMap(cfg.estimand, cfg.params.T, std::vector<std::string>{"X", "Z"}).names();
  report.beta_star = resolve_beta_star(cfg);
  if (static_cast<std::size_t>(report.beta_star.size()) != report.names.size()) {
    throw ValidationError("oracle dimension does not match the estimand");
  }
  for (auto method : cfg.methods) {
    for (auto n : cfg.sample_sizes) {
      std::vector<ReplicateResult> reps(static_cast<std::size_t>(cfg.replicates));
      parallel_for(reps.size(), cfg.threads,
                   [&](std::size_t r) { reps[r] = fit_replicate(cfg, method, n, static_cast<int>(r)); });
      std::size_t failed = 0;
      const ReplicateResult* first_failure = nullptr;
      for (const auto& r : reps) {
        if (!r.ok) {
          ++failed;
          if (!first_failure) first_failure = &r;
        }
      }
      if (static_cast<double>(failed) > cfg.max_failure_rate * static_cast<double>(reps.size())) {
        std::ostringstream msg;
        msg << "benchmark aborted: " << failed << " of " << reps.size() << " replicates failed for " << to_string(method)
            << " at n=" << n << "; first failure (replicate " << first_failure->replicate << ", seed "
            << first_failure->seed << "): " << first_failure->error;
        throw NumericalError(msg.str());
      }
      auto rows = summarize(method, n, reps, report.names, report.beta_star);
      if (log) {
        std::ostringstream line;
        line << to_string(method) << " n=" << n << ": " << rows.front().ok << " ok, " << failed << " failed";
        log(line.str());
      }
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      report.replicates.insert(report.replicates.end(), reps.begin(), reps.end());
    }
  }
  return report;
}

void emit_report(const BenchmarkReport& report, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::json) {
    out << Json(report).dump(2) << '\n';
    return;
  }
  Json names = report.names;
  std::vector<double> bs(report.beta_star.data(), report.beta_star.data() + report.beta_star.size());
  out << "# tool_version: " << report.tool_version << '\n';
  out << "# config: " << Json(report.config).dump() << '\n';
  out << "# names: " << names.dump() << '\n';
  out << "# beta_star: " << Json(bs).dump() << '\n';
  out << kCsvHeader << '\n';
  for (const auto& r : report.rows) {
    out << to_string(r.method) << ',' << r.n << ',' << quote(r.coefficient) << ',' << format_double(r.beta_star) << ','
        << format_double(r.bias) << ',' << format_double(r.bias_mcse) << ',' << format_double(r.sd) << ','
        << format_double(r.sd_mcse) << ',' << format_double(r.mean_se) << ',' << format_double(r.mean_se_mcse) << ','
        << format_double(r.coverage) << ',' << format_double(r.coverage_mcse) << ',' << r.ok << ',' << r.failed
        << '\n';
  }
}

BenchmarkReport read_report_csv(std::istream& in) {
  BenchmarkReport report;
  std::string line;
  bool header = false;
  auto meta = [&](const std::string& prefix) -> std::optional<std::string> {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    return std::nullopt;
  };
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        if (auto v = meta("# tool_version: ")) report.tool_version = *v;
        if (auto v = meta("# config: ")) report.config = Json::parse(*v).get<BenchmarkConfig>();
        if (auto v = meta("# names: ")) report.names = Json::parse(*v).get<std::vector<std::string>>();
        if (auto v = meta("# beta_star: ")) {
          const auto bs = Json::parse(*v).get<std::vector<double>>();
          report.beta_star = Eigen::Map<const Vector>(bs.data(), static_cast<Eigen::Index>(bs.size()));
        }
        continue;
      }
      if (!header) {
        if (line != kCsvHeader) throw ValidationError("report csv: unexpected header");
        header = true;
        continue;
      }
      const auto f = split_csv(line);
      if (f.size() != 14) throw ValidationError("report csv: expected 14 fields, got " + std::to_string(f.size()));
      SummaryRow r;
      r.method = method_from_string(f[0]);
      r.n = static_cast<std::size_t>(std::stoull(f[1]));
      r.coefficient = f[2];
      r.beta_star = parse_double(f[3]);
      r.bias = parse_double(f[4]);
      r.bias_mcse = parse_double(f[5]);
      r.sd = parse_double(f[6]);
      r.sd_mcse = parse_double(f[7]);
      r.mean_se = parse_double(f[8]);
      r.mean_se_mcse = parse_double(f[9]);
      r.coverage = parse_double(f[10]);
      r.coverage_mcse = parse_double(f[11]);
      r.ok = std::stoi(f[12]);
      r.failed = std::stoi(f[13]);
      report.rows.push_back(r);
    }
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("report csv: ") + e.what());
  }
  if (!header) throw ValidationError("report csv: missing header");
  return report;
}

}  // namespace dcee
