#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "dcee/benchmark.hpp"
#include "dcee/error.hpp"
#include "dcee/json_io.hpp"

using namespace dcee;

namespace {

BenchmarkConfig small_config() {
  BenchmarkConfig cfg;
  cfg.params = default_paper_params(6);
  cfg.sample_sizes = {20, 40};
  cfg.replicates = 4;
  cfg.methods = {Method::dcee, Method::dcee_cf, Method::gee, Method::wcls};
  cfg.crossfit_K = 2;
  cfg.beta_star = std::vector<double>{1.0};
  cfg.seed = 17;
  return cfg;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("method names") {
    for (auto m : {Method::dcee, Method::dcee_cf, Method::gee, Method::wcls}) CHECK(method_from_string(to_string(m)) == m);
    CHECK(to_string(Method::dcee_cf) == "dcee-cf");
    CHECK_THROWS_AS(method_from_string("ols"), ValidationError);
  }

  TEST_CASE("replicate seeds are distinct") {
    std::set<std::uint64_t> seen;
    std::size_t count = 0;
    for (auto m : {Method::dcee, Method::dcee_cf, Method::gee, Method::wcls}) {
      for (std::size_t n : {30, 100, 300, 500}) {
        for (int r = 0; r < 500; ++r) {
          seen.insert(replicate_seed(1, m, n, r));
          ++count;
        }
      }
    }
    CHECK(seen.size() == count);
    CHECK(replicate_seed(1, Method::dcee, 30, 0) != replicate_seed(2, Method::dcee, 30, 0));
  }

  TEST_CASE("small benchmark run") {
    const auto cfg = small_config();
    std::vector<std::string> log;
    const auto report = run_benchmark(cfg, [&](const std::string& line) { log.push_back(line); });
    CHECK(log.size() == 8);
    CHECK(report.rows.size() == 8);
    CHECK(report.replicates.size() == 32);
    for (const auto& row : report.rows) {
      CHECK(row.ok + row.failed == 4);
      CHECK(std::isfinite(row.bias));
      CHECK(std::isfinite(row.sd));
      CHECK(std::isfinite(row.mean_se));
      CHECK((row.coverage >= 0.0 && row.coverage <= 1.0));
      CHECK(row.beta_star == 1.0);
    }
    for (const auto& rep : report.replicates) CHECK(rep.seed == replicate_seed(cfg.seed, rep.method, rep.n, rep.replicate));

    // same seed, different thread count: identical summaries
    auto threaded = cfg;
    threaded.threads = 3;
    CHECK(run_benchmark(threaded).rows == report.rows);

    std::stringstream csv;
    emit_report(report, ReportFormat::csv, csv);
    const auto back = read_report_csv(csv);
    CHECK(back.rows == report.rows);
    CHECK(back.names == report.names);
    CHECK(back.beta_star == report.beta_star);
    CHECK(back.tool_version == report.tool_version);
    CHECK(Json(back.config) == Json(report.config));

    std::stringstream js;
    emit_report(report, ReportFormat::json, js);
    const auto j = Json::parse(js.str());
    for (const char* key : {"tool_version", "seed", "config", "names", "beta_star", "summary", "replicates"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["seed"] == 17);
    CHECK(j["summary"].size() == 8);
  }

  TEST_CASE("config validation") {
    auto cfg = small_config();
    cfg.methods.clear();
    CHECK_THROWS_AS(run_benchmark(cfg), ValidationError);
    cfg = small_config();
    cfg.replicates = 1;
    CHECK_THROWS_AS(cfg.check(), ValidationError);
    cfg = small_config();
    cfg.crossfit_K = 25;
    CHECK_THROWS_AS(cfg.check(), ValidationError);
    cfg = small_config();
    cfg.beta_star = std::vector<double>{1.0, 2.0};
    CHECK_THROWS_AS(cfg.check(), ValidationError);
    cfg = small_config();
    cfg.estimand = EstimandSpec::moderated_by("W");
    CHECK_THROWS_AS(cfg.check(), ValidationError);
    cfg = small_config();
    cfg.sample_sizes = {5};
    CHECK_THROWS_AS(cfg.check(), ValidationError);
  }

  TEST_CASE("config json") {
    const auto cfg = small_config();
    const Json j = cfg;
    const auto back = j.get<BenchmarkConfig>();
    CHECK(Json(back) == j);
    CHECK_THROWS_AS(Json::parse(R"({"replicates": 3, "bogus": 1})").get<BenchmarkConfig>(), ValidationError);
    CHECK_THROWS_AS(Json::parse(R"({"methods": ["ols"]})").get<BenchmarkConfig>(), ValidationError);
    CHECK_THROWS_AS(Json::parse(R"({"estimand": {"terms": [{"type": "wavelet"}]}})").get<BenchmarkConfig>(),
                    ValidationError);
  }

  TEST_CASE("oracle cache") {
    const auto dir = std::filesystem::temp_directory_path() / "dcee_oracle_cache_test";
    std::filesystem::remove_all(dir);
    const auto p = default_paper_params(3);
    const auto spec = EstimandSpec::marginal();
    const auto key = oracle_cache_key(p, spec, kMinOracleSize, 5);
    CHECK(key == oracle_cache_key(p, spec, kMinOracleSize, 5));
    CHECK(key != oracle_cache_key(p, spec, kMinOracleSize, 6));
    CHECK(key != oracle_cache_key(p, EstimandSpec::moderated_by("Z"), kMinOracleSize, 5));
    const auto first = cached_oracle(p, spec, kMinOracleSize, 5, dir.string());
    CHECK(std::filesystem::exists(dir));
    const auto second = cached_oracle(p, spec, kMinOracleSize, 5, dir.string());
    CHECK(first.beta_star == second.beta_star);
    CHECK(first.mc_se == second.mc_se);
    std::filesystem::remove_all(dir);
  }
}
