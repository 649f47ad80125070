#include "dcee/json_io.hpp"

#include <algorithm>
#include <fstream>

#include "dcee/error.hpp"

namespace dcee {

void require_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context) {
  if (!j.is_object()) throw ValidationError(std::string(context) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw ValidationError(std::string(context) + ": unknown key '" + item.key() + "'");
    }
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::uint64_t json_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

Json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vector(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json matrix_rows(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = m(i, k);
    rows.push_back(row);
  }
  return rows;
}

template <class T>
void get_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

std::string learner_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::mean_only: return "mean-only";
    case LearnerKind::linear: return "linear";
    case LearnerKind::ridge_spline: return "ridge-spline";
    case LearnerKind::constant: return "constant";
  }
  return "?";
}

LearnerKind learner_kind(std::string name) {
  std::replace(name.begin(), name.end(), '_', '-');
  if (name == "mean-only") return LearnerKind::mean_only;
  if (name == "linear") return LearnerKind::linear;
  if (name == "ridge-spline") return LearnerKind::ridge_spline;
  if (name == "constant") return LearnerKind::constant;
  throw ValidationError("unknown nuisance kind '" + name + "'");
}

}  // namespace

void to_json(Json& j, const FeatureTerm& term) {
  switch (term.kind) {
    case TermKind::intercept: j = {{"type", "intercept"}}; break;
    case TermKind::polynomial: j = {{"type", "polynomial"}, {"degree", term.degree}, {"offset", term.offset}}; break;
    case TermKind::bspline: j = {{"type", "bspline"}, {"df", term.df}, {"period", term.period}}; break;
    case TermKind::moderator: j = {{"type", "moderator"}, {"name", term.moderator}}; break;
    case TermKind::moderator_time:
      j = {{"type", "moderator_time"}, {"name", term.moderator}, {"degree", term.degree}, {"offset", term.offset}};
      break;
  }
}

void from_json(const Json& j, FeatureTerm& term) {
  if (j.is_string()) {
    if (j.get<std::string>() != "intercept") throw ValidationError("feature term '" + j.get<std::string>() + "' needs parameters");
    term = FeatureTerm::intercept();
    return;
  }
  require_keys(j, {"type", "degree", "offset", "df", "period", "name"}, "feature term");
  const auto type = j.at("type").get<std::string>();
  term = FeatureTerm{};
  if (type == "intercept") {
    term.kind = TermKind::intercept;
  } else if (type == "polynomial") {
    term.kind = TermKind::polynomial;
  } else if (type == "bspline") {
    term.kind = TermKind::bspline;
    if (!j.contains("df")) throw ValidationError("bspline term needs 'df'");
  } else if (type == "moderator") {
    term.kind = TermKind::moderator;
  } else if (type == "moderator_time") {
    term.kind = TermKind::moderator_time;
  } else {
    throw ValidationError("unknown feature term type '" + type + "'");
  }
  if ((term.kind == TermKind::moderator || term.kind == TermKind::moderator_time) && !j.contains("name")) {
    throw ValidationError("moderator term needs 'name'");
  }
  get_if(j, "degree", term.degree);
  get_if(j, "offset", term.offset);
  get_if(j, "df", term.df);
  get_if(j, "period", term.period);
  get_if(j, "name", term.moderator);
}

void to_json(Json& j, const WeightSpec& weight) {
  switch (weight.kind) {
    case WeightKind::uniform: j = {{"type", "uniform"}}; break;
    case WeightKind::point_mass: j = {{"type", "point_mass"}, {"t0", weight.t0}}; break;
    case WeightKind::explicit_values: j = {{"type", "explicit"}, {"values", weight.values}}; break;
  }
}

void from_json(const Json& j, WeightSpec& weight) {
  if (j.is_string() && j.get<std::string>() == "uniform") {
    weight = WeightSpec::uniform();
    return;
  }
  require_keys(j, {"type", "t0", "values"}, "weight");
  const auto type = j.at("type").get<std::string>();
  if (type == "uniform") {
    weight = WeightSpec::uniform();
  } else if (type == "point_mass") {
    weight = WeightSpec::point_mass(j.at("t0").get<int>());
  } else if (type == "explicit") {
    weight = WeightSpec::explicit_values(j.at("values").get<std::vector<double>>());
  } else {
    throw ValidationError("unknown weight type '" + type + "'");
  }
}

void to_json(Json& j, const EstimandSpec& spec) {
  j = {{"moderators", spec.moderators}, {"terms", spec.terms}, {"weight", spec.weight}};
}

void from_json(const Json& j, EstimandSpec& spec) {
  require_keys(j, {"moderators", "terms", "weight"}, "estimand");
  spec = EstimandSpec{};
  get_if(j, "moderators", spec.moderators);
  if (j.contains("terms")) {
    spec.terms = j.at("terms").get<std::vector<FeatureTerm>>();
  } else {
    spec.terms = {FeatureTerm::intercept()};
  }
  get_if(j, "weight", spec.weight);
}

void to_json(Json& j, const LearnerSpec& spec) {
  j = {{"kind", learner_name(spec.kind)}, {"spline_df", spec.spline_df}, {"ridge_lambda", spec.ridge_lambda}};
  if (spec.covariates) j["covariates"] = *spec.covariates;
  if (spec.continuous_covariates) j["continuous_covariates"] = *spec.continuous_covariates;
  if (spec.kind == LearnerKind::constant) j["constant_value"] = spec.constant_value;
}

void from_json(const Json& j, LearnerSpec& spec) {
  require_keys(j, {"kind", "spline_df", "ridge_lambda", "covariates", "continuous_covariates", "constant_value"},
               "nuisance");
  spec = LearnerSpec{};
  if (j.contains("kind")) spec.kind = learner_kind(j.at("kind").get<std::string>());
  get_if(j, "spline_df", spec.spline_df);
  get_if(j, "ridge_lambda", spec.ridge_lambda);
  if (j.contains("covariates")) spec.covariates = j.at("covariates").get<std::vector<std::string>>();
  if (j.contains("continuous_covariates")) {
    spec.continuous_covariates = j.at("continuous_covariates").get<std::vector<std::string>>();
  }
  get_if(j, "constant_value", spec.constant_value);
  spec.check();
}

void to_json(Json& j, const EstimationConfig& config) {
  j = {{"estimand", config.estimand}, {"nuisance", config.nuisance}, {"crossfit_K", config.crossfit_K},
       {"seed", config.seed},         {"ci_level", config.ci_level}, {"t_quantile", config.t_quantile},
       {"clip", config.clip}};
}

void from_json(const Json& j, EstimationConfig& config) {
  require_keys(j, {"estimand", "nuisance", "crossfit_K", "seed", "ci_level", "t_quantile", "clip"}, "estimation config");
  config = EstimationConfig{};
  get_if(j, "estimand", config.estimand);
  get_if(j, "nuisance", config.nuisance);
  get_if(j, "crossfit_K", config.crossfit_K);
  get_if(j, "seed", config.seed);
  get_if(j, "ci_level", config.ci_level);
  get_if(j, "t_quantile", config.t_quantile);
  get_if(j, "clip", config.clip);
}

void to_json(Json& j, const CsvSchema& schema) {
  j = {{"id", schema.id},       {"t", schema.t},         {"elig", schema.elig},
       {"treat", schema.treat}, {"prob", schema.prob},   {"outcome", schema.outcome},
       {"covariates", schema.covariates}};
}

void from_json(const Json& j, CsvSchema& schema) {
  require_keys(j, {"id", "t", "elig", "treat", "prob", "outcome", "covariates"}, "schema");
  schema = CsvSchema{};
  get_if(j, "id", schema.id);
  get_if(j, "t", schema.t);
  get_if(j, "elig", schema.elig);
  get_if(j, "treat", schema.treat);
  get_if(j, "prob", schema.prob);
  get_if(j, "outcome", schema.outcome);
  get_if(j, "covariates", schema.covariates);
}

void to_json(Json& j, const SimParams& p) {
  j = {{"T", p.T},         {"theta", p.theta}, {"zeta", p.zeta},     {"elig_prob", p.elig_prob},
       {"alpha", p.alpha}, {"nu", p.nu},       {"gamma", p.gamma},   {"lambda", p.lambda},
       {"xi", p.xi},       {"eta_sd", p.eta_sd}, {"eps_sd", p.eps_sd}};
}

void from_json(const Json& j, SimParams& p) {
  require_keys(j, {"T", "theta", "zeta", "elig_prob", "alpha", "nu", "gamma", "lambda", "xi", "eta_sd", "eps_sd"},
               "simulation params");
  p = default_paper_params(j.value("T", 30));
  get_if(j, "theta", p.theta);
  get_if(j, "zeta", p.zeta);
  get_if(j, "elig_prob", p.elig_prob);
  get_if(j, "alpha", p.alpha);
  get_if(j, "nu", p.nu);
  get_if(j, "gamma", p.gamma);
  get_if(j, "lambda", p.lambda);
  get_if(j, "xi", p.xi);
  get_if(j, "eta_sd", p.eta_sd);
  get_if(j, "eps_sd", p.eps_sd);
  p.check();
}

void to_json(Json& j, const PolicySpec& policy) {
  if (policy.kind == PolicySpec::Kind::mrt) {
    j = {{"kind", "mrt"}};
  } else {
    j = {{"kind", "excursion"}, {"t0", policy.t0}, {"a", policy.a}};
  }
}

void from_json(const Json& j, PolicySpec& policy) {
  if (j.is_string() && j.get<std::string>() == "mrt") {
    policy = PolicySpec::mrt();
    return;
  }
  require_keys(j, {"kind", "t0", "a"}, "policy");
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "mrt") {
    policy = PolicySpec::mrt();
  } else if (kind == "excursion") {
    policy = PolicySpec::excursion(j.at("t0").get<int>(), j.at("a").get<int>());
  } else {
    throw ValidationError("unknown policy kind '" + kind + "'");
  }
}

void to_json(Json& j, const TauCell& cell) {
  j = {{"t", cell.t}, {"level", cell.level}, {"tau", cell.tau}, {"se", cell.se}, {"n1", cell.n1}, {"n0", cell.n0}};
}

void to_json(Json& j, const OracleResult& r) {
  j = {{"names", r.names},
       {"beta_star", vector_json(r.beta_star)},
       {"mc_se", vector_json(r.mc_se)},
       {"per_t_tau", r.per_t_tau},
       {"mc_size", r.mc_size},
       {"seed", r.seed},
       {"common_random_numbers", r.common_random_numbers}};
}

void from_json(const Json& j, OracleResult& r) {
  r = OracleResult{};
  j.at("names").get_to(r.names);
  r.beta_star = json_vector(j.at("beta_star"));
  r.mc_se = json_vector(j.at("mc_se"));
  j.at("mc_size").get_to(r.mc_size);
  j.at("seed").get_to(r.seed);
  get_if(j, "common_random_numbers", r.common_random_numbers);
  if (j.contains("per_t_tau")) {
    for (const auto& c : j.at("per_t_tau")) {
      TauCell cell;
      c.at("t").get_to(cell.t);
      c.at("level").get_to(cell.level);
      c.at("tau").get_to(cell.tau);
      c.at("se").get_to(cell.se);
      c.at("n1").get_to(cell.n1);
      c.at("n0").get_to(cell.n0);
      r.per_t_tau.push_back(std::move(cell));
    }
  }
}

void to_json(Json& j, const DceeFit& fit) {
  Json coefs = Json::array();
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    coefs.push_back({{"name", fit.names[i]}, {"estimate", fit.beta(k)}, {"se", fit.se(k)}, {"ci", fit.ci[i]}});
  }
  j = {{"method", fit.crossfit_K > 0 ? "dcee-cf" : "dcee"},
       {"coefficients", coefs},
       {"ci_level", fit.ci_level},
       {"crossfit_K", fit.crossfit_K},
       {"vcov", matrix_rows(fit.vcov)},
       {"diagnostics",
        {{"bread_condition", fit.diagnostics.bread_condition},
         {"max_residual", fit.diagnostics.max_residual},
         {"seed", fit.diagnostics.seed},
         {"persons", fit.diagnostics.persons},
         {"rows", fit.diagnostics.rows},
         {"fallback_folds", fit.diagnostics.fallback_folds}}}};
}

void to_json(Json& j, const ComparatorFit& fit) {
  Json coefs = Json::array();
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    coefs.push_back({{"name", fit.names[i]}, {"estimate", fit.beta(k)}, {"se", fit.se(k)}, {"ci", fit.ci[i]}});
  }
  j = {{"method", to_string(fit.method)},
       {"coefficients", coefs},
       {"ci_level", fit.ci_level},
       {"vcov", matrix_rows(fit.vcov)}};
  if (fit.method == ComparatorMethod::wcls) j["ptilde"] = fit.ptilde;
}

void to_json(Json& j, const BenchmarkConfig& cfg) {
  std::vector<std::string> methods;
  for (auto m : cfg.methods) methods.push_back(to_string(m));
  j = {{"sample_sizes", cfg.sample_sizes},
       {"replicates", cfg.replicates},
       {"methods", methods},
       {"estimand", cfg.estimand},
       {"learner", cfg.learner},
       {"crossfit_K", cfg.crossfit_K},
       {"seed", cfg.seed},
       {"ci_level", cfg.ci_level},
       {"params", cfg.params},
       {"oracle_mc_size", cfg.oracle_mc_size},
       {"oracle_seed", cfg.oracle_seed},
       {"oracle_cache", cfg.oracle_cache},
       {"max_failure_rate", cfg.max_failure_rate}};
  if (cfg.beta_star) j["beta_star"] = *cfg.beta_star;
}

void from_json(const Json& j, BenchmarkConfig& cfg) {
  require_keys(j,
               {"sample_sizes", "replicates", "methods", "estimand", "learner", "nuisance", "crossfit_K", "seed",
                "ci_level", "params", "beta_star", "oracle_mc_size", "oracle_seed", "oracle_cache",
                "max_failure_rate"},
               "benchmark config");
  cfg = BenchmarkConfig{};
  get_if(j, "sample_sizes", cfg.sample_sizes);
  get_if(j, "replicates", cfg.replicates);
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) cfg.methods.push_back(method_from_string(m.get<std::string>()));
  }
  get_if(j, "estimand", cfg.estimand);
  get_if(j, "nuisance", cfg.learner);
  get_if(j, "learner", cfg.learner);
  get_if(j, "crossfit_K", cfg.crossfit_K);
  get_if(j, "seed", cfg.seed);
  get_if(j, "ci_level", cfg.ci_level);
  get_if(j, "params", cfg.params);
  if (j.contains("beta_star")) cfg.beta_star = j.at("beta_star").get<std::vector<double>>();
  get_if(j, "oracle_mc_size", cfg.oracle_mc_size);
  get_if(j, "oracle_seed", cfg.oracle_seed);
  get_if(j, "oracle_cache", cfg.oracle_cache);
  get_if(j, "max_failure_rate", cfg.max_failure_rate);
}

void to_json(Json& j, const SummaryRow& row) {
  j = {{"method", to_string(row.method)},
       {"n", row.n},
       {"coefficient", row.coefficient},
       {"beta_star", row.beta_star},
       {"bias", row.bias},
       {"bias_mcse", row.bias_mcse},
       {"sd", row.sd},
       {"sd_mcse", row.sd_mcse},
       {"mean_se", row.mean_se},
       {"mean_se_mcse", row.mean_se_mcse},
       {"coverage", row.coverage},
       {"coverage_mcse", row.coverage_mcse},
       {"ok", row.ok},
       {"failed", row.failed}};
}

void to_json(Json& j, const BenchmarkReport& report) {
  Json reps = Json::array();
  for (const auto& r : report.replicates) {
    Json e = {{"method", to_string(r.method)}, {"n", r.n}, {"replicate", r.replicate}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
      e["beta"] = vector_json(r.beta);
      e["se"] = vector_json(r.se);
    } else {
      e["error"] = r.error;
    }
    reps.push_back(std::move(e));
  }
  j = {{"tool_version", report.tool_version},
       {"seed", report.config.seed},
       {"config", report.config},
       {"names", report.names},
       {"beta_star", vector_json(report.beta_star)},
       {"summary", report.rows},
       {"replicates", reps}};
}

}  // namespace dcee
