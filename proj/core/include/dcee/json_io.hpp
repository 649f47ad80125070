#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "dcee/benchmark.hpp"
#include "dcee/comparators.hpp"
#include "dcee/data.hpp"
#include "dcee/estimand.hpp"
#include "dcee/estimator.hpp"
#include "dcee/nuisance.hpp"
#include "dcee/simulator.hpp"

namespace dcee {

using Json = nlohmann::json;

/// Throws ValidationError if `j` is not an object or has a key outside `allowed`.
void require_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view context);

/// Reads a JSON file; parse errors become ValidationError.
Json read_json_file(const std::string& path);

/// 64-bit FNV-1a of the compact dump (object keys are sorted, so the dump is canonical).
std::uint64_t json_hash(const Json& j);

void to_json(Json& j, const FeatureTerm& term);
void from_json(const Json& j, FeatureTerm& term);
void to_json(Json& j, const WeightSpec& weight);
void from_json(const Json& j, WeightSpec& weight);
void to_json(Json& j, const EstimandSpec& spec);
void from_json(const Json& j, EstimandSpec& spec);

void to_json(Json& j, const LearnerSpec& spec);
void from_json(const Json& j, LearnerSpec& spec);
void to_json(Json& j, const EstimationConfig& config);
void from_json(const Json& j, EstimationConfig& config);

void to_json(Json& j, const CsvSchema& schema);
void from_json(const Json& j, CsvSchema& schema);

void to_json(Json& j, const SimParams& params);
/// Missing keys take the default simulation values (vectors are rebuilt for the given T).
void from_json(const Json& j, SimParams& params);
void to_json(Json& j, const PolicySpec& policy);
void from_json(const Json& j, PolicySpec& policy);
void to_json(Json& j, const TauCell& cell);
void to_json(Json& j, const OracleResult& result);
void from_json(const Json& j, OracleResult& result);

void to_json(Json& j, const DceeFit& fit);
void to_json(Json& j, const ComparatorFit& fit);

void to_json(Json& j, const BenchmarkConfig& cfg);
void from_json(const Json& j, BenchmarkConfig& cfg);
void to_json(Json& j, const SummaryRow& row);
void to_json(Json& j, const BenchmarkReport& report);

}  // namespace dcee
