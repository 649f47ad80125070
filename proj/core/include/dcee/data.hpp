#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

namespace dcee {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// One decision point of one person. Covariates live on the owning Trajectory.
struct DecisionRow {
  int t = 0;
  int elig = 0;
  int treat = 0;
  double prob = kMissing;  ///< P(A_t = 1 | H_t) at eligible rows; ignored elsewhere

  bool operator==(const DecisionRow&) const = default;
};

/// All decision points of one person plus the distal outcome.
struct Trajectory {
  std::string person_id;
  std::vector<DecisionRow> rows;
  std::vector<double> covariate_values;  ///< row-major, rows.size() x width
  std::size_t width = 0;
  double outcome = kMissing;

  std::span<const double> covariates(std::size_t row) const {
    return {covariate_values.data() + row * width, width};
  }
  void push_row(const DecisionRow& row, std::span<const double> covariates);

  bool operator==(const Trajectory& other) const;
};

/// Long-format micro-randomized trial data, grouped by person.
///
/// The horizon T and the covariate names are shared by every trajectory. Rows
/// are not checked for gaps or positivity on insertion; that is validate()'s job.
class MrtDataset {
 public:
  MrtDataset() = default;
  MrtDataset(std::vector<std::string> covariate_names, int horizon);

  /// Appends a trajectory. Throws ValidationError on a duplicate person id or
  /// a covariate width that does not match covariate_names().
  void add(Trajectory trajectory);

  const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  std::size_t size() const noexcept { return trajectories_.size(); }
  std::size_t row_count() const noexcept { return rows_; }
  int horizon() const noexcept { return horizon_; }
  const std::vector<std::string>& covariate_names() const noexcept { return covariate_names_; }
  std::optional<std::size_t> covariate_index(const std::string& name) const;
  /// Like covariate_index but throws ValidationError for unknown names.
  std::size_t require_covariate(const std::string& name) const;

  /// Offsets of each person's first row in dataset (person-major) row order; size() + 1 entries.
  std::vector<std::size_t> row_offsets() const;

  bool operator==(const MrtDataset& other) const;

 private:
  std::vector<std::string> covariate_names_;
  int horizon_ = 0;
  std::vector<Trajectory> trajectories_;
  std::unordered_set<std::string> ids_;
  std::size_t rows_ = 0;
};

/// Column names of the long CSV. An empty covariate list means "every column
/// not claimed by another role".
struct CsvSchema {
  std::string id = "id";
  std::string t = "t";
  std::string elig = "elig";
  std::string treat = "treat";
  std::string prob = "prob";
  std::string outcome = "Y";
  std::vector<std::string> covariates;
};

MrtDataset read_csv(std::istream& in, const CsvSchema& schema = {}, const std::string& source = "<stream>");
MrtDataset load_csv(const std::string& path, const CsvSchema& schema = {});
void write_csv(const MrtDataset& ds, std::ostream& out, const CsvSchema& schema = {});
void write_csv_file(const MrtDataset& ds, const std::string& path, const CsvSchema& schema = {});

struct ValidationIssue {
  std::string person_id;
  int t = 0;  ///< 0 when the issue concerns the whole trajectory
  std::string rule;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const noexcept { return issues.empty(); }
  /// First few issues, one per line.
  std::string summary(std::size_t max_lines = 5) const;
};

inline constexpr double kDefaultClip = 0.005;

/// Checks every row and trajectory invariant. Rules: ineligible-treated,
/// binary, positivity, missing-prob, time-index, horizon, outcome,
/// covariate-missing. `used_covariates` restricts the missingness check;
/// nullopt checks all covariates.
ValidationReport validate(const MrtDataset& ds, double clip = kDefaultClip,
                          const std::optional<std::vector<std::string>>& used_covariates = std::nullopt);

}  // namespace dcee
