#include "dcee/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "dcee/error.hpp"

namespace dcee {

namespace {

bool same_double(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

}  // namespace

void Trajectory::push_row(const DecisionRow& row, std::span<const double> covariates) {
  if (covariates.size() != width) throw ValidationError("covariate vector has wrong width for " + person_id);
  rows.push_back(row);
  covariate_values.insert(covariate_values.end(), covariates.begin(), covariates.end());
}

bool Trajectory::operator==(const Trajectory& other) const {
  if (person_id != other.person_id || width != other.width || rows.size() != other.rows.size() ||
      !same_double(outcome, other.outcome) || covariate_values.size() != other.covariate_values.size()) {
    return false;
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = other.rows[i];
    if (a.t != b.t || a.elig != b.elig || a.treat != b.treat || !same_double(a.prob, b.prob)) return false;
  }
  for (std::size_t i = 0; i < covariate_values.size(); ++i) {
    if (!same_double(covariate_values[i], other.covariate_values[i])) return false;
  }
  return true;
}

MrtDataset::MrtDataset(std::vector<std::string> covariate_names, int horizon)
    : covariate_names_(std::move(covariate_names)), horizon_(horizon) {
  if (horizon_ < 1) throw ValidationError("horizon T must be at least 1");
}

void MrtDataset::add(Trajectory trajectory) {
  if (trajectory.width != covariate_names_.size()) {
    throw ValidationError("trajectory " + trajectory.person_id + " has " + std::to_string(trajectory.width) +
                          " covariates, dataset expects " + std::to_string(covariate_names_.size()));
  }
  if (trajectory.covariate_values.size() != trajectory.rows.size() * trajectory.width) {
    throw ValidationError("trajectory " + trajectory.person_id + " covariate storage does not match its rows");
  }
  if (!ids_.insert(trajectory.person_id).second) {
    throw ValidationError("duplicate person id " + trajectory.person_id);
  }
  rows_ += trajectory.rows.size();
  trajectories_.push_back(std::move(trajectory));
}

std::optional<std::size_t> MrtDataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < covariate_names_.size(); ++j) {
    if (covariate_names_[j] == name) return j;
  }
  return std::nullopt;
}

std::size_t MrtDataset::require_covariate(const std::string& name) const {
  if (auto idx = covariate_index(name)) return *idx;
  throw ValidationError("unknown covariate '" + name + "'");
}

std::vector<std::size_t> MrtDataset::row_offsets() const {
  std::vector<std::size_t> offsets;
  offsets.reserve(trajectories_.size() + 1);
  std::size_t acc = 0;
  for (const auto& traj : trajectories_) {
    offsets.push_back(acc);
    acc += traj.rows.size();
  }
  offsets.push_back(acc);
  return offsets;
}

bool MrtDataset::operator==(const MrtDataset& other) const {
  return horizon_ == other.horizon_ && covariate_names_ == other.covariate_names_ &&
         trajectories_ == other.trajectories_;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool is_na(const std::string& s) { return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "."; }

[[noreturn]] void fail_row(const std::string& source, std::size_t line, const std::string& msg) {
  throw ValidationError(source + ": row " + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& s, const std::string& source, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    fail_row(source, line, "non-numeric value '" + s + "' in column '" + column + "'");
  }
  return value;
}

int parse_indicator(const std::string& s, const std::string& source, std::size_t line, const std::string& column) {
  if (is_na(s)) fail_row(source, line, "missing value in column '" + column + "'");
  const double v = parse_number(s, source, line, column);
  if (v != 0.0 && v != 1.0) fail_row(source, line, "column '" + column + "' must be 0 or 1, got '" + s + "'");
  return static_cast<int>(v);
}

void write_number(std::ostream& out, double v) {
  if (std::isnan(v)) {
    out << "NA";
    return;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, ptr - buf);
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

MrtDataset read_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(source + ": empty file, header required");
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) h = trim(h);

  auto find_column = [&](const std::string& name, const char* role) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw ValidationError(source + ": missing required column '" + name + "' (" + role + ")");
  };
  const std::size_t c_id = find_column(schema.id, "id");
  const std::size_t c_t = find_column(schema.t, "decision point");
  const std::size_t c_elig = find_column(schema.elig, "eligibility");
  const std::size_t c_treat = find_column(schema.treat, "treatment");
  const std::size_t c_prob = find_column(schema.prob, "probability");
  const std::size_t c_y = find_column(schema.outcome, "outcome");

  std::vector<std::string> cov_names;
  std::vector<std::size_t> cov_cols;
  if (schema.covariates.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j == c_id || j == c_t || j == c_elig || j == c_treat || j == c_prob || j == c_y) continue;
      cov_names.push_back(header[j]);
      cov_cols.push_back(j);
    }
  } else {
    for (const auto& name : schema.covariates) {
      cov_names.push_back(name);
      cov_cols.push_back(find_column(name, "covariate"));
    }
  }

  std::vector<Trajectory> people;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<double> covs(cov_cols.size());
  std::size_t line_no = 1;
  int horizon = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail_row(source, line_no,
               "malformed row: expected " + std::to_string(header.size()) + " fields, got " +
                   std::to_string(fields.size()));
    }
    for (auto& f : fields) f = trim(f);
    const std::string& id = fields[c_id];
    if (id.empty()) fail_row(source, line_no, "empty id");

    if (is_na(fields[c_t])) fail_row(source, line_no, "missing decision point");
    const double t_value = parse_number(fields[c_t], source, line_no, schema.t);
    if (t_value != std::floor(t_value) || t_value < 1) {
      fail_row(source, line_no, "decision point must be a positive integer, got '" + fields[c_t] + "'");
    }
    DecisionRow row;
    row.t = static_cast<int>(t_value);
    row.elig = parse_indicator(fields[c_elig], source, line_no, schema.elig);
    row.treat = parse_indicator(fields[c_treat], source, line_no, schema.treat);
    row.prob = is_na(fields[c_prob]) ? kMissing : parse_number(fields[c_prob], source, line_no, schema.prob);
    if (is_na(fields[c_y])) fail_row(source, line_no, "missing outcome");
    const double y = parse_number(fields[c_y], source, line_no, schema.outcome);
    for (std::size_t j = 0; j < cov_cols.size(); ++j) {
      const auto& f = fields[cov_cols[j]];
      covs[j] = is_na(f) ? kMissing : parse_number(f, source, line_no, cov_names[j]);
    }

    auto [it, inserted] = index.try_emplace(id, people.size());
    if (inserted) {
      Trajectory traj;
      traj.person_id = id;
      traj.width = cov_cols.size();
      traj.outcome = y;
      people.push_back(std::move(traj));
    }
    Trajectory& traj = people[it->second];
    if (!same_double(traj.outcome, y)) {
      fail_row(source, line_no, "inconsistent outcome for person " + id);
    }
    traj.push_row(row, covs);
    horizon = std::max(horizon, row.t);
  }
  if (people.empty()) throw ValidationError(source + ": no data rows");

  MrtDataset ds(std::move(cov_names), horizon);
  for (auto& traj : people) {
    // stable sort rows (and their covariates) by t
    std::vector<std::size_t> order(traj.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return traj.rows[a].t < traj.rows[b].t; });
    Trajectory sorted;
    sorted.person_id = traj.person_id;
    sorted.width = traj.width;
    sorted.outcome = traj.outcome;
    sorted.rows.reserve(order.size());
    for (std::size_t i : order) sorted.push_row(traj.rows[i], traj.covariates(i));
    ds.add(std::move(sorted));
  }
  return ds;
}

MrtDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file '" + path + "'");
  return read_csv(in, schema, path);
}

void write_csv(const MrtDataset& ds, std::ostream& out, const CsvSchema& schema) {
  out << quote_if_needed(schema.id) << ',' << quote_if_needed(schema.t) << ',' << quote_if_needed(schema.elig)
      << ',' << quote_if_needed(schema.treat) << ',' << quote_if_needed(schema.prob) << ','
      << quote_if_needed(schema.outcome);
  for (const auto& name : ds.covariate_names()) out << ',' << quote_if_needed(name);
  out << '\n';
  for (const auto& traj : ds.trajectories()) {
    const std::string id = quote_if_needed(traj.person_id);
    for (std::size_t i = 0; i < traj.rows.size(); ++i) {
      const auto& r = traj.rows[i];
      out << id << ',' << r.t << ',' << r.elig << ',' << r.treat << ',';
      write_number(out, r.prob);
      out << ',';
      write_number(out, traj.outcome);
      for (double v : traj.covariates(i)) {
        out << ',';
        write_number(out, v);
      }
      out << '\n';
    }
  }
}

void write_csv_file(const MrtDataset& ds, const std::string& path, const CsvSchema& schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  write_csv(ds, out, schema);
  if (!out) throw Error("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Validation

std::string ValidationReport::summary(std::size_t max_lines) const {
  std::ostringstream s;
  for (std::size_t i = 0; i < issues.size() && i < max_lines; ++i) {
    const auto& is = issues[i];
    s << "  person " << is.person_id;
    if (is.t > 0) s << " t=" << is.t;
    s << " [" << is.rule << "] " << is.message << '\n';
  }
  if (issues.size() > max_lines) s << "  ... and " << issues.size() - max_lines << " more\n";
  return s.str();
}

ValidationReport validate(const MrtDataset& ds, double clip,
                          const std::optional<std::vector<std::string>>& used_covariates) {
  ValidationReport report;
  auto issue = [&](const Trajectory& traj, int t, std::string rule, std::string message) {
    report.issues.push_back({traj.person_id, t, std::move(rule), std::move(message)});
  };

  std::vector<std::size_t> checked_columns;
  if (used_covariates) {
    for (const auto& name : *used_covariates) {
      if (auto j = ds.covariate_index(name)) {
        checked_columns.push_back(*j);
      } else {
        report.issues.push_back({"", 0, "covariate-unknown", "covariate '" + name + "' is not in the dataset"});
      }
    }
  } else {
    for (std::size_t j = 0; j < ds.covariate_names().size(); ++j) checked_columns.push_back(j);
  }

  const int horizon = ds.horizon();
  for (const auto& traj : ds.trajectories()) {
    if (!std::isfinite(traj.outcome)) issue(traj, 0, "outcome", "distal outcome is not finite");
    if (static_cast<int>(traj.rows.size()) != horizon) {
      issue(traj, 0, "horizon",
            "has " + std::to_string(traj.rows.size()) + " decision points, expected T=" + std::to_string(horizon));
    }
    for (std::size_t i = 0; i < traj.rows.size(); ++i) {
      const auto& r = traj.rows[i];
      if (r.t != static_cast<int>(i) + 1) {
        issue(traj, r.t, "time-index", "decision points must be exactly 1..T without gaps or duplicates");
      }
      if ((r.elig != 0 && r.elig != 1) || (r.treat != 0 && r.treat != 1)) {
        issue(traj, r.t, "binary", "eligibility and treatment must be 0 or 1");
      }
      if (r.elig == 0 && r.treat == 1) {
        issue(traj, r.t, "ineligible-treated", "treated at an ineligible decision point");
      }
      if (r.elig == 1) {
        if (std::isnan(r.prob)) {
          issue(traj, r.t, "missing-prob", "randomization probability missing at an eligible row");
        } else if (!(r.prob > clip && r.prob < 1.0 - clip)) {
          std::ostringstream msg;
          msg << "randomization probability " << r.prob << " outside (" << clip << ", " << 1.0 - clip << ")";
          issue(traj, r.t, "positivity", msg.str());
        }
      }
      const auto covs = traj.covariates(i);
      for (std::size_t j : checked_columns) {
        if (!std::isfinite(covs[j])) {
          issue(traj, r.t, "covariate-missing", "covariate '" + ds.covariate_names()[j] + "' is missing");
        }
      }
    }
  }
  return report;
}

}  // namespace dcee
