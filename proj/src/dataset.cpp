#include "loal/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

namespace loal {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_value(const std::string& s) {
  if (s.empty() || s == "NA" || s == "nan" || s == "NaN") return kNaN;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ValidationError("unparseable numeric field: '" + s + "'");
  return v;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

LongitudinalDataset LongitudinalDataset::subset(const std::vector<int>& rows) const {
  LongitudinalDataset out;
  out.T = T;
  out.n = static_cast<int>(rows.size());
  out.block_names = block_names;
  out.baseline_modifier = baseline_modifier;
  out.monotone_treatment = monotone_treatment;
  out.covariates.reserve(covariates.size());
  for (const auto& block : covariates) {
    Eigen::MatrixXd b(out.n, block.cols());
    for (int i = 0; i < out.n; ++i) b.row(i) = block.row(rows[i]);
    out.covariates.push_back(std::move(b));
  }
  out.treatments.resize(out.n, treatments.cols());
  for (int i = 0; i < out.n; ++i) out.treatments.row(i) = treatments.row(rows[i]);
  out.censoring.resize(out.n, censoring.cols());
  for (int i = 0; i < out.n; ++i) out.censoring.row(i) = censoring.row(rows[i]);
  out.outcome.resize(out.n);
  for (int i = 0; i < out.n; ++i) out.outcome(i) = outcome(rows[i]);
  return out;
}

void LongitudinalDataset::validate() const {
  if (n < 1) throw ValidationError("dataset has no subjects");
  if (T < 0) throw ValidationError("T must be >= 0");
  const int blocks = n_blocks();
  if (blocks != T + 1 && blocks != T + 2)
    throw ValidationError("expected T+1 or T+2 covariate blocks, got " +
                          std::to_string(blocks));
  if (static_cast<int>(block_names.size()) != blocks)
    throw ValidationError("block_names size does not match covariate blocks");
  for (int t = 0; t < blocks; ++t) {
    if (covariates[t].rows() != n)
      throw ValidationError("covariate block " + std::to_string(t) +
                            " has wrong row count");
    if (static_cast<int>(block_names[t].size()) != covariates[t].cols())
      throw ValidationError("block " + std::to_string(t) + " name count mismatch");
  }
  if (treatments.rows() != n || treatments.cols() != T + 1)
    throw ValidationError("treatment matrix must be n x (T+1)");
  const int nc = censoring_times();
  if (nc != 0 && nc != blocks - 1)
    throw ValidationError("censoring matrix must have one column per time 1.." +
                          std::to_string(blocks - 1));
  if (outcome.size() != n) throw ValidationError("outcome must have length n");
  if (baseline_modifier >= 0 &&
      (blocks == 0 || baseline_modifier >= covariates[0].cols()))
    throw ValidationError("baseline_modifier column out of range");

  for (int i = 0; i < n; ++i) {
    for (int t = 1; t <= nc; ++t) {
      const int c = censoring(i, t - 1);
      if (c != 0 && c != 1)
        throw ValidationError("censoring indicators must be 0/1");
      if (t > 1 && censoring(i, t - 2) == 1 && c == 0)
        throw ValidationError("censoring must be monotone (subject " +
                              std::to_string(i) + ")");
    }
    for (int t = 0; t <= T; ++t) {
      if (censored_by(i, t)) continue;
      const int a = treatments(i, t);
      if (a != 0 && a != 1) throw ValidationError("treatments must be 0/1");
      if (monotone_treatment && t > 0 && !censored_by(i, t - 1) &&
          treatments(i, t - 1) > a)
        throw ValidationError("treatment must be nondecreasing (subject " +
                              std::to_string(i) + ")");
    }
    if (censored_by(i, blocks - 1) == 0 && std::isnan(outcome(i)))
      throw ValidationError("missing outcome for uncensored subject " +
                            std::to_string(i));
    for (int t = 0; t < blocks; ++t) {
      // Covariates at t are measured before the censoring indicator at t, so
      // they must be present for everyone still in follow-up at t - 1.
      if (t > 0 ? censored_by(i, t - 1) : false) continue;
      for (int k = 0; k < covariates[t].cols(); ++k) {
        if (!std::isfinite(covariates[t](i, k)))
          throw ValidationError("missing covariate " + block_names[t][k] +
                                " at time " + std::to_string(t) +
                                " for an at-risk subject " + std::to_string(i));
      }
    }
  }
}

LongitudinalDataset read_long_csv(const std::string& csv_path,
                                  const std::string& schema_path) {
  std::ifstream schema_file(schema_path);
  if (!schema_file) throw ValidationError("cannot open schema " + schema_path);
  nlohmann::json schema;
  try {
    schema_file >> schema;
  } catch (const std::exception& e) {
    throw ValidationError(std::string("bad schema JSON: ") + e.what());
  }
  if (!schema.contains("T") || !schema.contains("blocks"))
    throw ValidationError("schema must declare 'T' and 'blocks'");

  LongitudinalDataset data;
  data.T = schema["T"].get<int>();
  std::vector<std::vector<std::string>> blocks =
      schema["blocks"].get<std::vector<std::vector<std::string>>>();
  data.block_names = blocks;
  data.monotone_treatment = schema.value("monotone_treatment", false);
  const bool has_cens = schema.value("censoring", false);
  const std::string modifier = schema.value("baseline_modifier", std::string());

  std::ifstream csv(csv_path);
  if (!csv) throw ValidationError("cannot open data " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw ValidationError("empty CSV " + csv_path);
  const std::vector<std::string> header = split_csv_line(line);
  std::map<std::string, int> col_of;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) col_of[header[j]] = j;
  for (const char* req : {"id", "time", "A", "Y"})
    if (!col_of.count(req))
      throw ValidationError(std::string("CSV is missing column ") + req);
  if (has_cens && !col_of.count("C"))
    throw ValidationError("schema declares censoring but CSV has no C column");

  struct Row {
    int time;
    std::vector<std::string> fields;
  };
  std::vector<std::string> id_order;
  std::map<std::string, std::vector<Row>> by_id;
  int lineno = 1;
  while (std::getline(csv, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("CSV line " + std::to_string(lineno) +
                            " has wrong field count");
    const std::string id = fields[col_of["id"]];
    const int time = static_cast<int>(parse_value(fields[col_of["time"]]));
    if (!by_id.count(id)) id_order.push_back(id);
    by_id[id].push_back({time, std::move(fields)});
  }
  if (id_order.empty()) throw ValidationError("CSV has no data rows");

  const int n = static_cast<int>(id_order.size());
  const int nb = static_cast<int>(blocks.size());
  data.n = n;
  data.covariates.resize(nb);
  for (int t = 0; t < nb; ++t)
    data.covariates[t] =
        Eigen::MatrixXd::Constant(n, static_cast<int>(blocks[t].size()), kNaN);
  data.treatments = Eigen::MatrixXi::Zero(n, data.T + 1);
  data.censoring = has_cens ? Eigen::MatrixXi::Zero(n, nb - 1) : Eigen::MatrixXi(n, 0);
  data.outcome = Eigen::VectorXd::Constant(n, kNaN);

  for (int i = 0; i < n; ++i) {
    for (const Row& row : by_id[id_order[i]]) {
      const int t = row.time;
      if (t < 0 || t >= nb)
        throw ValidationError("time " + std::to_string(t) + " out of range for id " +
                              id_order[i]);
      for (int k = 0; k < static_cast<int>(blocks[t].size()); ++k) {
        auto it = col_of.find(blocks[t][k]);
        if (it == col_of.end())
          throw ValidationError("covariate " + blocks[t][k] + " not in CSV header");
        data.covariates[t](i, k) = parse_value(row.fields[it->second]);
      }
      if (t <= data.T) {
        const double a = parse_value(row.fields[col_of["A"]]);
        if (!std::isnan(a)) data.treatments(i, t) = static_cast<int>(a);
      }
      if (has_cens && t >= 1) {
        const double c = parse_value(row.fields[col_of["C"]]);
        if (!std::isnan(c)) data.censoring(i, t - 1) = static_cast<int>(c);
      }
      const double y = parse_value(row.fields[col_of["Y"]]);
      if (!std::isnan(y)) data.outcome(i) = y;
    }
    // Monotone fill: a subject with no row at time t after being censored
    // stays censored.
    for (int t = 2; t <= data.censoring_times(); ++t)
      if (data.censoring(i, t - 2) == 1) data.censoring(i, t - 1) = 1;
  }

  if (!modifier.empty()) {
    auto it = std::find(blocks[0].begin(), blocks[0].end(), modifier);
    if (it == blocks[0].end())
      throw ValidationError("baseline_modifier " + modifier + " not in block 0");
    data.baseline_modifier = static_cast<int>(it - blocks[0].begin());
  }
  data.validate();
  return data;
}

void write_long_csv(const LongitudinalDataset& data, const std::string& csv_path,
                    const std::string& schema_path) {
  nlohmann::json schema;
  schema["T"] = data.T;
  schema["blocks"] = data.block_names;
  schema["censoring"] = data.has_censoring();
  schema["monotone_treatment"] = data.monotone_treatment;
  if (data.baseline_modifier >= 0)
    schema["baseline_modifier"] = data.block_names[0][data.baseline_modifier];
  std::ofstream schema_file(schema_path);
  schema_file << schema.dump(2) << "\n";

  // Header lists every distinct covariate name once.
  std::vector<std::string> cov_names;
  for (const auto& names : data.block_names)
    for (const auto& name : names)
      if (std::find(cov_names.begin(), cov_names.end(), name) == cov_names.end())
        cov_names.push_back(name);

  std::ofstream csv(csv_path);
  csv << "id,time";
  for (const auto& name : cov_names) csv << "," << name;
  csv << ",A,C,Y\n";
  const int nb = data.n_blocks();
  for (int i = 0; i < data.n; ++i) {
    for (int t = 0; t < nb; ++t) {
      if (data.censored_by(i, t)) {
        // Terminal censoring row: covariates at t are measured before the
        // indicator, so they ride along; treatment and outcome do not.
        if (t <= data.censoring_times() && (t == 1 || data.censored_by(i, t - 1) == 0)) {
          csv << i + 1 << "," << t;
          for (const auto& name : cov_names) {
            auto it = std::find(data.block_names[t].begin(),
                                data.block_names[t].end(), name);
            if (it == data.block_names[t].end()) {
              csv << ",";
            } else {
              const int k = static_cast<int>(it - data.block_names[t].begin());
              csv << "," << format_value(data.covariates[t](i, k));
            }
          }
          csv << ",,1,\n";
        }
        break;
      }
      csv << i + 1 << "," << t;
      for (const auto& name : cov_names) {
        auto it = std::find(data.block_names[t].begin(), data.block_names[t].end(), name);
        if (it == data.block_names[t].end()) {
          csv << ",";
        } else {
          const int k = static_cast<int>(it - data.block_names[t].begin());
          csv << "," << format_value(data.covariates[t](i, k));
        }
      }
      if (t <= data.T)
        csv << "," << data.treatments(i, t);
      else
        csv << ",";
      if (t >= 1 && t <= data.censoring_times())
        csv << "," << data.censoring(i, t - 1);
      else
        csv << ",";
      if (t == nb - 1)
        csv << "," << format_value(data.outcome(i));
      else
        csv << ",";
      csv << "\n";
    }
  }
}

}  // namespace loal
