#ifndef ELLIP_IO_HPP
#define ELLIP_IO_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ellip/errors.hpp"
#include "ellip/fit.hpp"
#include "ellip/inference.hpp"
#include "ellip/model.hpp"
#include "ellip/montecarlo.hpp"

namespace ellip {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                     : comma - start));
    if (field.size() >= 2 && field.front() == '"' && field.back() == '"') field = field.substr(1, field.size() - 2);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

// Plain decimal or scientific notation; anything else is rejected.
inline bool parse_number(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Reads a long-format dataset: one row per response component, columns
/// unit_id, row_index, y and the covariates. Rows of a unit are ordered by
/// row_index. Without unit_id every row is its own unit.
///
/// When `time_group` is set, covariates x1..x4 missing from the header are
/// derived from `time` (x1) and a `group` column in 1..4 (dummies x2..x4).
inline Dataset read_dataset_csv(std::istream& in, const std::vector<std::string>& covariates,
                                bool time_group = false) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!detail::trim(line).empty() && detail::trim(line).front() != '#') return true;
    }
    return false;
  };
  if (!next_line()) throw InputError("dataset is empty (no header line)");
  const std::vector<std::string> header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j].empty()) throw InputError("header column " + std::to_string(j + 1) + " has an empty name");
    if (!col.emplace(header[j], j).second) throw InputError("duplicate column '" + header[j] + "' in header");
  }
  auto has = [&](const std::string& c) { return col.count(c) > 0; };
  if (!has("y")) throw InputError("missing required column 'y'");
  if (has("row_index") && !has("unit_id")) throw InputError("column 'row_index' requires a 'unit_id' column");

  bool derive = false;
  for (const auto& c : covariates) {
    if (has(c)) continue;
    if (time_group && has("time") && has("group")) {
      derive = true;
      continue;
    }
    throw InputError("missing covariate column '" + c + "'");
  }

  struct Row {
    double index;
    double y;
    std::vector<double> x;
  };
  std::vector<std::string> order;
  std::map<std::string, std::vector<Row>> units;

  std::size_t data_rows = 0;
  while (next_line()) {
    ++data_rows;
    const auto fields = detail::split_csv_line(line);
    const std::string where = "line " + std::to_string(line_no);
    if (fields.size() != header.size())
      throw InputError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(fields.size()));
    auto number = [&](const std::string& name) {
      double v = 0.0;
      const std::string& text = fields[col.at(name)];
      if (!detail::parse_number(text, v))
        throw InputError(where + ", column '" + name + "': cannot parse '" + text + "' as a number");
      return v;
    };
    Row row;
    row.y = number("y");
    row.index = has("row_index") ? number("row_index") : static_cast<double>(data_rows);
    std::string unit = has("unit_id") ? fields[col.at("unit_id")] : std::to_string(data_rows);
    if (unit.empty()) throw InputError(where + ", column 'unit_id': empty unit id");

    double time = 0.0;
    int group = 0;
    if (derive) {
      time = number("time");
      const double g = number("group");
      if (g != std::round(g) || g < 1 || g > 4)
        throw InputError(where + ", column 'group': expected an integer in 1..4, found '" +
                         fields[col.at("group")] + "'");
      group = static_cast<int>(g);
    }
    for (std::size_t k = 0; k < covariates.size(); ++k) {
      const std::string& c = covariates[k];
      if (has(c)) {
        row.x.push_back(number(c));
      } else if (k == 0) {
        row.x.push_back(time);
      } else {
        row.x.push_back(group == static_cast<int>(k) + 1 ? 1.0 : 0.0);
      }
    }
    auto [it, inserted] = units.try_emplace(unit);
    if (inserted) order.push_back(unit);
    it->second.push_back(std::move(row));
  }
  if (data_rows == 0) throw InputError("dataset has a header but no data rows");

  Dataset d;
  d.covariate_names = covariates;
  for (const auto& id : order) {
    auto& rows = units[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.index < b.index; });
    for (std::size_t j = 1; j < rows.size(); ++j)
      if (rows[j].index == rows[j - 1].index)
        throw InputError("unit '" + id + "': duplicate row_index " + format_double(rows[j].index));
    Observation o;
    o.unit_id = id;
    const Index q = static_cast<Index>(rows.size());
    o.y.resize(q);
    o.x.resize(q, static_cast<Index>(covariates.size()));
    for (Index j = 0; j < q; ++j) {
      o.y(j) = rows[static_cast<std::size_t>(j)].y;
      for (Index k = 0; k < o.x.cols(); ++k) o.x(j, k) = rows[static_cast<std::size_t>(j)].x[static_cast<std::size_t>(k)];
    }
    d.observations.push_back(std::move(o));
  }
  return d;
}

inline Dataset read_dataset_csv(const std::string& path, const std::vector<std::string>& covariates,
                                bool time_group = false) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file '" + path + "'");
  return read_dataset_csv(in, covariates, time_group);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  out << "unit_id,row_index,y";
  for (const auto& c : d.covariate_names) out << ',' << c;
  out << '\n';
  for (const auto& o : d.observations) {
    for (Index j = 0; j < o.dim(); ++j) {
      out << o.unit_id << ',' << (j + 1) << ',' << format_double(o.y(j));
      for (Index k = 0; k < o.x.cols(); ++k) out << ',' << format_double(o.x(j, k));
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// JSON reports

namespace detail {

inline nlohmann::json to_json_number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline double from_json_number(const nlohmann::json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

inline nlohmann::json to_json_vector(const VectorXd& v) {
  auto arr = nlohmann::json::array();
  for (Index k = 0; k < v.size(); ++k) arr.push_back(to_json_number(v(k)));
  return arr;
}

inline VectorXd from_json_vector(const nlohmann::json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Index>(k)) = from_json_number(j[k]);
  return v;
}

inline nlohmann::json to_json_matrix(const MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(to_json_vector(m.row(i).transpose()));
  return rows;
}

inline MatrixXd from_json_matrix(const nlohmann::json& j) {
  const Index r = static_cast<Index>(j.size());
  const Index c = r ? static_cast<Index>(j[0].size()) : 0;
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i) m.row(i) = from_json_vector(j[static_cast<std::size_t>(i)]).transpose();
  return m;
}

}  // namespace detail

inline nlohmann::json fit_to_json(const FitResult& f, const std::vector<std::string>& names) {
  nlohmann::json j;
  j["parameters"] = names;
  j["theta"] = detail::to_json_vector(f.theta);
  j["std_errors"] = detail::to_json_vector(f.std_errors);
  j["loglik"] = detail::to_json_number(f.loglik);
  j["score"] = detail::to_json_vector(f.score);
  j["score_norm"] = detail::to_json_number(f.score_norm);
  j["converged"] = f.converged;
  j["iterations"] = f.iterations;
  j["info"] = detail::to_json_matrix(f.info);
  j["info_positive_definite"] = f.info_positive_definite;
  j["info_asymmetry"] = detail::to_json_number(f.info_asymmetry);
  j["near_zero_residuals"] = f.near_zero_residuals;
  j["restricted"] = f.restricted;
  return j;
}

inline FitResult fit_from_json(const nlohmann::json& j) {
  FitResult f;
  f.theta = detail::from_json_vector(j.at("theta"));
  f.std_errors = detail::from_json_vector(j.at("std_errors"));
  f.loglik = detail::from_json_number(j.at("loglik"));
  f.score = detail::from_json_vector(j.at("score"));
  f.score_norm = detail::from_json_number(j.at("score_norm"));
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<decltype(f.iterations)>();
  f.info = detail::from_json_matrix(j.at("info"));
  f.info_positive_definite = j.at("info_positive_definite").get<bool>();
  f.info_asymmetry = detail::from_json_number(j.at("info_asymmetry"));
  f.near_zero_residuals = j.at("near_zero_residuals").get<decltype(f.near_zero_residuals)>();
  f.restricted = j.at("restricted").get<decltype(f.restricted)>();
  return f;
}

/// TestReport as JSON, field for field. r, gamma, r_star, p_r and p_r_star
/// are omitted entirely when the interest parameter is not scalar.
inline nlohmann::json report_to_json(const TestReport& rep, const std::vector<std::string>& names) {
  using detail::to_json_number;
  nlohmann::json h;
  std::vector<std::string> interest_names;
  for (std::size_t k : rep.hypothesis.interest) interest_names.push_back(k < names.size() ? names[k] : std::to_string(k));
  h["interest"] = interest_names;
  h["interest_indices"] = rep.hypothesis.interest;
  h["psi0"] = detail::to_json_vector(rep.hypothesis.psi0);
  h["sided"] = to_string(rep.hypothesis.sided);

  nlohmann::json j;
  j["hypothesis"] = h;
  j["parameters"] = names;
  j["LR"] = to_json_number(rep.LR);
  if (rep.r) j["r"] = to_json_number(*rep.r);
  if (rep.gamma) j["gamma"] = to_json_number(*rep.gamma);
  j["rho"] = to_json_number(rep.rho);
  if (rep.r_star) j["r_star"] = to_json_number(*rep.r_star);
  j["LR_star"] = to_json_number(rep.LR_star);
  j["LR_star2"] = to_json_number(rep.LR_star2);
  j["p_LR"] = to_json_number(rep.p_LR);
  if (rep.p_r) j["p_r"] = to_json_number(*rep.p_r);
  if (rep.p_r_star) j["p_r_star"] = to_json_number(*rep.p_r_star);
  j["p_LR_star"] = to_json_number(rep.p_LR_star);
  j["p_LR_star2"] = to_json_number(rep.p_LR_star2);
  auto flags = nlohmann::json::array();
  for (Flag f : rep.flags) flags.push_back(to_string(f));
  j["flags"] = flags;
  j["theta_hat"] = detail::to_json_vector(rep.theta_hat);
  j["theta_tilde"] = detail::to_json_vector(rep.theta_tilde);
  j["loglik_hat"] = to_json_number(rep.loglik_hat);
  j["loglik_tilde"] = to_json_number(rep.loglik_tilde);
  return j;
}

inline TestReport report_from_json(const nlohmann::json& j) {
  using detail::from_json_number;
  TestReport rep;
  const auto& h = j.at("hypothesis");
  rep.hypothesis.interest = h.at("interest_indices").get<std::vector<std::size_t>>();
  rep.hypothesis.psi0 = detail::from_json_vector(h.at("psi0"));
  rep.hypothesis.sided = parse_sided(h.at("sided").get<std::string>());
  auto optional = [&](const char* key) -> std::optional<double> {
    if (!j.contains(key)) return std::nullopt;
    return from_json_number(j.at(key));
  };
  rep.LR = from_json_number(j.at("LR"));
  rep.r = optional("r");
  rep.gamma = optional("gamma");
  rep.rho = from_json_number(j.at("rho"));
  rep.r_star = optional("r_star");
  rep.LR_star = from_json_number(j.at("LR_star"));
  rep.LR_star2 = from_json_number(j.at("LR_star2"));
  rep.p_LR = from_json_number(j.at("p_LR"));
  rep.p_r = optional("p_r");
  rep.p_r_star = optional("p_r_star");
  rep.p_LR_star = from_json_number(j.at("p_LR_star"));
  rep.p_LR_star2 = from_json_number(j.at("p_LR_star2"));
  for (const auto& f : j.at("flags")) rep.flags.insert(parse_flag(f.get<std::string>()));
  rep.theta_hat = detail::from_json_vector(j.at("theta_hat"));
  rep.theta_tilde = detail::from_json_vector(j.at("theta_tilde"));
  rep.loglik_hat = from_json_number(j.at("loglik_hat"));
  rep.loglik_tilde = from_json_number(j.at("loglik_tilde"));
  return rep;
}

// ---------------------------------------------------------------------------
// Simulation CSVs. Only deterministic quantities are written (no timings),
// so repeated runs with the same seed produce identical files.

inline void write_summary_csv(std::ostream& out, const SimulationSummary& s) {
  out << "statistic,alpha,rejections,reps,rate,stderr\n";
  for (const auto& r : s.rates) {
    out << r.statistic << ',' << format_double(r.alpha) << ',' << r.rejections << ',' << r.reps << ','
        << format_double(r.rate) << ',' << format_double(r.stderr_rate) << '\n';
  }
}

/// One row per replication; failed replications carry NA.
inline void write_pvalues_csv(std::ostream& out, const SimulationSummary& s) {
  out << "replication";
  for (const auto& stat : s.statistics) out << ',' << statistic_column(stat);
  out << '\n';
  for (std::size_t k = 0; k < s.replications; ++k) {
    out << (k + 1);
    for (const auto& stat : s.statistics) out << ',' << format_double(s.pvalues.at(stat)[k]);
    out << '\n';
  }
}

/// Reads one statistic's column from a p-value CSV written by write_pvalues_csv.
inline std::vector<double> read_pvalues_csv(std::istream& in, const std::string& stat) {
  const std::string column = statistic_column(canonical_statistic(stat));
  std::string line;
  if (!std::getline(in, line)) throw InputError("p-value file is empty");
  const auto header = detail::split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw InputError("p-value file has no column '" + column + "'");
  const std::size_t j = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, found " + std::to_string(fields.size()));
    if (fields[j] == "NA") {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double v = 0.0;
    if (!detail::parse_number(fields[j], v))
      throw InputError("line " + std::to_string(line_no) + ", column '" + column + "': cannot parse '" + fields[j] +
                       "' as a number");
    out.push_back(v);
  }
  return out;
}

inline void write_discrepancy_csv(std::ostream& out, const std::vector<DiscrepancyPoint>& pts) {
  out << "asymptotic_p,relative_discrepancy\n";
  for (const auto& p : pts) out << format_double(p.asymptotic_p) << ',' << format_double(p.relative_discrepancy) << '\n';
}

}  // namespace ellip

#endif
