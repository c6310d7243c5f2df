// Copyright 2026 The iwmm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef IWMM_IO_HPP
#define IWMM_IO_HPP

#include <iwmm/bayes_models.hpp>
#include <iwmm/estimators.hpp>
#include <iwmm/loo_cv.hpp>
#include <iwmm/pareto_tail.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

/**
 * \file
 * \brief CSV and JSON input/output for datasets, draws, weights and leave-one-out results.
 *
 * CSV files are comma-separated with a header row and '.' decimals. JSON objects keep a
 * stable key order. Infinite numbers are written as the strings "Infinity" and "-Infinity",
 * NaN as null.
 */

namespace iwmm {

/// Malformed or unreadable input file.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (const char ch : line) {
    if (ch == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) {
    return false;
  }
  std::size_t used = 0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    if (s == "Infinity" || s == "inf" || s == "Inf") {
      out = kPosInf;
      return true;
    }
    if (s == "-Infinity" || s == "-inf" || s == "-Inf") {
      out = kNegInf;
      return true;
    }
    return false;
  }
  return used == s.size();
}

}  // namespace detail

/// Reads a numeric CSV with a header row.
inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError("empty CSV input");
  }
  table.header = detail::split_csv_line(line);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) {
      continue;
    }
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != table.header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " fields");
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!detail::parse_double(cells[j], row[j])) {
        throw InputError("line " + std::to_string(line_no) + ": not a number: '" + cells[j] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t j = 0; j < rows[r].size(); ++j) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
    }
  }
  return table;
}

/// Dataset from CSV columns y, x1..xP and optional offset.
inline Dataset read_dataset_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  Dataset d;
  std::vector<Eigen::Index> x_cols;
  Eigen::Index y_col = -1;
  Eigen::Index offset_col = -1;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    const std::string& name = t.header[j];
    const auto col = static_cast<Eigen::Index>(j);
    if (name == "y") {
      y_col = col;
    } else if (name == "offset") {
      offset_col = col;
    } else if (name.size() > 1 && name[0] == 'x') {
      x_cols.push_back(col);
    } else {
      throw InputError("unexpected dataset column '" + name + "'");
    }
  }
  if (y_col < 0) {
    throw InputError("dataset needs a 'y' column");
  }
  for (std::size_t p = 0; p < x_cols.size(); ++p) {
    if (t.header[static_cast<std::size_t>(x_cols[p])] != "x" + std::to_string(p + 1)) {
      throw InputError("design columns must be named x1..xP in order");
    }
  }
  d.y = t.values.col(y_col);
  if (!x_cols.empty()) {
    d.X.resize(t.values.rows(), static_cast<Eigen::Index>(x_cols.size()));
    for (std::size_t p = 0; p < x_cols.size(); ++p) {
      d.X.col(static_cast<Eigen::Index>(p)) = t.values.col(x_cols[p]);
    }
  }
  if (offset_col >= 0) {
    d.offset = t.values.col(offset_col);
  }
  return d;
}

/// Shortest round-trip decimal representation, "Infinity"/"-Infinity"/"NaN" otherwise.
inline std::string format_number(double x) {
  if (std::isnan(x)) {
    return "NaN";
  }
  if (std::isinf(x)) {
    return x > 0 ? "Infinity" : "-Infinity";
  }
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& d) {
  out << "y";
  for (Eigen::Index p = 0; p < d.X.cols(); ++p) {
    out << ",x" << p + 1;
  }
  const bool has_offset = d.offset.size() == d.n();
  if (has_offset) {
    out << ",offset";
  }
  out << '\n';
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    out << format_number(d.y[i]);
    for (Eigen::Index p = 0; p < d.X.cols(); ++p) {
      out << ',' << format_number(d.X(i, p));
    }
    if (has_offset) {
      out << ',' << format_number(d.offset[i]);
    }
    out << '\n';
  }
}

inline void write_draws_csv(std::ostream& out, const DrawMatrix& draws,
                            const std::vector<std::string>& names) {
  if (static_cast<Eigen::Index>(names.size()) != draws.cols()) {
    throw std::invalid_argument("one column name per parameter required");
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << (j ? "," : "") << names[j];
  }
  out << '\n';
  for (Eigen::Index s = 0; s < draws.rows(); ++s) {
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
      out << (j ? "," : "") << format_number(draws(s, j));
    }
    out << '\n';
  }
}

inline DrawMatrix read_draws_csv(std::istream& in) {
  CsvTable t = read_csv(in);
  if (t.values.rows() == 0) {
    throw InputError("draws file has no rows");
  }
  return t.values;
}

/// One column of weights with a header row.
/**
 * With `log_scale` the values are log weights; otherwise they are raw nonnegative weights.
 */
inline LogWeightVector read_weights_csv(std::istream& in, bool log_scale = false) {
  const CsvTable t = read_csv(in);
  if (t.header.size() != 1) {
    throw InputError("weights file must have exactly one column");
  }
  if (t.values.rows() == 0) {
    throw InputError("weights file has no rows");
  }
  Eigen::VectorXd lw = t.values.col(0);
  for (Eigen::Index s = 0; s < lw.size(); ++s) {
    if (log_scale) {
      if (std::isnan(lw[s]) || lw[s] == kPosInf) {
        throw InputError("log weights must be finite or -Infinity");
      }
    } else {
      if (!(lw[s] >= 0.0) || std::isinf(lw[s])) {
        throw InputError("raw weights must be finite and nonnegative");
      }
      lw[s] = std::log(lw[s]);
    }
  }
  return LogWeightVector(lw);
}

/// JSON number; null for NaN (not computed) and "Infinity"/"-Infinity" strings for sentinels.
inline nlohmann::ordered_json json_number(double x) {
  if (std::isnan(x)) {
    return nullptr;
  }
  if (std::isfinite(x)) {
    return x;
  }
  return format_number(x);
}

inline nlohmann::ordered_json to_json(const ParetoDiagnostic& d, double threshold) {
  nlohmann::ordered_json j;
  j["khat"] = json_number(d.khat);
  j["sigma"] = json_number(d.sigma);
  j["tail_len"] = d.tail_len;
  j["reliable"] = is_reliable(d, threshold);
  return j;
}

inline nlohmann::ordered_json to_json(const EvalCounters& c) {
  nlohmann::ordered_json j;
  j["target_evals"] = c.target_evals;
  j["proposal_evals"] = c.proposal_evals;
  j["function_evals"] = c.function_evals;
  j["split_evals"] = c.split_evals;
  return j;
}

inline nlohmann::ordered_json to_json(const LooFoldReport& f) {
  nlohmann::ordered_json j;
  j["i"] = f.fold + 1;
  j["elpd_i"] = json_number(f.elpd);
  j["khat_initial"] = json_number(f.khat_initial);
  j["khat_final"] = json_number(f.khat_final);
  j["khat_expectation"] = json_number(f.khat_expectation);
  j["khat_split"] = json_number(f.khat_split);
  j["khat_refit"] = json_number(f.khat_refit);
  j["method"] = std::string(to_string(f.method));
  j["transforms_accepted"] = f.transforms_accepted;
  j["transforms_attempted"] = f.transforms_attempted;
  j["counters"] = to_json(f.counters);
  if (!f.warning.empty()) {
    j["warning"] = f.warning;
  }
  return j;
}

inline nlohmann::ordered_json to_json(const LooResult& r) {
  nlohmann::ordered_json j;
  j["elpd_loo"] = json_number(r.elpd_loo);
  j["n_bad"] = r.n_bad;
  j["k_threshold"] = r.k_threshold;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) {
    j["folds"].push_back(to_json(f));
  }
  return j;
}

/// Per-fold CSV: i, elpd_i, khat_initial, khat_final, method.
inline void write_loo_csv(std::ostream& out, const LooResult& r) {
  out << "i,elpd_i,khat_initial,khat_final,method\n";
  for (const auto& f : r.folds) {
    out << f.fold + 1 << ',' << format_number(f.elpd) << ',' << format_number(f.khat_initial)
        << ',' << format_number(f.khat_final) << ',' << to_string(f.method) << '\n';
  }
}

}  // namespace iwmm

#endif  // IWMM_IO_HPP
