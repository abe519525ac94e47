#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hints/error.hpp"

namespace hints {

/// One solver run. Plain methods use model "none", J 0 and alpha 0; m is 0
/// unless the method restarts GMRES.
struct ReportRow {
  std::string geometry;
  double h = 0.0;
  std::string method;
  std::string model = "none";
  int J = 0;
  double alpha = 0.0;
  int m = 0;
  std::string outcome;
  long long classical_iters = 0;
  long long deeponet_iters = 0;
  double relres = 0.0;
  double seconds = 0.0;

  bool operator==(const ReportRow&) const = default;
};

inline const char* kReportHeader =
    "geometry,h,method,model,J,alpha,m,outcome,classical_iters,deeponet_iters,relres,seconds";

namespace detail {
inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw FormatError("report csv: unterminated quote");
  out.push_back(cur);
  return out;
}
}  // namespace detail

inline std::string rows_to_csv(const std::vector<ReportRow>& rows) {
  using detail::csv_num;
  std::string s = std::string(kReportHeader) + "\n";
  for (const auto& r : rows) {
    s += detail::csv_field(r.geometry) + ',' + csv_num(r.h) + ',' + detail::csv_field(r.method) + ',' +
         detail::csv_field(r.model) + ',' + std::to_string(r.J) + ',' + csv_num(r.alpha) + ',' + std::to_string(r.m) +
         ',' + r.outcome + ',' + std::to_string(r.classical_iters) + ',' + std::to_string(r.deeponet_iters) + ',' +
         csv_num(r.relres) + ',' + csv_num(r.seconds) + '\n';
  }
  return s;
}

inline std::vector<ReportRow> rows_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) throw FormatError("report csv: unexpected header");
  std::vector<ReportRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = detail::csv_split(line);
    if (f.size() != 12) throw FormatError("report csv line " + std::to_string(lineno) + ": expected 12 fields");
    try {
      ReportRow r;
      r.geometry = f[0];
      r.h = std::stod(f[1]);
      r.method = f[2];
      r.model = f[3];
      r.J = std::stoi(f[4]);
      r.alpha = std::stod(f[5]);
      r.m = std::stoi(f[6]);
      r.outcome = f[7];
      r.classical_iters = std::stoll(f[8]);
      r.deeponet_iters = std::stoll(f[9]);
      r.relres = std::stod(f[10]);
      r.seconds = std::stod(f[11]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("report csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

inline nlohmann::ordered_json row_to_json(const ReportRow& r) {
  nlohmann::ordered_json j;
  j["geometry"] = r.geometry;
  j["h"] = r.h;
  j["method"] = r.method;
  j["model"] = r.model;
  j["J"] = r.J;
  j["alpha"] = r.alpha;
  j["m"] = r.m;
  j["outcome"] = r.outcome;
  j["classical_iters"] = r.classical_iters;
  j["deeponet_iters"] = r.deeponet_iters;
  j["relres"] = r.relres;
  j["seconds"] = r.seconds;
  return j;
}

inline ReportRow row_from_json(const nlohmann::ordered_json& j) {
  try {
    ReportRow r;
    r.geometry = j.at("geometry").get<std::string>();
    r.h = j.at("h").get<double>();
    r.method = j.at("method").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.J = j.at("J").get<int>();
    r.alpha = j.at("alpha").get<double>();
    r.m = j.at("m").get<int>();
    r.outcome = j.at("outcome").get<std::string>();
    r.classical_iters = j.at("classical_iters").get<long long>();
    r.deeponet_iters = j.at("deeponet_iters").get<long long>();
    // Non-finite residuals are written as null.
    r.relres = j.at("relres").is_null() ? NAN : j.at("relres").get<double>();
    r.seconds = j.at("seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
}

/// Index of the converged row with the fewest total iterations among rows
/// sharing (geometry, h, method, model); -1 when none converged.
inline std::vector<int> best_rows(const std::vector<ReportRow>& rows) {
  std::vector<int> best(rows.size(), -1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int b = -1;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto &a = rows[i], &c = rows[j];
      if (a.geometry != c.geometry || a.h != c.h || a.method != c.method || a.model != c.model) continue;
      if (c.outcome != "converged") continue;
      auto total = [](const ReportRow& r) { return r.classical_iters + r.deeponet_iters; };
      if (b < 0 || total(c) < total(rows[static_cast<std::size_t>(b)])) b = static_cast<int>(j);
    }
    best[i] = b;
  }
  return best;
}

/// {"config": {...}, "artifacts": {...}, "rows": [...], "best": [...]}; each
/// row carries a "best" flag marking the best-J row of its group.
inline std::string rows_to_json(const std::vector<ReportRow>& rows, const nlohmann::ordered_json& config = nlohmann::ordered_json::object(),
                                const nlohmann::ordered_json& artifacts = nlohmann::ordered_json::object()) {
  nlohmann::ordered_json doc;
  doc["config"] = config;
  doc["artifacts"] = artifacts;
  doc["rows"] = nlohmann::ordered_json::array();
  auto best = best_rows(rows);
  nlohmann::ordered_json best_idx = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto j = row_to_json(rows[i]);
    j["best"] = best[i] == static_cast<int>(i);
    if (best[i] == static_cast<int>(i)) best_idx.push_back(i);
    doc["rows"].push_back(std::move(j));
  }
  doc["best"] = best_idx;
  return doc.dump(2) + "\n";
}

inline std::vector<ReportRow> rows_from_json(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report json: ") + e.what());
  }
  if (!doc.contains("rows") || !doc["rows"].is_array()) throw FormatError("report json: missing rows array");
  std::vector<ReportRow> rows;
  for (const auto& j : doc["rows"]) rows.push_back(row_from_json(j));
  return rows;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << text;
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace hints
