#pragma once

#include <openssl/evp.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/errors.hpp"
#include "subriem/inequality.hpp"
#include "subriem/measures.hpp"

namespace subriem {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

// Hex SHA-1 of "blob <size>\0<bytes>", the git object id of the bytes.
inline std::string git_blob_sha1(const std::string& bytes) {
  const std::string obj = "blob " + std::to_string(bytes.size()) + std::string(1, '\0') + bytes;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(obj.data(), obj.size(), md, &len, EVP_sha1(), nullptr) != 1) throw NumericError("SHA-1 failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// nlohmann objects keep keys sorted and print doubles in shortest round-trip
// form, so dump() is a canonical encoding.
inline std::string json_digest(const nlohmann::json& j) { return git_blob_sha1(j.dump()); }

enum class RunStatus { PASSED, INCONCLUSIVE, REFUSED, VIOLATIONS };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::PASSED: return "passed";
    case RunStatus::INCONCLUSIVE: return "inconclusive";
    case RunStatus::REFUSED: return "refused";
    case RunStatus::VIOLATIONS: return "violations";
  }
  return "unknown";
}

inline RunStatus run_status_from_string(const std::string& s) {
  if (s == "passed") return RunStatus::PASSED;
  if (s == "inconclusive") return RunStatus::INCONCLUSIVE;
  if (s == "refused") return RunStatus::REFUSED;
  if (s == "violations") return RunStatus::VIOLATIONS;
  throw ConfigError("unknown status '" + s + "'");
}

inline RunStatus worst(RunStatus a, RunStatus b) { return static_cast<int>(a) >= static_cast<int>(b) ? a : b; }

inline RunStatus status_of(const InequalityReport& r) {
  if (!r.violations.empty()) return RunStatus::VIOLATIONS;
  if (!r.inconclusive.empty()) return RunStatus::INCONCLUSIVE;
  return RunStatus::PASSED;
}

// 0 clean, 2 violations, 3 inconclusive or refused. Errors (1) never reach a Report.
inline int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::PASSED: return 0;
    case RunStatus::VIOLATIONS: return 2;
    default: return 3;
  }
}

struct Report {
  std::string command;
  nlohmann::json config = nlohmann::json::object();  // echo; re-runnable with `subriem run`
  std::string input_digest;
  nlohmann::json results = nlohmann::json::object();
  RunStatus status = RunStatus::PASSED;
  double wall_time = 0.0;
  std::vector<std::string> warnings;

  int exit_code() const { return subriem::exit_code(status); }
};

inline nlohmann::json to_json(const Report& r, bool with_wall_time = true) {
  nlohmann::json j{{"schema_version", kSchemaVersion},
                   {"version", kVersion},
                   {"command", r.command},
                   {"config", r.config},
                   {"input_digest", r.input_digest},
                   {"results", r.results},
                   {"status", to_string(r.status)},
                   {"warnings", r.warnings}};
  if (with_wall_time) j["wall_time"] = r.wall_time;
  return j;
}

inline Report report_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw ConfigError("report: missing schema_version");
  if (j.at("schema_version").get<int>() != kSchemaVersion)
    throw ConfigError("report: unsupported schema_version " + j.at("schema_version").dump());
  Report r;
  r.command = j.at("command").get<std::string>();
  r.config = j.at("config");
  r.input_digest = j.at("input_digest").get<std::string>();
  r.results = j.at("results");
  r.status = run_status_from_string(j.at("status").get<std::string>());
  r.wall_time = j.value("wall_time", 0.0);
  r.warnings = j.value("warnings", std::vector<std::string>{});
  return r;
}

inline void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing: " + std::strerror(errno));
  out << text;
  out.close();
  if (!out) throw IoError("write to '" + path + "' failed: " + std::strerror(errno));
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The parser's message carries the line and column of a syntax error.
inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path) { return parse_json_text(read_text(path), path); }

inline void emit_report(const Report& r, const std::string& path, bool with_wall_time = true) {
  write_text(path, to_json(r, with_wall_time).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV side-files.

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// One row per included function. Columns: id, lhs, then each rhs term and the
// ratio as mean/se pairs.
inline std::string per_function_csv(const InequalityReport& r, std::size_t* rows = nullptr) {
  std::vector<std::string> rhs_names;
  for (const auto& row : r.per_function)
    for (const auto& [k, v] : row.rhs)
      if (std::find(rhs_names.begin(), rhs_names.end(), k) == rhs_names.end()) rhs_names.push_back(k);
  std::ostringstream os;
  os << "id,lhs_mean,lhs_se";
  for (const auto& k : rhs_names) os << ',' << csv_field(k + " mean") << ',' << csv_field(k + " se");
  os << ",ratio_mean,ratio_se,violation\n";
  std::size_t n = 0;
  for (const auto& row : r.per_function) {
    if (row.excluded) continue;
    ++n;
    os << csv_field(row.id) << ',' << csv_number(row.lhs.mean) << ',' << csv_number(row.lhs.se);
    for (const auto& k : rhs_names) {
      const auto it = row.rhs.find(k);
      if (it == row.rhs.end()) os << ",,";
      else os << ',' << csv_number(it->second.mean) << ',' << csv_number(it->second.se);
    }
    if (row.has_ratio) os << ',' << csv_number(row.ratio.mean) << ',' << csv_number(row.ratio.se);
    else os << ",,";
    const bool v = std::find(r.violations.begin(), r.violations.end(), row.id) != r.violations.end();
    os << ',' << (v ? 1 : 0) << '\n';
  }
  if (rows) *rows = n;
  return os.str();
}

// Columns x_1..x_m, z_1..z_n, weight.
inline std::string samples_csv(const SampleSet& s) {
  const int m = s.structure.m(), n = s.structure.n();
  std::ostringstream os;
  for (int i = 0; i < m; ++i) os << (i ? "," : "") << "x_" << i + 1;
  for (int k = 0; k < n; ++k) os << ",z_" << k + 1;
  os << ",weight\n";
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto& g = s.points[j];
    for (int i = 0; i < m; ++i) os << (i ? "," : "") << csv_number(g.x[i]);
    for (int k = 0; k < n; ++k) os << ',' << csv_number(g.z[k]);
    os << ',' << csv_number(s.weight(j)) << '\n';
  }
  return os.str();
}

// Reads a samples CSV for the given measure. Chain structure is not stored in
// the file, so the ESS is recomputed from the distance column as one chain.
inline SampleSet read_samples_csv(const std::string& text, const MeasureSpec& spec, const std::string& what = "samples") {
  const auto& S = spec.structure;
  const int m = S.m(), n = S.n();
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(what + ": empty file");
  std::string expect;
  for (int i = 0; i < m; ++i) expect += (i ? "," : "") + std::string("x_") + std::to_string(i + 1);
  for (int k = 0; k < n; ++k) expect += ",z_" + std::to_string(k + 1);
  expect += ",weight";
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expect) throw ConfigError(what + ": header '" + line + "' does not match '" + expect + "'");
  SampleSet s;
  s.structure = S;
  bool unit = true;
  std::vector<double> w;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double d = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0' || !std::isfinite(d))
        throw ConfigError(what + ": line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      v.push_back(d);
    }
    if (static_cast<int>(v.size()) != m + n + 1)
      throw ConfigError(what + ": line " + std::to_string(lineno) + ": expected " + std::to_string(m + n + 1) + " fields");
    GroupPoint g = S.identity();
    for (int i = 0; i < m; ++i) g.x[i] = v[i];
    for (int k = 0; k < n; ++k) g.z[k] = v[m + k];
    s.points.push_back(g);
    w.push_back(v.back());
    unit = unit && v.back() == 1.0;
  }
  if (!unit) s.weights = std::move(w);
  s.distances.resize(s.size());
  parallel_for(s.size(), [&](std::size_t i) { s.distances[i] = spec.distance(s.points[i]); });
  ChainDiagnostics cd;
  cd.ess = s.size() > 3 ? effective_sample_size(s.distances) : static_cast<double>(s.size());
  s.meta.chains.push_back(cd);
  s.meta.warnings.push_back("loaded from CSV; ESS recomputed as a single chain");
  s.validate();
  return s;
}

}  // namespace subriem
