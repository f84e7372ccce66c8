#pragma once

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/stats.hpp"

namespace subriem {

enum class InequalityKind {
  UBOUND,
  CHEEGER,
  L1PHI,
  LSQ,
  IFI2,
  TIGHT_LEDOUX,
  EXP_INT,
  SOBOLEV_BASELINE,
  POINCARE_BALL,
  DISTANCE_CONDITIONS,
  COAREA,
  GRADIENT_BOUND,
  GIBBS_L1PHI,
  ISOPERIMETRY,
  GIBBS_CONTRACTION,
};

inline std::string to_string(InequalityKind k) {
  switch (k) {
    case InequalityKind::UBOUND: return "UBOUND";
    case InequalityKind::CHEEGER: return "CHEEGER";
    case InequalityKind::L1PHI: return "L1PHI";
    case InequalityKind::LSQ: return "LSQ";
    case InequalityKind::IFI2: return "IFI2";
    case InequalityKind::TIGHT_LEDOUX: return "TIGHT_LEDOUX";
    case InequalityKind::EXP_INT: return "EXP_INT";
    case InequalityKind::SOBOLEV_BASELINE: return "SOBOLEV_BASELINE";
    case InequalityKind::POINCARE_BALL: return "POINCARE_BALL";
    case InequalityKind::DISTANCE_CONDITIONS: return "DISTANCE_CONDITIONS";
    case InequalityKind::COAREA: return "COAREA";
    case InequalityKind::GRADIENT_BOUND: return "GRADIENT_BOUND";
    case InequalityKind::GIBBS_L1PHI: return "GIBBS_L1PHI";
    case InequalityKind::ISOPERIMETRY: return "ISOPERIMETRY";
    case InequalityKind::GIBBS_CONTRACTION: return "GIBBS_CONTRACTION";
  }
  return "UNKNOWN";
}

// One row of a report: the left side and the named right-side ingredients
// of one inequality evaluated on one corpus function.
struct FunctionRow {
  std::string id;
  Estimate lhs;
  std::map<std::string, Estimate> rhs;
  bool has_ratio = false;
  Estimate ratio;
  bool excluded = false;
  std::string note;
};

// Fitted constants are the smallest values feasible on the finite corpus at
// this sample size. An empty violation list means the inequality passed at
// this corpus and sample size, nothing more.
struct InequalityReport {
  InequalityKind kind = InequalityKind::UBOUND;
  std::string corpus_id;
  std::size_t sample_size = 0;
  double n_eff = 0.0;
  std::map<std::string, Estimate> fitted_constants;
  std::vector<FunctionRow> per_function;
  std::vector<std::string> violations;
  std::vector<std::string> inconclusive;
  std::vector<std::string> warnings;

  bool passed() const { return violations.empty() && inconclusive.empty(); }

  std::string status() const {
    if (!violations.empty()) return "violations";
    if (!inconclusive.empty()) return "inconclusive";
    return "passed";
  }

  const Estimate& constant(const std::string& name) const { return fitted_constants.at(name); }

  std::size_t included_rows() const {
    std::size_t n = 0;
    for (const auto& r : per_function) n += r.excluded ? 0 : 1;
    return n;
  }
};

inline nlohmann::json to_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}}; }

inline nlohmann::json to_json(const InequalityReport& r) {
  nlohmann::json j;
  j["kind"] = to_string(r.kind);
  j["corpus_id"] = r.corpus_id;
  j["sample_size"] = r.sample_size;
  j["n_eff"] = r.n_eff;
  j["status"] = r.status();
  nlohmann::json fc = nlohmann::json::object();
  for (const auto& [k, v] : r.fitted_constants) fc[k] = to_json(v);
  j["fitted_constants"] = fc;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.per_function) {
    nlohmann::json jr{{"id", row.id}, {"lhs", to_json(row.lhs)}, {"excluded", row.excluded}};
    nlohmann::json rhs = nlohmann::json::object();
    for (const auto& [k, v] : row.rhs) rhs[k] = to_json(v);
    jr["rhs"] = rhs;
    if (row.has_ratio) jr["ratio"] = to_json(row.ratio);
    if (!row.note.empty()) jr["note"] = row.note;
    rows.push_back(jr);
  }
  j["per_function"] = rows;
  j["violations"] = r.violations;
  j["inconclusive"] = r.inconclusive;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace subriem
