#pragma once

// Estimators for the functional-inequality battery. Every inequality is
// evaluated per corpus function on a SampleSet; fitted constants are the
// smallest feasible values on that corpus and sample.
//
// Standard errors: delete-one-batch jackknife over 32 contiguous batches.
// Violations: constants fitted on the first half of the sample are checked on
// the second half; a row is a violation when its excess is above 3 combined
// standard errors.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "subriem/corpus.hpp"
#include "subriem/errors.hpp"
#include "subriem/inequality.hpp"
#include "subriem/measures.hpp"
#include "subriem/profile.hpp"
#include "subriem/stats.hpp"

namespace subriem {

// ---------------------------------------------------------------------------
// Resampling windows.

// Contiguous sample range [lo, hi) split into batches. Replicate 0 uses the
// whole window, replicate 1 + b drops batch b.
class Window {
 public:
  Window(std::span<const double> weights, std::size_t lo, std::size_t hi, int batches = kDefaultBatches)
      : w_(weights), lo_(lo), hi_(hi) {
    if (hi <= lo) throw DegenerateError("empty sample window");
    nb_ = static_cast<int>(std::min<std::size_t>(batches, hi - lo));
    if (nb_ < 2) throw DegenerateError("sample window too small for batch errors");
  }

  std::size_t lo() const { return lo_; }
  std::size_t hi() const { return hi_; }
  int batches() const { return nb_; }
  int replicates() const { return nb_ + 1; }
  int batch(std::size_t i) const { return static_cast<int>(((i - lo_) * static_cast<std::size_t>(nb_)) / (hi_ - lo_)); }
  double weight(std::size_t i) const { return w_.empty() ? 1.0 : w_[i]; }

  // Weighted mean of v over every replicate. A column constant on the window
  // returns that constant exactly in every replicate.
  template <class F>
  std::vector<double> means(F&& v) const {
    std::vector<double> s(nb_, 0.0), ws(nb_, 0.0);
    const double v0 = v(lo_);
    bool constant = true;
    for (std::size_t i = lo_; i < hi_; ++i) {
      const double x = v(i);
      constant = constant && (x == v0);
      const int b = batch(i);
      s[b] += weight(i) * x;
      ws[b] += weight(i);
    }
    std::vector<double> out(nb_ + 1);
    if (constant) {
      std::fill(out.begin(), out.end(), v0);
      return out;
    }
    double S = 0, WS = 0;
    for (int b = 0; b < nb_; ++b) {
      S += s[b];
      WS += ws[b];
    }
    out[0] = S / WS;
    for (int b = 0; b < nb_; ++b) out[b + 1] = (S - s[b]) / (WS - ws[b]);
    return out;
  }

  // Mean over replicate r of v(i, r), for statistics whose per-sample value
  // depends on a replicate-level quantity (e.g. a centering mean).
  template <class F>
  double replicate_mean(int r, F&& v) const {
    double s = 0, ws = 0;
    const int skip = r - 1;
    for (std::size_t i = lo_; i < hi_; ++i) {
      if (batch(i) == skip) continue;
      s += weight(i) * v(i);
      ws += weight(i);
    }
    return s / ws;
  }

 private:
  std::span<const double> w_;
  std::size_t lo_, hi_;
  int nb_;
};

// Jackknife standard error from replicate values (index 0 = full window).
inline double jackknife_se(std::span<const double> reps) {
  const int nb = static_cast<int>(reps.size()) - 1;
  if (nb < 2) return std::numeric_limits<double>::infinity();
  if (std::all_of(reps.begin() + 1, reps.end(), [&](double v) { return v == reps[1]; })) return 0.0;
  double bar = 0;
  for (int b = 1; b <= nb; ++b) bar += reps[b];
  bar /= nb;
  double ss = 0;
  for (int b = 1; b <= nb; ++b) ss += (reps[b] - bar) * (reps[b] - bar);
  return std::sqrt(ss * (nb - 1) / nb);
}

inline Estimate replicate_estimate(std::span<const double> reps) { return {reps[0], jackknife_se(reps)}; }

// ---------------------------------------------------------------------------
// Generic "lhs <= sum_k c_k coef_k" fitting engine.

struct RowEval {
  double lhs = 0.0;
  std::vector<double> coef;
};

using Replicates = std::vector<std::vector<RowEval>>;  // [replicate][row]

struct LinearInequality {
  InequalityKind kind;
  std::vector<std::string> row_ids;
  std::vector<std::string> constant_names;  // one or two
  std::vector<std::string> coef_names;
  std::function<Replicates(const Window&)> evaluate;
  bool jensen_lhs = false;  // lhs is an entropy and must be >= -3 SE
};

namespace detail {

inline std::vector<double> fit_constants(const std::vector<RowEval>& rows, const std::vector<bool>& use, std::size_t K,
                                         bool* feasible = nullptr) {
  if (K == 1) {
    double c = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (use[i] && rows[i].coef[0] > 0) c = std::max(c, rows[i].lhs / rows[i].coef[0]);
    if (feasible) *feasible = true;
    return {c};
  }
  std::vector<double> lhs, ca, cb;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!use[i]) continue;
    lhs.push_back(rows[i].lhs);
    ca.push_back(rows[i].coef[0]);
    cb.push_back(rows[i].coef[1]);
  }
  const auto f = fit_min_pair(lhs, ca, cb);
  if (feasible) *feasible = f.feasible;
  return {f.a, f.b};
}

struct FitOutcome {
  std::vector<Estimate> constants;
  std::vector<std::vector<Estimate>> coef;  // [row][k]
  std::vector<Estimate> lhs;
  std::vector<Estimate> ratio;
  bool feasible = true;
};

inline FitOutcome fit_window(const LinearInequality& ineq, const Window& w, const std::vector<bool>& use) {
  const auto reps = ineq.evaluate(w);
  const std::size_t R = reps.size(), nrow = ineq.row_ids.size(), K = ineq.constant_names.size();
  FitOutcome out;
  std::vector<std::vector<double>> cvals(K, std::vector<double>(R));
  for (std::size_t r = 0; r < R; ++r) {
    bool ok = true;
    const auto c = fit_constants(reps[r], use, K, r == 0 ? &ok : nullptr);
    if (r == 0) out.feasible = ok;
    for (std::size_t k = 0; k < K; ++k) cvals[k][r] = c[k];
  }
  for (std::size_t k = 0; k < K; ++k) out.constants.push_back(replicate_estimate(cvals[k]));
  out.lhs.resize(nrow);
  out.ratio.resize(nrow);
  out.coef.assign(nrow, std::vector<Estimate>(K));
  std::vector<double> buf(R), rat(R);
  for (std::size_t i = 0; i < nrow; ++i) {
    for (std::size_t r = 0; r < R; ++r) buf[r] = reps[r][i].lhs;
    out.lhs[i] = replicate_estimate(buf);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t r = 0; r < R; ++r) buf[r] = reps[r][i].coef[k];
      out.coef[i][k] = replicate_estimate(buf);
    }
    if (K == 1) {
      bool finite = true;
      for (std::size_t r = 0; r < R; ++r) {
        rat[r] = reps[r][i].coef[0] > 0 ? reps[r][i].lhs / reps[r][i].coef[0] : 0.0;
        finite = finite && reps[r][i].coef[0] > 0;
      }
      out.ratio[i] = finite ? replicate_estimate(rat) : Estimate{rat[0], std::numeric_limits<double>::infinity()};
    }
  }
  return out;
}

// Excess of row i on window w under fixed constants c: lhs - sum c_k coef_k.
inline std::vector<Estimate> excess_on(const LinearInequality& ineq, const Window& w, const std::vector<Estimate>& c) {
  const auto reps = ineq.evaluate(w);
  const std::size_t R = reps.size(), nrow = ineq.row_ids.size(), K = c.size();
  std::vector<Estimate> out(nrow);
  std::vector<double> buf(R);
  for (std::size_t i = 0; i < nrow; ++i) {
    for (std::size_t r = 0; r < R; ++r) {
      double v = reps[r][i].lhs;
      for (std::size_t k = 0; k < K; ++k) v -= c[k].mean * reps[r][i].coef[k];
      buf[r] = v;
    }
    const double se_d = jackknife_se(buf);
    double var = se_d * se_d;
    for (std::size_t k = 0; k < K; ++k) var += std::pow(reps[0][i].coef[k] * c[k].se, 2);
    out[i] = {buf[0], std::sqrt(var)};
  }
  return out;
}

}  // namespace detail

inline InequalityReport run_linear_inequality(const LinearInequality& ineq, const CorpusTable& t,
                                              int batches = kDefaultBatches) {
  const std::size_t n = t.size(), nrow = ineq.row_ids.size(), K = ineq.constant_names.size();
  InequalityReport rep;
  rep.kind = ineq.kind;
  rep.corpus_id = t.corpus_id;
  rep.sample_size = n;
  rep.n_eff = t.ess;
  Window full(t.weights, 0, n, batches);
  std::vector<bool> all(nrow, true);
  auto first = detail::fit_window(ineq, full, all);

  // Exclusions and inconclusive rows from the full window.
  std::vector<bool> use(nrow, true);
  std::vector<std::string> notes(nrow);
  for (std::size_t i = 0; i < nrow; ++i) {
    bool all_zero = true;
    for (std::size_t k = 0; k < K; ++k) all_zero = all_zero && first.coef[i][k].mean == 0.0;
    const auto& L = first.lhs[i];
    if (K == 1 && all_zero) {
      use[i] = false;
      if (L.mean == 0.0) {
        notes[i] = "constant (0/0)";
      } else {
        notes[i] = "zero gradient with non-constant f";
        rep.warnings.push_back(ineq.row_ids[i] + ": " + notes[i]);
      }
      continue;
    }
    if (K == 2 && all_zero && L.mean == 0.0) {
      use[i] = false;
      notes[i] = "all terms vanish";
      continue;
    }
    if (K == 1) {
      const auto& C = first.coef[i][0];
      if (C.mean <= 3.0 * C.se && L.mean > 3.0 * L.se) {
        use[i] = false;
        notes[i] = "denominator statistically zero";
        rep.inconclusive.push_back(ineq.row_ids[i]);
      }
    }
    if (ineq.jensen_lhs && L.mean < -3.0 * L.se) rep.violations.push_back("jensen:" + ineq.row_ids[i]);
  }

  auto fit = detail::fit_window(ineq, full, use);
  if (!fit.feasible) rep.inconclusive.push_back("no feasible constants");
  for (std::size_t k = 0; k < K; ++k) rep.fitted_constants[ineq.constant_names[k]] = fit.constants[k];

  // Cross-fit: constants from the first half, excess measured on the second.
  const std::size_t mid = n / 2;
  Window wa(t.weights, 0, mid, batches), wb(t.weights, mid, n, batches);
  const auto fa = detail::fit_window(ineq, wa, use);
  const auto excess = detail::excess_on(ineq, wb, fa.constants);

  for (std::size_t i = 0; i < nrow; ++i) {
    FunctionRow row;
    row.id = ineq.row_ids[i];
    row.lhs = fit.lhs[i];
    for (std::size_t k = 0; k < K; ++k) row.rhs[ineq.coef_names[k]] = fit.coef[i][k];
    if (K == 1) {
      row.has_ratio = use[i];
      row.ratio = fit.ratio[i];
    }
    row.excluded = !use[i];
    row.note = notes[i];
    if (use[i] && excess[i].mean > 3.0 * excess[i].se) {
      rep.violations.push_back(row.id);
      row.note = "excess " + std::to_string(excess[i].mean) + " > 3 SE on held-out half";
    }
    rep.per_function.push_back(std::move(row));
  }
  return rep;
}

// Distance conditions for a measure: uses the measure's (p, alpha) on its group.
inline DistanceConditions check_distance_conditions(const MeasureSpec& spec, const std::vector<GroupPoint>& grid) {
  spec.validate();
  return check_distance_conditions(spec.structure, spec.p, spec.alpha, grid);
}

// ---------------------------------------------------------------------------
// Entropies.

// Ent^Phi(|f|) = mu Phi(|f|) - Phi(mu |f|) on a window replicate set.
inline std::vector<double> phi_entropy_replicates(const PhiSpec& ps, const Window& w, std::span<const double> f) {
  const auto a = w.means([&](std::size_t i) { return phi_eval(ps, std::abs(f[i])); });
  const auto b = w.means([&](std::size_t i) { return std::abs(f[i]); });
  std::vector<double> out(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) out[r] = a[r] - phi_eval(ps, b[r]);
  return out;
}

inline Estimate entropy_phi(const PhiSpec& ps, const SampleSet& s, const ScalarField& f) {
  s.validate();
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    v[i] = f(s.points[i]);
    if (!std::isfinite(v[i])) throw NumericError("entropy_phi: non-finite f");
  }
  Window w(s.weights, 0, s.size());
  return replicate_estimate(phi_entropy_replicates(ps, w, v));
}

namespace detail {

inline void require_table(const CorpusTable& t, std::size_t min_entries = kMinCorpusSize) {
  if (t.entries() < min_entries)
    throw RefusedError("corpus '" + t.corpus_id + "' has " + std::to_string(t.entries()) +
                       " entries; fitted constants need at least " + std::to_string(min_entries));
}

template <class Body>
Replicates per_row(const Window& w, std::size_t nrow, Body&& body) {
  Replicates reps(w.replicates(), std::vector<RowEval>(nrow));
  for (std::size_t i = 0; i < nrow; ++i) body(i, reps);
  return reps;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The battery.

// mu(|f| (|U|^beta + |grad U|)) <= A mu|grad f| + B mu|f|, plus the variant
// mu(|f| d^{p-1}) <= A_d mu|grad f| + B_d mu|f|.
inline InequalityReport verify_ubound(const MeasureSpec& spec, const CorpusTable& t) {
  detail::require_table(t);
  const double beta = spec.beta(), p = spec.p;
  const std::size_t K = t.entries();
  LinearInequality ineq;
  ineq.kind = InequalityKind::UBOUND;
  for (const auto& id : t.ids) ineq.row_ids.push_back(id);
  for (const auto& id : t.ids) ineq.row_ids.push_back(id + "@d^(p-1)");
  ineq.constant_names = {"A", "B"};
  ineq.coef_names = {"mu|grad f|", "mu|f|"};
  // The two families are fitted separately below; this closure serves both.
  auto make = [&](bool dvariant) {
    LinearInequality q = ineq;
    q.row_ids.assign(t.ids.begin(), t.ids.end());
    for (auto& id : q.row_ids) id += dvariant ? "@d^(p-1)" : "";
    q.evaluate = [&t, beta, p, K, dvariant](const Window& w) {
      return detail::per_row(w, K, [&](std::size_t k, Replicates& reps) {
        const auto& f = t.value[k];
        const auto lhs = w.means([&](std::size_t i) {
          const double weight = dvariant ? std::pow(t.d[i], p - 1) : std::pow(std::abs(t.U[i]), beta) + t.gradU[i];
          return std::abs(f[i]) * weight;
        });
        const auto g = w.means([&](std::size_t i) { return t.grad[k][i]; });
        const auto m = w.means([&](std::size_t i) { return std::abs(f[i]); });
        for (std::size_t r = 0; r < lhs.size(); ++r) reps[r][k] = {lhs[r], {g[r], m[r]}};
      });
    };
    return q;
  };
  auto main = run_linear_inequality(make(false), t);
  auto var = make(true);
  var.constant_names = {"A_d", "B_d"};
  auto second = run_linear_inequality(var, t);
  for (auto& [k, v] : second.fitted_constants) main.fitted_constants[k] = v;
  for (auto& r : second.per_function) main.per_function.push_back(std::move(r));
  for (auto& v : second.violations) main.violations.push_back(v);
  for (auto& v : second.inconclusive) main.inconclusive.push_back(v);
  for (auto& v : second.warnings) main.warnings.push_back(v);
  return main;
}

// mu|f - mu f| <= c0 mu|grad f|
inline InequalityReport verify_cheeger(const CorpusTable& t) {
  detail::require_table(t);
  const std::size_t K = t.entries();
  LinearInequality ineq;
  ineq.kind = InequalityKind::CHEEGER;
  ineq.row_ids = t.ids;
  ineq.constant_names = {"c0"};
  ineq.coef_names = {"mu|grad f|"};
  ineq.evaluate = [&t, K](const Window& w) {
    return detail::per_row(w, K, [&](std::size_t k, Replicates& reps) {
      const auto& f = t.value[k];
      const auto mf = w.means([&](std::size_t i) { return f[i]; });
      const auto g = w.means([&](std::size_t i) { return t.grad[k][i]; });
      const bool constant = std::all_of(mf.begin(), mf.end(), [&](double v) { return v == f[w.lo()]; }) &&
                            std::all_of(f.begin() + w.lo(), f.begin() + w.hi(), [&](double v) { return v == f[w.lo()]; });
      for (int r = 0; r < w.replicates(); ++r) {
        const double dev = constant ? 0.0 : w.replicate_mean(r, [&](std::size_t i) { return std::abs(f[i] - mf[r]); });
        reps[r][k] = {dev, {g[r]}};
      }
    });
  };
  return run_linear_inequality(ineq, t);
}

// Ent^Phi(|f|) <= c mu|grad f|
inline InequalityReport verify_l1phi_entropy(const PhiSpec& ps, const CorpusTable& t,
                                             std::size_t min_entries = kMinCorpusSize) {
  detail::require_table(t, min_entries);
  const std::size_t K = t.entries();
  LinearInequality ineq;
  ineq.kind = InequalityKind::L1PHI;
  ineq.row_ids = t.ids;
  ineq.constant_names = {"c"};
  ineq.coef_names = {"mu|grad f|"};
  ineq.jensen_lhs = true;
  ineq.evaluate = [&t, ps, K](const Window& w) {
    return detail::per_row(w, K, [&](std::size_t k, Replicates& reps) {
      const auto ent = phi_entropy_replicates(ps, w, t.value[k]);
      const auto g = w.means([&](std::size_t i) { return t.grad[k][i]; });
      for (std::size_t r = 0; r < ent.size(); ++r) reps[r][k] = {ent[r], {g[r]}};
    });
  };
  return run_linear_inequality(ineq, t);
}

// mu(|f|^q log(|f|^q / mu|f|^q)) <= C' mu|grad f|^q, q = 1/beta in (1, 2].
inline InequalityReport verify_lsq(const PhiSpec& ps, const CorpusTable& t) {
  detail::require_table(t);
  const double q = ps.q();
  if (!(q > 1.0 && q <= 2.0)) throw DomainError("verify_lsq: q = 1/beta must lie in (1, 2]");
  const std::size_t K = t.entries();
  LinearInequality ineq;
  ineq.kind = InequalityKind::LSQ;
  ineq.row_ids = t.ids;
  ineq.constant_names = {"C'"};
  ineq.coef_names = {"mu|grad f|^q"};
  ineq.jensen_lhs = true;
  ineq.evaluate = [&t, q, K](const Window& w) {
    return detail::per_row(w, K, [&](std::size_t k, Replicates& reps) {
      const auto& f = t.value[k];
      const auto a = w.means([&](std::size_t i) {
        const double v = std::pow(std::abs(f[i]), q);
        return v > 0 ? v * std::log(v) : 0.0;
      });
      const auto b = w.means([&](std::size_t i) { return std::pow(std::abs(f[i]), q); });
      const auto g = w.means([&](std::size_t i) { return std::pow(t.grad[k][i], q); });
      for (std::size_t r = 0; r < a.size(); ++r) {
        const double ent = b[r] > 0 ? a[r] - b[r] * std::log(b[r]) : 0.0;
        reps[r][k] = {ent, {g[r]}};
      }
    });
  };
  return run_linear_inequality(ineq, t);
}

// mu(g (log_+ g)^beta) <= K mu|grad g| + K' with g = |f| / mu|f|.
inline InequalityReport verify_tight_ledoux(const PhiSpec& ps, const CorpusTable& t) {
  detail::require_table(t);
  const std::size_t Kn = t.entries();
  const double beta = ps.beta;
  LinearInequality ineq;
  ineq.kind = InequalityKind::TIGHT_LEDOUX;
  ineq.row_ids = t.ids;
  ineq.constant_names = {"K", "K'"};
  ineq.coef_names = {"mu|grad g|", "one"};
  ineq.evaluate = [&t, beta, Kn](const Window& w) {
    return detail::per_row(w, Kn, [&](std::size_t k, Replicates& reps) {
      const auto& f = t.value[k];
      const auto m = w.means([&](std::size_t i) { return std::abs(f[i]); });
      const auto g = w.means([&](std::size_t i) { return t.grad[k][i]; });
      for (int r = 0; r < w.replicates(); ++r) {
        if (!(m[r] > 0)) {
          reps[r][k] = {0.0, {0.0, 0.0}};
          continue;
        }
        const double lhs = w.replicate_mean(r, [&](std::size_t i) {
          const double gi = std::abs(f[i]) / m[r];
          return gi > 1.0 ? gi * std::pow(std::log(gi), beta) : 0.0;
        });
        reps[r][k] = {lhs, {g[r] / m[r], 1.0}};
      }
    });
  };
  auto rep = run_linear_inequality(ineq, t);
  for (std::size_t k = 0; k < Kn; ++k) {
    bool positive = false;
    for (double v : t.value[k]) positive = positive || v != 0.0;
    if (!positive) {
      rep.per_function[k].excluded = true;
      rep.per_function[k].note = "mu|f| = 0";
    }
  }
  return rep;
}

// U_2(mu f) <= mu sqrt(U_2(f)^2 + C'' |grad f|^2) for 0 <= f <= 1.
inline InequalityReport verify_ifi2(const CorpusTable& t, const ProfileTable& pt, double clip_tol = 1e-9) {
  detail::require_table(t);
  if (std::abs(pt.q() - 2.0) > 1e-12) throw DomainError("verify_ifi2 needs the q = 2 profile");
  const std::size_t n = t.size(), K = t.entries();
  InequalityReport rep;
  rep.kind = InequalityKind::IFI2;
  rep.corpus_id = t.corpus_id;
  rep.sample_size = n;
  rep.n_eff = t.ess;

  struct Prepared {
    bool usable = false;
    std::vector<double> f, u, g2;
  };
  std::vector<Prepared> prep(K);
  parallel_for(K, [&](std::size_t k) {
    auto& P = prep[k];
    const auto& v = t.value[k];
    for (double x : v)
      if (x < -clip_tol || x > 1.0 + clip_tol) return;
    P.usable = true;
    P.f.resize(n);
    P.u.resize(n);
    P.g2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      P.f[i] = std::clamp(v[i], 0.0, 1.0);
      P.u[i] = pt(P.f[i]);
      P.g2[i] = t.grad[k][i] * t.grad[k][i];
    }
  });

  // R(C) = mu sqrt(u^2 + C g^2) - U_2(mu f) on a window; replicate values.
  auto R = [&](const Prepared& P, const Window& w, double C) {
    const auto a = w.means([&](std::size_t i) { return std::sqrt(P.u[i] * P.u[i] + C * P.g2[i]); });
    const auto b = w.means([&](std::size_t i) { return P.f[i]; });
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < a.size(); ++r) out[r] = a[r] - pt(b[r]);
    return out;
  };
  auto dR = [&](const Prepared& P, const Window& w, double C) {
    return w.means([&](std::size_t i) {
      const double s = std::sqrt(P.u[i] * P.u[i] + C * P.g2[i]);
      return s > 0 ? 0.5 * P.g2[i] / s : 0.0;
    })[0];
  };
  // Smallest C >= 0 with R(C) >= 0 on the full window of w; infinity if none.
  auto solve = [&](const Prepared& P, const Window& w) {
    auto full = [&](double C) { return R(P, w, C)[0]; };
    if (full(0.0) >= 0.0) return 0.0;
    double hi = 1e-6;
    while (full(hi) < 0.0) {
      hi *= 4.0;
      if (hi > 1e12) return std::numeric_limits<double>::infinity();
    }
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (full(mid) >= 0.0) hi = mid; else lo = mid;
    }
    return hi;
  };
  auto fit_on = [&](const Window& w, std::vector<Estimate>* per) {
    Estimate best{0.0, 0.0};
    for (std::size_t k = 0; k < K; ++k) {
      const auto& P = prep[k];
      if (!P.usable) continue;
      const double C = solve(P, w);
      Estimate e{C, 0.0};
      if (std::isfinite(C) && C > 0.0) {
        const double se_r = jackknife_se(R(P, w, C));
        const double slope = dR(P, w, C);
        e.se = slope > 0 ? se_r / slope : std::numeric_limits<double>::infinity();
      }
      if (per) (*per)[k] = e;
      if (std::isfinite(C) && C > best.mean) best = e;
    }
    return best;
  };

  Window full(t.weights, 0, n), wa(t.weights, 0, n / 2), wb(t.weights, n / 2, n);
  std::vector<Estimate> per(K);
  const Estimate C = fit_on(full, &per);
  rep.fitted_constants["C''"] = C;
  const Estimate Ca = fit_on(wa, nullptr);

  for (std::size_t k = 0; k < K; ++k) {
    FunctionRow row;
    row.id = t.ids[k];
    const auto& P = prep[k];
    if (!P.usable) {
      row.excluded = true;
      row.note = "values outside [0, 1]";
      rep.per_function.push_back(std::move(row));
      continue;
    }
    const auto fm = full.means([&](std::size_t i) { return P.f[i]; });
    std::vector<double> lhs(fm.size());
    for (std::size_t r = 0; r < fm.size(); ++r) lhs[r] = pt(fm[r]);
    row.lhs = replicate_estimate(lhs);
    const auto rhs = full.means([&](std::size_t i) { return std::sqrt(P.u[i] * P.u[i] + C.mean * P.g2[i]); });
    row.rhs["mu sqrt(U^2 + C''|grad f|^2)"] = replicate_estimate(rhs);
    row.rhs["C_f"] = per[k];
    if (!std::isfinite(per[k].mean)) {
      row.excluded = true;
      row.note = "no finite C'' makes this row feasible";
      rep.inconclusive.push_back(row.id);
    }
    // Held-out check at the first-half constant.
    auto rb = R(P, wb, Ca.mean);
    const double se = std::sqrt(std::pow(jackknife_se(rb), 2) + std::pow(dR(P, wb, Ca.mean) * Ca.se, 2));
    if (!row.excluded && -rb[0] > 3.0 * se) {
      rep.violations.push_back(row.id);
      row.note = "held-out deficit " + std::to_string(-rb[0]);
    }
    rep.per_function.push_back(std::move(row));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Theta bound (generalized relative entropy inequality).

struct ThetaBound {
  Estimate lhs;        // mu(f h)
  double rhs = 0.0;    // s^-1 Ent^Phi(f) + s^-1 Theta(s h)
  double Theta = 0.0;  // theta + (log 2)^beta + (log mu e^{(s h)^q})^beta
  double theta = 0.0;
  Estimate entropy;
  bool holds() const { return lhs.mean <= rhs + 3.0 * lhs.se; }
};

inline ThetaBound theta_bound(const PhiSpec& ps, const SampleSet& s, const ScalarField& f, const ScalarField& h,
                              double sval) {
  s.validate();
  if (!(sval > 0.0)) throw DomainError("theta_bound: s must be positive");
  const std::size_t n = s.size();
  std::vector<double> fv(n), hv(n);
  for (std::size_t i = 0; i < n; ++i) {
    fv[i] = f(s.points[i]);
    hv[i] = h(s.points[i]);
    if (fv[i] < 0 || hv[i] < 0 || !std::isfinite(fv[i]) || !std::isfinite(hv[i]))
      throw DomainError("theta_bound: f and h must be finite and non-negative");
  }
  Window w(s.weights, 0, n);
  const double mf = w.means([&](std::size_t i) { return fv[i]; })[0];
  if (!(mf > 0)) throw DegenerateError("theta_bound: mu f = 0");
  for (auto& v : fv) v /= mf;
  ThetaBound out;
  out.theta = theta_constant(ps);
  out.lhs = replicate_estimate(w.means([&](std::size_t i) { return fv[i] * hv[i]; }));
  out.entropy = replicate_estimate(phi_entropy_replicates(ps, w, fv));
  const double q = ps.q();
  const double me = w.means([&](std::size_t i) { return std::exp(std::pow(sval * hv[i], q)); })[0];
  if (!std::isfinite(me))
    throw IntegrabilityError("theta_bound: mu exp((s h)^q) is not finite at this s; take s smaller");
  const double lg = std::log(me);
  out.Theta = out.theta + std::pow(std::log(2.0), ps.beta) + std::pow(std::max(lg, 0.0), ps.beta);
  out.rhs = (out.entropy.mean + out.Theta) / sval;
  return out;
}

// ---------------------------------------------------------------------------
// Exponential integrability.

struct ExpIntConfig {
  std::vector<double> lambdas{0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  double L = 5.5;                    // truncation min(d, L)
  std::optional<double> lambda0;     // overrides the U-bound estimate
  double max_relative_se = 0.2;
};

// mu exp(lambda min(d, L)^2) with standard error.
inline Estimate exp_moment(const SampleSet& s, double lambda, double L) {
  s.validate();
  Window w(s.weights, 0, s.size());
  return replicate_estimate(w.means([&](std::size_t i) {
    const double d = std::min(s.distances[i], L);
    return std::exp(lambda * d * d);
  }));
}

// Fits C, D in mu(|f| d) <= C mu|grad f| + D mu|f| on the corpus (lambda_0 = 1/(2C)),
// estimates mu e^{lambda min(d,L)^2} <= e^{lambda D''} over the grid, and the
// Appendix variant mu e^{lambda U_L} <= e^{lambda B} with U_L = min(U, alpha L^p).
inline InequalityReport verify_exp_integrability(const MeasureSpec& spec, const CorpusTable& t,
                                                 const ExpIntConfig& cfg) {
  detail::require_table(t);
  if (cfg.lambdas.empty()) throw DomainError("verify_exp_integrability: empty lambda grid");
  for (double l : cfg.lambdas)
    if (!(l > 0)) throw DomainError("verify_exp_integrability: lambdas must be positive");
  if (!(cfg.L > 0)) throw DomainError("verify_exp_integrability: L must be positive");
  const std::size_t n = t.size(), K = t.entries();

  LinearInequality ub;
  ub.kind = InequalityKind::UBOUND;
  ub.row_ids = t.ids;
  ub.constant_names = {"C", "D"};
  ub.coef_names = {"mu|grad f|", "mu|f|"};
  ub.evaluate = [&t, K](const Window& w) {
    return detail::per_row(w, K, [&](std::size_t k, Replicates& reps) {
      const auto& f = t.value[k];
      const auto lhs = w.means([&](std::size_t i) { return std::abs(f[i]) * t.d[i]; });
      const auto g = w.means([&](std::size_t i) { return t.grad[k][i]; });
      const auto m = w.means([&](std::size_t i) { return std::abs(f[i]); });
      for (std::size_t r = 0; r < lhs.size(); ++r) reps[r][k] = {lhs[r], {g[r], m[r]}};
    });
  };
  const auto ubrep = run_linear_inequality(ub, t);

  InequalityReport rep;
  rep.kind = InequalityKind::EXP_INT;
  rep.corpus_id = t.corpus_id;
  rep.sample_size = n;
  rep.n_eff = t.ess;
  const Estimate C = ubrep.constant("C");
  rep.fitted_constants["C"] = C;
  rep.fitted_constants["D"] = ubrep.constant("D");
  const double lambda0 = cfg.lambda0 ? *cfg.lambda0 : (C.mean > 0 ? 1.0 / (2.0 * C.mean) : std::numeric_limits<double>::infinity());
  rep.fitted_constants["lambda0"] = {lambda0, cfg.lambda0 ? 0.0 : (C.mean > 0 ? C.se / (2 * C.mean * C.mean) : 0.0)};
  for (const auto& v : ubrep.violations) rep.violations.push_back("ubound:" + v);

  std::vector<double> lambdas = cfg.lambdas;
  std::sort(lambdas.begin(), lambdas.end());
  const double UL = spec.alpha * std::pow(cfg.L, spec.p);
  Window full(t.weights, 0, n), wa(t.weights, 0, n / 2), wb(t.weights, n / 2, n);
  auto moment = [&](const Window& w, double lam, bool appendix) {
    return w.means([&](std::size_t i) {
      if (appendix) return std::exp(lam * std::min(t.U[i], UL));
      const double d = std::min(t.d[i], cfg.L);
      return std::exp(lam * d * d);
    });
  };
  struct Kept {
    double lam;
    Estimate e, ea;
  };
  std::vector<Kept> kept;
  double prev = 0.0;
  for (double lam : lambdas) {
    if (lam >= lambda0) {
      rep.warnings.push_back("lambda=" + std::to_string(lam) + " >= lambda0=" + std::to_string(lambda0) + " dropped");
      continue;
    }
    const auto e = replicate_estimate(moment(full, lam, false));
    if (e.se > cfg.max_relative_se * e.mean) {
      rep.warnings.push_back("grid truncated at lambda=" + std::to_string(lam) + ": relative SE above " +
                             std::to_string(cfg.max_relative_se));
      break;
    }
    if (e.mean < prev) rep.violations.push_back("monotonicity at lambda=" + std::to_string(lam));
    prev = e.mean;
    kept.push_back({lam, e, replicate_estimate(moment(full, lam, true))});
  }
  // D'' and B: max log(moment) / lambda with delta-method SE.
  auto fit_rate = [&](const Window& w, bool appendix) {
    Estimate best{0.0, 0.0};
    for (const auto& k : kept) {
      const auto e = replicate_estimate(moment(w, k.lam, appendix));
      const double v = std::log(e.mean) / k.lam;
      if (v > best.mean) best = {v, e.se / (e.mean * k.lam)};
    }
    return best;
  };
  const Estimate Dpp = fit_rate(full, false), B = fit_rate(full, true);
  rep.fitted_constants["D''"] = Dpp;
  rep.fitted_constants["B"] = B;
  const Estimate Dpp_a = fit_rate(wa, false);
  for (const auto& k : kept) {
    FunctionRow row;
    row.id = "lambda=" + std::to_string(k.lam);
    row.lhs = k.e;
    row.rhs["exp(lambda D'')"] = {std::exp(k.lam * Dpp.mean), std::exp(k.lam * Dpp.mean) * k.lam * Dpp.se};
    row.rhs["appendix mu e^{lambda U_L}"] = k.ea;
    row.rhs["exp(lambda B)"] = {std::exp(k.lam * B.mean), std::exp(k.lam * B.mean) * k.lam * B.se};
    const auto eb = replicate_estimate(moment(wb, k.lam, false));
    const double bound = std::exp(k.lam * Dpp_a.mean);
    const double se = std::sqrt(eb.se * eb.se + std::pow(bound * k.lam * Dpp_a.se, 2));
    if (eb.mean - bound > 3.0 * se) rep.violations.push_back(row.id);
    rep.per_function.push_back(std::move(row));
  }
  if (kept.empty()) rep.inconclusive.push_back("no lambda below lambda0 with acceptable error");
  return rep;
}

// ---------------------------------------------------------------------------
// Sobolev baseline and L1 Poincare inequality on CC balls, by Lebesgue quadrature.

struct SobolevConfig {
  double box_halfwidth = 2.0;  // x in [-R, R]^m, z in [-R^2, R^2]^n
  int points_per_axis = 48;    // midpoint tensor rule for dim <= 3
  std::size_t mc_points = 200000;  // uniform Monte Carlo otherwise
  std::optional<double> eps;   // default 1 / (Q - 1)
  std::vector<double> ball_radii{0.5, 1.0, 1.5};
  std::uint64_t seed = 7;
};

inline InequalityReport verify_sobolev_baseline(const HTypeStructure& s, const FunctionCorpus& corpus,
                                                const SobolevConfig& cfg) {
  const int Q = s.homogeneous_dimension();
  const double eps = cfg.eps ? *cfg.eps : (Q > 1 ? 1.0 / (Q - 1) : 1.0);
  if (!(eps > 0)) throw DomainError("verify_sobolev_baseline: eps must be positive");
  const int dim = s.dimension();
  const double R = cfg.box_halfwidth;
  // Quadrature nodes (flat) and the common cell volume.
  std::vector<GroupPoint> nodes;
  double cell = 1.0;
  if (dim <= 3) {
    const int G = cfg.points_per_axis;
    std::vector<double> hw(dim);
    for (int a = 0; a < dim; ++a) {
      hw[a] = a < s.m() ? R : R * R;
      cell *= 2 * hw[a] / G;
    }
    std::size_t total = 1;
    for (int a = 0; a < dim; ++a) total *= G;
    std::vector<double> v(dim);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rest = idx;
      for (int a = 0; a < dim; ++a) {
        const int j = static_cast<int>(rest % G);
        rest /= G;
        v[a] = -hw[a] + (j + 0.5) * 2 * hw[a] / G;
      }
      nodes.push_back(s.from_flat(v));
    }
  } else {
    Rng rng(cfg.seed);
    double vol = 1.0;
    for (int a = 0; a < dim; ++a) vol *= 2 * (a < s.m() ? R : R * R);
    cell = vol / static_cast<double>(cfg.mc_points);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < cfg.mc_points; ++i) {
      for (int a = 0; a < dim; ++a) {
        const double h = a < s.m() ? R : R * R;
        v[a] = rng.uniform(-h, h);
      }
      nodes.push_back(s.from_flat(v));
    }
  }
  std::vector<double> dist(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    dist[i] = s.n() == 0 ? nodes[i].x.norm() : cc_distance_rz(nodes[i].x.norm(), nodes[i].z.norm()).distance;

  InequalityReport rep;
  rep.kind = InequalityKind::SOBOLEV_BASELINE;
  rep.corpus_id = corpus.id;
  rep.sample_size = nodes.size();
  std::vector<double> lhs, ca, cb;
  std::vector<std::vector<double>> fv(corpus.size()), gv(corpus.size());
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const auto& e = corpus.entries[k];
    fv[k].resize(nodes.size());
    gv[k].resize(nodes.size());
    double I1 = 0, Ig = 0, If = 0, edge = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double f = e.field(nodes[i]);
      const double g = gradient_length(s, e.field, nodes[i]);
      fv[k][i] = f;
      gv[k][i] = g;
      I1 += std::pow(std::abs(f), 1 + eps) * cell;
      Ig += g * cell;
      If += std::abs(f) * cell;
      // Support check: the outermost shell of the box.
      bool boundary = false;
      for (int a = 0; a < s.m(); ++a) boundary = boundary || std::abs(nodes[i].x[a]) > 0.95 * R;
      for (int a = 0; a < s.n(); ++a) boundary = boundary || std::abs(nodes[i].z[a]) > 0.95 * R * R;
      if (boundary) edge = std::max(edge, std::abs(f));
    }
    FunctionRow row;
    row.id = e.id;
    row.lhs = {std::pow(I1, 1 / (1 + eps)), 0.0};
    row.rhs["int|grad f|"] = {Ig, 0.0};
    row.rhs["int|f|"] = {If, 0.0};
    if (edge > 1e-12) {
      row.excluded = true;
      row.note = "not supported inside the box";
      rep.warnings.push_back(e.id + ": " + row.note);
    } else if (If == 0.0) {
      row.excluded = true;
      row.note = "f = 0";
    } else {
      lhs.push_back(row.lhs.mean);
      ca.push_back(Ig);
      cb.push_back(If);
    }
    rep.per_function.push_back(std::move(row));
  }
  rep.fitted_constants["eps"] = {eps, 0.0};
  if (!lhs.empty()) {
    const auto fit = fit_min_pair(lhs, ca, cb);
    rep.fitted_constants["a"] = {fit.a, 0.0};
    rep.fitted_constants["b"] = {fit.b, 0.0};
    double a0 = 0;
    for (std::size_t i = 0; i < lhs.size(); ++i)
      if (ca[i] > 0) a0 = std::max(a0, lhs[i] / ca[i]);
    rep.fitted_constants["a0"] = {a0, 0.0};
    if (!fit.feasible) rep.inconclusive.push_back("sobolev fit infeasible");
  }
  // L1 Poincare on B(r): int_B |f - f_B| <= (1/m_r) int_B |grad f|.
  for (double r : cfg.ball_radii) {
    double inv_m = 0.0;
    for (std::size_t k = 0; k < corpus.size(); ++k) {
      double vol = 0, mass = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (dist[i] <= r) {
          vol += cell;
          mass += fv[k][i] * cell;
        }
      if (vol == 0) continue;
      const double mean = mass / vol;
      double dev = 0, grad = 0;
      for (std::size_t i = 0; i < nodes.size(); ++i)
        if (dist[i] <= r) {
          dev += std::abs(fv[k][i] - mean) * cell;
          grad += gv[k][i] * cell;
        }
      if (grad > 0) inv_m = std::max(inv_m, dev / grad);
    }
    rep.fitted_constants["1/m_r(r=" + std::to_string(r).substr(0, 4) + ")"] = {inv_m, 0.0};
  }
  return rep;
}

}  // namespace subriem
