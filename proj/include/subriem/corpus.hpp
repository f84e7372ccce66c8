#pragma once

// Test-function corpora. A finite corpus can falsify an inequality on this
// sample, never prove it; reports carry the corpus id for that reason.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/cc_distance.hpp"
#include "subriem/errors.hpp"
#include "subriem/htype.hpp"
#include "subriem/measures.hpp"
#include "subriem/stats.hpp"

namespace subriem {

inline constexpr std::size_t kMinCorpusSize = 20;

struct CorpusEntry {
  std::string id;
  std::string family;  // bump, polynomial, polynomial_x_bump, distance_composite, log_density, indicator_smoothing
  ScalarField field;
  // f = h(d); |grad f| = |h'(d)| |grad d| from the shared geodesic solution.
  std::function<double(double)> radial;
  std::function<double(double)> radial_prime;
  // f = axis(x_1) for functions of the first coordinate only; level sets are slabs.
  std::function<double(double)> axis;
  bool unit_range = false;  // values in [0, 1] by construction
};

struct FunctionCorpus {
  std::string id;
  std::vector<CorpusEntry> entries;

  std::size_t size() const { return entries.size(); }
  void require_fit_size() const {
    if (entries.size() < kMinCorpusSize)
      throw RefusedError("corpus '" + id + "' has " + std::to_string(entries.size()) +
                         " entries; fitted constants need at least " + std::to_string(kMinCorpusSize));
  }
  const CorpusEntry& at(const std::string& eid) const {
    for (const auto& e : entries)
      if (e.id == eid) return e;
    throw ConfigError("no corpus entry '" + eid + "'");
  }
};

namespace detail {

inline CorpusEntry radial_entry(const HTypeStructure& s, std::string id, std::string family,
                                std::function<double(double)> h, std::function<double(double)> dh,
                                bool unit = false) {
  CorpusEntry e;
  e.id = std::move(id);
  e.family = std::move(family);
  e.radial = h;
  e.radial_prime = dh;
  e.unit_range = unit;
  auto dist = [s](const GroupPoint& g) {
    return s.n() == 0 ? g.x.norm() : cc_distance_rz(g.x.norm(), g.z.norm()).distance;
  };
  e.field.eval = [h, dist](const GroupPoint& g) { return h(dist(g)); };
  e.field.grad_hint = [s, dh](const GroupPoint& g) {
    EuclideanGradient eg{Eigen::VectorXd::Zero(s.m()), Eigen::VectorXd::Zero(s.n())};
    if (s.n() == 0) {
      const double r = g.x.norm();
      if (r > 0) eg.dx = (dh(r) / r) * g.x;
      return eg;
    }
    const auto sol = cc_distance(s, g);
    auto pd = distance_partials(s, g, sol);
    const double k = dh(sol.distance);
    return EuclideanGradient{k * pd.dx, k * pd.dz};
  };
  return e;
}

inline CorpusEntry plain_entry(std::string id, std::string family, std::function<double(const GroupPoint&)> f,
                               std::function<EuclideanGradient(const GroupPoint&)> grad, bool unit = false) {
  CorpusEntry e;
  e.id = std::move(id);
  e.family = std::move(family);
  e.field.eval = std::move(f);
  e.field.grad_hint = std::move(grad);
  e.unit_range = unit;
  return e;
}

inline double logistic(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// N and its Euclidean partials.
inline double gauge_with_partials(const GroupPoint& g, Eigen::VectorXd& dx, Eigen::VectorXd& dz) {
  const double N = kaplan_norm(g);
  dx = Eigen::VectorXd::Zero(g.x.size());
  dz = Eigen::VectorXd::Zero(g.z.size());
  if (N > 0) {
    const double n3 = N * N * N;
    dx = (g.x.squaredNorm() / n3) * g.x;
    dz = (0.25 * 2.0 * kKaplanConstant / n3) * g.z;
  }
  return N;
}

}  // namespace detail

// The standard corpus, scaled to the measure's length ell = alpha^{-1/p}.
inline FunctionCorpus standard_corpus(const MeasureSpec& spec) {
  spec.validate();
  const auto& s = spec.structure;
  const double ell = spec.length_scale();
  const double a = spec.alpha, p = spec.p;
  const int m = s.m(), n = s.n();
  FunctionCorpus c;
  c.id = "builtin:standard";
  auto zero_grad = [m, n]() { return EuclideanGradient{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(n)}; };
  auto& E = c.entries;
  using detail::radial_entry;
  using detail::plain_entry;

  E.push_back(radial_entry(s, "d", "distance_composite", [](double d) { return d; }, [](double) { return 1.0; }));
  E.push_back(radial_entry(s, "d_sq", "distance_composite", [ell](double d) { return d * d / (ell * ell); },
                           [ell](double d) { return 2 * d / (ell * ell); }));
  E.push_back(radial_entry(s, "sqrt_1_d_sq", "distance_composite",
                           [ell](double d) { return std::sqrt(1 + d * d / (ell * ell)); },
                           [ell](double d) { return d / (ell * ell) / std::sqrt(1 + d * d / (ell * ell)); }));
  // Truncated exp(lambda d^p): near-extremal shapes for the entropy inequalities.
  for (auto [tag, frac] : {std::pair{"exp_quarter", 0.25}, std::pair{"exp_third", 1.0 / 3.0}}) {
    const double lam = frac * a, L = 3.0 * ell;
    E.push_back(radial_entry(
        s, tag, "distance_composite",
        [lam, L, p](double d) { return std::exp(lam * std::pow(std::min(d, L), p)); },
        [lam, L, p](double d) { return d < L ? lam * p * std::pow(d, p - 1) * std::exp(lam * std::pow(d, p)) : 0.0; }));
  }
  E.push_back(radial_entry(s, "tanh_d", "distance_composite", [ell](double d) { return std::tanh(d / ell - 1); },
                           [ell](double d) {
                             const double t = std::tanh(d / ell - 1);
                             return (1 - t * t) / ell;
                           }));
  for (double r : {0.5, 1.0, 2.0}) {
    const double R = r * ell, w = 0.1 * ell;
    E.push_back(radial_entry(
        s, "ball_" + std::to_string(r).substr(0, 3), "indicator_smoothing",
        [R, w](double d) { return detail::logistic(-(d - R) / w); },
        [R, w](double d) {
          const double l = detail::logistic(-(d - R) / w);
          return -l * (1 - l) / w;
        },
        true));
  }
  E.push_back(radial_entry(s, "U", "log_density", [a, p](double d) { return a * std::pow(d, p); },
                           [a, p](double d) { return a * p * std::pow(d, p - 1); }));
  E.push_back(radial_entry(s, "log_1_U", "log_density", [a, p](double d) { return std::log1p(a * std::pow(d, p)); },
                           [a, p](double d) { return a * p * std::pow(d, p - 1) / (1 + a * std::pow(d, p)); }));
  E.push_back(radial_entry(s, "gauss_d", "bump", [ell](double d) { return std::exp(-d * d / (ell * ell)); },
                           [ell](double d) { return -2 * d / (ell * ell) * std::exp(-d * d / (ell * ell)); }, true));

  E.push_back(plain_entry("const", "polynomial", [](const GroupPoint&) { return 1.0; },
                          [zero_grad](const GroupPoint&) { return zero_grad(); }, true));
  E.back().axis = [](double) { return 1.0; };
  E.push_back(plain_entry("x1", "polynomial", [ell](const GroupPoint& g) { return g.x[0] / ell; },
                          [zero_grad, ell](const GroupPoint&) {
                            auto e = zero_grad();
                            e.dx[0] = 1 / ell;
                            return e;
                          }));
  E.back().axis = [ell](double t) { return t / ell; };
  E.push_back(plain_entry("x1_sq", "polynomial", [ell](const GroupPoint& g) { return g.x[0] * g.x[0] / (ell * ell); },
                          [zero_grad, ell](const GroupPoint& g) {
                            auto e = zero_grad();
                            e.dx[0] = 2 * g.x[0] / (ell * ell);
                            return e;
                          }));
  E.back().axis = [ell](double t) { return t * t / (ell * ell); };
  E.push_back(plain_entry("cos_x1", "polynomial", [ell](const GroupPoint& g) { return std::cos(g.x[0] / ell); },
                          [zero_grad, ell](const GroupPoint& g) {
                            auto e = zero_grad();
                            e.dx[0] = -std::sin(g.x[0] / ell) / ell;
                            return e;
                          }));
  E.back().axis = [ell](double t) { return std::cos(t / ell); };
  for (auto [tag, shift] : {std::pair{"halfspace", 0.0}, std::pair{"halfspace_shift", 1.0}}) {
    const double w = 0.2 * ell, c0 = shift * ell;
    E.push_back(plain_entry(tag, "indicator_smoothing",
                            [w, c0](const GroupPoint& g) { return detail::logistic((g.x[0] - c0) / w); },
                            [zero_grad, w, c0](const GroupPoint& g) {
                              auto e = zero_grad();
                              const double l = detail::logistic((g.x[0] - c0) / w);
                              e.dx[0] = l * (1 - l) / w;
                              return e;
                            },
                            true));
    E.back().axis = [w, c0](double t) { return detail::logistic((t - c0) / w); };
  }
  E.push_back(plain_entry("gauge_bump", "bump",
                          [ell](const GroupPoint& g) {
                            const double N = kaplan_norm(g) / ell;
                            return std::exp(-N * N);
                          },
                          [ell](const GroupPoint& g) {
                            Eigen::VectorXd dx, dz;
                            const double N = detail::gauge_with_partials(g, dx, dz);
                            const double k = -2 * N / (ell * ell) * std::exp(-N * N / (ell * ell));
                            return EuclideanGradient{k * dx, k * dz};
                          },
                          true));
  E.push_back(plain_entry("x1_gauge_bump", "polynomial_x_bump",
                          [ell](const GroupPoint& g) {
                            const double N = kaplan_norm(g) / ell;
                            return g.x[0] / ell * std::exp(-N * N);
                          },
                          [ell](const GroupPoint& g) {
                            Eigen::VectorXd dx, dz;
                            const double N = detail::gauge_with_partials(g, dx, dz);
                            const double b = std::exp(-N * N / (ell * ell));
                            const double k = -2 * N / (ell * ell) * b * g.x[0] / ell;
                            EuclideanGradient e{k * dx, k * dz};
                            e.dx[0] += b / ell;
                            return e;
                          }));
  {
    // Gauge bump centered at (ell e_1, 0); gradient by finite differences.
    GroupPoint c0 = s.identity();
    c0.x[0] = ell;
    const GroupPoint cinv = group_inverse(c0);
    CorpusEntry e;
    e.id = "shifted_bump";
    e.family = "bump";
    e.unit_range = true;
    e.field.eval = [s, cinv, ell](const GroupPoint& g) {
      const double N = kaplan_norm(group_mul(s, cinv, g)) / ell;
      return std::exp(-N * N);
    };
    E.push_back(std::move(e));
  }
  if (n >= 1) {
    const double l2 = ell * ell;
    E.push_back(plain_entry("z1", "polynomial", [l2](const GroupPoint& g) { return g.z[0] / l2; },
                            [zero_grad, l2](const GroupPoint&) {
                              auto e = zero_grad();
                              e.dz[0] = 1 / l2;
                              return e;
                            }));
    E.push_back(plain_entry("sin_z1", "polynomial", [l2](const GroupPoint& g) { return std::sin(g.z[0] / l2); },
                            [zero_grad, l2](const GroupPoint& g) {
                              auto e = zero_grad();
                              e.dz[0] = std::cos(g.z[0] / l2) / l2;
                              return e;
                            }));
    E.push_back(plain_entry("x1_z1", "polynomial", [ell, l2](const GroupPoint& g) { return g.x[0] * g.z[0] / (ell * l2); },
                            [zero_grad, ell, l2](const GroupPoint& g) {
                              auto e = zero_grad();
                              e.dx[0] = g.z[0] / (ell * l2);
                              e.dz[0] = g.x[0] / (ell * l2);
                              return e;
                            }));
  } else {
    E.push_back(plain_entry("x1_cubed", "polynomial",
                            [ell](const GroupPoint& g) { return std::pow(g.x[0] / ell, 3); },
                            [zero_grad, ell](const GroupPoint& g) {
                              auto e = zero_grad();
                              e.dx[0] = 3 * std::pow(g.x[0] / ell, 2) / ell;
                              return e;
                            }));
    E.back().axis = [ell](double t) { return std::pow(t / ell, 3); };
    E.push_back(plain_entry("sin_2x1", "polynomial", [ell](const GroupPoint& g) { return std::sin(2 * g.x[0] / ell); },
                            [zero_grad, ell](const GroupPoint& g) {
                              auto e = zero_grad();
                              e.dx[0] = 2 * std::cos(2 * g.x[0] / ell) / ell;
                              return e;
                            }));
    E.back().axis = [ell](double t) { return std::sin(2 * t / ell); };
    E.push_back(plain_entry("x1_sq_gauss", "polynomial_x_bump",
                            [ell](const GroupPoint& g) {
                              const double u = g.x.squaredNorm() / (ell * ell);
                              return g.x[0] * g.x[0] / (ell * ell) * std::exp(-u);
                            },
                            [ell](const GroupPoint& g) {
                              const double l2 = ell * ell, u = g.x.squaredNorm() / l2;
                              const double b = std::exp(-u), x0 = g.x[0];
                              EuclideanGradient e{(-2.0 / l2 * x0 * x0 / l2 * b) * g.x, Eigen::VectorXd::Zero(0)};
                              e.dx[0] += 2 * x0 / l2 * b;
                              return e;
                            }));
  }
  return c;
}

// Compactly supported smooth bumps (Sobolev baseline): exp(-1 / (1 - (N/R)^4)) type.
inline FunctionCorpus bump_corpus(const HTypeStructure& /*s*/, double ell = 1.0) {
  FunctionCorpus c;
  c.id = "builtin:bumps";
  int k = 0;
  for (double R : {0.5, 0.75, 1.0, 1.5}) {
    for (double tilt : {0.0, 0.5}) {
      const double RR = R * ell;
      CorpusEntry e;
      e.id = "bump_" + std::to_string(k++);
      e.family = tilt == 0.0 ? "bump" : "polynomial_x_bump";
      e.field.eval = [RR, tilt, ell](const GroupPoint& g) {
        const double u = std::pow(kaplan_norm(g) / RR, 4);
        if (u >= 1.0) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - u)) * (1.0 + tilt * g.x[0] / ell);
      };
      e.field.grad_hint = [RR, tilt, ell](const GroupPoint& g) {
        Eigen::VectorXd dx, dz;
        const double N = detail::gauge_with_partials(g, dx, dz);
        const double u = std::pow(N / RR, 4);
        if (u >= 1.0) return EuclideanGradient{0.0 * dx, 0.0 * dz};
        const double b = std::exp(1.0 - 1.0 / (1.0 - u));
        const double du = 4 * std::pow(N, 3) / std::pow(RR, 4);
        const double k = -b / ((1 - u) * (1 - u)) * du * (1.0 + tilt * g.x[0] / ell);
        EuclideanGradient out{k * dx, k * dz};
        out.dx[0] += b * tilt / ell;
        return out;
      };
      c.entries.push_back(std::move(e));
    }
  }
  return c;
}

// "builtin:standard", "builtin:bumps", or {"id": ..., "base": "builtin:standard", "include": [ids]}.
inline FunctionCorpus corpus_from_json(const nlohmann::json& j, const MeasureSpec& spec) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "builtin:standard") return standard_corpus(spec);
    if (name == "builtin:bumps") return bump_corpus(spec.structure, spec.length_scale());
    throw ConfigError("unknown corpus: " + name);
  }
  if (!j.is_object()) throw ConfigError("corpus must be a name or an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "id" && it.key() != "base" && it.key() != "include")
      throw ConfigError("unknown key in corpus: " + it.key());
  FunctionCorpus base = corpus_from_json(j.value("base", std::string("builtin:standard")), spec);
  FunctionCorpus out;
  out.id = j.value("id", base.id + ":subset");
  if (!j.contains("include")) {
    base.id = out.id;
    return base;
  }
  for (const auto& eid : j.at("include")) out.entries.push_back(base.at(eid.get<std::string>()));
  return out;
}

// Per-sample values and gradient lengths of every corpus entry plus the
// potential columns U, |grad U| and d.
struct CorpusTable {
  std::string corpus_id;
  std::vector<std::string> ids;
  std::vector<bool> unit_range;
  std::vector<std::vector<double>> value;  // [entry][sample]
  std::vector<std::vector<double>> grad;   // [entry][sample]
  std::vector<double> d, U, gradU;
  std::vector<double> weights;
  double ess = 0.0;
  std::size_t size() const { return d.size(); }
  std::size_t entries() const { return ids.size(); }
  std::size_t index(const std::string& eid) const {
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == eid) return i;
    throw ConfigError("no corpus entry '" + eid + "'");
  }
};

inline CorpusTable build_corpus_table(const MeasureSpec& spec, const SampleSet& samples,
                                      const FunctionCorpus& corpus) {
  spec.validate();
  samples.validate();
  const auto& s = spec.structure;
  const std::size_t N = samples.size(), K = corpus.size();
  CorpusTable t;
  t.corpus_id = corpus.id;
  t.weights = samples.weights;
  t.ess = samples.ess();
  for (const auto& e : corpus.entries) {
    t.ids.push_back(e.id);
    t.unit_range.push_back(e.unit_range);
  }
  t.value.assign(K, std::vector<double>(N));
  t.grad.assign(K, std::vector<double>(N));
  t.d.resize(N);
  t.U.resize(N);
  t.gradU.resize(N);
  const std::size_t chunk = 4096;
  const std::size_t chunks = (N + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    for (std::size_t i = c * chunk; i < std::min(N, (c + 1) * chunk); ++i) {
      const auto& g = samples.points[i];
      GeodesicSolution sol;
      Eigen::VectorXd gd;
      double dist;
      if (s.n() == 0) {
        dist = g.x.norm();
        gd = dist > 0 ? Eigen::VectorXd(g.x / dist) : Eigen::VectorXd::Zero(s.m());
      } else {
        sol = cc_distance(s, g);
        dist = sol.distance;
        gd = frame_from_partials(s, g, distance_partials(s, g, sol)).components;
      }
      const double gd_len = gd.norm();
      t.d[i] = dist;
      Eigen::VectorXd gu = spec.alpha * spec.p * std::pow(dist, spec.p - 1) * gd;
      double u = spec.alpha * std::pow(dist, spec.p);
      if (spec.W) {
        u += spec.W->field(g);
        gu += horizontal_gradient(s, spec.W->field, g).components;
      }
      if (spec.V) {
        u += spec.V->field(g);
        gu += horizontal_gradient(s, spec.V->field, g).components;
      }
      t.U[i] = u;
      t.gradU[i] = gu.norm();
      for (std::size_t k = 0; k < K; ++k) {
        const auto& e = corpus.entries[k];
        double v, gl;
        if (e.radial) {
          v = e.radial(dist);
          gl = std::abs(e.radial_prime(dist)) * gd_len;
        } else {
          v = e.field(g);
          gl = gradient_length(s, e.field, g);
        }
        if (!std::isfinite(v) || !std::isfinite(gl))
          throw NumericError("corpus entry '" + e.id + "' is not finite on the sample");
        t.value[k][i] = v;
        t.grad[k][i] = gl;
      }
    }
  });
  return t;
}

}  // namespace subriem
