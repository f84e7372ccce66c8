#pragma once

// Measures d mu_p = exp(-alpha d^p) d lambda / Z and their perturbations
// exp(-W - V) d mu_p, sampled by component-wise random-walk Metropolis in the
// flat (x, z) chart. Lebesgue measure is Haar for these groups, so the
// proposal needs no Jacobian.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/cc_distance.hpp"
#include "subriem/errors.hpp"
#include "subriem/htype.hpp"
#include "subriem/rng.hpp"
#include "subriem/stats.hpp"

namespace subriem {

// A named perturbation: the field plus the descriptor it was built from, so
// configs stay serializable.
struct Perturbation {
  ScalarField field;
  nlohmann::json descriptor;
};

// {"type": "quadratic", "coef": c}   c |x|^2
// {"type": "cos", "coef": c}         c cos(x_1)
// {"type": "gauge", "coef": c}       c N(g)
inline Perturbation make_perturbation(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("type")) throw ConfigError("perturbation needs a type");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "type" && it.key() != "coef") throw ConfigError("unknown perturbation key: " + it.key());
  const std::string type = j.at("type").get<std::string>();
  const double c = j.value("coef", 1.0);
  if (!std::isfinite(c)) throw ConfigError("perturbation coef must be finite");
  Perturbation p;
  p.descriptor = {{"type", type}, {"coef", c}};
  if (type == "quadratic") {
    p.field.eval = [c](const GroupPoint& g) { return c * g.x.squaredNorm(); };
    p.field.grad_hint = [c](const GroupPoint& g) {
      return EuclideanGradient{2.0 * c * g.x, Eigen::VectorXd::Zero(g.z.size())};
    };
  } else if (type == "cos") {
    p.field.eval = [c](const GroupPoint& g) { return c * std::cos(g.x[0]); };
    p.field.grad_hint = [c](const GroupPoint& g) {
      EuclideanGradient e{Eigen::VectorXd::Zero(g.x.size()), Eigen::VectorXd::Zero(g.z.size())};
      e.dx[0] = -c * std::sin(g.x[0]);
      return e;
    };
    p.field.lipschitz_hint = std::abs(c);
  } else if (type == "gauge") {
    p.field.eval = [c](const GroupPoint& g) { return c * kaplan_norm(g); };
  } else {
    throw ConfigError("unknown perturbation type: " + type);
  }
  return p;
}

struct MeasureSpec {
  HTypeStructure structure;
  double p = 2.0;
  double alpha = 1.0;
  std::optional<Perturbation> W;
  std::optional<Perturbation> V;

  double beta() const { return 1.0 - 1.0 / p; }
  bool perturbed() const { return W.has_value() || V.has_value(); }

  void validate() const {
    if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("MeasureSpec: p must be > 1");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw DomainError("MeasureSpec: alpha must be > 0");
    if (structure.n() > 0 && !structure.is_htype())
      throw UnsupportedError("MeasureSpec: the distance needs an H-type structure");
  }

  // Characteristic length: alpha d^p = 1.
  double length_scale() const { return std::pow(alpha, -1.0 / p); }

  double distance(const GroupPoint& g) const {
    if (structure.n() == 0) return g.x.norm();
    return cc_distance_rz(g.x.norm(), g.z.norm()).distance;
  }

  double perturbation(const GroupPoint& g) const {
    double v = 0.0;
    if (W) v += W->field(g);
    if (V) v += V->field(g);
    return v;
  }

  // U = alpha d^p + W + V
  double potential(const GroupPoint& g) const {
    return alpha * std::pow(distance(g), p) + perturbation(g);
  }

  // The unperturbed measure mu_p with the same structure and parameters.
  MeasureSpec base() const { return MeasureSpec{structure, p, alpha, std::nullopt, std::nullopt}; }
};

inline nlohmann::json to_json(const MeasureSpec& s) {
  nlohmann::json j{{"group", to_json(s.structure)}, {"p", s.p}, {"alpha", s.alpha}};
  if (s.W) j["W"] = s.W->descriptor;
  if (s.V) j["V"] = s.V->descriptor;
  return j;
}

inline MeasureSpec measure_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("measure spec must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "group" && k != "p" && k != "alpha" && k != "W" && k != "V")
      throw ConfigError("unknown key in measure spec: " + k);
  }
  MeasureSpec s;
  s.structure = structure_from_json(j.at("group"));
  s.p = j.value("p", 2.0);
  s.alpha = j.value("alpha", 1.0);
  if (j.contains("W")) s.W = make_perturbation(j.at("W"));
  if (j.contains("V")) s.V = make_perturbation(j.at("V"));
  s.validate();
  return s;
}

struct ChainConfig {
  std::size_t n_samples = 10000;  // per chain
  std::size_t burn_in = 2000;
  std::size_t thinning = 1;
  double proposal_scale = 1.0;
  std::size_t n_chains = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_samples == 0) throw DomainError("ChainConfig: n_samples must be positive");
    if (thinning == 0) throw DomainError("ChainConfig: thinning must be positive");
    if (n_chains == 0) throw DomainError("ChainConfig: n_chains must be positive");
    if (!(proposal_scale > 0.0) || !std::isfinite(proposal_scale))
      throw DomainError("ChainConfig: proposal_scale must be positive");
  }
  std::size_t total() const { return n_samples * n_chains; }
};

inline nlohmann::json to_json(const ChainConfig& c) {
  return {{"n_samples", c.n_samples}, {"burn_in", c.burn_in},   {"thinning", c.thinning},
          {"proposal_scale", c.proposal_scale}, {"n_chains", c.n_chains}, {"seed", c.seed}};
}

struct ChainDiagnostics {
  double acceptance_rate = 0.0;
  double ess = 0.0;  // on d
  std::uint64_t seed = 0;
  std::size_t screened = 0;  // proposals rejected by the gauge bound alone
};

struct SampleMeta {
  std::vector<ChainDiagnostics> chains;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
  double v_oscillation = 0.0;  // sup V - inf V over visited states
};

struct SampleSet {
  HTypeStructure structure;
  std::vector<GroupPoint> points;
  std::vector<double> weights;    // empty means unit weights
  std::vector<double> distances;  // d(e, point), cached
  SampleMeta meta;

  std::size_t size() const { return points.size(); }
  bool weighted() const { return !weights.empty(); }
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }

  double ess() const {
    double s = 0.0;
    for (const auto& c : meta.chains) s += c.ess;
    return s;
  }

  void validate() const {
    if (points.empty()) throw DegenerateError("SampleSet: no samples");
    if (!weights.empty()) {
      if (weights.size() != points.size()) throw DomainError("SampleSet: weight count mismatch");
      double t = 0.0;
      for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw NumericError("SampleSet: invalid weight");
        t += w;
      }
      if (!(t > 0.0)) throw DegenerateError("SampleSet: weights sum to zero");
    }
  }
};

namespace detail {

// Exact Metropolis rule on log densities: accept iff log u < U_cur - U_prop.
inline bool metropolis_accept(double log_u, double u_cur, double u_prop) {
  return log_u < u_cur - u_prop;
}

// Gauge lower bound d >= N / sqrt(pi) on H-type groups (d >= |x| always).
inline double distance_lower_bound(const HTypeStructure& s, const GroupPoint& g) {
  if (s.n() == 0) return g.x.norm();
  return std::max(g.x.norm(), kaplan_norm(g) / std::sqrt(std::numbers::pi));
}

struct ChainOutput {
  std::vector<GroupPoint> points;
  std::vector<double> distances;
  ChainDiagnostics diag;
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = -std::numeric_limits<double>::infinity();
};

inline ChainOutput run_chain(const MeasureSpec& spec, const ChainConfig& cfg, std::uint64_t seed) {
  const auto& s = spec.structure;
  Rng rng(seed);
  const double ell = spec.length_scale();
  const double step_x = cfg.proposal_scale * 1.2 * ell;
  const double step_z = cfg.proposal_scale * 1.0 * ell * ell;
  GroupPoint cur = s.identity();
  for (int i = 0; i < s.m(); ++i) cur.x[i] = 0.5 * ell * rng.normal();
  for (int k = 0; k < s.n(); ++k) cur.z[k] = 0.25 * ell * ell * rng.normal();
  double d_cur = spec.distance(cur);
  double pert_cur = spec.perturbation(cur);
  double u_cur = spec.alpha * std::pow(d_cur, spec.p) + pert_cur;
  if (!std::isfinite(u_cur)) throw NumericError("sample_measure: non-finite potential at start");

  ChainOutput out;
  out.points.reserve(cfg.n_samples);
  out.distances.reserve(cfg.n_samples);
  out.diag.seed = seed;
  std::size_t proposals = 0, accepted = 0;
  const int dim = s.dimension();
  const std::size_t sweeps = cfg.burn_in + cfg.n_samples * cfg.thinning;
  auto track_v = [&](const GroupPoint& g) {
    if (!spec.V) return;
    const double v = spec.V->field(g);
    out.vmin = std::min(out.vmin, v);
    out.vmax = std::max(out.vmax, v);
  };
  track_v(cur);
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for (int c = 0; c < dim; ++c) {
      const bool horizontal = c < s.m();
      double& coord = horizontal ? cur.x[c] : cur.z[c - s.m()];
      const double old = coord;
      coord += (horizontal ? step_x : step_z) * rng.normal();
      const double log_u = std::log(rng.uniform_open());
      ++proposals;
      const double pert = spec.perturbation(cur);
      // Screen: U_prop >= alpha * lower^p + pert, so a rejection there is exact.
      const double u_lo = spec.alpha * std::pow(distance_lower_bound(s, cur), spec.p) + pert;
      if (!metropolis_accept(log_u, u_cur, u_lo)) {
        coord = old;
        ++out.diag.screened;
        continue;
      }
      const double d = spec.distance(cur);
      const double u = spec.alpha * std::pow(d, spec.p) + pert;
      if (!std::isfinite(u)) throw NumericError("sample_measure: non-finite potential");
      if (metropolis_accept(log_u, u_cur, u)) {
        ++accepted;
        d_cur = d;
        u_cur = u;
        track_v(cur);
      } else {
        coord = old;
      }
    }
    if (sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thinning == 0) {
      out.points.push_back(cur);
      out.distances.push_back(d_cur);
    }
  }
  out.diag.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(proposals);
  out.diag.ess = effective_sample_size(out.distances);
  return out;
}

}  // namespace detail

// Chains run independently on seeds derived from cfg.seed and are
// concatenated in chain order.
inline SampleSet sample_measure(const MeasureSpec& spec, const ChainConfig& cfg) {
  spec.validate();
  cfg.validate();
  std::vector<detail::ChainOutput> chains(cfg.n_chains);
  parallel_for(cfg.n_chains, [&](std::size_t c) {
    chains[c] = detail::run_chain(spec, cfg, derive_seed(cfg.seed, c));
  });
  SampleSet out;
  out.structure = spec.structure;
  out.meta.seed = cfg.seed;
  out.points.reserve(cfg.total());
  out.distances.reserve(cfg.total());
  double vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (std::size_t c = 0; c < chains.size(); ++c) {
    auto& ch = chains[c];
    const double acc = ch.diag.acceptance_rate;
    if (acc < 0.01 || acc > 0.95) {
      const double suggested = cfg.proposal_scale * std::clamp(acc / 0.3, 0.05, 20.0);
      throw TuningError("sample_measure: acceptance rate " + std::to_string(acc) +
                        " outside [0.01, 0.95]; try proposal_scale=" + std::to_string(suggested));
    }
    if (acc < 0.15 || acc > 0.6)
      out.meta.warnings.push_back("chain " + std::to_string(c) + " acceptance rate " +
                                  std::to_string(acc) + " outside [0.15, 0.6]");
    out.meta.chains.push_back(ch.diag);
    vmin = std::min(vmin, ch.vmin);
    vmax = std::max(vmax, ch.vmax);
    for (auto& p : ch.points) out.points.push_back(std::move(p));
    out.distances.insert(out.distances.end(), ch.distances.begin(), ch.distances.end());
  }
  if (spec.V) {
    out.meta.v_oscillation = vmax - vmin;
    if (!std::isfinite(out.meta.v_oscillation))
      throw DomainError("MeasureSpec: V has infinite oscillation on the sampled region");
  }
  return out;
}

// Reweights mu_p samples toward exp(-W - V) mu_p.
inline SampleSet reweight(const SampleSet& base, const MeasureSpec& perturbed) {
  SampleSet out = base;
  out.weights.resize(base.size());
  std::vector<double> logw(base.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < base.size(); ++i) {
    logw[i] = -perturbed.perturbation(base.points[i]) + std::log(base.weight(i));
    top = std::max(top, logw[i]);
  }
  for (std::size_t i = 0; i < base.size(); ++i) out.weights[i] = std::exp(logw[i] - top);
  out.validate();
  return out;
}

// Weight-aware mean of f with batch-means standard error.
inline Estimate estimate_expectation(const SampleSet& s, const ScalarField& f) {
  s.validate();
  std::vector<double> vals(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    vals[i] = f(s.points[i]);
    if (!std::isfinite(vals[i])) throw NumericError("estimate_expectation: non-finite f");
  }
  return batch_mean(vals, s.weights);
}

inline Estimate estimate_expectation(const SampleSet& s, std::span<const double> values) {
  s.validate();
  if (values.size() != s.size()) throw DomainError("estimate_expectation: value count mismatch");
  return batch_mean(values, s.weights);
}

// ---------------------------------------------------------------------------
// Normalization.

struct NormalizationEstimate {
  double value = 0.0;
  double error = 0.0;          // quadrature error estimate or standard error
  double doubling_change = 0.0;  // relative change when the box is doubled
  std::string method;
};

namespace detail {

inline double sphere_area(int k) {  // |S^{k-1}|
  return 2.0 * std::pow(std::numbers::pi, 0.5 * k) / boost::math::tgamma(0.5 * k);
}

// Adaptive Gauss-Kronrod over [a, b] split into `panels` equal pieces.
template <class F>
double panel_integral(F&& f, double a, double b, int panels, double& err, double tol = 1e-13) {
  double total = 0.0;
  const double w = (b - a) / panels;
  for (int i = 0; i < panels; ++i) {
    double e = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 21>::integrate(
        f, a + i * w, a + (i + 1) * w, 12, tol, &e);
    err += std::abs(e);
  }
  return total;
}

// Geodesic polar coordinates: r = d a(theta), zeta = d^2 b(theta) with
// a = sin(theta) / theta and b = (2 theta - sin 2 theta) / (8 theta^2). This is a
// diffeomorphism of (0, inf) x (0, pi) onto {r > 0, zeta > 0}, with Jacobian
// d^2 |a b' - 2 a' b|; so lambda(B_1) reduces to a smooth 1-D integral.
inline double unit_ball_angular_factor(int m, int n, double& err) {
  auto f = [m, n](double t) {
    const double s = std::sin(t), c = std::cos(t);
    double a, da, b, db;
    if (t < 1e-3) {
      const double t2 = t * t;
      a = 1 - t2 / 6 + t2 * t2 / 120;
      da = -t / 3 + t * t2 / 30;
      b = t / 6 - t * t2 / 30;
      db = 1.0 / 6 - t2 / 10;
    } else {
      a = s / t;
      da = (t * c - s) / (t * t);
      const double q = detail::two_theta_minus_sin(t);
      b = q / (8 * t * t);
      db = (2 - 2 * std::cos(2 * t)) / (8 * t * t) - q / (4 * t * t * t);
    }
    return std::pow(a, m - 1) * std::pow(b, n - 1) * std::abs(a * db - 2 * da * b);
  };
  return panel_integral(f, 0.0, std::numbers::pi, 4, err);
}

// Integral of exp(-alpha d^p) over the CC ball of radius R.
inline double radial_normalization(const MeasureSpec& spec, double R, double& err) {
  const int m = spec.structure.m(), n = spec.structure.n();
  const int Q = spec.structure.homogeneous_dimension();
  double angular = 1.0;
  if (n > 0) angular = sphere_area(n) * unit_ball_angular_factor(m, n, err);
  // int_0^R exp(-alpha d^p) d^{Q-1} dd = Gamma(Q/p) P(Q/p, alpha R^p) / (p alpha^{Q/p})
  const double k = static_cast<double>(Q) / spec.p;
  const double radial = boost::math::tgamma(k) * boost::math::gamma_p(k, spec.alpha * std::pow(R, spec.p)) /
                        (spec.p * std::pow(spec.alpha, k));
  return sphere_area(m) * angular * radial;
}

// Brute-force cross-check in (|x|, |z|) coordinates over |x| <= R, |z| <= R^2.
inline double cylinder_normalization(const MeasureSpec& spec, double R, int panels, double tol) {
  const int m = spec.structure.m(), n = spec.structure.n();
  double err = 0.0;
  auto outer = [&](double r) {
    auto inner = [&](double zeta) {
      const double d = cc_distance_rz(r, zeta).distance;
      return std::pow(zeta, n - 1) * std::exp(-spec.alpha * std::pow(d, spec.p));
    };
    double e = 0.0;
    return std::pow(r, m - 1) * panel_integral(inner, 0.0, R * R, panels, e, tol);
  };
  return sphere_area(m) * sphere_area(n) * panel_integral(outer, 0.0, R, panels, err, tol);
}

// Composite 20-point Gauss-Legendre tensor rule for exp(-U) on [-R, R]^m,
// Euclidean structures with m <= 3.
inline double tensor_normalization(const MeasureSpec& spec, double R, int panels) {
  using GL = boost::math::quadrature::gauss<double, 20>;
  const int dim = spec.structure.m();
  std::vector<double> nodes, weights;
  const double w = 2.0 * R / panels;
  const auto& abs = GL::abscissa();
  const auto& wts = GL::weights();
  for (int pnl = 0; pnl < panels; ++pnl) {
    const double mid = -R + (pnl + 0.5) * w;
    for (std::size_t i = 0; i < abs.size(); ++i) {
      const double wi = wts[i] * 0.5 * w;
      if (abs[i] == 0.0) {
        nodes.push_back(mid);
        weights.push_back(wi);
      } else {
        nodes.push_back(mid - 0.5 * w * abs[i]);
        weights.push_back(wi);
        nodes.push_back(mid + 0.5 * w * abs[i]);
        weights.push_back(wi);
      }
    }
  }
  const std::size_t k = nodes.size();
  std::size_t total = 1;
  for (int i = 0; i < dim; ++i) total *= k;
  GroupPoint g = spec.structure.identity();
  double sum = 0.0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    double wprod = 1.0;
    for (int i = 0; i < dim; ++i) {
      const std::size_t j = rest % k;
      rest /= k;
      g.x[i] = nodes[j];
      wprod *= weights[j];
    }
    sum += wprod * std::exp(-spec.potential(g));
  }
  return sum;
}

}  // namespace detail

// Z = integral of exp(-U) d lambda, over a region of size box_halfwidth that
// is then doubled once; a relative change above 1e-8 is a truncation error.
//   unperturbed: CC ball of radius R, exact radial factor + 1-D angular quadrature;
//   perturbed Euclidean, m <= 3: tensor Gauss-Legendre on [-R, R]^m, quad_points panels;
//   otherwise: importance sampling Z_p * E_{mu_p}[exp(-W - V)].
inline NormalizationEstimate estimate_normalization(const MeasureSpec& spec, double box_halfwidth,
                                                    int quad_points, std::uint64_t seed = 1) {
  spec.validate();
  if (!(box_halfwidth > 0.0)) throw DomainError("estimate_normalization: box_halfwidth must be positive");
  if (quad_points <= 0) throw DomainError("estimate_normalization: quad_points must be positive");
  NormalizationEstimate out;
  auto run = [&](double R, double& err) -> double {
    if (!spec.perturbed()) {
      out.method = "radial_quadrature";
      return detail::radial_normalization(spec, R, err);
    }
    if (spec.structure.n() == 0 && spec.structure.m() <= 3) {
      out.method = "tensor_quadrature";
      return detail::tensor_normalization(spec, R, quad_points);
    }
    out.method = "importance_sampling";
    double e0 = 0.0;
    const double zp = detail::radial_normalization(spec.base(), R, e0);
    ChainConfig cfg;
    cfg.seed = seed;
    auto samples = sample_measure(spec.base(), cfg);
    std::vector<double> w(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) w[i] = std::exp(-spec.perturbation(samples.points[i]));
    const Estimate m = batch_mean(w);
    err = zp * m.se + e0;
    return zp * m.mean;
  };
  double e1 = 0.0, e2 = 0.0;
  const double z1 = run(box_halfwidth, e1);
  const double z2 = run(2.0 * box_halfwidth, e2);
  if (!(z2 > 0.0) || !std::isfinite(z2)) throw NumericError("estimate_normalization: non-positive Z");
  out.value = z2;
  out.error = e2;
  out.doubling_change = std::abs(z2 - z1) / z2;
  if (out.doubling_change > 1e-8)
    throw TruncationError("estimate_normalization: box doubling changed Z by " +
                          std::to_string(out.doubling_change) + " (relative)");
  return out;
}

// Box half-width where exp(-alpha (N / sqrt(pi))^p) drops below exp(-40).
inline double default_box(const MeasureSpec& spec) {
  return std::sqrt(std::numbers::pi) * std::pow(40.0 / spec.alpha, 1.0 / spec.p);
}

}  // namespace subriem
