#pragma once

// Carnot-Caratheodory distance from the identity on H-type groups.
//
// On an H-type group the distance depends only on r = |x| and zeta = |z|.
// A length-L geodesic from e is a planar circular arc in the horizontal
// projection; with arc parameter theta (half the total turning angle)
//
//   r = L sin(theta) / theta,   zeta / r^2 = mu(theta) = (theta - sin theta cos theta) / (4 sin^2 theta),
//
// mu increases from 0 to infinity on [0, pi). The partial derivatives come
// out as d_r d = cos(theta) and d_zeta d = 2 sin(theta) / r, hence |grad d| = 1.

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "subriem/errors.hpp"
#include "subriem/htype.hpp"
#include "subriem/inequality.hpp"
#include "subriem/rng.hpp"
#include "subriem/stats.hpp"

namespace subriem {

struct GeodesicSolution {
  double distance = 0.0;
  double arc_parameter = 0.0;  // theta in [0, pi]; pi marks the center axis limit
  int iterations = 0;
  double residual = 0.0;
  double sin_theta = 0.0;
  double cos_theta = 1.0;
};

namespace detail {

// 2 theta - sin(2 theta), with a series near zero.
inline double two_theta_minus_sin(double theta) {
  const double u = 2.0 * theta;
  if (u < 0.1) {
    const double u2 = u * u;
    return u * u2 * (1.0 / 6 - u2 * (1.0 / 120 - u2 * (1.0 / 5040 - u2 / 362880.0)));
  }
  return u - std::sin(u);
}

// Arc state parameterized by theta on (0, pi/2] or by delta = pi - theta on
// (0, pi/2]; the second chart keeps near-axis points resolvable.
struct ArcState {
  double theta, s, c, two_minus_sin;
};

inline ArcState arc_from_theta(double theta) {
  return {theta, std::sin(theta), std::cos(theta), two_theta_minus_sin(theta)};
}

inline ArcState arc_from_delta(double delta) {
  const double theta = std::numbers::pi - delta;
  return {theta, std::sin(delta), -std::cos(delta),
          2.0 * std::numbers::pi - 2.0 * delta + std::sin(2.0 * delta)};
}

inline double arc_mu(const ArcState& a) { return a.two_minus_sin / (8.0 * a.s * a.s); }

// d mu / d theta = (sin theta - theta cos theta) / (2 sin^3 theta)
inline double arc_mu_prime(const ArcState& a) {
  double num;
  if (a.theta < 0.05) {
    const double t2 = a.theta * a.theta;
    num = a.theta * t2 * (1.0 / 3 - t2 * (1.0 / 30 - t2 / 840.0));
  } else {
    num = a.s - a.theta * a.c;
  }
  return num / (2.0 * a.s * a.s * a.s);
}

}  // namespace detail

inline constexpr double kDistanceTol = 1e-12;

// Relative width of the center-axis band handled by the closed-form limit:
// |x| <= kAxisBand * sqrt(|z|).
inline constexpr double kAxisBand = 1e-8;

inline GeodesicSolution cc_distance_rz(double r, double zeta, double tol = kDistanceTol,
                                       int max_iter = 400) {
  if (!(tol > 0.0)) throw DomainError("cc_distance: tol must be positive");
  if (!std::isfinite(r) || !std::isfinite(zeta)) throw NumericError("cc_distance: non-finite point");
  GeodesicSolution sol;
  if (zeta == 0.0) {
    sol.distance = r;
    return sol;
  }
  if (r <= kAxisBand * std::sqrt(zeta)) {
    sol.distance = std::sqrt(4.0 * std::numbers::pi * zeta);
    sol.arc_parameter = std::numbers::pi;
    sol.sin_theta = 0.0;
    sol.cos_theta = -1.0;
    return sol;
  }
  const double kappa = zeta / (r * r);
  // mu(pi/2) = pi / 8 decides the chart.
  const bool delta_chart = kappa > std::numbers::pi / 8.0;
  auto state = [&](double t) {
    return delta_chart ? detail::arc_from_delta(t) : detail::arc_from_theta(t);
  };
  auto resid = [&](const detail::ArcState& a) { return detail::arc_mu(a) / kappa - 1.0; };

  // In the theta chart mu increases with t; in the delta chart it decreases.
  double lo = 0.0, hi = std::numbers::pi / 2.0;
  double t = 0.5 * (lo + hi);
  detail::ArcState a = state(t);
  double res = resid(a);
  int it = 0;
  for (; it < max_iter; ++it) {
    t = 0.5 * (lo + hi);
    if (t <= lo || t >= hi) break;
    a = state(t);
    res = resid(a);
    if (std::abs(res) <= tol) break;
    const bool too_big = res > 0.0;
    if (too_big != delta_chart) hi = t; else lo = t;
  }
  // Newton polish on mu(theta) - kappa.
  for (int k = 0; k < 4 && std::abs(res) > 0.25 * tol; ++k) {
    const double dmu = detail::arc_mu_prime(a);
    const double step = (detail::arc_mu(a) - kappa) / dmu;
    const double cand = delta_chart ? t + step : t - step;
    if (!(cand > 0.0 && cand <= std::numbers::pi / 2.0)) break;
    const auto na = state(cand);
    const double nres = resid(na);
    if (std::abs(nres) >= std::abs(res)) break;
    t = cand;
    a = na;
    res = nres;
    ++it;
  }
  if (std::abs(res) > tol) {
    // Bisection exhausted double precision; accept only when the bracket has
    // collapsed to adjacent doubles.
    if (std::nextafter(lo, hi) < hi && it >= max_iter)
      throw SolverError("cc_distance: arc-parameter equation did not converge", lo, hi);
  }
  sol.arc_parameter = a.theta;
  sol.iterations = it;
  sol.residual = std::abs(res);
  sol.sin_theta = a.s;
  sol.cos_theta = a.c;
  if (!delta_chart) {
    const double ratio = a.theta < 1e-8 ? 1.0 : a.theta / a.s;
    sol.distance = r * ratio;
  } else {
    sol.distance = std::sqrt(8.0 * zeta * a.theta * a.theta / a.two_minus_sin);
  }
  return sol;
}

inline void require_htype(const HTypeStructure& s) {
  if (!s.is_htype())
    throw UnsupportedError("cc_distance requires an H-type structure");
}

inline GeodesicSolution cc_distance(const HTypeStructure& s, const GroupPoint& g,
                                    double tol = kDistanceTol) {
  require_htype(s);
  s.require(g);
  return cc_distance_rz(g.x.norm(), g.z.norm(), tol);
}

inline double distance(const HTypeStructure& s, const GroupPoint& g) {
  return cc_distance(s, g).distance;
}

// Euclidean partial derivatives of d at g (zero where d is not differentiable
// in a given direction, i.e. x = 0 or z = 0 singular sets).
inline EuclideanGradient distance_partials(const HTypeStructure& s, const GroupPoint& g,
                                           const GeodesicSolution& sol) {
  EuclideanGradient e{Eigen::VectorXd::Zero(s.m()), Eigen::VectorXd::Zero(s.n())};
  const double r = g.x.norm(), zeta = g.z.norm();
  if (r > 0.0) e.dx = (sol.cos_theta / r) * g.x;
  if (zeta > 0.0) {
    double dzeta;
    if (r > kAxisBand * std::sqrt(zeta)) dzeta = 2.0 * sol.sin_theta / r;
    else dzeta = std::sqrt(std::numbers::pi / zeta);
    e.dz = (dzeta / zeta) * g.z;
  }
  return e;
}

// d(e, .) as a ScalarField with exact gradient and Lipschitz constant 1.
inline ScalarField distance_field(const HTypeStructure& s) {
  require_htype(s);
  ScalarField f;
  f.eval = [s](const GroupPoint& g) { return cc_distance(s, g).distance; };
  f.grad_hint = [s](const GroupPoint& g) { return distance_partials(s, g, cc_distance(s, g)); };
  f.lipschitz_hint = 1.0;
  return f;
}

// d(a, b) = d(a^{-1} o b) by left invariance.
inline double distance_between(const HTypeStructure& s, const GroupPoint& a, const GroupPoint& b) {
  return distance(s, group_mul(s, group_inverse(a), b));
}

// ---------------------------------------------------------------------------
// Direct-transcription oracle.

struct TranscriptionConfig {
  int segments = 64;
  int max_iter = 60;
  double step_tol = 1e-9;
  int multistarts = 8;
  std::uint64_t seed = 0x0C0FFEE;

  void validate() const {
    if (segments < 8) throw DomainError("TranscriptionConfig: segments must be >= 8");
    if (max_iter <= 0) throw DomainError("TranscriptionConfig: max_iter must be positive");
    if (!(step_tol > 0.0)) throw DomainError("TranscriptionConfig: step_tol must be positive");
  }
};

struct TranscriptionResult {
  double length = 0.0;
  double violation = 0.0;
  int segments = 0;
  std::vector<Eigen::VectorXd> increments;
  std::vector<double> ladder;  // best length after each segment doubling
};

namespace detail {

// Endpoint of the horizontal polygon with increments v_k, starting at e.
inline GroupPoint polygon_endpoint(const HTypeStructure& s, const std::vector<Eigen::VectorXd>& v) {
  GroupPoint g = s.identity();
  for (const auto& vk : v) right_mul_horizontal(s, g, vk);
  return g;
}

inline double polygon_length(const std::vector<Eigen::VectorXd>& v) {
  double L = 0.0;
  for (const auto& vk : v) L += vk.norm();
  return L;
}

inline double polygon_violation(const HTypeStructure& s, const std::vector<Eigen::VectorXd>& v,
                                const GroupPoint& target) {
  const GroupPoint end = polygon_endpoint(s, v);
  return std::sqrt((end.x - target.x).squaredNorm() + (end.z - target.z).squaredNorm());
}

// Newton iteration on the KKT system of
//   minimize 1/2 sum |v_k|^2  s.t.  sum v_k = x,  c_j(v) = z_j,
//   c_j(v) = 1/2 sum_{k<l} <J_j v_k, v_l>.
// Energy minimizers over equal-time polygons are constant-speed, so the
// resulting polygon length is a feasible upper bound for d.
inline bool kkt_solve(const HTypeStructure& s, const GroupPoint& target,
                      std::vector<Eigen::VectorXd>& v, int max_iter, double tol) {
  const int K = static_cast<int>(v.size());
  const int m = s.m(), n = s.n();
  const int nv = K * m, N = nv + m + n;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(m), mu = Eigen::VectorXd::Zero(n);

  auto pack = [&]() {
    Eigen::VectorXd u(nv);
    for (int k = 0; k < K; ++k) u.segment(k * m, m) = v[k];
    return u;
  };
  auto unpack = [&](const Eigen::VectorXd& u) {
    for (int k = 0; k < K; ++k) v[k] = u.segment(k * m, m);
  };
  // Constraint values and Jacobian rows of c_j.
  auto constraints = [&](const Eigen::VectorXd& u, Eigen::VectorXd& cval, Eigen::MatrixXd& G) {
    cval = Eigen::VectorXd::Zero(n);
    G = Eigen::MatrixXd::Zero(n, nv);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < K; ++k) total += u.segment(k * m, m);
    for (int j = 0; j < n; ++j) {
      const auto& J = s.J()[j];
      Eigen::VectorXd prefix = Eigen::VectorXd::Zero(m);
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd vk = u.segment(k * m, m);
        const Eigen::VectorXd suffix = total - prefix - vk;
        cval[j] += 0.5 * (J * prefix).dot(vk);
        G.block(j, k * m, 1, m) = (0.5 * J * (prefix - suffix)).transpose();
        prefix += vk;
      }
    }
  };
  auto residual = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& l, const Eigen::VectorXd& mm,
                      Eigen::VectorXd& F, Eigen::MatrixXd& G) {
    Eigen::VectorXd cval;
    constraints(u, cval, G);
    F.resize(N);
    Eigen::VectorXd stat = u - G.transpose() * mm;
    Eigen::VectorXd total = Eigen::VectorXd::Zero(m);
    for (int k = 0; k < K; ++k) {
      stat.segment(k * m, m) -= l;
      total += u.segment(k * m, m);
    }
    F.head(nv) = stat;
    F.segment(nv, m) = total - target.x;
    F.tail(n) = cval - target.z;
  };

  Eigen::VectorXd u = pack();
  Eigen::VectorXd F;
  Eigen::MatrixXd G;
  residual(u, lam, mu, F, G);
  // Least-squares multipliers for the starting point.
  {
    Eigen::MatrixXd B(nv, m + n);
    for (int k = 0; k < K; ++k) B.block(k * m, 0, m, m) = Eigen::MatrixXd::Identity(m, m);
    B.rightCols(n) = G.transpose();
    Eigen::VectorXd lm = B.colPivHouseholderQr().solve(u);
    if (lm.allFinite()) {
      lam = lm.head(m);
      mu = lm.tail(n);
    }
    residual(u, lam, mu, F, G);
  }
  const double scale = 1.0 + target.x.norm() + std::sqrt(target.z.norm());
  for (int it = 0; it < max_iter; ++it) {
    const double fnorm = F.norm();
    if (fnorm < 1e-13 * scale) break;
    Eigen::MatrixXd Jac = Eigen::MatrixXd::Zero(N, N);
    Jac.topLeftCorner(nv, nv).setIdentity();
    for (int j = 0; j < n; ++j) {
      const Eigen::MatrixXd halfJ = 0.5 * mu[j] * s.J()[j];
      for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l) {
          if (l == k) continue;
          // d/dv_l of grad_{v_k} c_j is +J/2 for l < k and -J/2 for l > k.
          Jac.block(k * m, l * m, m, m) -= (l < k ? 1.0 : -1.0) * halfJ;
        }
    }
    for (int k = 0; k < K; ++k) {
      Jac.block(k * m, nv, m, m) = -Eigen::MatrixXd::Identity(m, m);
      Jac.block(nv, k * m, m, m) = Eigen::MatrixXd::Identity(m, m);
    }
    Jac.block(0, nv + m, nv, n) = -G.transpose();
    Jac.block(nv + m, 0, n, nv) = G;
    Eigen::VectorXd delta = Jac.partialPivLu().solve(-F);
    if (!delta.allFinite()) return false;
    // Backtracking on the KKT residual norm.
    double step = 1.0;
    bool accepted = false;
    for (int b = 0; b < 30; ++b) {
      Eigen::VectorXd u2 = u + step * delta.head(nv);
      Eigen::VectorXd l2 = lam + step * delta.segment(nv, m);
      Eigen::VectorXd m2 = mu + step * delta.tail(n);
      Eigen::VectorXd F2;
      Eigen::MatrixXd G2;
      residual(u2, l2, m2, F2, G2);
      if (F2.allFinite() && F2.norm() < (1.0 - 1e-4 * step) * fnorm) {
        u = u2;
        lam = l2;
        mu = m2;
        F = F2;
        G = G2;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  unpack(u);
  return polygon_violation(s, v, target) <= tol;
}

}  // namespace detail

// Best piecewise-constant-control horizontal path from e to g. Runs a
// segment ladder 8, 16, ... up to cfg.segments; every level keeps the
// refined previous optimum as a candidate, so lengths never increase.
inline TranscriptionResult cc_distance_transcription(const HTypeStructure& s, const GroupPoint& g,
                                                     const TranscriptionConfig& cfg) {
  cfg.validate();
  s.require(g);
  TranscriptionResult out;
  if (g.x.norm() == 0.0 && g.z.norm() == 0.0) {
    out.segments = cfg.segments;
    out.increments.assign(cfg.segments, Eigen::VectorXd::Zero(s.m()));
    out.ladder.push_back(0.0);
    return out;
  }
  std::vector<int> levels;
  for (int K = 8; K < cfg.segments; K *= 2) levels.push_back(K);
  levels.push_back(cfg.segments);

  Rng rng(cfg.seed);
  const double scale = std::max(kaplan_norm(g), 1e-12);
  std::vector<Eigen::VectorXd> best;
  double best_len = std::numeric_limits<double>::infinity();

  for (std::size_t li = 0; li < levels.size(); ++li) {
    const int K = levels[li];
    std::vector<std::vector<Eigen::VectorXd>> starts;
    if (li == 0) {
      if (g.x.norm() > 0.0) starts.emplace_back(K, g.x / K);
      // Circle-like start: one full turn scaled to the gauge.
      {
        std::vector<Eigen::VectorXd> c(K, Eigen::VectorXd::Zero(s.m()));
        Eigen::VectorXd e1 = Eigen::VectorXd::Zero(s.m()), e2 = Eigen::VectorXd::Zero(s.m());
        e1[0] = 1.0;
        if (s.m() > 1) e2[1] = 1.0;
        for (int k = 0; k < K; ++k) {
          const double a = 2.0 * std::numbers::pi * (k + 0.5) / K;
          c[k] = (scale * 2.0 / K) * (std::cos(a) * e1 + std::sin(a) * e2) + g.x / K;
        }
        starts.push_back(std::move(c));
      }
      for (int r = 0; r < cfg.multistarts; ++r) {
        std::vector<Eigen::VectorXd> c(K, Eigen::VectorXd(s.m()));
        for (auto& vk : c)
          for (int i = 0; i < s.m(); ++i) vk[i] = rng.normal() * scale / K;
        starts.push_back(std::move(c));
      }
    } else {
      // Refine: split each increment into equal halves (or repeat to the
      // next level size), which reproduces the same path and length.
      std::vector<Eigen::VectorXd> refined(K);
      const int prev = static_cast<int>(best.size());
      for (int k = 0; k < K; ++k) {
        const int src = static_cast<int>((static_cast<long>(k) * prev) / K);
        refined[k] = best[src] * (static_cast<double>(prev) / K);
      }
      const double rv = detail::polygon_violation(s, refined, g);
      if (rv <= cfg.step_tol) {
        best = refined;
        best_len = detail::polygon_length(best);
      } else {
        best_len = std::numeric_limits<double>::infinity();
      }
      starts.push_back(std::move(refined));
    }
    for (auto& st : starts) {
      std::vector<Eigen::VectorXd> v = st;
      if (!detail::kkt_solve(s, g, v, cfg.max_iter, cfg.step_tol)) continue;
      const double L = detail::polygon_length(v);
      if (L < best_len) {
        best_len = L;
        best = v;
      }
    }
    if (best.empty() || !std::isfinite(best_len))
      throw InfeasibleError("cc_distance_oracle: no start met the endpoint constraint within step_tol");
    out.ladder.push_back(best_len);
  }
  out.length = best_len;
  out.segments = static_cast<int>(best.size());
  out.violation = detail::polygon_violation(s, best, g);
  out.increments = std::move(best);
  return out;
}

inline double cc_distance_oracle(const HTypeStructure& s, const GroupPoint& g,
                                 const TranscriptionConfig& cfg) {
  return cc_distance_transcription(s, g, cfg).length;
}

// ---------------------------------------------------------------------------
// Gauge calibration: (1/kappa) N <= d <= kappa_prime N on a grid.

struct GaugeCalibration {
  double kappa = 1.0;        // max d / N
  double kappa_prime = 1.0;  // max N / d
};

inline GaugeCalibration calibrate_gauge(const HTypeStructure& s, int angles = 400) {
  require_htype(s);
  GaugeCalibration c{0.0, 0.0};
  for (int i = 0; i <= angles; ++i) {
    // Unit-gauge points parameterized by the angle between |x|^2 and 4|z|.
    const double phi = 0.5 * std::numbers::pi * i / angles;
    const double r = std::sqrt(std::cos(phi));
    const double zeta = 0.25 * std::sin(phi);
    const double N = std::pow(std::pow(r, 4) + kKaplanConstant * zeta * zeta, 0.25);
    const double d = cc_distance_rz(r, zeta).distance;
    if (N > 0 && d > 0) {
      c.kappa = std::max(c.kappa, d / N);
      c.kappa_prime = std::max(c.kappa_prime, N / d);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Numerical check of |grad d| <= 1, 1/sigma <= |grad d| and
// Delta d <= K + alpha p eps d^(p-1) on {d >= 1}.

struct DistanceConditions {
  InequalityReport report;
  double max_grad = 0.0;
  double min_grad = 0.0;
  double sigma = 1.0;
  double K = 0.0;
  double eps = 0.0;
  int skipped_axis = 0;
  int flagged = 0;
};

inline DistanceConditions check_distance_conditions(const HTypeStructure& s, double p, double alpha,
                                                    const std::vector<GroupPoint>& grid) {
  require_htype(s);
  DistanceConditions out;
  out.report.kind = InequalityKind::DISTANCE_CONDITIONS;
  out.report.corpus_id = "grid";
  // Finite-difference gradient and Laplacian: independent of the closed-form partials.
  ScalarField d_fd;
  d_fd.eval = [s](const GroupPoint& g) { return distance(s, g); };
  std::vector<double> lhs, ca, cb;
  double gmin = std::numeric_limits<double>::infinity(), gmax = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    s.require(g);
    const double r = g.x.norm(), zeta = g.z.norm();
    if (r <= 1e-6 * (1.0 + std::sqrt(zeta)) || (r == 0.0 && zeta == 0.0)) {
      ++out.skipped_axis;
      continue;
    }
    ++used;
    const double d = distance(s, g);
    const double grad = gradient_length(s, d_fd, g);
    gmin = std::min(gmin, grad);
    gmax = std::max(gmax, grad);
    FunctionRow row;
    row.id = "grid_" + std::to_string(i);
    row.lhs = {grad, 0.0};
    row.rhs["bound"] = {1.0, 0.0};
    if (grad > 1.0 + 1e-3) {
      ++out.flagged;
      out.report.violations.push_back(row.id);
    }
    if (d >= 1.0) {
      const double lap = sub_laplacian(s, d_fd, g);
      lhs.push_back(lap);
      ca.push_back(1.0);
      cb.push_back(alpha * p * std::pow(d, p - 1.0));
      row.rhs["laplacian"] = {lap, 0.0};
    }
    out.report.per_function.push_back(std::move(row));
  }
  out.report.sample_size = used;
  if (out.skipped_axis > 0)
    out.report.warnings.push_back(std::to_string(out.skipped_axis) +
                                  " grid points on the center axis skipped");
  if (used == 0) throw DegenerateError("check_distance_conditions: no usable grid points");
  out.min_grad = gmin;
  out.max_grad = gmax;
  out.sigma = gmin > 0 ? std::max(1.0, 1.0 / gmin) : std::numeric_limits<double>::infinity();
  if (!lhs.empty()) {
    const PairFit fit = fit_min_pair(lhs, ca, cb);
    out.K = fit.a;
    out.eps = fit.b;
    if (!fit.feasible) out.report.inconclusive.push_back("laplacian_fit");
    if (out.eps >= 1.0 / (out.sigma * out.sigma))
      out.report.violations.push_back("eps_not_below_inverse_sigma_squared");
  }
  out.report.fitted_constants["sigma"] = {out.sigma, 0.0};
  out.report.fitted_constants["K"] = {out.K, 0.0};
  out.report.fitted_constants["eps"] = {out.eps, 0.0};
  out.report.fitted_constants["max_grad"] = {gmax, 0.0};
  out.report.fitted_constants["min_grad"] = {gmin, 0.0};
  return out;
}

}  // namespace subriem
