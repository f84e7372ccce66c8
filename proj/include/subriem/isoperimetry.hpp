#pragma once

// Surface measure by outer epsilon-enlargements in the CC metric, the
// isoperimetric ratio U_q(mu(A)) / mu+(A) and the coarea inequality.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "subriem/cc_distance.hpp"
#include "subriem/corpus.hpp"
#include "subriem/errors.hpp"
#include "subriem/functionals.hpp"
#include "subriem/inequality.hpp"
#include "subriem/measures.hpp"
#include "subriem/profile.hpp"
#include "subriem/rng.hpp"
#include "subriem/stats.hpp"

namespace subriem {

enum class SetKind { CC_BALL, HALF_SPACE, SUBLEVEL };

// A = {psi <= 0}, or its complement {psi > 0} when `complement` is set.
struct TestSet {
  SetKind kind = SetKind::CC_BALL;
  std::string label;
  double radius = 1.0;
  std::optional<GroupPoint> center;  // identity when empty
  Eigen::VectorXd normal;            // unit, horizontal: {<normal, x> <= offset}
  double offset = 0.0;
  ScalarField f;                     // {f <= level}
  double level = 0.0;
  // Optional structure of f for SUBLEVEL: f = radial(d(e, .)) or f = axis(x_1).
  std::function<double(double)> radial;
  std::function<double(double)> axis;
  bool complement = false;

  static TestSet ball(double r, std::optional<GroupPoint> c = std::nullopt) {
    if (!(r > 0) || !std::isfinite(r)) throw DomainError("ball radius must be positive");
    TestSet t;
    t.kind = SetKind::CC_BALL;
    t.radius = r;
    t.center = std::move(c);
    t.label = "ball:" + fmt(r);
    return t;
  }
  static TestSet half_space(Eigen::VectorXd normal, double offset) {
    const double len = normal.norm();
    if (!(len > 0) || !std::isfinite(len) || !std::isfinite(offset)) throw DomainError("half-space needs a nonzero normal");
    TestSet t;
    t.kind = SetKind::HALF_SPACE;
    t.normal = normal / len;
    t.offset = offset / len;
    t.label = "halfspace:" + fmt(t.offset);
    return t;
  }
  static TestSet sublevel(ScalarField f, double s, std::string label) {
    if (!std::isfinite(s)) throw DomainError("sublevel: level must be finite");
    TestSet t;
    t.kind = SetKind::SUBLEVEL;
    t.f = std::move(f);
    t.level = s;
    t.label = std::move(label);
    return t;
  }
  TestSet complemented() const {
    TestSet t = *this;
    t.complement = !complement;
    t.label = complement ? label.substr(11) : "complement:" + label;
    return t;
  }

  double psi(const HTypeStructure& s, const GroupPoint& g) const {
    switch (kind) {
      case SetKind::CC_BALL: {
        const GroupPoint h = center ? group_mul(s, group_inverse(*center), g) : g;
        return norm_of(s, h) - radius;
      }
      case SetKind::HALF_SPACE:
        if (normal.size() != s.m()) throw StructuralError("half-space normal has the wrong dimension");
        return normal.dot(g.x) - offset;
      case SetKind::SUBLEVEL:
        return f(g) - level;
    }
    return 0.0;
  }
  bool contains(const HTypeStructure& s, const GroupPoint& g) const {
    const double v = psi(s, g);
    return complement ? v > 0.0 : v <= 0.0;
  }
  // Closed-form distance to A: balls (length space) and half-spaces (the
  // x-projection of a horizontal curve has the same length).
  bool has_exact_distance() const { return kind == SetKind::HALF_SPACE || (kind == SetKind::CC_BALL && !complement); }
  double exact_distance(const HTypeStructure& s, const GroupPoint& g) const {
    const double v = psi(s, g);
    return complement ? std::max(0.0, -v) : std::max(0.0, v);
  }

  static double norm_of(const HTypeStructure& s, const GroupPoint& h) {
    return s.n() == 0 ? h.x.norm() : cc_distance_rz(h.x.norm(), h.z.norm()).distance;
  }
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }
};

struct BoundaryConfig {
  std::vector<double> ladder{0.2, 0.1, 0.05, 0.025};  // decreasing
  std::size_t cloud_size = 4096;
  int bisection_steps = 40;
  int descent_iters = 10;
  double stabilization = 0.1;  // relative change of the last rung
  bool force_cloud = false;    // ignore closed-form distances (cross-checks)
  std::uint64_t seed = 1;

  void validate() const {
    if (ladder.size() < 4) throw DomainError("epsilon ladder needs at least 4 rungs");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      if (!(ladder[i] > 0)) throw DomainError("epsilon ladder entries must be positive");
      if (i > 0 && !(ladder[i] < ladder[i - 1])) throw DomainError("epsilon ladder must be decreasing");
    }
    if (cloud_size < 16) throw DomainError("cloud_size must be >= 16");
    if (!(stabilization > 0)) throw DomainError("stabilization must be positive");
  }
};

// Ladder {0.2, 0.1, 0.05, 0.025} in units of the measure's length scale.
inline BoundaryConfig default_boundary_config(const MeasureSpec& spec, std::uint64_t seed = 1) {
  BoundaryConfig c;
  for (auto& e : c.ladder) e *= spec.length_scale();
  c.seed = seed;
  return c;
}

namespace detail {

struct BoundaryCloud {
  std::vector<GroupPoint> points;
  std::map<std::vector<int>, std::vector<std::size_t>> cells;
  double cell = 1.0;
  double gap = 0.0;  // typical spacing between neighbouring cloud points
};

inline std::vector<double> flat(const GroupPoint& g) {
  std::vector<double> v(g.x.data(), g.x.data() + g.x.size());
  v.insert(v.end(), g.z.data(), g.z.data() + g.z.size());
  return v;
}

inline std::vector<int> cell_key(const Eigen::VectorXd& x, double cell) {
  std::vector<int> k(x.size());
  for (int i = 0; i < x.size(); ++i) k[i] = static_cast<int>(std::floor(x[i] / cell));
  return k;
}

// Bisection along chords between sample points inside and outside A.
inline BoundaryCloud build_cloud(const TestSet& A, const SampleSet& s, const std::vector<char>& inside,
                                 double search_radius, const BoundaryConfig& cfg) {
  const auto& S = s.structure;
  std::vector<std::size_t> in, out;
  for (std::size_t i = 0; i < inside.size(); ++i) (inside[i] ? in : out).push_back(i);
  if (in.empty() || out.empty())
    throw DegenerateError("boundary cloud for '" + A.label + "': the sample does not cross the boundary");
  BoundaryCloud c;
  c.points.resize(cfg.cloud_size);
  parallel_for(cfg.cloud_size, [&](std::size_t k) {
    Rng rng(derive_seed(cfg.seed, k));
    auto a = flat(s.points[in[rng.index(in.size())]]);
    auto b = flat(s.points[out[rng.index(out.size())]]);
    std::vector<double> mid(a.size());
    for (int it = 0; it < cfg.bisection_steps; ++it) {
      for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
      (A.contains(S, S.from_flat(mid)) ? a : b) = mid;
    }
    for (std::size_t j = 0; j < a.size(); ++j) mid[j] = 0.5 * (a[j] + b[j]);
    c.points[k] = S.from_flat(mid);
  });
  // Chords through a thin boundary land on the same point; keep one copy.
  std::sort(c.points.begin(), c.points.end(), [](const GroupPoint& p, const GroupPoint& q) {
    const auto a = flat(p), b = flat(q);
    return a < b;
  });
  c.points.erase(std::unique(c.points.begin(), c.points.end(),
                             [](const GroupPoint& p, const GroupPoint& q) {
                               return (p.x - q.x).norm() + (p.z - q.z).norm() <= 1e-12 * (1 + p.x.norm() + p.z.norm());
                             }),
                 c.points.end());
  // Spacing: nearest cloud neighbour of a few cloud points.
  const std::size_t probes = std::min<std::size_t>(64, c.points.size());
  if (c.points.size() < 2) {
    c.gap = 0.0;
    c.cell = search_radius;
    for (std::size_t k = 0; k < c.points.size(); ++k) c.cells[cell_key(c.points[k].x, c.cell)].push_back(k);
    return c;
  }
  std::vector<double> nn(probes, std::numeric_limits<double>::infinity());
  parallel_for(probes, [&](std::size_t q) {
    const std::size_t i = q * (c.points.size() / probes);
    const auto inv = group_inverse(c.points[i]);
    for (std::size_t j = 0; j < c.points.size(); ++j) {
      if (j == i) continue;
      if ((c.points[j].x - c.points[i].x).norm() >= nn[q]) continue;
      nn[q] = std::min(nn[q], TestSet::norm_of(S, group_mul(S, inv, c.points[j])));
    }
  });
  std::sort(nn.begin(), nn.end());
  c.gap = nn[probes * 3 / 4];
  c.cell = search_radius + 2.0 * c.gap;
  for (std::size_t k = 0; k < c.points.size(); ++k) c.cells[cell_key(c.points[k].x, c.cell)].push_back(k);
  return c;
}

// d(g, A) for g outside A, or +inf when it is certainly >= radius.
inline double cloud_distance(const TestSet& A, const HTypeStructure& S, const GroupPoint& g, const BoundaryCloud& c,
                             double radius, int descent_iters) {
  const double reach = radius + 2.0 * c.gap;
  const auto key = cell_key(g.x, c.cell);
  const int m = static_cast<int>(key.size());
  const auto ginv = group_inverse(g);
  // Candidates in order of |dx| <= d; the Kaplan gauge N <= d screens the
  // rest before any exact distance is computed.
  std::vector<std::pair<double, std::size_t>> cand;
  std::vector<int> off(m, -1), probe(m);
  while (true) {
    for (int i = 0; i < m; ++i) probe[i] = key[i] + off[i];
    if (auto it = c.cells.find(probe); it != c.cells.end()) {
      for (std::size_t k : it->second) {
        const double lb = (c.points[k].x - g.x).norm();
        if (lb < reach) cand.emplace_back(lb, k);
      }
    }
    int i = 0;
    while (i < m && off[i] == 1) off[i++] = -1;
    if (i == m) break;
    ++off[i];
  }
  std::sort(cand.begin(), cand.end());
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  for (const auto& [lb, k] : cand) {
    if (lb >= std::min(best, reach)) break;
    const auto h = group_mul(S, ginv, c.points[k]);
    if (S.n() > 0 && kaplan_norm(h) >= std::min(best, reach)) continue;
    const double d = TestSet::norm_of(S, h);
    if (d < best) {
      best = d;
      best_k = k;
    }
  }
  if (!(best < reach)) return std::numeric_limits<double>::infinity();

  // Projected descent of d(g, .) along psi = 0 in homogeneous coordinates
  // u = (h, sigma) of g^{-1} a with z = sigma |sigma|: the CC norm scales
  // linearly in u, so flat-coordinate ill-conditioning in z goes away.
  const int mm = S.m(), nn = S.n(), D = mm + nn;
  auto to_point = [&](const Eigen::VectorXd& u) {
    GroupPoint r{u.head(mm), Eigen::VectorXd(nn)};
    for (int k = 0; k < nn; ++k) r.z[k] = u[mm + k] * std::abs(u[mm + k]);
    return r;
  };
  auto F = [&](const Eigen::VectorXd& u) { return TestSet::norm_of(S, to_point(u)); };
  auto C = [&](const Eigen::VectorXd& u) { return A.psi(S, group_mul(S, g, to_point(u))); };
  auto grad = [&](auto&& f, Eigen::VectorXd u, double h) {
    Eigen::VectorXd out(D);
    for (int j = 0; j < D; ++j) {
      const double o = u[j];
      u[j] = o + h;
      const double fp = f(u);
      u[j] = o - h;
      const double fm = f(u);
      u[j] = o;
      out[j] = (fp - fm) / (2 * h);
    }
    return out;
  };
  const auto rel = group_mul(S, ginv, c.points[best_k]);
  Eigen::VectorXd u(D);
  for (int i = 0; i < mm; ++i) u[i] = rel.x[i];
  for (int k = 0; k < nn; ++k) u[mm + k] = (rel.z[k] >= 0 ? 1.0 : -1.0) * std::sqrt(std::abs(rel.z[k]));
  // d/dh and d/dsigma of the CC norm from the closed-form partials.
  auto gradF = [&](const Eigen::VectorXd& v) {
    const auto p = to_point(v);
    if (nn == 0) {
      const double r = p.x.norm();
      return Eigen::VectorXd(r > 0 ? Eigen::VectorXd(p.x / r) : Eigen::VectorXd::Zero(mm));
    }
    const auto e = distance_partials(S, p, cc_distance_rz(p.x.norm(), p.z.norm()));
    Eigen::VectorXd out(D);
    out.head(mm) = e.dx;
    for (int k = 0; k < nn; ++k) out[mm + k] = e.dz[k] * 2.0 * std::abs(v[mm + k]);
    return out;
  };
  const double ctol = 1e-12 * (1 + radius);
  // Moves w along dir onto C = 0 by Newton steps with a frozen slope.
  auto project = [&](Eigen::VectorXd& w, const Eigen::VectorXd& dir, double slope) {
    for (int k = 0; k < 8; ++k) {
      const double cv = C(w);
      if (!std::isfinite(cv)) return false;
      if (std::abs(cv) <= ctol) return true;
      w -= (cv / slope) * dir;
    }
    return std::abs(C(w)) <= 1e3 * ctol;
  };
  // Newton on the boundary in a tangent chart: y -> F(project(u + T y)).
  double cur = best;
  for (int it = 0; it < descent_iters; ++it) {
    const double h = 1e-7 * (1 + u.norm());
    const auto gC = grad(C, u, h);
    const double slope = gC.norm();
    if (!(slope > 0) || !std::isfinite(slope)) break;
    const Eigen::VectorXd n = gC / slope;
    if (it == 0) {
      if (!project(u, n, slope)) break;
      cur = std::min(cur, F(u));
    }
    if (D == 1) break;
    const Eigen::MatrixXd ncol = n;
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(ncol);
    const Eigen::MatrixXd T = Eigen::MatrixXd(qr.householderQ()).rightCols(D - 1);
    const double base = F(u);
    auto G = [&](const Eigen::VectorXd& y, Eigen::VectorXd* at = nullptr) {
      Eigen::VectorXd w = u + T * y;
      if (!project(w, n, slope)) return std::numeric_limits<double>::infinity();
      if (at) *at = w;
      return F(w);
    };
    const Eigen::VectorXd gy = T.transpose() * gradF(u);
    if (!(gy.norm() > 1e-10)) break;
    const int E = D - 1;
    const double hy = 1e-3 * std::max(base, 1e-4 * radius);
    Eigen::MatrixXd H(E, E);
    Eigen::VectorXd ei = Eigen::VectorXd::Zero(E), ej = Eigen::VectorXd::Zero(E);
    for (int i = 0; i < E; ++i) {
      ei.setZero();
      ei[i] = hy;
      H(i, i) = (G(ei) - 2 * base + G(-ei)) / (hy * hy);
      for (int j = 0; j < i; ++j) {
        ej.setZero();
        ej[j] = hy;
        H(i, j) = H(j, i) = (G(ei + ej) - G(ei - ej) - G(ej - ei) + G(-ei - ej)) / (4 * hy * hy);
      }
    }
    Eigen::VectorXd y;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (H.allFinite() && ldlt.info() == Eigen::Success && ldlt.isPositive()) y = ldlt.solve(-gy);
    if (y.size() != E || !y.allFinite()) y = -gy / gy.norm() * base;
    if (y.norm() > base) y *= base / y.norm();
    bool moved = false;
    for (int ls = 0; ls < 12; ++ls, y *= 0.5) {
      Eigen::VectorXd w;
      const double val = G(y, &w);
      if (std::isfinite(val) && val < base) {
        u = std::move(w);
        cur = std::min(cur, val);
        moved = base - val > 1e-10 * base;
        break;
      }
    }
    if (!moved) break;
  }
  return cur < radius ? cur : std::numeric_limits<double>::infinity();
}

}  // namespace detail

// d(point, A) for every sample, capped: values >= radius come back as +inf.
struct SetDistances {
  std::vector<double> distance;
  std::vector<char> inside;
  bool exact = false;
};

namespace detail {

// Nearest t' from t in direction dir (within R, not below lo) with in(t'); +inf when none.
template <class In>
double scan_1d(const In& in, double t, double dir, double R, double lo) {
  constexpr int kSteps = 64;
  const double h = R / kSteps;
  double prev = t;
  for (int k = 1; k <= kSteps; ++k) {
    double u = t + dir * k * h;
    const bool last = u < lo;
    if (last) u = lo;
    if (in(u)) {
      double a = prev, b = u;
      for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (a + b);
        (in(mid) ? b : a) = mid;
      }
      return std::abs(b - t);
    }
    if (last) break;
    prev = u;
  }
  return std::numeric_limits<double>::infinity();
}

}  // namespace detail

inline SetDistances set_distances(const TestSet& A, const SampleSet& s, double radius, const BoundaryConfig& cfg) {
  s.validate();
  const auto& S = s.structure;
  const std::size_t n = s.size();
  const double inf = std::numeric_limits<double>::infinity();
  SetDistances out;
  out.distance.assign(n, inf);
  out.inside.assign(n, 0);
  const bool ball_at_e = A.kind == SetKind::CC_BALL && !A.center;
  parallel_for(n, [&](std::size_t i) {
    if (ball_at_e) out.inside[i] = A.complement ? s.distances[i] > A.radius : s.distances[i] <= A.radius;
    else out.inside[i] = A.contains(S, s.points[i]);
  });
  if (std::all_of(out.inside.begin(), out.inside.end(), [](char c) { return c != 0; })) {
    std::fill(out.distance.begin(), out.distance.end(), 0.0);
    out.exact = true;
    return out;
  }
  const bool sub = A.kind == SetKind::SUBLEVEL;
  const bool radial = !cfg.force_cloud && (ball_at_e || (sub && A.radial));
  const bool axis = !cfg.force_cloud && sub && !radial && A.axis;
  const bool closed = !cfg.force_cloud && A.has_exact_distance();
  auto shell_in = [&](double r) {
    const double v = ball_at_e ? r - A.radius : A.radial(r) - A.level;
    return A.complement ? v > 0.0 : v <= 0.0;
  };
  auto slab_in = [&](double t) {
    const double v = A.axis(t) - A.level;
    return A.complement ? v > 0.0 : v <= 0.0;
  };
  // Lower bounds |d(g) - d(y)| <= d(g, y) and |x_1 - y_1| <= d(g, y) are attained by moving
  // along a geodesic through e (inward always, outward while theta stays <= pi) or along X_1.
  std::vector<double> cap(n, inf);
  std::vector<char> need(n, 0);
  parallel_for(n, [&](std::size_t i) {
    if (out.inside[i]) {
      out.distance[i] = 0.0;
      return;
    }
    const auto& g = s.points[i];
    double d = inf;
    if (closed) {
      d = ball_at_e ? std::max(0.0, s.distances[i] - A.radius) : A.exact_distance(S, g);
    } else if (axis) {
      const double t = g.x[0];
      d = std::min(detail::scan_1d(slab_in, t, -1.0, radius, -inf), detail::scan_1d(slab_in, t, 1.0, radius, -inf));
    } else if (radial) {
      const double rho = s.distances[i];
      const double din = detail::scan_1d(shell_in, rho, -1.0, radius, 0.0);
      const double dout = detail::scan_1d(shell_in, rho, 1.0, radius, -inf);
      if (din <= dout) {
        d = din;
      } else {
        const double theta = S.n() == 0 || rho == 0.0 ? 0.0 : cc_distance(S, g).arc_parameter;
        if (theta * (rho + dout) <= std::numbers::pi * rho) {
          d = dout;
        } else {
          need[i] = 1;
          cap[i] = din;
        }
      }
    } else {
      need[i] = 1;
    }
    if (!need[i]) out.distance[i] = d < radius ? d : inf;
  });
  out.exact = std::none_of(need.begin(), need.end(), [](char c) { return c != 0; });
  if (out.exact) return out;
  const auto cloud = detail::build_cloud(A, s, out.inside, radius, cfg);
  const std::size_t chunk = 256, chunks = (n + chunk - 1) / chunk;
  parallel_for(chunks, [&](std::size_t c) {
    for (std::size_t i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
      if (!need[i]) continue;
      const double d = std::min(cap[i], detail::cloud_distance(A, S, s.points[i], cloud, radius, cfg.descent_iters));
      out.distance[i] = d < radius ? d : inf;
    }
  });
  return out;
}

// mu(A^eps), A^eps = {d(., A) < eps}.
inline Estimate enlargement_measure(const TestSet& A, double eps, const SampleSet& s, const BoundaryConfig& cfg) {
  if (!(eps > 0)) throw DomainError("enlargement_measure: eps must be positive");
  const auto sd = set_distances(A, s, eps, cfg);
  Window w(s.weights, 0, s.size());
  return replicate_estimate(w.means([&](std::size_t i) { return sd.distance[i] < eps ? 1.0 : 0.0; }));
}

struct SurfaceEstimate {
  std::string label;
  Estimate mu_A;
  Estimate mu_plus;
  std::vector<std::pair<double, Estimate>> eps_ladder;  // (eps, (mu(A^eps) - mu(A)) / eps)
  double extrapolation_order = 1.0;
  double relative_change = 0.0;
  bool stable = true;
  std::string status = "ok";
  std::vector<double> mu_A_reps, mu_plus_reps;  // jackknife replicates (index 0 = full)
};

namespace detail {

inline double fitted_order(const std::vector<double>& eps, const std::vector<double>& D) {
  std::vector<double> lx, ly;
  double sign = 0;
  for (std::size_t i = 0; i + 1 < D.size(); ++i) {
    const double diff = D[i] - D[i + 1];
    if (diff == 0.0) return 1.0;
    if (sign != 0 && (diff > 0) != (sign > 0)) return 1.0;
    sign = diff;
    lx.push_back(std::log(eps[i]));
    ly.push_back(std::log(std::abs(diff)));
  }
  const auto fit = linear_fit(lx, ly);
  if (!std::isfinite(fit.slope) || fit.slope < 0.5 || fit.slope > 3.0) return 1.0;
  return fit.slope;
}

inline SurfaceEstimate surface_from_distances(const SetDistances& sd, std::span<const double> weights,
                                              std::size_t lo, std::size_t hi, const BoundaryConfig& cfg,
                                              const std::string& label) {
  Window w(weights, lo, hi);
  SurfaceEstimate out;
  out.label = label;
  out.mu_A_reps = w.means([&](std::size_t i) { return sd.inside[i] ? 1.0 : 0.0; });
  out.mu_A = replicate_estimate(out.mu_A_reps);
  const std::size_t L = cfg.ladder.size();
  std::vector<std::vector<double>> D(L);
  for (std::size_t k = 0; k < L; ++k) {
    const double e = cfg.ladder[k];
    auto m = w.means([&](std::size_t i) { return sd.distance[i] < e ? 1.0 : 0.0; });
    D[k].resize(m.size());
    for (std::size_t r = 0; r < m.size(); ++r) D[k][r] = (m[r] - out.mu_A_reps[r]) / e;
    out.eps_ladder.emplace_back(e, replicate_estimate(D[k]));
  }
  std::vector<double> D0(L);
  for (std::size_t k = 0; k < L; ++k) D0[k] = D[k][0];
  out.extrapolation_order = fitted_order(cfg.ladder, D0);
  const double rho = std::pow(cfg.ladder[L - 2] / cfg.ladder[L - 1], out.extrapolation_order);
  out.mu_plus_reps.resize(D[0].size());
  for (std::size_t r = 0; r < D[0].size(); ++r)
    out.mu_plus_reps[r] = D[L - 1][r] + (D[L - 1][r] - D[L - 2][r]) / (rho - 1.0);
  out.mu_plus = replicate_estimate(out.mu_plus_reps);
  const double last = D[L - 1][0], prev = D[L - 2][0];
  out.relative_change = last == prev ? 0.0 : std::abs(last - prev) / std::max(std::abs(last), 1e-300);
  if (out.relative_change >= cfg.stabilization) {
    out.stable = false;
    out.status = "inconclusive: ladder not stabilized (relative change " + TestSet::fmt(out.relative_change) + ")";
  } else if (out.mu_plus.mean < -3.0 * out.mu_plus.se) {
    out.stable = false;
    out.status = "inconclusive: negative surface estimate";
  }
  return out;
}

}  // namespace detail

inline SurfaceEstimate boundary_measure(const TestSet& A, const SampleSet& s, const BoundaryConfig& cfg) {
  cfg.validate();
  const auto sd = set_distances(A, s, cfg.ladder.front(), cfg);
  return detail::surface_from_distances(sd, s.weights, 0, s.size(), cfg, A.label);
}

struct IsoRatio {
  Estimate ratio;
  SurfaceEstimate surface;
  bool defined = true;
  std::string status = "ok";
};

inline IsoRatio iso_ratio_from_surface(const SurfaceEstimate& se, const ProfileTable& pt) {
  IsoRatio out;
  out.surface = se;
  const double t = se.mu_A.mean;
  if (t <= 0.0 || t >= 1.0) {
    out.ratio = {0.0, 0.0};
    out.status = "mu(A) in {0, 1}";
    return out;
  }
  if (!se.stable) {
    out.defined = false;
    out.status = se.status;
    return out;
  }
  if (!(se.mu_plus.mean > 3.0 * se.mu_plus.se)) {
    out.defined = false;
    out.status = "undefined: surface measure consistent with 0";
    return out;
  }
  std::vector<double> r(se.mu_plus_reps.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = pt(se.mu_A_reps[k]) / se.mu_plus_reps[k];
  out.ratio = replicate_estimate(r);
  return out;
}

inline IsoRatio iso_ratio(const TestSet& A, const SampleSet& s, const ProfileTable& pt, const BoundaryConfig& cfg) {
  return iso_ratio_from_surface(boundary_measure(A, s, cfg), pt);
}

// eta = (log 3 / log 2)^beta - 1
inline double eta_constant(double beta) {
  PhiSpec ps(beta);
  return std::pow(std::log(3.0) / std::log(2.0), ps.beta) - 1.0;
}

struct EtaCheck {
  double eta = 0.0;
  std::size_t points = 0;
  std::size_t violations = 0;
  double max_excess = -std::numeric_limits<double>::infinity();  // max of lhs - rhs
};

// eta (log 1/t)^beta <= (log(1 + 1/t))^beta - (log 2)^beta on t = k / (2 N), k = 1..N.
// Equality holds at t = 1/2; a relative slack of 1e-12 absorbs rounding there.
inline EtaCheck check_eta_estimate(double beta, std::size_t N = 1000) {
  EtaCheck out;
  out.eta = eta_constant(beta);
  out.points = N;
  for (std::size_t k = 1; k <= N; ++k) {
    const double t = static_cast<double>(k) / (2.0 * N);
    const double lhs = out.eta * std::pow(std::log(1.0 / t), beta);
    const double rhs = std::pow(std::log1p(1.0 / t), beta) - std::pow(std::log(2.0), beta);
    out.max_excess = std::max(out.max_excess, lhs - rhs);
    if (lhs > rhs + 1e-12 * std::max(1.0, std::abs(rhs))) ++out.violations;
  }
  return out;
}

// C-bar = max U_2 / U_q on the grid of the U_2 table (q <= 2).
inline double profile_dominance(const ProfileTable& u2, const ProfileTable& uq) {
  if (std::abs(u2.q() - 2.0) > 1e-12) throw DomainError("profile_dominance: first table must be q = 2");
  if (uq.q() > 2.0 + 1e-12) throw DomainError("profile_dominance: needs q <= 2");
  double c = 0.0;
  for (double t : u2.t_grid()) {
    const double a = u2(t), b = uq(t);
    if (a > 0 && b > 0) c = std::max(c, a / b);
  }
  return c;
}

// U_q(mu(A)) <= c~ mu+(A) on a family of sets. c~ is the largest defined
// ratio; the held-out check fits on the first half of the sample and tests the
// second. Also checks min(t, 1 - t) <= (c~ L_q / (log 2)^beta) mu+(A).
inline InequalityReport verify_isoperimetry(const std::vector<TestSet>& sets, const SampleSet& s,
                                            const ProfileTable& pt, const BoundaryConfig& cfg,
                                            std::vector<IsoRatio>* details = nullptr) {
  cfg.validate();
  if (sets.empty()) throw DomainError("verify_isoperimetry: no sets");
  const std::size_t n = s.size();
  InequalityReport rep;
  rep.kind = InequalityKind::ISOPERIMETRY;
  rep.corpus_id = "sets";
  rep.sample_size = n;
  rep.n_eff = s.ess();
  std::vector<IsoRatio> full, half_a, half_b;
  for (const auto& A : sets) {
    const auto sd = set_distances(A, s, cfg.ladder.front(), cfg);
    full.push_back(iso_ratio_from_surface(detail::surface_from_distances(sd, s.weights, 0, n, cfg, A.label), pt));
    half_a.push_back(iso_ratio_from_surface(detail::surface_from_distances(sd, s.weights, 0, n / 2, cfg, A.label), pt));
    half_b.push_back(iso_ratio_from_surface(detail::surface_from_distances(sd, s.weights, n / 2, n, cfg, A.label), pt));
  }
  auto fit = [](const std::vector<IsoRatio>& v) {
    Estimate c{0.0, 0.0};
    for (const auto& r : v)
      if (r.defined && r.ratio.mean > c.mean) c = r.ratio;
    return c;
  };
  const Estimate c = fit(full), ca = fit(half_a);
  rep.fitted_constants["c_tilde"] = c;
  const double beta = 1.0 / pt.q();
  const double K = c.mean * check_q_equivalence(pt) / std::pow(std::log(2.0), beta);
  rep.fitted_constants["cheeger_K"] = {K, c.se * K / std::max(c.mean, 1e-300)};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& R = full[i];
    FunctionRow row;
    row.id = sets[i].label;
    row.lhs = {pt(R.surface.mu_A.mean), 0.0};
    row.rhs["mu(A)"] = R.surface.mu_A;
    row.rhs["mu+(A)"] = R.surface.mu_plus;
    row.has_ratio = R.defined;
    row.ratio = R.ratio;
    row.note = R.status;
    if (!R.defined) {
      row.excluded = true;
      rep.inconclusive.push_back(row.id);
    } else if (half_b[i].defined) {
      const auto& B = half_b[i].ratio;
      if (B.mean - ca.mean > 3.0 * std::hypot(B.se, ca.se)) rep.violations.push_back(row.id);
    }
    // Cheeger from the profile.
    const double t = R.surface.mu_A.mean;
    const double m = std::min(t, 1.0 - t);
    const double rhs = K * R.surface.mu_plus.mean;
    const double se = std::hypot(K * R.surface.mu_plus.se, rep.fitted_constants["cheeger_K"].se * R.surface.mu_plus.mean);
    row.rhs["cheeger rhs"] = {rhs, se};
    if (R.surface.stable && m > rhs + 3.0 * se + 3.0 * R.surface.mu_A.se) rep.violations.push_back("cheeger:" + row.id);
    rep.per_function.push_back(std::move(row));
  }
  if (details) *details = full;
  return rep;
}

// Uniform level grid: `count` midpoints between the 1% and 99% quantiles of f
// on the sample. Returns the levels; the spacing is levels[1] - levels[0].
inline std::vector<double> default_levels(std::vector<double> values, std::size_t count = 12) {
  if (values.empty() || count < 2) throw DomainError("default_levels: need values and >= 2 levels");
  std::sort(values.begin(), values.end());
  const double lo = values[values.size() / 100], hi = values[values.size() - 1 - values.size() / 100];
  std::vector<double> out;
  if (!(hi > lo)) return out;
  const double h = (hi - lo) / count;
  for (std::size_t k = 0; k < count; ++k) out.push_back(lo + (k + 0.5) * h);
  return out;
}

// mu|grad f| >= sum_s mu+({f > s}) ds - 3 SE. Levels with an inconclusive
// surface estimate are dropped, which only weakens the right side.
inline InequalityReport coarea_check(const ScalarField& f, const std::string& id, const SampleSet& s,
                                     std::vector<double> levels, const BoundaryConfig& cfg,
                                     std::function<double(double)> radial = {}, std::function<double(double)> axis = {}) {
  cfg.validate();
  s.validate();
  const auto& S = s.structure;
  const std::size_t n = s.size();
  std::vector<double> fv(n), gv(n);
  parallel_for(n, [&](std::size_t i) {
    fv[i] = f(s.points[i]);
    gv[i] = gradient_length(S, f, s.points[i]);
    if (!std::isfinite(fv[i]) || !std::isfinite(gv[i])) throw NumericError("coarea_check: f not finite on the sample");
  });
  InequalityReport rep;
  rep.kind = InequalityKind::COAREA;
  rep.corpus_id = id;
  rep.sample_size = n;
  rep.n_eff = s.ess();
  Window w(s.weights, 0, n);
  const auto lhs = w.means([&](std::size_t i) { return gv[i]; });
  std::vector<double> rhs(lhs.size(), 0.0);
  const bool constant = std::all_of(fv.begin(), fv.end(), [&](double v) { return v == fv[0]; });
  if (constant) levels.clear();
  std::sort(levels.begin(), levels.end());
  double ds = 0.0;
  if (levels.size() >= 2) {
    ds = levels[1] - levels[0];
    for (std::size_t k = 1; k < levels.size(); ++k)
      if (std::abs((levels[k] - levels[k - 1]) - ds) > 1e-9 * std::max(1.0, std::abs(ds)))
        throw DomainError("coarea_check: levels must be uniformly spaced");
  } else if (levels.size() == 1) {
    throw DomainError("coarea_check: need at least 2 levels");
  }
  std::size_t used = 0;
  for (double lev : levels) {
    auto B = TestSet::sublevel(f, lev, id + ">" + TestSet::fmt(lev));
    B.radial = radial;
    B.axis = axis;
    const auto A = B.complemented();
    SurfaceEstimate se;
    FunctionRow row;
    row.id = A.label;
    try {
      se = boundary_measure(A, s, cfg);
    } catch (const DegenerateError& e) {
      row.excluded = true;
      row.note = e.what();
      rep.per_function.push_back(std::move(row));
      continue;
    }
    row.lhs = se.mu_plus;
    row.rhs["mu(A)"] = se.mu_A;
    row.note = se.status;
    if (!se.stable) {
      row.excluded = true;
      rep.warnings.push_back("level " + TestSet::fmt(lev) + " dropped: " + se.status);
    } else {
      ++used;
      for (std::size_t r = 0; r < rhs.size(); ++r) rhs[r] += se.mu_plus_reps[r] * ds;
    }
    rep.per_function.push_back(std::move(row));
  }
  std::vector<double> diff(lhs.size());
  for (std::size_t r = 0; r < lhs.size(); ++r) diff[r] = lhs[r] - rhs[r];
  const auto D = replicate_estimate(diff);
  rep.fitted_constants["mu|grad f|"] = replicate_estimate(lhs);
  rep.fitted_constants["sum mu+ ds"] = replicate_estimate(rhs);
  rep.fitted_constants["levels_used"] = {static_cast<double>(used), 0.0};
  if (D.mean < -3.0 * D.se) rep.violations.push_back(id);
  return rep;
}

// Coarea over a corpus; one report row per function, violations merged.
inline InequalityReport coarea_corpus(const FunctionCorpus& corpus, const SampleSet& s, const BoundaryConfig& cfg,
                                      std::size_t levels = 12) {
  InequalityReport rep;
  rep.kind = InequalityKind::COAREA;
  rep.corpus_id = corpus.id;
  rep.sample_size = s.size();
  rep.n_eff = s.ess();
  for (const auto& e : corpus.entries) {
    std::vector<double> v(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) v[i] = e.field(s.points[i]);
    const auto one = coarea_check(e.field, e.id, s, default_levels(v, levels), cfg, e.radial, e.axis);
    FunctionRow row;
    row.id = e.id;
    row.lhs = one.fitted_constants.at("mu|grad f|");
    row.rhs["sum mu+ ds"] = one.fitted_constants.at("sum mu+ ds");
    row.rhs["levels_used"] = one.fitted_constants.at("levels_used");
    for (const auto& v2 : one.violations) rep.violations.push_back(v2);
    for (const auto& w : one.warnings) rep.warnings.push_back(e.id + ": " + w);
    rep.per_function.push_back(std::move(row));
  }
  return rep;
}

// Surface measure of CC balls about e for the unperturbed measure:
// p alpha^{Q/p} r^{Q-1} e^{-alpha r^p} / Gamma(Q/p).
inline double ball_surface_closed_form(const MeasureSpec& spec, double r) {
  if (spec.perturbed()) throw DomainError("ball_surface_closed_form: unperturbed measures only");
  const double Q = spec.structure.homogeneous_dimension();
  return spec.p * std::pow(spec.alpha, Q / spec.p) * std::pow(r, Q - 1) * std::exp(-spec.alpha * std::pow(r, spec.p)) /
         std::tgamma(Q / spec.p);
}

// mu(B(r)) for the unperturbed measure: P(Q/p, alpha r^p).
inline double ball_measure_closed_form(const MeasureSpec& spec, double r) {
  if (spec.perturbed()) throw DomainError("ball_measure_closed_form: unperturbed measures only");
  const double Q = spec.structure.homogeneous_dimension();
  return boost::math::gamma_p(Q / spec.p, spec.alpha * std::pow(r, spec.p));
}

// "ball:R", "halfspace:C" (normal e_1), "halfspace:C:n1,n2,...", "complement:<set>".
inline TestSet test_set_from_string(const std::string& text, const HTypeStructure& s) {
  if (text.rfind("complement:", 0) == 0) return test_set_from_string(text.substr(11), s).complemented();
  auto num = [&](const std::string& v) {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("bad number in set description: '" + v + "'");
    }
  };
  if (text.rfind("ball:", 0) == 0) return TestSet::ball(num(text.substr(5)));
  if (text.rfind("halfspace:", 0) == 0) {
    const auto rest = text.substr(10);
    const auto colon = rest.find(':');
    Eigen::VectorXd nrm = Eigen::VectorXd::Zero(s.m());
    if (colon == std::string::npos) {
      nrm[0] = 1.0;
      return TestSet::half_space(nrm, num(rest));
    }
    std::vector<double> comps;
    std::string tail = rest.substr(colon + 1), item;
    std::stringstream ss(tail);
    while (std::getline(ss, item, ',')) comps.push_back(num(item));
    if (static_cast<int>(comps.size()) != s.m()) throw ConfigError("half-space normal must have m components");
    for (int i = 0; i < s.m(); ++i) nrm[i] = comps[i];
    return TestSet::half_space(nrm, num(rest.substr(0, colon)));
  }
  throw ConfigError("unknown set description: '" + text + "'");
}

}  // namespace subriem
