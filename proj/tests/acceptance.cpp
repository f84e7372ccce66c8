// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>

#include "subriem/run.hpp"

using namespace subriem;

namespace {

MeasureSpec spec_of(HTypeStructure s, double p = 2.0, double alpha = 1.0) {
  return MeasureSpec{std::move(s), p, alpha, std::nullopt, std::nullopt};
}

SampleSet draw(const MeasureSpec& spec, std::size_t total, std::uint64_t seed) {
  ChainConfig c;
  c.n_samples = total / c.n_chains;
  c.seed = seed;
  return sample_measure(spec, c);
}

GroupPoint random_point(const HTypeStructure& s, Rng& rng, double scale = 1.0) {
  GroupPoint g = s.identity();
  for (int i = 0; i < s.m(); ++i) g.x[i] = scale * rng.normal();
  for (int k = 0; k < s.n(); ++k) g.z[k] = scale * rng.normal();
  return g;
}

double gap(const GroupPoint& a, const GroupPoint& b) {
  double g = (a.x - b.x).cwiseAbs().maxCoeff();
  if (a.z.size()) g = std::max(g, (a.z - b.z).cwiseAbs().maxCoeff());
  return g;
}

bool within(const Estimate& e, double target, double k = 3.0) { return std::abs(e.mean - target) <= k * e.se; }
bool agree(const Estimate& a, const Estimate& b, double k = 3.0) {
  return std::abs(a.mean - b.mean) <= k * std::hypot(a.se, b.se);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Collects sub-checks; the criterion passes iff all do.
struct Check {
  bool ok = true;
  std::vector<std::string> notes;
  void expect(bool cond, const std::string& what) {
    if (!cond) ok = false;
    notes.push_back(std::string(cond ? "" : "FAILED ") + what);
  }
};

using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------

void c1_group_algebra(Check& c) {
  const auto t0 = Clock::now();
  double assoc = 0, ident = 0, inv = 0, jprop = 0;
  for (const auto& s : {presets::heisenberg(1), presets::quaternionic()}) {
    Rng rng(101);
    for (int t = 0; t < 1000; ++t) {
      const auto a = random_point(s, rng), b = random_point(s, rng), d = random_point(s, rng);
      assoc = std::max(assoc, gap(group_mul(s, group_mul(s, a, b), d), group_mul(s, a, group_mul(s, b, d))));
      ident = std::max({ident, gap(group_mul(s, s.identity(), a), a), gap(group_mul(s, a, s.identity()), a)});
      inv = std::max({inv, gap(group_mul(s, a, group_inverse(a)), s.identity()),
                      gap(group_mul(s, group_inverse(a), a), s.identity())});
      Eigen::VectorXd u(s.n());
      for (int k = 0; k < s.n(); ++k) u[k] = rng.normal();
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(s.m(), s.m());
      for (int k = 0; k < s.n(); ++k) M += u[k] * s.J()[k];
      jprop = std::max(jprop, (M * M + u.squaredNorm() * Eigen::MatrixXd::Identity(s.m(), s.m())).cwiseAbs().maxCoeff());
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(assoc <= 1e-12, fmt("associativity %.1e", assoc));
  c.expect(ident <= 1e-12, fmt("identity %.1e", ident));
  c.expect(inv <= 1e-12, fmt("inverse %.1e", inv));
  c.expect(jprop <= 1e-10, fmt("(sum u J)^2 + |u|^2 I %.1e", jprop));
  c.expect(secs < 1.0, fmt("%.3f s < 1 s", secs));
}

void c2_cc_distance(Check& c) {
  const auto t0 = Clock::now();
  const auto S = presets::heisenberg(1);
  Rng rng(202);
  double hom = 0, sym = 0;
  for (int i = 0; i < 100; ++i) {
    const auto g = random_point(S, rng);
    const double d = distance(S, g);
    for (double r : {0.5, 3.0}) hom = std::max(hom, std::abs(distance(S, dilate(g, r)) - r * d));
    sym = std::max(sym, std::abs(distance(S, group_inverse(g)) - d));
  }
  c.expect(hom <= 1e-9, fmt("homogeneity %.1e", hom));
  c.expect(sym <= 1e-9, fmt("symmetry %.1e", sym));

  TranscriptionConfig tc;
  tc.segments = 256;
  double worst = 0, worst_axis = 0;
  for (int i = 0; i < 20; ++i) {
    GroupPoint g = S.identity();
    if (i < 5) {  // near the center axis
      const double a = 2 * std::numbers::pi * rng.uniform(), r = 1e-3 * (1 + i);
      g.x << r * std::cos(a), r * std::sin(a);
      g.z[0] = 0.5 + 0.25 * i;
    } else {
      g = random_point(S, rng);
    }
    const double e = std::abs(cc_distance_oracle(S, g, tc) - distance(S, g));
    worst = std::max(worst, e);
    if (i < 5) worst_axis = std::max(worst_axis, e);
  }
  c.expect(worst <= 1e-3, fmt("oracle 20 pts %.1e (near axis %.1e)", worst, worst_axis));

  double horiz = 0;
  for (int i = 0; i < 100; ++i) {
    GroupPoint g = S.identity();
    g.x << 3 * rng.normal(), 3 * rng.normal();
    horiz = std::max(horiz, std::abs(distance(S, g) - g.x.norm()));
  }
  c.expect(horiz <= 1e-6, fmt("d((x,0)) - |x| %.1e", horiz));
  GroupPoint axis = S.identity();
  axis.z[0] = 1.0;
  const double da = distance(S, axis);
  c.expect(std::abs(da - std::sqrt(4 * std::numbers::pi)) <= 1e-3,
           fmt("d(0,0,1) = %.9f, sqrt(4 pi) = %.9f", da, std::sqrt(4 * std::numbers::pi)));
  // On the axis itself the minimizers form a circle and the polygon oracle converges slowly; reported only.
  c.notes.push_back(fmt("info: oracle at (0,0,1) = %.6f", cc_distance_oracle(S, axis, tc)));
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 30.0, fmt("%.1f s < 30 s", secs));
}

void c3_eikonal(Check& c) {
  const auto S = presets::heisenberg(1);
  std::vector<GroupPoint> grid;
  // 10^3 grid, offset so no node sits on the center axis.
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) {
        GroupPoint g = S.identity();
        g.x << -2.85 + 0.6 * i, -2.85 + 0.6 * j;
        g.z[0] = -2.7 + 0.6 * k;
        grid.push_back(g);
      }
  const auto r = check_distance_conditions(spec_of(S), grid);
  c.expect(r.skipped_axis == 0, fmt("%d axis points skipped", r.skipped_axis));
  c.expect(r.max_grad >= 1 - 1e-3 && r.max_grad <= 1 + 1e-3, fmt("max|grad d| = %.6f", r.max_grad));
  c.expect(r.min_grad >= 1 - 1e-3, fmt("min|grad d| = %.6f", r.min_grad));
  c.expect(std::isfinite(r.K) && r.eps < 1.0 && r.report.violations.empty(),
           fmt("Delta d <= K + 2 eps d: K = %.4f, eps = %.4f, %zu held-out violations", r.K, r.eps,
               r.report.violations.size()));
}

void c4_profile(Check& c) {
  const ProfileTable u2(2.0);
  const double v = u2(0.5);
  c.expect(std::abs(v - 1 / std::sqrt(std::numbers::pi)) <= 1e-6, fmt("U_2(1/2) - 1/sqrt(pi) = %.1e", v - 1 / std::sqrt(std::numbers::pi)));
  for (double q : {4.0 / 3.0, 2.0, 4.0}) {
    const ProfileTable a(q, 2001), b(q, 4001);
    const double La = check_q_equivalence(a), Lb = check_q_equivalence(b);
    const double sr = std::max(a.symmetry_residual(), b.symmetry_residual());
    c.expect(sr < 1e-8, fmt("q=%.3g symmetry %.1e", q, sr));
    c.expect(std::isfinite(La) && std::abs(La - Lb) <= 0.01 * Lb, fmt("q=%.3g L_q %.5f / %.5f", q, La, Lb));
  }
}

void c5_eta(Check& c) {
  for (double b : {1.0, 0.5}) {
    const auto e = check_eta_estimate(b, 1000);
    c.expect(e.points == 1000 && e.violations == 0, fmt("beta=%.1f eta=%.6f violations %zu", b, e.eta, e.violations));
  }
}

void c6_euclidean(Check& c) {
  const auto t0 = Clock::now();
  const auto spec = spec_of(presets::euclidean(1));
  const auto s = draw(spec, 100000, 606);
  ScalarField ax;
  ax.eval = [](const GroupPoint& g) { return std::abs(g.x[0]); };
  const auto m1 = estimate_expectation(s, ax);
  const double target = 1 / std::sqrt(std::numbers::pi);
  c.expect(within(m1, target), fmt("mu|x| = %.5f +- %.5f", m1.mean, m1.se));
  const auto Z = estimate_normalization(spec, default_box(spec), 48);
  c.expect(std::abs(Z.value - std::sqrt(std::numbers::pi)) <= 1e-6, fmt("Z - sqrt(pi) = %.1e", Z.value - std::sqrt(std::numbers::pi)));
  Eigen::VectorXd e1 = Eigen::VectorXd::Ones(1);
  const auto se = boundary_measure(TestSet::half_space(e1, 0.0), s, default_boundary_config(spec));
  c.expect(se.stable && within(se.mu_plus, target), fmt("half-line mu+ = %.5f +- %.5f", se.mu_plus.mean, se.mu_plus.se));
  for (double lam : {0.1, 0.5}) {
    const auto e = exp_moment(s, lam, 1e3);
    c.expect(within(e, 1 / std::sqrt(1 - lam)), fmt("mu e^{%.1f x^2} = %.4f +- %.4f (exact %.4f)", lam, e.mean, e.se, 1 / std::sqrt(1 - lam)));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 120.0, fmt("%.1f s < 120 s", secs));
}

std::vector<InequalityReport> h1_battery(const MeasureSpec& spec, std::uint64_t seed) {
  const auto s = draw(spec, 100000, seed);
  const auto t = build_corpus_table(spec, s, standard_corpus(spec));
  const PhiSpec half(0.5);
  return {verify_ubound(spec, t),       verify_cheeger(t),      verify_l1phi_entropy(half, t),
          verify_lsq(half, t),          verify_ifi2(t, ProfileTable(2.0)), verify_tight_ledoux(half, t)};
}

void c7_h1_battery(Check& c) {
  const auto t0 = Clock::now();
  const auto spec = spec_of(presets::heisenberg(1));
  const auto a = h1_battery(spec, 701), b = h1_battery(spec, 702);
  c.expect(standard_corpus(spec).size() >= 20, fmt("corpus size %zu", standard_corpus(spec).size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::ostringstream os;
    bool finite = true, same = true;
    for (const auto& [k, v] : a[i].fitted_constants) {
      const auto& w = b[i].constant(k);
      finite = finite && std::isfinite(v.mean) && std::isfinite(w.mean);
      same = same && agree(v, w);
      os << ' ' << k << '=' << fmt("%.4f/%.4f", v.mean, w.mean);
    }
    const std::size_t viol = a[i].violations.size() + b[i].violations.size();
    const std::size_t inc = a[i].inconclusive.size() + b[i].inconclusive.size();
    c.expect(finite && same && viol == 0 && inc == 0,
             to_string(a[i].kind) + os.str() + fmt(" violations %zu inconclusive %zu", viol, inc) + (same ? "" : " seeds disagree"));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 600.0, fmt("%.1f s < 600 s", secs));
}

// Lifts a 1-D corpus entry to coordinate `axis` of R^2.
CorpusEntry lift(const CorpusEntry& e, int axis, const std::string& tag) {
  CorpusEntry out;
  out.id = tag + e.id;
  out.family = e.family;
  out.unit_range = e.unit_range;
  const auto f = e.field.eval;
  out.field.eval = [f, axis](const GroupPoint& g) {
    return f(GroupPoint{Eigen::VectorXd::Constant(1, g.x[axis]), Eigen::VectorXd()});
  };
  return out;
}

void c8_tensorization(Check& c) {
  // mu_1 = e^{-x^2}, mu_2 = e^{-y^2/2}; the product on R^2 with corpus = lifted marginal corpora
  // plus products and sums of mixed pairs.
  const auto s1 = spec_of(presets::euclidean(1)), s2 = spec_of(presets::euclidean(1), 2.0, 0.5);
  const auto a = draw(s1, 40000, 801), b = draw(s2, 40000, 802);
  const PhiSpec ps(0.5);
  const auto c1 = standard_corpus(s1), c2 = standard_corpus(s2);
  const auto r1 = verify_l1phi_entropy(ps, build_corpus_table(s1, a, c1));
  const auto r2 = verify_l1phi_entropy(ps, build_corpus_table(s2, b, c2));
  SampleSet prod;
  prod.structure = presets::euclidean(2);
  for (std::size_t i = 0; i < a.size(); ++i)
    prod.points.push_back(GroupPoint{Eigen::Vector2d(a.points[i].x[0], b.points[i].x[0]), Eigen::VectorXd()});
  prod.meta = a.meta;
  FunctionCorpus pc;
  pc.id = "product";
  for (const auto& e : c1.entries) pc.entries.push_back(lift(e, 0, "x:"));
  for (const auto& e : c2.entries) pc.entries.push_back(lift(e, 1, "y:"));
  for (const char* id : {"gauss_d", "tanh_d", "halfspace", "cos_x1", "x1"}) {
    const auto fx = lift(c1.at(id), 0, ""), fy = lift(c2.at(id), 1, "");
    CorpusEntry sum, mul;
    sum.id = std::string("sum:") + id;
    sum.field.eval = [fx, fy](const GroupPoint& g) { return fx.field.eval(g) + fy.field.eval(g); };
    mul.id = std::string("prod:") + id;
    mul.field.eval = [fx, fy](const GroupPoint& g) { return fx.field.eval(g) * fy.field.eval(g); };
    pc.entries.push_back(sum);
    pc.entries.push_back(mul);
  }
  const auto sp = spec_of(presets::euclidean(2));
  prod.distances.resize(prod.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod.distances[i] = prod.points[i].x.norm();
  const auto rp = verify_l1phi_entropy(ps, build_corpus_table(sp, prod, pc));
  const auto cp = rp.constant("c"), m1 = r1.constant("c"), m2 = r2.constant("c");
  const double mx = std::max(m1.mean, m2.mean);
  c.expect(cp.mean <= mx + 3 * cp.se,
           fmt("product c = %.4f +- %.4f <= max(%.4f, %.4f) + 3 SE", cp.mean, cp.se, m1.mean, m2.mean));
  c.expect(rp.violations.empty() && r1.violations.empty() && r2.violations.empty(), "no held-out violations");
}

void c9_isoperimetry(Check& c) {
  const auto spec = spec_of(presets::heisenberg(1));
  const ProfileTable pt(2.0);
  std::vector<TestSet> sets;
  for (double r : {0.75, 1.0, 1.5, 2.0, 2.5}) sets.push_back(TestSet::ball(r));
  std::vector<Estimate> ct;
  for (std::uint64_t seed : {901, 902}) {
    const auto s = draw(spec, 200000, seed);
    const auto rep = verify_isoperimetry(sets, s, pt, default_boundary_config(spec, seed));
    ct.push_back(rep.constant("c_tilde"));
    c.expect(rep.violations.empty() && rep.inconclusive.empty() && std::isfinite(ct.back().mean),
             fmt("seed %d: c~ = %.4f +- %.4f, %zu violations, %zu inconclusive", static_cast<int>(seed), ct.back().mean,
                 ct.back().se, rep.violations.size(), rep.inconclusive.size()));
  }
  c.expect(agree(ct[0], ct[1]), "c~ seed-stable within 3 SE");
  const auto s = draw(spec, 40000, 903);
  const auto corpus = standard_corpus(spec);
  const auto co = coarea_corpus(corpus, s, default_boundary_config(spec, 903), 8);
  c.expect(co.violations.empty() && co.per_function.size() == corpus.size(),
           fmt("coarea: %zu functions, %zu violations", co.per_function.size(), co.violations.size()));
}

void c10_heat(Check& c) {
  const auto t0 = Clock::now();
  const auto S = presets::heisenberg(1);
  PathConfig pc;
  pc.n_paths = 100000;
  pc.n_steps = 256;
  pc.seed = 1001;
  const auto es = simulate_horizontal_bm(S, S.identity(), pc);
  const double sim_secs = std::chrono::duration<double>(Clock::now() - t0).count();
  ScalarField one, x2;
  one.eval = [](const GroupPoint&) { return 1.0; };
  x2.eval = [](const GroupPoint& g) { return g.x.squaredNorm(); };
  const auto p1 = heat_semigroup_apply(one, es);
  c.expect(p1.mean == 1.0 && p1.se == 0.0, fmt("P_t 1 = %.17g (se %.1g)", p1.mean, p1.se));
  const auto m2 = heat_semigroup_apply(x2, es);
  c.expect(within(m2, 2.0 * S.m() * pc.t), fmt("P_t(sum x^2)(e) = %.4f +- %.4f vs 2mt = %.1f", m2.mean, m2.se, 2.0 * S.m() * pc.t));
  const auto ks = dilation_covariance_ks(S, pc);
  c.expect(ks.p_value >= 0.01, fmt("dilation KS D = %.4f p = %.3f", ks.statistic, ks.p_value));
  PathConfig g = pc;
  g.n_paths = 40000;
  const auto scan = gradient_bound_scan(S, {0.25, 1.0, 4.0}, g);
  std::string cs;
  std::size_t viol = 0;
  for (const auto& r : scan.reports) {
    cs += fmt(" %.4f+-%.4f", r.constant("C1").mean, r.constant("C1").se);
    viol += r.violations.size();
  }
  c.expect(scan.finite && scan.overlapping, "C1(t) at t = 1/4, 1, 4:" + cs);
  c.expect(sim_secs < 300.0, fmt("10^5 paths x 256 steps in %.1f s < 300 s", sim_secs));
}

void c11_gibbs(Check& c) {
  const auto t0 = Clock::now();
  auto lattice = [](double J) {
    LatticeConfig l;
    l.J = J;
    return l;
  };
  const PhiSpec ps(0.5);
  {
    const GibbsModel G(lattice(0.0));
    GibbsConfig gc;
    gc.n_sweeps = 10000;
    const auto res = verify_gibbs_l1phi(G, cylinder_corpus(G), ps, gc);
    ChainConfig cc;
    cc.n_samples = 10000;
    cc.thinning = 5;
    cc.seed = 1101;
    const auto& site = G.config().site;
    const auto single = verify_l1phi_entropy(ps, build_corpus_table(site, sample_measure(site, cc), standard_corpus(site)));
    const auto a = res.l1phi.constant("c"), b = single.constant("c");
    c.expect(agree(a, b) && res.l1phi.violations.empty(),
             fmt("J=0: Gibbs c = %.4f +- %.4f, single site %.4f +- %.4f", a.mean, a.se, b.mean, b.se));
  }
  std::vector<double> Js{0.0, 0.1, 0.2, 0.4}, eps;
  for (double J : Js) {
    const GibbsModel G(lattice(J));
    if (J > 0) {
      const auto& site = G.config().site;
      const FieldFunction F = [&](const SpinField& f) { return site.distance(f.spins[G.config().center()]); };
      GroupPoint far = G.structure().identity();
      far.x[0] = 2.0;
      const auto sw = iterate_sweep(G, F, 20, {G.constant_field(G.structure().identity()), G.constant_field(far)}, 64,
                                    derive_seed(1102, static_cast<std::uint64_t>(J * 100)));
      c.expect(sw.merged_at && *sw.merged_at <= 20,
               fmt("J=%.1f starts merge within 3 SE at r = %d", J, sw.merged_at ? static_cast<int>(*sw.merged_at) : -1));
    }
    ContractionConfig cc;
    const auto rep = verify_gradient_contraction(G, neighbor_corpus(G), cc);
    eps.push_back(rep.constant("eps").mean);
    c.expect(rep.constant("eps").mean < 1.0 && rep.violations.empty(),
             fmt("J=%.1f eps = %.4f +- %.4f", J, rep.constant("eps").mean, rep.constant("eps").se));
  }
  const auto fit = linear_fit(Js, eps, {});
  c.expect(fit.r2 >= 0.95 && std::abs(fit.intercept) <= 0.1 * eps.back(),
           fmt("eps ~ %.4f + %.4f J, r^2 = %.4f", fit.intercept, fit.slope, fit.r2));
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  c.expect(secs < 1200.0, fmt("%.1f s < 1200 s", secs));
}

void c12_determinism(Check& c) {
  std::vector<RunConfig> cfgs;
  auto add = [&](const std::string& cmd, nlohmann::json opts) {
    RunConfig r;
    r.command = cmd;
    r.seed = 1201;
    r.options = std::move(opts);
    cfgs.push_back(r);
  };
  add("sample", {{"n", 20000}});
  add("verify", {{"kind", "all"}, {"n", 20000}});
  add("iso", {{"n", 20000}, {"sets", {"ball:1", "halfspace:0.5", "complement:ball:1.5"}}});
  add("heat", {{"paths", 20000}, {"verify_gradient", true}});
  add("gibbs", {{"lattice", {{"J", 0.2}, {"pool_size", 5000}}}, {"sweeps", 500}});
  for (const auto& r : cfgs) {
    setenv("SUBRIEM_THREADS", "1", 1);
    const auto a = to_json(run_command(r), false).dump(2);
    setenv("SUBRIEM_THREADS", "4", 1);
    const auto b = to_json(run_command(r), false).dump(2);
    unsetenv("SUBRIEM_THREADS");
    c.expect(a == b, r.command + fmt(": %zu bytes, digest %s", a.size(), git_blob_sha1(a).substr(0, 12).c_str()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
      {"group algebra", c1_group_algebra},  {"CC distance", c2_cc_distance},   {"eikonal", c3_eikonal},
      {"profile", c4_profile},              {"eta estimate", c5_eta},          {"Euclidean oracles", c6_euclidean},
      {"H1 battery", c7_h1_battery},        {"tensorization", c8_tensorization}, {"isoperimetry", c9_isoperimetry},
      {"heat kernel", c10_heat},            {"Gibbs", c11_gibbs},              {"determinism", c12_determinism},
  };
  // Optional list of criterion numbers to run.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Check c;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("%s %d %s [%.1f s]\n", c.ok ? "PASS" : "FAIL", n, criteria[i].first.c_str(), secs);
    for (const auto& note : c.notes) std::printf("    %s\n", note.c_str());
    std::fflush(stdout);
    failed += c.ok ? 0 : 1;
  }
  std::printf("%d criteria failed\n", failed);
  return failed ? 1 : 0;
}
