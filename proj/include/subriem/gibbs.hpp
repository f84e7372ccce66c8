#pragma once

// Finite-box Gibbs specifications with group-valued spins: checkerboard
// sweeps, boundary merging, gradient contraction and Gibbs-level entropy.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "subriem/corpus.hpp"
#include "subriem/errors.hpp"
#include "subriem/functionals.hpp"
#include "subriem/htype.hpp"
#include "subriem/inequality.hpp"
#include "subriem/measures.hpp"
#include "subriem/rng.hpp"
#include "subriem/stats.hpp"

namespace subriem {

// Pair potential of two adjacent spins; depends on horizontal parts only.
//   gauss:     M exp(-|x_a - x_b|^2 / 2)       bounded, |grad| <= M e^{-1/2}
//   quadratic: G x_a x_b                       1-D spins only, unbounded
struct Interaction {
  std::string kind = "gauss";
  double M = 1.0;
  double G = 1.0;

  double value(const GroupPoint& a, const GroupPoint& b) const {
    if (kind == "quadratic") return G * a.x[0] * b.x[0];
    return M * std::exp(-0.5 * (a.x - b.x).squaredNorm());
  }
  // Horizontal gradient in the second spin (a function of x only, so X_j = d/dx_j).
  Eigen::VectorXd grad_second(const GroupPoint& a, const GroupPoint& b) const {
    if (kind == "quadratic") return Eigen::VectorXd::Constant(1, G * a.x[0]);
    return (M * std::exp(-0.5 * (a.x - b.x).squaredNorm())) * (a.x - b.x);
  }
  bool bounded() const { return kind != "quadratic"; }
};

struct LatticeConfig {
  int D = 2;
  int side = 3;
  MeasureSpec site{presets::heisenberg(1), 2.0, 1.0, std::nullopt, std::nullopt};
  Interaction psi;
  double J = 0.0;
  std::optional<GroupPoint> boundary;  // fixed spin on the outer shell; identity when empty
  std::size_t pool_size = 20000;
  int metropolis_steps = 16;
  std::uint64_t seed = 11;

  std::size_t sites() const {
    std::size_t n = 1;
    for (int k = 0; k < D; ++k) n *= static_cast<std::size_t>(side);
    return n;
  }
  std::vector<int> coords(std::size_t i) const {
    std::vector<int> c(D);
    for (int k = 0; k < D; ++k) {
      c[k] = static_cast<int>(i % side);
      i /= side;
    }
    return c;
  }
  std::size_t index(const std::vector<int>& c) const {
    std::size_t i = 0;
    for (int k = D - 1; k >= 0; --k) i = i * side + c[k];
    return i;
  }
  std::size_t center() const { return index(std::vector<int>(D, side / 2)); }
  GroupPoint boundary_spin() const { return boundary ? *boundary : site.structure.identity(); }

  void validate() const {
    if (D < 1) throw ConfigError("lattice: D must be >= 1");
    if (side < 1) throw ConfigError("lattice: side must be positive");
    if (!std::isfinite(J)) throw ConfigError("lattice: J must be finite");
    if (pool_size < 100) throw ConfigError("lattice: pool_size must be >= 100");
    if (metropolis_steps < 1) throw ConfigError("lattice: metropolis_steps must be >= 1");
    site.validate();
    if (psi.kind != "gauss" && psi.kind != "quadratic") throw ConfigError("lattice: unknown interaction " + psi.kind);
    if (psi.kind == "quadratic" && (site.structure.m() != 1 || site.structure.n() != 0))
      throw ConfigError("lattice: the quadratic coupling needs 1-D Euclidean spins");
    if (boundary) site.structure.require(*boundary);
  }
};

// sup |psi| and sup |grad psi| over a grid of horizontal differences; both must be <= M.
struct InteractionBounds {
  double sup = 0.0, sup_grad = 0.0;
  bool ok = true;
};

inline InteractionBounds check_interaction_bounds(const LatticeConfig& cfg, int per_axis = 41, double half = 4.0) {
  InteractionBounds b;
  if (!cfg.psi.bounded()) {
    b.ok = false;
    b.sup = b.sup_grad = std::numeric_limits<double>::infinity();
    return b;
  }
  const auto& S = cfg.site.structure;
  GroupPoint a = S.identity();
  const int m = S.m();
  for (int i = 0; i < per_axis; ++i)
    for (int j = 0; j < (m >= 2 ? per_axis : 1); ++j) {
      GroupPoint g = S.identity();
      g.x[0] = -half + 2 * half * i / (per_axis - 1);
      if (m >= 2) g.x[1] = -half + 2 * half * j / (per_axis - 1);
      b.sup = std::max(b.sup, std::abs(cfg.psi.value(a, g)));
      b.sup_grad = std::max(b.sup_grad, cfg.psi.grad_second(a, g).norm());
    }
  b.ok = b.sup <= cfg.psi.M * (1 + 1e-12) && b.sup_grad <= cfg.psi.M * (1 + 1e-12);
  return b;
}

inline LatticeConfig lattice_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("lattice config must be an object");
  static const std::vector<std::string> keys{"D", "side", "site", "interaction", "J", "boundary",
                                             "pool_size", "metropolis_steps", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
      throw ConfigError("unknown key in lattice config: " + it.key());
  LatticeConfig c;
  c.D = j.value("D", 2);
  c.side = j.value("side", 3);
  if (j.contains("site")) c.site = measure_from_json(j.at("site"));
  if (j.contains("interaction")) {
    const auto& I = j.at("interaction");
    c.psi.kind = I.value("kind", std::string("gauss"));
    c.psi.M = I.value("M", 1.0);
    c.psi.G = I.value("G", 1.0);
  }
  c.J = j.value("J", 0.0);
  if (j.contains("boundary")) {
    const auto& b = j.at("boundary");
    GroupPoint g = c.site.structure.identity();
    const auto x = b.value("x", std::vector<double>{});
    const auto z = b.value("z", std::vector<double>{});
    if (x.size() != static_cast<std::size_t>(g.x.size()) || z.size() != static_cast<std::size_t>(g.z.size()))
      throw ConfigError("lattice boundary spin has the wrong dimensions");
    for (std::size_t i = 0; i < x.size(); ++i) g.x[i] = x[i];
    for (std::size_t i = 0; i < z.size(); ++i) g.z[i] = z[i];
    c.boundary = g;
  }
  c.pool_size = j.value("pool_size", c.pool_size);
  c.metropolis_steps = j.value("metropolis_steps", c.metropolis_steps);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

inline nlohmann::json to_json(const LatticeConfig& c) {
  nlohmann::json j{{"D", c.D}, {"side", c.side}, {"site", to_json(c.site)},
                   {"interaction", {{"kind", c.psi.kind}, {"M", c.psi.M}, {"G", c.psi.G}}},
                   {"J", c.J}, {"pool_size", c.pool_size}, {"metropolis_steps", c.metropolis_steps},
                   {"seed", c.seed}};
  const auto b = c.boundary_spin();
  j["boundary"] = {{"x", std::vector<double>(b.x.data(), b.x.data() + b.x.size())},
                   {"z", std::vector<double>(b.z.data(), b.z.data() + b.z.size())}};
  return j;
}

// Interior spins of the box, by linear site index.
struct SpinField {
  std::vector<GroupPoint> spins;
};

// Even/odd coordinate-sum classes; no lattice edge joins two sites of one class.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> checkerboard_partition(const LatticeConfig& cfg) {
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < cfg.sites(); ++i) {
    int s = 0;
    for (int c : cfg.coords(i)) s += c;
    (s % 2 == 0 ? out.first : out.second).push_back(i);
  }
  return out;
}

inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> checkerboard_partition(int D, int side) {
  LatticeConfig c;
  c.D = D;
  c.side = side;
  return checkerboard_partition(c);
}

// Box with neighbor lists, a pool of single-site draws from mu, and the local
// conditional machinery. Conditionals given the other class are products over
// sites with density e^{J H_i} relative to mu.
class GibbsModel {
 public:
  explicit GibbsModel(LatticeConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t n = cfg_.sites();
    nbrs_.resize(n);
    shell_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = cfg_.coords(i);
      for (int k = 0; k < cfg_.D; ++k)
        for (int dir : {-1, 1}) {
          auto cc = c;
          cc[k] += dir;
          if (cc[k] < 0 || cc[k] >= cfg_.side) ++shell_[i];
          else nbrs_[i].push_back(cfg_.index(cc));
        }
    }
    auto [a, b] = checkerboard_partition(cfg_);
    classes_[0] = std::move(a);
    classes_[1] = std::move(b);
    parity_.assign(n, 0);
    for (std::size_t i : classes_[1]) parity_[i] = 1;
    ChainConfig cc;
    cc.n_chains = 4;
    cc.thinning = 5;
    cc.n_samples = (cfg_.pool_size + cc.n_chains - 1) / cc.n_chains;
    cc.seed = derive_seed(cfg_.seed, 0x9001);
    pool_ = sample_measure(cfg_.site, cc);
    if (pool_.weighted()) throw UnsupportedError("gibbs: weighted single-site pools are not supported");
    omega_ = cfg_.boundary_spin();
  }

  const LatticeConfig& config() const { return cfg_; }
  const HTypeStructure& structure() const { return cfg_.site.structure; }
  const SampleSet& pool() const { return pool_; }
  std::size_t sites() const { return cfg_.sites(); }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return nbrs_[i]; }
  int shell_neighbors(std::size_t i) const { return shell_[i]; }
  const std::vector<std::size_t>& gamma(int k) const { return classes_[k]; }
  int parity(std::size_t i) const { return parity_[i]; }

  SpinField constant_field(const GroupPoint& g) const { return SpinField{std::vector<GroupPoint>(sites(), g)}; }

  // H_i(a) given the rest of the field.
  double local_energy(std::size_t i, const GroupPoint& a, const SpinField& f) const {
    double h = 0.0;
    for (std::size_t j : nbrs_[i]) h += cfg_.psi.value(a, f.spins[j]);
    if (shell_[i]) h += shell_[i] * cfg_.psi.value(a, omega_);
    return h;
  }

  // Independence Metropolis with pool proposals: the pool is mu, so the
  // acceptance ratio is e^{J (H(y) - H(cur))}.
  GroupPoint sample_site(std::size_t i, const SpinField& f, Rng& rng) const {
    GroupPoint cur = pool_.points[rng.index(pool_.size())];
    if (cfg_.J == 0.0) return cur;
    double hc = local_energy(i, cur, f);
    for (int k = 0; k < cfg_.metropolis_steps; ++k) {
      const auto& y = pool_.points[rng.index(pool_.size())];
      const double hy = local_energy(i, y, f);
      if (std::log(rng.uniform_open()) < cfg_.J * (hy - hc)) {
        cur = y;
        hc = hy;
      }
    }
    return cur;
  }

  // E_{Gamma_1} E_{Gamma_0}: resample class 0, then class 1. Each site has its own
  // stream, so the class can be updated concurrently.
  void sweep(SpinField& f, std::uint64_t seed) const {
    for (int k = 0; k < 2; ++k) {
      const auto& cls = classes_[k];
      std::vector<GroupPoint> next(cls.size());
      parallel_for(cls.size(), [&](std::size_t a) {
        Rng rng(derive_seed(seed, 2 * cls[a] + k));
        next[a] = sample_site(cls[a], f, rng);
      });
      for (std::size_t a = 0; a < cls.size(); ++a) f.spins[cls[a]] = std::move(next[a]);
    }
  }

  void require_single_class(const std::vector<std::size_t>& lambda) const {
    if (lambda.empty()) throw DomainError("gibbs: empty site set");
    for (std::size_t i : lambda) {
      if (i >= sites()) throw DomainError("gibbs: site index outside the box");
      if (parity_[i] != parity_[lambda.front()])
        throw RefusedError("gibbs: the site set spans both parity classes, so E_Lambda is not a product");
    }
  }

  // Self-normalized weights e^{J H_i(y_s)} of pool draws ys for site i.
  std::vector<double> site_weights(std::size_t i, const std::vector<const GroupPoint*>& ys, const SpinField& f) const {
    std::vector<double> lw(ys.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ys.size(); ++s) {
      lw[s] = cfg_.J * local_energy(i, *ys[s], f);
      mx = std::max(mx, lw[s]);
    }
    double tot = 0;
    for (auto& v : lw) tot += (v = std::exp(v - mx));
    for (auto& v : lw) v /= tot;
    return lw;
  }

  std::vector<const GroupPoint*> pool_draws(std::size_t k, Rng& rng) const {
    std::vector<const GroupPoint*> ys(k);
    for (auto& y : ys) y = &pool_.points[rng.index(pool_.size())];
    return ys;
  }

 private:
  LatticeConfig cfg_;
  std::vector<std::vector<std::size_t>> nbrs_;
  std::vector<int> shell_;
  std::vector<std::size_t> classes_[2];
  std::vector<int> parity_;
  SampleSet pool_;
  GroupPoint omega_;
};

// n joint draws of the spins in Lambda (one parity class) given omega.
inline std::vector<std::vector<GroupPoint>> local_spec_sample(const GibbsModel& G, const std::vector<std::size_t>& lambda,
                                                              const SpinField& omega, std::size_t n, std::uint64_t seed) {
  G.require_single_class(lambda);
  std::vector<std::vector<GroupPoint>> out(n, std::vector<GroupPoint>(lambda.size()));
  parallel_for(n, [&](std::size_t s) {
    Rng rng(derive_seed(seed, s));
    for (std::size_t a = 0; a < lambda.size(); ++a) out[s][a] = G.sample_site(lambda[a], omega, rng);
  });
  return out;
}

using FieldFunction = std::function<double(const SpinField&)>;

// E^omega_Lambda F by self-normalized importance sampling over pool draws (the
// weights are the product of the per-site Gibbs factors).
inline Estimate conditional_expectation(const GibbsModel& G, const std::vector<std::size_t>& lambda, const SpinField& omega,
                                        const FieldFunction& F, std::size_t n_inner, std::uint64_t seed,
                                        double min_ess = 10.0) {
  G.require_single_class(lambda);
  if (n_inner < 2) throw DomainError("conditional_expectation: n_inner must be >= 2");
  Rng rng(seed);
  std::vector<double> lw(n_inner), fv(n_inner);
  SpinField tmp = omega;
  for (std::size_t s = 0; s < n_inner; ++s) {
    double l = 0;
    for (std::size_t i : lambda) {
      tmp.spins[i] = G.pool().points[rng.index(G.pool().size())];
    }
    for (std::size_t i : lambda) l += G.config().J * G.local_energy(i, tmp.spins[i], tmp);
    lw[s] = l;
    fv[s] = detail::checked(F(tmp));
  }
  if (std::all_of(fv.begin(), fv.end(), [&](double v) { return v == fv[0]; })) return {fv[0], 0.0};
  const double mx = *std::max_element(lw.begin(), lw.end());
  double sw = 0, sw2 = 0, swf = 0;
  for (std::size_t s = 0; s < n_inner; ++s) {
    lw[s] = std::exp(lw[s] - mx);
    sw += lw[s];
    sw2 += lw[s] * lw[s];
    swf += lw[s] * fv[s];
  }
  const double ess = sw * sw / sw2;
  if (ess < min_ess) throw NumericError("conditional_expectation: importance weights degenerate (ESS " + std::to_string(ess) + ")");
  const double mean = swf / sw;
  double var = 0;
  for (std::size_t s = 0; s < n_inner; ++s) var += lw[s] * lw[s] * (fv[s] - mean) * (fv[s] - mean);
  return {mean, std::sqrt(var) / sw};
}

inline SpinField sweep_P(const GibbsModel& G, SpinField field, std::uint64_t seed) {
  G.sweep(field, seed);
  return field;
}

// ---------------------------------------------------------------------------
// Iterated sweeps from two starts.

struct SweepReport {
  std::size_t r_max = 0;
  std::vector<std::vector<Estimate>> f_estimates;  // [start][r], r = 0..r_max
  std::vector<Estimate> gaps;                      // |start 0 - start 1| per r
  std::optional<std::size_t> merged_at;            // first r with gap within 3 SE
  std::optional<double> fitted_rate;
  double rate_r2 = 0.0;
  std::string rate_status;  // "fitted", "no-contraction", "decorrelated"

  bool converged() const { return merged_at.has_value() && rate_status != "no-contraction"; }
};

inline nlohmann::json to_json(const SweepReport& r) {
  nlohmann::json j;
  j["r_max"] = r.r_max;
  nlohmann::json est = nlohmann::json::array();
  for (const auto& s : r.f_estimates) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : s) a.push_back(to_json(e));
    est.push_back(a);
  }
  j["f_estimates"] = est;
  nlohmann::json g = nlohmann::json::array();
  for (const auto& e : r.gaps) g.push_back(to_json(e));
  j["gaps"] = g;
  j["merged_at"] = r.merged_at ? nlohmann::json(*r.merged_at) : nlohmann::json(nullptr);
  j["fitted_rate"] = r.fitted_rate ? nlohmann::json(*r.fitted_rate) : nlohmann::json(r.rate_status);
  j["rate_r2"] = r.rate_r2;
  j["rate_status"] = r.rate_status;
  return j;
}

// P^r F from each start, averaged over independent chains; the geometric rate is
// a log-linear fit of the gap over the sweeps where it is significant.
inline SweepReport iterate_sweep(const GibbsModel& G, const FieldFunction& F, std::size_t r_max,
                                 const std::vector<SpinField>& starts, std::size_t n_chains, std::uint64_t seed) {
  if (starts.size() != 2) throw DomainError("iterate_sweep: need exactly two starts");
  if (n_chains < 4) throw DomainError("iterate_sweep: need at least 4 chains");
  SweepReport rep;
  rep.r_max = r_max;
  for (std::size_t s = 0; s < 2; ++s) {
    std::vector<std::vector<double>> vals(r_max + 1, std::vector<double>(n_chains));
    parallel_for(n_chains, [&](std::size_t c) {
      SpinField f = starts[s];
      vals[0][c] = detail::checked(F(f));
      const std::uint64_t cs = derive_seed(seed, s * 1000003ULL + c);
      for (std::size_t r = 1; r <= r_max; ++r) {
        G.sweep(f, derive_seed(cs, r));
        vals[r][c] = detail::checked(F(f));
      }
    });
    std::vector<Estimate> est;
    for (const auto& v : vals) est.push_back(batch_mean(v));
    rep.f_estimates.push_back(std::move(est));
  }
  std::vector<double> xr, yl;
  for (std::size_t r = 0; r <= r_max; ++r) {
    const auto& a = rep.f_estimates[0][r];
    const auto& b = rep.f_estimates[1][r];
    Estimate g{std::abs(a.mean - b.mean), combined_se(a.se, b.se)};
    rep.gaps.push_back(g);
    const bool significant = g.mean > 3 * g.se;
    if (!significant && !rep.merged_at) rep.merged_at = r;
    if (significant && !rep.merged_at) {
      xr.push_back(static_cast<double>(r));
      yl.push_back(std::log(g.mean));
    }
  }
  if (xr.size() >= 3) {
    const auto f = linear_fit(xr, yl);
    rep.rate_r2 = f.r2;
    if (f.slope + 2 * f.se_slope >= 0) {
      rep.rate_status = "no-contraction";
    } else {
      rep.rate_status = "fitted";
      rep.fitted_rate = std::min(1.0, std::exp(f.slope));
    }
  } else if (xr.size() == 2) {
    rep.rate_status = "fitted";
    rep.fitted_rate = std::min(1.0, std::exp(yl[1] - yl[0]));
    rep.rate_r2 = 1.0;
  } else {
    // Gap gone after at most one sweep.
    rep.rate_status = rep.merged_at ? "decorrelated" : "no-contraction";
  }
  if (!rep.merged_at) rep.rate_status = "no-contraction";
  return rep;
}

// ---------------------------------------------------------------------------
// Cylinder corpus: sums of single-site corpus functions.

struct CylinderFunction {
  std::string id;
  std::vector<std::pair<std::size_t, CorpusEntry>> terms;  // f = sum_k f_k(sigma_{i_k})
  bool unit_range = false;

  double operator()(const SpinField& s) const {
    double v = 0;
    for (const auto& [i, e] : terms) v += e.field(s.spins[i]);
    return v;
  }
  std::vector<std::size_t> support() const {
    std::vector<std::size_t> out;
    for (const auto& t : terms)
      if (std::find(out.begin(), out.end(), t.first) == out.end()) out.push_back(t.first);
    return out;
  }
  // Horizontal gradient in site i.
  Eigen::VectorXd site_gradient(const HTypeStructure& S, std::size_t i, const SpinField& s) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(S.m());
    for (const auto& [j, e] : terms)
      if (j == i) g += horizontal_gradient(S, e.field, s.spins[i]).components;
    return g;
  }
};

struct CylinderCorpus {
  std::string id;
  std::vector<CylinderFunction> entries;
};

inline const std::vector<std::string>& pair_entry_ids() {
  static const std::vector<std::string> ids{"x1", "d", "d_sq", "gauss_d", "tanh_d", "halfspace", "cos_x1"};
  return ids;
}

// Single-site corpus lifted to the center, plus center + right-neighbor sums.
inline CylinderCorpus cylinder_corpus(const GibbsModel& G) {
  CylinderCorpus c;
  c.id = "builtin:cylinder";
  const auto base = standard_corpus(G.config().site);
  const std::size_t ctr = G.config().center();
  for (const auto& e : base.entries) {
    CylinderFunction f;
    f.id = "center:" + e.id;
    f.terms.push_back({ctr, e});
    f.unit_range = e.unit_range;
    c.entries.push_back(std::move(f));
  }
  if (!G.neighbors(ctr).empty()) {
    const std::size_t nb = G.neighbors(ctr).back();
    for (const auto& id : pair_entry_ids()) {
      bool found = false;
      for (const auto& e : base.entries) found = found || e.id == id;
      if (!found) continue;
      CylinderFunction f;
      f.id = "pair:" + id;
      f.terms.push_back({ctr, base.at(id)});
      f.terms.push_back({nb, base.at(id)});
      c.entries.push_back(std::move(f));
    }
  }
  return c;
}

// Functions of the neighbor alone, for the contraction fit.
inline CylinderCorpus neighbor_corpus(const GibbsModel& G) {
  CylinderCorpus c;
  c.id = "builtin:neighbor";
  const auto base = standard_corpus(G.config().site);
  const std::size_t ctr = G.config().center();
  if (G.neighbors(ctr).empty()) throw DomainError("neighbor_corpus: the box has a single site");
  const std::size_t nb = G.neighbors(ctr).back();
  for (const auto& e : base.entries) {
    CylinderFunction f;
    f.id = "nbr:" + e.id;
    f.terms.push_back({nb, e});
    c.entries.push_back(std::move(f));
  }
  for (const auto& id : pair_entry_ids()) {
    CylinderFunction f;
    f.id = "pair:" + id;
    f.terms.push_back({ctr, base.at(id)});
    f.terms.push_back({nb, base.at(id)});
    c.entries.push_back(std::move(f));
  }
  return c;
}

// Long-run sweep chain from the boundary spin: the finite-box proxy for nu.
inline std::vector<SpinField> gibbs_samples(const GibbsModel& G, std::size_t n, std::size_t burn_in, std::uint64_t seed) {
  SpinField f = G.constant_field(G.config().boundary_spin());
  std::vector<SpinField> out;
  out.reserve(n);
  for (std::size_t r = 0; r < burn_in + n; ++r) {
    G.sweep(f, derive_seed(seed, r));
    if (r >= burn_in) out.push_back(f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient contraction.
//   nu|grad_{Gamma_0} E_{Gamma_1} f| <= nu|grad_{Gamma_0} f| + eps nu|grad_{Gamma_1} f|
// with |grad_Gamma| the l1 site sum. Given Gamma_0 the Gamma_1 sites are
// independent with density e^{J H_j} d mu, so for a term f_k(sigma_j), j in Gamma_1,
//   grad_{sigma_i} E[f_k] = J Cov_j(f_k(y), grad_2 psi(y, sigma_i)),
// estimated on pool draws with self-normalized weights.

struct ContractionConfig {
  std::size_t n_outer = 1000;
  std::size_t n_inner = 512;
  std::size_t max_inner = 8192;
  std::size_t burn_in = 50;
  std::uint64_t seed = 17;
};

inline InequalityReport verify_gradient_contraction(const GibbsModel& G, const CylinderCorpus& corpus,
                                                    const ContractionConfig& cc) {
  const auto& S = G.structure();
  const auto& cfg = G.config();
  const auto& pool = G.pool().points;
  const int m = S.m();
  const auto nu = gibbs_samples(G, cc.n_outer, cc.burn_in, derive_seed(cc.seed, 1));
  const std::size_t n = nu.size();
  InequalityReport rep;
  rep.kind = InequalityKind::GIBBS_CONTRACTION;
  rep.corpus_id = corpus.id;
  rep.sample_size = n;
  rep.n_eff = static_cast<double>(n);
  const auto& g0 = G.gamma(0);
  const auto& g1 = G.gamma(1);

  // Gamma_1 sites carrying corpus terms; their conditional draws are shared by all functions.
  std::vector<std::size_t> sites1;
  for (const auto& f : corpus.entries)
    for (const auto& t : f.terms)
      if (G.parity(t.first) == 1 && std::find(sites1.begin(), sites1.end(), t.first) == sites1.end())
        sites1.push_back(t.first);

  struct Inner {
    std::vector<std::size_t> idx;
    std::vector<double> w;
  };
  // draws[stream][s][k] for site sites1[k]
  auto make_draws = [&](std::size_t inner, std::uint64_t stream, std::size_t count) {
    std::vector<std::vector<Inner>> d(count, std::vector<Inner>(sites1.size()));
    parallel_for(count, [&](std::size_t s) {
      for (std::size_t k = 0; k < sites1.size(); ++k) {
        Rng rng(derive_seed(derive_seed(cc.seed, stream), s * 7919 + sites1[k]));
        std::vector<const GroupPoint*> ys(inner);
        auto& in = d[s][k];
        in.idx.resize(inner);
        for (std::size_t q = 0; q < inner; ++q) {
          in.idx[q] = rng.index(pool.size());
          ys[q] = &pool[in.idx[q]];
        }
        in.w = G.site_weights(sites1[k], ys, nu[s]);
      }
    });
    return d;
  };

  // lhs, nu|grad_0 f|, nu|grad_1 f| at outer sample s.
  auto evaluate = [&](const CylinderFunction& f, const std::vector<std::vector<double>>& fpool,
                      const std::vector<Inner>& draws, std::size_t s) {
    const auto& sigma = nu[s];
    std::array<double, 3> out{0, 0, 0};
    for (std::size_t i : g0) {
      Eigen::VectorXd gi = f.site_gradient(S, i, sigma);
      out[1] += gi.norm();
      if (cfg.J != 0.0) {
        for (std::size_t k = 0; k < sites1.size(); ++k) {
          const std::size_t j = sites1[k];
          if (fpool[k].empty()) continue;
          const auto& nb = G.neighbors(j);
          if (std::find(nb.begin(), nb.end(), i) == nb.end()) continue;
          const auto& in = draws[k];
          double fm = 0;
          Eigen::VectorXd gm = Eigen::VectorXd::Zero(m), fg = Eigen::VectorXd::Zero(m);
          for (std::size_t q = 0; q < in.idx.size(); ++q) {
            const double fv = fpool[k][in.idx[q]];
            const Eigen::VectorXd gp = cfg.psi.grad_second(pool[in.idx[q]], sigma.spins[i]);
            fm += in.w[q] * fv;
            gm += in.w[q] * gp;
            fg += (in.w[q] * fv) * gp;
          }
          gi += cfg.J * (fg - fm * gm);
        }
      }
      out[0] += gi.norm();
    }
    for (std::size_t j : g1) out[2] += f.site_gradient(S, j, sigma).norm();
    return out;
  };

  std::vector<std::vector<std::vector<double>>> fpools(corpus.entries.size());
  for (std::size_t e = 0; e < corpus.entries.size(); ++e) {
    const auto& f = corpus.entries[e];
    fpools[e].assign(sites1.size(), {});
    for (std::size_t k = 0; k < sites1.size(); ++k) {
      bool has = false;
      for (const auto& t : f.terms) has = has || t.first == sites1[k];
      if (!has) continue;
      auto& fp = fpools[e][k];
      fp.resize(pool.size());
      parallel_for(pool.size(), [&](std::size_t q) {
        double v = 0;
        for (const auto& [jj, en] : f.terms)
          if (jj == sites1[k]) v += en.field(pool[q]);
        fp[q] = detail::checked(v);
      });
    }
  }

  // Inner size doubles until the row that sets eps has inner SE <= 1/3 of its
  // outer SE. Rows whose true coupling is zero (z-functions here) are pure inner
  // noise at any size and are not used for this rule.
  std::size_t n_inner = cc.n_inner;
  double inner_ratio = 0.0;
  double eps_best = 0.0;
  Estimate eps_est{0.0, 0.0};
  for (;;) {
    const auto draws = make_draws(n_inner, 0, n);
    rep.per_function.clear();
    rep.violations.clear();
    eps_best = 0.0;
    eps_est = {0.0, 0.0};
    std::size_t arg = corpus.entries.size();
    std::vector<double> arg_lhs;
    for (std::size_t e = 0; e < corpus.entries.size(); ++e) {
      const auto& f = corpus.entries[e];
      std::vector<std::vector<double>> cols(3, std::vector<double>(n));
      parallel_for(n, [&](std::size_t s) {
        const auto v = evaluate(f, fpools[e], draws[s], s);
        for (int c = 0; c < 3; ++c) cols[c][s] = v[c];
      });
      BatchTable tab(3, cols, {});
      FunctionRow row;
      row.id = f.id;
      row.lhs = tab.jackknife([](std::span<const double> v) { return v[0]; });
      row.rhs["nu|grad_0 f|"] = tab.jackknife([](std::span<const double> v) { return v[1]; });
      row.rhs["nu|grad_1 f|"] = tab.jackknife([](std::span<const double> v) { return v[2]; });
      const auto B = row.rhs["nu|grad_1 f|"];
      if (B.mean == 0.0) {
        row.excluded = true;
        row.note = "no Gamma_1 gradient";
        const auto excess = tab.jackknife([](std::span<const double> v) { return v[0] - v[1]; });
        if (excess.mean > 3 * excess.se + 1e-12) rep.violations.push_back(f.id);
      } else {
        row.has_ratio = true;
        row.ratio = tab.jackknife([](std::span<const double> v) { return std::max(0.0, v[0] - v[1]) / v[2]; });
        if (row.ratio.mean > eps_best) {
          eps_best = row.ratio.mean;
          eps_est = row.ratio;
          arg = e;
          arg_lhs = cols[0];
        }
      }
      rep.per_function.push_back(std::move(row));
    }
    if (cfg.J == 0.0 || arg == corpus.entries.size()) break;
    const std::size_t probe = std::min<std::size_t>(64, n);
    const auto alt = make_draws(n_inner, 1, probe);
    double dv = 0;
    for (std::size_t s = 0; s < probe; ++s) {
      const double a = arg_lhs[s] - evaluate(corpus.entries[arg], fpools[arg], alt[s], s)[0];
      dv += 0.5 * a * a;
    }
    const double inner_se = std::sqrt(dv / probe / static_cast<double>(n));
    const double outer_se = batch_mean(arg_lhs).se;
    inner_ratio = outer_se > 0 ? inner_se / outer_se : 0.0;
    if (inner_ratio <= 1.0 / 3.0 || n_inner * 2 > cc.max_inner) break;
    n_inner *= 2;
  }
  if (inner_ratio > 1.0 / 3.0)
    rep.warnings.push_back("inner SE " + std::to_string(inner_ratio) + " x outer SE at the inner cap " + std::to_string(n_inner));
  rep.fitted_constants["eps"] = eps_est;
  rep.fitted_constants["J"] = {cfg.J, 0.0};
  rep.fitted_constants["n_inner"] = {static_cast<double>(n_inner), 0.0};
  rep.fitted_constants["inner_over_outer_se"] = {inner_ratio, 0.0};
  return rep;
}

// Proof-form threshold 1 / (32 M c0) with c0 the single-site Cheeger constant.
inline Estimate proof_threshold_J0(const GibbsModel& G, const Estimate& c0) {
  const double M = G.config().psi.M;
  const double v = 1.0 / (32.0 * M * c0.mean);
  return {v, v * c0.se / c0.mean};
}

// ---------------------------------------------------------------------------
// Gibbs-level entropy inequalities.

struct GibbsConfig {
  std::size_t n_sweeps = 2000;
  std::size_t burn_in = 100;
  std::size_t merge_chains = 32;
  std::size_t merge_r_max = 20;
  std::uint64_t seed = 11;
};

enum class SiteNorm { L1, L2, SQRT_N_L2 };

inline CorpusTable gibbs_corpus_table(const GibbsModel& G, const std::vector<SpinField>& nu, const CylinderCorpus& corpus,
                                      SiteNorm norm) {
  const auto& S = G.structure();
  const std::size_t n = nu.size();
  CorpusTable t;
  t.corpus_id = corpus.id;
  t.d.resize(n);
  t.U.resize(n);
  t.gradU.resize(n);
  const std::size_t ctr = G.config().center();
  for (std::size_t s = 0; s < n; ++s) {
    const auto& g = nu[s].spins[ctr];
    t.d[s] = G.config().site.distance(g);
    t.U[s] = G.config().site.potential(g);
  }
  for (const auto& f : corpus.entries) {
    t.ids.push_back(f.id);
    t.unit_range.push_back(f.unit_range);
    std::vector<double> v(n), gr(n);
    const auto sup = f.support();
    parallel_for(n, [&](std::size_t s) {
      v[s] = detail::checked(f(nu[s]));
      double l1 = 0, l2 = 0;
      for (std::size_t i : sup) {
        const double gi = f.site_gradient(S, i, nu[s]).norm();
        l1 += gi;
        l2 += gi * gi;
      }
      gr[s] = norm == SiteNorm::L1 ? l1 : norm == SiteNorm::L2 ? std::sqrt(l2) : std::sqrt(sup.size() * l2);
    });
    t.value.push_back(std::move(v));
    t.grad.push_back(std::move(gr));
  }
  t.ess = effective_sample_size(t.d);
  return t;
}

struct GibbsL1PhiResult {
  InequalityReport l1phi;   // Ent^Phi(|f|) <= C nu(sum_i |grad_i f|)
  InequalityReport ifi2;    // l2 site sum, Gaussian profile
  InequalityReport sqrt_n;  // l1 replaced by sqrt(N) times the l2 sum
  SweepReport sweep;
};

inline GibbsL1PhiResult verify_gibbs_l1phi(const GibbsModel& G, const CylinderCorpus& corpus, const PhiSpec& ps,
                                           const GibbsConfig& gc) {
  GibbsL1PhiResult out;
  const auto& site = G.config().site;
  const FieldFunction center_d = [&G, &site](const SpinField& f) { return site.distance(f.spins[G.config().center()]); };
  GroupPoint far = G.structure().identity();
  far.x[0] = 2.0 * site.length_scale();
  out.sweep = iterate_sweep(G, center_d, gc.merge_r_max, {G.constant_field(G.structure().identity()), G.constant_field(far)},
                            gc.merge_chains, derive_seed(gc.seed, 2));
  if (!out.sweep.converged())
    throw RefusedError("gibbs: sweep convergence not demonstrated at J = " + std::to_string(G.config().J) + " (" +
                       to_json(out.sweep).dump() + ")");
  const auto nu = gibbs_samples(G, gc.n_sweeps, gc.burn_in, derive_seed(gc.seed, 3));
  const auto t1 = gibbs_corpus_table(G, nu, corpus, SiteNorm::L1);
  out.l1phi = verify_l1phi_entropy(ps, t1);
  out.l1phi.kind = InequalityKind::GIBBS_L1PHI;
  const auto t2 = gibbs_corpus_table(G, nu, corpus, SiteNorm::L2);
  out.ifi2 = verify_ifi2(t2, ProfileTable(2.0));
  const auto t3 = gibbs_corpus_table(G, nu, corpus, SiteNorm::SQRT_N_L2);
  out.sqrt_n = verify_l1phi_entropy(ps, t3);
  out.sqrt_n.kind = InequalityKind::GIBBS_L1PHI;
  for (auto* r : {&out.l1phi, &out.ifi2, &out.sqrt_n}) {
    r->fitted_constants["J"] = {G.config().J, 0.0};
    r->fitted_constants["sweep_merged_at"] = {static_cast<double>(*out.sweep.merged_at), 0.0};
  }
  return out;
}

}  // namespace subriem
