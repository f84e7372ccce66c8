#include <gtest/gtest.h>

#include "subriem/gibbs.hpp"

using namespace subriem;

namespace {

LatticeConfig h1_lattice(double J, std::size_t pool = 8000) {
  LatticeConfig c;
  c.J = J;
  c.pool_size = pool;
  return c;
}

LatticeConfig gauss_1d_lattice(double J) {
  LatticeConfig c;
  c.site = MeasureSpec{presets::euclidean(1), 2.0, 1.0, std::nullopt, std::nullopt};
  c.psi.kind = "quadratic";
  c.psi.G = 1.0;
  c.J = J;
  c.pool_size = 20000;
  return c;
}

}  // namespace

TEST(Partition, ParityClasses) {
  auto [a, b] = checkerboard_partition(1, 4);
  EXPECT_EQ(a, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(b, (std::vector<std::size_t>{1, 3}));
  LatticeConfig c;
  c.side = 4;
  auto [g0, g1] = checkerboard_partition(c);
  EXPECT_NE(std::find(g0.begin(), g0.end(), c.index({0, 0})), g0.end());
  EXPECT_EQ(g0.size() + g1.size(), 16u);
  GibbsModel G(h1_lattice(0.0, 400));
  for (std::size_t i = 0; i < G.sites(); ++i)
    for (std::size_t j : G.neighbors(i)) EXPECT_NE(G.parity(i), G.parity(j));
  EXPECT_EQ(G.shell_neighbors(G.config().center()), 0);
  EXPECT_EQ(G.shell_neighbors(0), 2);
}

TEST(Lattice, ConfigAndBounds) {
  auto c = h1_lattice(0.1);
  auto b = check_interaction_bounds(c);
  EXPECT_TRUE(b.ok);
  EXPECT_NEAR(b.sup, 1.0, 1e-12);
  EXPECT_LE(b.sup_grad, std::exp(-0.5) + 1e-3);
  auto bad = c;
  bad.psi.kind = "quadratic";
  EXPECT_THROW(bad.validate(), ConfigError);
  auto j = to_json(c);
  auto back = lattice_from_json(j);
  EXPECT_EQ(back.side, 3);
  EXPECT_EQ(back.J, 0.1);
  EXPECT_THROW(lattice_from_json({{"D", 2}, {"bogus", 1}}), ConfigError);
  EXPECT_FALSE(check_interaction_bounds(gauss_1d_lattice(0.1)).ok);
}

TEST(LocalSpec, FreeSitesFollowMu) {
  GibbsModel G(h1_lattice(0.0));
  auto omega = G.constant_field(G.structure().identity());
  const std::size_t c = G.config().center();
  auto draws = local_spec_sample(G, {c}, omega, 3000, 5);
  ChainConfig cc;
  cc.n_samples = 3000;
  cc.thinning = 5;
  cc.seed = 99;
  auto ref = sample_measure(G.config().site, cc);
  std::vector<double> a, b(ref.distances);
  for (const auto& d : draws) a.push_back(G.config().site.distance(d[0]));
  EXPECT_GT(ks_two_sample(a, b).p_value, 0.01);
  auto [g0, g1] = checkerboard_partition(G.config());
  EXPECT_THROW(local_spec_sample(G, {g0[0], g1[0]}, omega, 10, 1), RefusedError);
}

TEST(LocalSpec, ProductStructure) {
  GibbsModel G(h1_lattice(0.5));
  auto omega = G.constant_field(G.structure().identity());
  const auto& g0 = G.gamma(0);
  auto draws = local_spec_sample(G, {g0[0], g0[1]}, omega, 4000, 6);
  std::vector<double> prod, a, b;
  for (const auto& d : draws) {
    a.push_back(d[0].x[0]);
    b.push_back(d[1].x[0]);
  }
  const double ma = batch_mean(a).mean, mb = batch_mean(b).mean;
  for (std::size_t s = 0; s < a.size(); ++s) prod.push_back((a[s] - ma) * (b[s] - mb));
  auto cov = batch_mean(prod);
  EXPECT_NEAR(cov.mean, 0.0, 3 * cov.se);
}

TEST(Conditional, TrivialAndGaussianOracle) {
  GibbsModel G(gauss_1d_lattice(0.3));
  auto omega = G.constant_field(G.structure().identity());
  const std::size_t c = G.config().center();
  for (std::size_t j : G.neighbors(c)) omega.spins[j].x[0] = 0.5 + 0.25 * static_cast<double>(j % 3);
  // Outside Lambda: exact.
  const std::size_t other = G.neighbors(c).front();
  auto out = conditional_expectation(G, {c}, omega, [other](const SpinField& f) { return f.spins[other].x[0]; }, 64, 1);
  EXPECT_EQ(out.mean, omega.spins[other].x[0]);
  EXPECT_EQ(out.se, 0.0);
  auto one = conditional_expectation(G, {c}, omega, [](const SpinField&) { return 1.0; }, 64, 1);
  EXPECT_EQ(one.mean, 1.0);
  // Density e^{-x^2 + J G x S}: mean J G S / 2.
  double S = 0;
  for (std::size_t j : G.neighbors(c)) S += omega.spins[j].x[0];
  auto m = conditional_expectation(G, {c}, omega, [c](const SpinField& f) { return f.spins[c].x[0]; }, 20000, 2);
  EXPECT_NEAR(m.mean, 0.3 * S / 2, 3 * m.se);
  // The sampler agrees.
  auto draws = local_spec_sample(G, {c}, omega, 8000, 3);
  std::vector<double> v;
  for (const auto& d : draws) v.push_back(d[0].x[0]);
  auto e = batch_mean(v);
  EXPECT_NEAR(e.mean, 0.3 * S / 2, 3 * e.se + 0.01);
}

TEST(Sweep, FreeSweepDecorrelatesAndIsDeterministic) {
  GibbsModel G(h1_lattice(0.0));
  auto f = G.constant_field(G.structure().identity());
  const std::size_t c = G.config().center();
  std::vector<double> a, b;
  for (int r = 0; r < 2000; ++r) {
    G.sweep(f, derive_seed(4, r));
    a.push_back(f.spins[c].x[0]);
  }
  for (std::size_t r = 1; r < a.size(); ++r) b.push_back(a[r] * a[r - 1]);
  auto cor = batch_mean(b);
  EXPECT_NEAR(cor.mean, 0.0, 3 * cor.se);
  auto x = sweep_P(G, G.constant_field(G.structure().identity()), 77);
  auto y = sweep_P(G, G.constant_field(G.structure().identity()), 77);
  for (std::size_t i = 0; i < G.sites(); ++i) EXPECT_EQ(x.spins[i], y.spins[i]);
}

TEST(Sweep, StartsMerge) {
  for (double J : {0.0, 0.3}) {
    GibbsModel G(h1_lattice(J));
    const std::size_t c = G.config().center();
    const auto& site = G.config().site;
    FieldFunction F = [&](const SpinField& f) { return site.distance(f.spins[c]); };
    GroupPoint far = G.structure().identity();
    far.x[0] = 2.0;
    auto rep = iterate_sweep(G, F, 20, {G.constant_field(G.structure().identity()), G.constant_field(far)}, 64, 8);
    ASSERT_TRUE(rep.merged_at.has_value()) << J;
    EXPECT_LE(*rep.merged_at, 20u);
    EXPECT_TRUE(rep.converged());
    if (J == 0.0) {
      EXPECT_LE(*rep.merged_at, 1u);
      EXPECT_EQ(rep.rate_status, "decorrelated");
    }
  }
}

TEST(Contraction, ZeroAtJZeroAndGrowing) {
  ContractionConfig cc;
  cc.n_outer = 400;
  cc.n_inner = 256;
  double prev = -1;
  for (double J : {0.0, 0.2, 0.4}) {
    GibbsModel G(h1_lattice(J));
    auto rep = verify_gradient_contraction(G, neighbor_corpus(G), cc);
    const auto eps = rep.constant("eps");
    if (J == 0.0) {
      EXPECT_EQ(eps.mean, 0.0);
    } else {
      EXPECT_GT(eps.mean, prev);
      EXPECT_LT(eps.mean, 1.0);
    }
    EXPECT_TRUE(rep.violations.empty());
    prev = eps.mean;
  }
}

TEST(GibbsEntropy, TensorizesAtJZero) {
  GibbsModel G(h1_lattice(0.0, 20000));
  GibbsConfig gc;
  gc.n_sweeps = 4000;
  gc.merge_chains = 16;
  gc.merge_r_max = 4;
  const PhiSpec ps(0.5);
  auto res = verify_gibbs_l1phi(G, cylinder_corpus(G), ps, gc);
  EXPECT_TRUE(res.l1phi.violations.empty());
  // Single-site constant on an independent mu sample.
  ChainConfig cc;
  cc.n_samples = 4000;
  cc.thinning = 5;
  cc.seed = 123;
  auto s = sample_measure(G.config().site, cc);
  auto single = verify_l1phi_entropy(ps, build_corpus_table(G.config().site, s, standard_corpus(G.config().site)));
  const auto a = res.l1phi.constant("c"), b = single.constant("c");
  EXPECT_NEAR(a.mean, b.mean, 3 * std::hypot(a.se, b.se));
  EXPECT_TRUE(std::isfinite(res.ifi2.constant("C''").mean));
  EXPECT_TRUE(std::isfinite(res.sqrt_n.constant("c").mean));
}
