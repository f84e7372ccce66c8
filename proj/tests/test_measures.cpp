#include <gtest/gtest.h>

#include <numbers>

#include "subriem/measures.hpp"

using namespace subriem;

namespace {

MeasureSpec gaussian_1d() { return MeasureSpec{presets::euclidean(1), 2.0, 1.0, std::nullopt, std::nullopt}; }
MeasureSpec h1_spec(double alpha = 1.0) {
  return MeasureSpec{presets::heisenberg(1), 2.0, alpha, std::nullopt, std::nullopt};
}

ChainConfig chain(std::size_t n, std::uint64_t seed) {
  ChainConfig c;
  c.n_samples = n;
  c.n_chains = 4;
  c.seed = seed;
  return c;
}

ScalarField field(std::function<double(const GroupPoint&)> f) {
  ScalarField s;
  s.eval = std::move(f);
  return s;
}

}  // namespace

TEST(MeasureSpec, Validation) {
  auto s = gaussian_1d();
  s.p = 1.0;
  EXPECT_THROW(s.validate(), DomainError);
  s = gaussian_1d();
  s.alpha = 0.0;
  EXPECT_THROW(s.validate(), DomainError);
  EXPECT_DOUBLE_EQ(h1_spec().beta(), 0.5);
  EXPECT_THROW(measure_from_json({{"group", "heisenberg1"}, {"q", 2}}), ConfigError);
  auto j = measure_from_json({{"group", "heisenberg1"}, {"p", 3}, {"alpha", 0.5}, {"V", {{"type", "cos"}, {"coef", 0.3}}}});
  EXPECT_EQ(to_json(measure_from_json(to_json(j))), to_json(j));
  EXPECT_THROW(make_perturbation({{"type", "cubic"}}), ConfigError);
}

TEST(Sampler, GaussianSecondMoment) {
  auto s = sample_measure(gaussian_1d(), chain(25000, 7));
  std::vector<double> d2(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) d2[i] = s.distances[i] * s.distances[i];
  auto e = estimate_expectation(s, d2);
  EXPECT_NEAR(e.mean, 0.5, 3 * e.se);
  auto ax = estimate_expectation(s, field([](const GroupPoint& g) { return std::abs(g.x[0]); }));
  EXPECT_NEAR(ax.mean, 1 / std::sqrt(std::numbers::pi), 3 * ax.se);
  for (const auto& c : s.meta.chains) {
    EXPECT_GE(c.acceptance_rate, 0.15);
    EXPECT_LE(c.acceptance_rate, 0.6);
    EXPECT_GT(c.ess, 1000);
  }
}

TEST(Sampler, ErrorsAndDeterminism) {
  auto c = chain(0, 1);
  EXPECT_THROW(sample_measure(gaussian_1d(), c), DomainError);
  auto a = sample_measure(h1_spec(), chain(2000, 5));
  auto b = sample_measure(h1_spec(), chain(2000, 5));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.points[i], b.points[i]);
  auto bad = chain(2000, 5);
  bad.proposal_scale = 500;
  EXPECT_THROW(sample_measure(h1_spec(), bad), TuningError);
}

TEST(Sampler, ThreadCountInvariant) {
  setenv("SUBRIEM_THREADS", "1", 1);
  auto a = sample_measure(h1_spec(), chain(1000, 9));
  setenv("SUBRIEM_THREADS", "4", 1);
  auto b = sample_measure(h1_spec(), chain(1000, 9));
  unsetenv("SUBRIEM_THREADS");
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.points[i], b.points[i]);
}

TEST(Expectation, Trivial) {
  auto s = sample_measure(h1_spec(), chain(1000, 3));
  auto one = estimate_expectation(s, field([](const GroupPoint&) { return 1.0; }));
  EXPECT_DOUBLE_EQ(one.mean, 1.0);
  EXPECT_NEAR(one.se, 0.0, 1e-15);
  auto half = estimate_expectation(s, field([](const GroupPoint& g) { return g.x[0] > 0 ? 1.0 : 0.0; }));
  EXPECT_GE(half.mean, 0.0);
  EXPECT_LE(half.mean, 1.0);
  s.weights.assign(s.size(), 0.0);
  EXPECT_THROW(estimate_expectation(s, field([](const GroupPoint&) { return 1.0; })), DegenerateError);
}

TEST(Expectation, HeisenbergRadialMoment) {
  // E[d^2] under exp(-d^2) on H^1: by homogeneity, Q / (2 alpha) with Q = 4.
  auto s = sample_measure(h1_spec(), chain(25000, 11));
  std::vector<double> d2(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) d2[i] = s.distances[i] * s.distances[i];
  auto e = estimate_expectation(s, d2);
  EXPECT_NEAR(e.mean, 2.0, 3 * e.se);
}

TEST(Normalization, Gaussian) {
  auto spec = gaussian_1d();
  auto z = estimate_normalization(spec, default_box(spec), 8);
  EXPECT_NEAR(z.value, std::sqrt(std::numbers::pi), 1e-6);
  EXPECT_LT(z.doubling_change, 1e-8);
  auto spec2 = spec;
  spec2.alpha = 2.0;
  EXPECT_LT(estimate_normalization(spec2, default_box(spec2), 8).value, z.value);
  EXPECT_THROW(estimate_normalization(spec, 0.5, 8), TruncationError);
}

TEST(Normalization, HeisenbergHomogeneity) {
  // Z(alpha) = alpha^{-Q/p} Z(1), and Z(1) = Gamma(Q/p + 1) |B_1|.
  auto z1 = estimate_normalization(h1_spec(1.0), default_box(h1_spec(1.0)), 8);
  auto z2 = estimate_normalization(h1_spec(2.0), default_box(h1_spec(2.0)), 8);
  EXPECT_NEAR(z2.value, z1.value / 4.0, 1e-10 * z1.value);
  // Independent check by brute-force quadrature in (|x|, |z|).
  const double brute = detail::cylinder_normalization(h1_spec(1.0), 8.0, 2, 1e-8);
  EXPECT_NEAR(z1.value, brute, 1e-6 * brute);
}

TEST(Normalization, PerturbedTensorQuadrature) {
  // W = c x^2 on R^1: Z = sqrt(pi / (1 + c)).
  auto spec = gaussian_1d();
  spec.W = make_perturbation({{"type", "quadratic"}, {"coef", 0.5}});
  auto z = estimate_normalization(spec, default_box(spec), 8);
  EXPECT_EQ(z.method, "tensor_quadrature");
  EXPECT_NEAR(z.value, std::sqrt(std::numbers::pi / 1.5), 1e-8);
}

TEST(Sampler, ReweightingMatchesDirect) {
  auto base = gaussian_1d();
  auto pert = base;
  pert.W = make_perturbation({{"type", "quadratic"}, {"coef", 0.5}});
  pert.V = make_perturbation({{"type", "cos"}, {"coef", 0.4}});
  auto direct = sample_measure(pert, chain(20000, 2));
  auto rew = reweight(sample_measure(base, chain(20000, 3)), pert);
  auto sq = field([](const GroupPoint& g) { return g.x[0] * g.x[0]; });
  auto a = estimate_expectation(direct, sq), b = estimate_expectation(rew, sq);
  EXPECT_NEAR(a.mean, b.mean, 3 * combined_se(a.se, b.se));
  EXPECT_GT(direct.meta.v_oscillation, 0.5);
  EXPECT_LE(direct.meta.v_oscillation, 0.8 + 1e-12);
}

TEST(Sampler, DetailedBalanceTwoState) {
  // Two-state target pi = (1/3, 2/3) with symmetric proposal: P(0->1) = 1,
  // P(1->0) = 1/2 under the Metropolis rule.
  const double u[2] = {std::log(3.0), std::log(1.5)};
  Rng rng(4);
  int state = 0, from0 = 0, to1 = 0, from1 = 0, to0 = 0;
  for (int i = 0; i < 200000; ++i) {
    const int prop = 1 - state;
    const bool acc = detail::metropolis_accept(std::log(rng.uniform_open()), u[state], u[prop]);
    (state == 0 ? from0 : from1)++;
    if (acc) {
      (state == 0 ? to1 : to0)++;
      state = prop;
    }
  }
  const double p10 = static_cast<double>(to0) / from1;
  EXPECT_EQ(to1, from0);
  EXPECT_NEAR(p10, 0.5, 3 * std::sqrt(0.25 / from1));
}

TEST(Sampler, DilationCovariance) {
  // d under alpha' = alpha r^p equals (1/r) d under alpha in law.
  const double r = 2.0;
  auto a = sample_measure(h1_spec(1.0), chain(5000, 21));
  auto b = sample_measure(h1_spec(4.0), chain(5000, 22));
  std::vector<double> da, db;
  for (std::size_t i = 0; i < a.size(); i += 10) da.push_back(a.distances[i] / r);
  for (std::size_t i = 0; i < b.size(); i += 10) db.push_back(b.distances[i]);
  EXPECT_GT(ks_two_sample(da, db).p_value, 0.01);
}
