#include <gtest/gtest.h>

#include <chrono>
#include <numbers>

#include "subriem/isoperimetry.hpp"

using namespace subriem;

namespace {

MeasureSpec gaussian_1d() { return MeasureSpec{presets::euclidean(1), 2.0, 1.0, std::nullopt, std::nullopt}; }
MeasureSpec h1_spec() { return MeasureSpec{presets::heisenberg(1), 2.0, 1.0, std::nullopt, std::nullopt}; }

SampleSet draw(const MeasureSpec& spec, std::size_t per_chain, std::uint64_t seed) {
  ChainConfig c;
  c.n_samples = per_chain;
  c.seed = seed;
  return sample_measure(spec, c);
}

const SampleSet& gauss_samples() {
  static SampleSet s = draw(gaussian_1d(), 25000, 21);
  return s;
}
const SampleSet& h1_samples() {
  static SampleSet s = draw(h1_spec(), 10000, 22);
  return s;
}

Eigen::VectorXd e1(int m) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
  v[0] = 1;
  return v;
}

}  // namespace

TEST(Eta, FrozenValuesAndGrid) {
  EXPECT_NEAR(eta_constant(1.0), std::log(3.0) / std::log(2.0) - 1, 1e-15);
  EXPECT_NEAR(eta_constant(1.0), 0.5849625007, 1e-9);
  EXPECT_NEAR(eta_constant(0.5), std::sqrt(std::log(3.0) / std::log(2.0)) - 1, 1e-15);
  for (double b : {1.0, 0.5}) {
    auto c = check_eta_estimate(b, 1000);
    EXPECT_EQ(c.points, 1000u);
    EXPECT_EQ(c.violations, 0u) << b;
    EXPECT_LT(c.max_excess, 1e-12);
  }
}

TEST(Profile, Dominance) {
  ProfileTable u2(2.0, 401), u43(4.0 / 3.0, 401);
  const double c = profile_dominance(u2, u43);
  EXPECT_TRUE(std::isfinite(c));
  EXPECT_GT(c, 0.0);
  EXPECT_THROW(profile_dominance(u43, u2), DomainError);
}

TEST(TestSets, MembershipAndParsing) {
  auto s = presets::heisenberg(1);
  auto b = test_set_from_string("ball:1.5", s);
  EXPECT_TRUE(b.contains(s, s.identity()));
  auto c = test_set_from_string("complement:ball:1.5", s);
  EXPECT_FALSE(c.contains(s, s.identity()));
  EXPECT_EQ(c.label, "complement:ball:1.5");
  EXPECT_EQ(c.complemented().label, "ball:1.5");
  auto h = test_set_from_string("halfspace:0.5:0,2", s);
  GroupPoint g{Eigen::Vector2d(0, 0.2), Eigen::VectorXd::Constant(1, 3.0)};
  EXPECT_TRUE(h.contains(s, g));
  EXPECT_NEAR(h.exact_distance(s, GroupPoint{Eigen::Vector2d(0, 1.0), Eigen::VectorXd::Zero(1)}), 0.75, 1e-15);
  EXPECT_THROW(test_set_from_string("ball:x", s), ConfigError);
  EXPECT_THROW(test_set_from_string("cube:1", s), ConfigError);
  EXPECT_THROW(TestSet::ball(-1), DomainError);
  BoundaryConfig cfg;
  cfg.ladder = {0.1, 0.2, 0.05, 0.025};
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg.ladder = {0.1, 0.05};
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(Surface, EuclideanHalfLine) {
  const auto& s = gauss_samples();
  auto cfg = default_boundary_config(gaussian_1d());
  auto A = TestSet::half_space(e1(1), 0.0);
  auto se = boundary_measure(A, s, cfg);
  EXPECT_TRUE(se.stable) << se.status;
  EXPECT_NEAR(se.mu_plus.mean, 1 / std::sqrt(std::numbers::pi), 3 * se.mu_plus.se);
  EXPECT_NEAR(se.mu_A.mean, 0.5, 3 * se.mu_A.se);
  EXPECT_EQ(se.eps_ladder.size(), 4u);
  // Enlargements only grow the set.
  for (const auto& [e, d] : se.eps_ladder) EXPECT_GE(d.mean, 0.0);
  // eps huge: everything.
  EXPECT_EQ(enlargement_measure(A, 1e6, s, cfg).mean, 1.0);
  // A = everything: no boundary.
  auto all = boundary_measure(TestSet::half_space(e1(1), 1e6), s, cfg);
  EXPECT_EQ(all.mu_plus.mean, 0.0);
  EXPECT_EQ(all.mu_A.mean, 1.0);
  // The cloud path agrees with the closed form on a half-line.
  auto forced = cfg;
  forced.force_cloud = true;
  auto sc = boundary_measure(A, s, forced);
  EXPECT_NEAR(sc.mu_plus.mean, se.mu_plus.mean, 1e-6);
}

TEST(Surface, HeisenbergBallMatchesRadialDerivative) {
  const auto spec = h1_spec();
  // Ball distances are closed form, so a large sample is cheap; small ones leave the ladder noisy.
  const auto s = draw(spec, 50000, 23);
  auto cfg = default_boundary_config(spec);
  for (double r : {1.0, 2.0}) {
    auto se = boundary_measure(TestSet::ball(r), s, cfg);
    EXPECT_TRUE(se.stable) << se.status;
    EXPECT_NEAR(se.mu_plus.mean, ball_surface_closed_form(spec, r), 3 * se.mu_plus.se) << r;
    EXPECT_NEAR(se.mu_A.mean, ball_measure_closed_form(spec, r), 3 * se.mu_A.se) << r;
  }
}

TEST(Surface, BallEnlargementIsLargerBall) {
  const auto& s = h1_samples();
  auto cfg = default_boundary_config(h1_spec());
  cfg.force_cloud = true;
  const double eps = 0.1;
  auto t0 = std::chrono::steady_clock::now();
  auto via_cloud = enlargement_measure(TestSet::ball(1.5), eps, s, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cfg.force_cloud = false;
  auto larger = enlargement_measure(TestSet::ball(1.5 + eps), 1e-300, s, cfg);
  EXPECT_NEAR(via_cloud.mean, larger.mean, 3 * std::max(via_cloud.se, 1e-4));
  RecordProperty("cloud_seconds", std::to_string(secs));
}

TEST(Surface, RadialComplementMatchesCloud) {
  const auto& s = h1_samples();
  auto cfg = default_boundary_config(h1_spec());
  auto A = TestSet::ball(1.5).complemented();
  const double eps = cfg.ladder.front();
  auto fast = set_distances(A, s, eps, cfg);
  cfg.force_cloud = true;
  auto slow = set_distances(A, s, eps, cfg);
  // The radial value is an attained lower bound; the cloud can only overshoot.
  std::size_t both = 0, close = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isfinite(fast.distance[i]) && std::isfinite(slow.distance[i])) {
      ++both;
      EXPECT_LE(fast.distance[i], slow.distance[i] + 1e-6) << i;
      close += std::abs(fast.distance[i] - slow.distance[i]) < 2e-3;
    }
  }
  EXPECT_GT(both, 100u);
  EXPECT_GE(close, both - both / 1000);
}

TEST(Iso, ComplementInvariance) {
  const auto& s = h1_samples();
  auto cfg = default_boundary_config(h1_spec());
  ProfileTable pt(2.0, 401);
  auto A = TestSet::ball(1.5);
  auto ra = iso_ratio(A, s, pt, cfg);
  auto rc = iso_ratio(A.complemented(), s, pt, cfg);
  ASSERT_TRUE(ra.defined) << ra.status;
  ASSERT_TRUE(rc.defined) << rc.status;
  EXPECT_NEAR(ra.ratio.mean, rc.ratio.mean, 3 * std::hypot(ra.ratio.se, rc.ratio.se));
  // mu(A) in {0, 1}: ratio 0.
  auto all = iso_ratio(TestSet::ball(1e3), s, pt, cfg);
  EXPECT_TRUE(all.defined);
  EXPECT_EQ(all.ratio.mean, 0.0);
}

TEST(Iso, BallFamilyFinite) {
  const auto& s = h1_samples();
  auto cfg = default_boundary_config(h1_spec());
  ProfileTable pt(2.0, 401);
  std::vector<TestSet> sets;
  for (double r : {0.75, 1.0, 1.5, 2.0, 2.5}) sets.push_back(TestSet::ball(r));
  auto rep = verify_isoperimetry(sets, s, pt, cfg);
  EXPECT_TRUE(std::isfinite(rep.constant("c_tilde").mean));
  EXPECT_GT(rep.constant("c_tilde").mean, 0.0);
  EXPECT_TRUE(rep.violations.empty());
}

TEST(Coarea, LinearAndConstant) {
  const auto& s = gauss_samples();
  auto cfg = default_boundary_config(gaussian_1d());
  ScalarField x;
  x.eval = [](const GroupPoint& g) { return g.x[0]; };
  std::vector<double> v(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) v[i] = s.points[i].x[0];
  auto rep = coarea_check(x, "x1", s, default_levels(v, 12), cfg);
  EXPECT_TRUE(rep.violations.empty());
  EXPECT_NEAR(rep.constant("mu|grad f|").mean, 1.0, 1e-9);
  // The levels span 98% of the mass, so the sum is a little below 1.
  EXPECT_NEAR(rep.constant("sum mu+ ds").mean, 0.98, 0.1);

  ScalarField one;
  one.eval = [](const GroupPoint&) { return 1.0; };
  auto c = coarea_check(one, "const", s, {0.0, 1.0}, cfg);
  EXPECT_EQ(c.constant("mu|grad f|").mean, 0.0);
  EXPECT_EQ(c.constant("sum mu+ ds").mean, 0.0);
  EXPECT_TRUE(c.violations.empty());
}

TEST(Coarea, HeisenbergCorpus) {
  const auto spec = h1_spec();
  const auto& s = h1_samples();
  auto cfg = default_boundary_config(spec);
  auto t0 = std::chrono::steady_clock::now();
  auto rep = coarea_corpus(standard_corpus(spec), s, cfg, 8);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_TRUE(rep.violations.empty());
  EXPECT_GE(rep.per_function.size(), 20u);
  RecordProperty("seconds", std::to_string(secs));
}
