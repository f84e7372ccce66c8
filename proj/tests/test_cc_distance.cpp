#include <gtest/gtest.h>

#include <chrono>
#include <numbers>

#include "subriem/cc_distance.hpp"

using namespace subriem;

namespace {

GroupPoint h1(double x, double y, double t) {
  return {Eigen::Vector2d(x, y), Eigen::VectorXd::Constant(1, t)};
}

GroupPoint random_point(const HTypeStructure& s, Rng& rng) {
  GroupPoint g = s.identity();
  for (int i = 0; i < s.m(); ++i) g.x[i] = rng.normal();
  for (int k = 0; k < s.n(); ++k) g.z[k] = rng.normal();
  return g;
}

}  // namespace

TEST(CcDistance, Identity) {
  auto s = presets::heisenberg(1);
  EXPECT_EQ(cc_distance(s, s.identity()).distance, 0.0);
}

TEST(CcDistance, HorizontalPoints) {
  auto s = presets::heisenberg(2);
  GroupPoint g{Eigen::Vector4d(0.3, -1, 2, 0.5), Eigen::VectorXd::Zero(1)};
  EXPECT_NEAR(cc_distance(s, g).distance, g.x.norm(), 1e-12);
}

TEST(CcDistance, CenterAxis) {
  auto s = presets::heisenberg(1);
  auto sol = cc_distance(s, h1(0, 0, 1));
  EXPECT_NEAR(sol.distance, std::sqrt(4 * std::numbers::pi), 1e-12);
  EXPECT_EQ(sol.arc_parameter, std::numbers::pi);
  // Continuity across the axis band.
  EXPECT_NEAR(cc_distance(s, h1(1e-7, 0, 1)).distance, std::sqrt(4 * std::numbers::pi), 1e-6);
  EXPECT_NEAR(cc_distance(s, h1(1e-9, 0, 1)).distance, std::sqrt(4 * std::numbers::pi), 1e-8);
}

TEST(CcDistance, FrozenValues) {
  // Solved independently: theta from (2 theta - sin 2 theta) / (8 sin^2 theta) = t / r^2.
  auto s = presets::heisenberg(1);
  // t = pi/8 at r = 1 gives theta = pi/2 and d = pi/2.
  EXPECT_NEAR(cc_distance(s, h1(1, 0, std::numbers::pi / 8)).distance, std::numbers::pi / 2, 1e-12);
  EXPECT_NEAR(cc_distance(s, h1(1, 0, std::numbers::pi / 8)).arc_parameter, std::numbers::pi / 2, 1e-10);
  // theta = pi/4: mu = (pi/2 - 1) / 4, d = pi / (4 sin(pi/4)).
  EXPECT_NEAR(cc_distance(s, h1(0, 1, (std::numbers::pi / 2 - 1) / 4)).distance,
              std::numbers::pi / (4 * std::sin(std::numbers::pi / 4)), 1e-12);
  // theta = 3 pi / 4: mu = (3 pi / 2 + 1) / 4, d = (3 pi / 4) / sin(3 pi / 4).
  EXPECT_NEAR(cc_distance(s, h1(1, 0, (1.5 * std::numbers::pi + 1) / 4)).distance,
              0.75 * std::numbers::pi / std::sin(0.75 * std::numbers::pi), 1e-12);
}

TEST(CcDistance, ResidualAndInvariants) {
  for (const auto& s : {presets::heisenberg(1), presets::heisenberg(2), presets::quaternionic()}) {
    Rng rng(42);
    for (int t = 0; t < 100; ++t) {
      auto g = random_point(s, rng);
      auto sol = cc_distance(s, g);
      EXPECT_LE(sol.residual, 1e-12);
      EXPECT_GE(sol.distance, g.x.norm() - 1e-12);
      EXPECT_GE(sol.distance, kaplan_norm(g) * (1 - 1e-12));
      EXPECT_NEAR(cc_distance(s, group_inverse(g)).distance, sol.distance, 1e-10);
      for (double r : {0.1, 1.0, 10.0})
        EXPECT_LE(std::abs(cc_distance(s, dilate(g, r)).distance - r * sol.distance), 1e-9 * (1 + r * sol.distance));
      auto h = random_point(s, rng);
      EXPECT_LE(distance(s, group_mul(s, g, h)), sol.distance + distance(s, h) + 1e-8);
    }
  }
}

TEST(CcDistance, NearAxisAndTinyTheta) {
  auto s = presets::heisenberg(1);
  for (double r : {1e-6, 1e-4, 1e-2}) {
    auto sol = cc_distance(s, h1(r, 0, 1));
    EXPECT_LE(sol.residual, 1e-12);
    EXPECT_NEAR(sol.distance, std::sqrt(4 * std::numbers::pi), 2 * r);
  }
  for (double t : {1e-14, 1e-10, 1e-6}) {
    auto sol = cc_distance(s, h1(1, 0, t));
    EXPECT_LE(sol.residual, 1e-12);
    EXPECT_NEAR(sol.distance, 1.0, 10 * t);
  }
}

TEST(CcDistance, Errors) {
  Eigen::MatrixXd J(2, 2);
  J << 0, -2, 2, 0;
  HTypeStructure general(2, 1, {J}, false);
  EXPECT_THROW(cc_distance(general, general.identity()), UnsupportedError);
  auto s = presets::heisenberg(1);
  EXPECT_THROW(cc_distance(s, h1(1, 0, 0), 0.0), DomainError);
  EXPECT_THROW(cc_distance(s, h1(std::nan(""), 0, 0)), NumericError);
}

TEST(CcDistance, AnalyticGradientIsUnit) {
  auto s = presets::heisenberg(1);
  auto d = distance_field(s);
  ScalarField fd;
  fd.eval = d.eval;
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto g = random_point(s, rng);
    EXPECT_NEAR(gradient_length(s, d, g), 1.0, 1e-10);
    auto a = horizontal_gradient(s, d, g), b = horizontal_gradient(s, fd, g);
    EXPECT_LE((a.components - b.components).norm(), 1e-5);
  }
}

TEST(Oracle, StraightLine) {
  auto s = presets::heisenberg(1);
  TranscriptionConfig cfg;
  cfg.segments = 64;
  EXPECT_NEAR(cc_distance_oracle(s, h1(1, 0, 0), cfg), 1.0, 1e-3);
  EXPECT_EQ(cc_distance_oracle(s, s.identity(), cfg), 0.0);
}

TEST(Oracle, ConfigValidation) {
  auto s = presets::heisenberg(1);
  TranscriptionConfig cfg;
  cfg.segments = 4;
  EXPECT_THROW(cc_distance_oracle(s, h1(1, 0, 0), cfg), DomainError);
}

TEST(Oracle, AgreesWithSolver) {
  auto s = presets::heisenberg(1);
  TranscriptionConfig cfg;
  cfg.segments = 128;
  Rng rng(17);
  for (int t = 0; t < 5; ++t) {
    auto g = random_point(s, rng);
    const double d = distance(s, g);
    const double o = cc_distance_oracle(s, g, cfg);
    EXPECT_GE(o, d - 1e-9);
    EXPECT_LE(o - d, 2e-3 * (1 + d));
  }
  const double axis = cc_distance_oracle(s, h1(0, 0, 1), cfg);
  EXPECT_NEAR(axis, std::sqrt(4 * std::numbers::pi), 2e-3);
}

TEST(Oracle, MonotoneLadder) {
  auto s = presets::heisenberg(1);
  TranscriptionConfig cfg;
  cfg.segments = 64;
  Rng rng(99);
  for (int t = 0; t < 10; ++t) {
    auto res = cc_distance_transcription(s, random_point(s, rng), cfg);
    for (std::size_t i = 1; i < res.ladder.size(); ++i) EXPECT_LE(res.ladder[i], res.ladder[i - 1] + 1e-12);
    EXPECT_LE(res.violation, cfg.step_tol);
  }
}

TEST(Oracle, ConvergenceOrder) {
  auto s = presets::heisenberg(1);
  auto g = h1(0.6, -0.2, 0.5);
  const double d = distance(s, g);
  std::vector<double> lk, le;
  for (int K : {16, 32, 64}) {
    TranscriptionConfig cfg;
    cfg.segments = K;
    lk.push_back(std::log(K));
    le.push_back(std::log(cc_distance_oracle(s, g, cfg) - d));
  }
  const auto fit = linear_fit(lk, le, {});
  EXPECT_LE(fit.slope, -1.0);
}

TEST(Gauge, Calibration) {
  auto c = calibrate_gauge(presets::heisenberg(1));
  EXPECT_NEAR(c.kappa, std::sqrt(std::numbers::pi), 1e-7);
  EXPECT_LE(c.kappa_prime, 1.0 + 1e-12);
  EXPECT_GT(c.kappa_prime, 0.9);
}

TEST(DistanceConditions, Euclidean) {
  auto s = presets::euclidean(3);
  std::vector<GroupPoint> grid;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) grid.push_back({Eigen::Vector3d::Random() * 3, Eigen::VectorXd()});
  auto res = check_distance_conditions(s, 2.0, 1.0, grid);
  EXPECT_NEAR(res.max_grad, 1.0, 1e-8);
  EXPECT_NEAR(res.min_grad, 1.0, 1e-8);
  for (const auto& g : grid) {
    const double d = g.x.norm();
    ScalarField f;
    f.eval = [](const GroupPoint& p) { return p.x.norm(); };
    EXPECT_NEAR(sub_laplacian(s, f, g), 2.0 / d, 1e-4);
  }
}

TEST(DistanceConditions, HeisenbergAndDilation) {
  auto s = presets::heisenberg(1);
  std::vector<GroupPoint> grid, dilated;
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    auto g = h1(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    grid.push_back(g);
    dilated.push_back(dilate(g, 2.0));
  }
  grid.push_back(h1(0, 0, 1));
  auto res = check_distance_conditions(s, 2.0, 1.0, grid);
  EXPECT_LE(res.max_grad, 1 + 1e-3);
  EXPECT_GE(res.min_grad, 1 - 1e-3);
  EXPECT_EQ(res.skipped_axis, 1);
  EXPECT_LT(res.eps, 1.0);
  EXPECT_TRUE(res.report.violations.empty());
  auto res2 = check_distance_conditions(s, 2.0, 1.0, dilated);
  EXPECT_NEAR(res2.sigma, res.sigma, 1e-3);
}
