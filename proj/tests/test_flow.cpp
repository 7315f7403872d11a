#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "lzn/flow.hpp"
#include "lzn/grad_check.hpp"
#include "lzn/ops.hpp"

namespace lzn {
namespace {

using Point = std::vector<double>;

// Independent reference: the velocity written out literally, no log-domain tricks.
Point naive_velocity(const Point& s, double t, const std::vector<Point>& anchors, const std::vector<double>& w = {}) {
  const std::size_t q = s.size();
  Point num(q, 0.0);
  double den = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < q; ++k) d2 += (s[k] - t * anchors[i][k]) * (s[k] - t * anchors[i][k]);
    const double wi = w.empty() ? 1.0 : w[i];
    const double e = wi * std::exp(-d2 / (2.0 * (1.0 - t) * (1.0 - t)));
    for (std::size_t k = 0; k < q; ++k) num[k] += (anchors[i][k] - s[k]) * e;
    den += e;
  }
  for (auto& x : num) x /= (1.0 - t) * den;
  return num;
}

// Dense-grid Euler in plain arithmetic, used as an oracle for the tensor path.
Point naive_forward(Point s, const std::vector<Point>& anchors, double end, std::size_t nodes) {
  for (std::size_t k = 0; k + 1 < nodes; ++k) {
    const double t = end * static_cast<double>(k) / static_cast<double>(nodes - 1);
    const double dt = end / static_cast<double>(nodes - 1);
    const Point v = naive_velocity(s, t, anchors);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += dt * v[j];
  }
  return s;
}

std::size_t naive_zone(const Point& z, const std::vector<Point>& anchors, double guard, std::size_t nodes) {
  const Point end = naive_forward(z, anchors, 1.0 - guard, nodes);
  std::size_t best = 0;
  double best_d = 1e300;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) d += (end[k] - (1.0 - guard) * anchors[i][k]) * (end[k] - (1.0 - guard) * anchors[i][k]);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

Tensor to_matrix(const std::vector<Point>& rows) {
  std::vector<double> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return Tensor::matrix(rows.size(), rows.front().size(), std::move(v));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<Point> circle(std::size_t n, double radius) {
  std::vector<Point> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    pts.push_back({radius * std::cos(a), radius * std::sin(a)});
  }
  return pts;
}

TEST(Velocity, SingleAnchorIsStraightLine) {
  const AnchorSet a(Tensor::matrix(1, 1, {2.0}));
  EXPECT_NEAR(velocity(Tensor::vector({0.0}), 0.5, a)[0], 4.0, 1e-14);
}

TEST(Velocity, AtTimeZeroPointsToAnchorMean) {
  const AnchorSet a(Tensor::matrix(2, 1, {-1.0, 1.0}));
  EXPECT_NEAR(velocity(Tensor::vector({0.3}), 0.0, a)[0], -0.3, 1e-15);
}

TEST(Velocity, LogDomainMatchesDirectFormula) {
  const AnchorSet a(Tensor::matrix(2, 1, {-1.0, 1.0}));
  const double expected = naive_velocity({0.5}, 0.5, {{-1.0}, {1.0}})[0];
  EXPECT_NEAR(velocity(Tensor::vector({0.5}), 0.5, a)[0], expected, 1e-12);
}

TEST(Velocity, LogDomainMatchesDirectFormulaAtRandomPoints) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(6), q = 1 + rng.index(3);
    std::vector<Point> anchors(n, Point(q));
    for (auto& p : anchors)
      for (auto& x : p) x = 3.0 * rng.normal();
    std::vector<double> w(n);
    double total = 0.0;
    for (auto& x : w) total += (x = 0.1 + rng.uniform());
    for (auto& x : w) x /= total;
    Point s(q);
    for (auto& x : s) x = 2.0 * rng.normal();
    const double t = 0.9 * rng.uniform();
    const Point expected = naive_velocity(s, t, anchors, w);
    if (!std::isfinite(expected[0])) continue;
    const Tensor v = velocity(Tensor::vector(s), t, AnchorSet(to_matrix(anchors), w));
    for (std::size_t k = 0; k < q; ++k) {
      EXPECT_NEAR(v[k], expected[k], 1e-10 * std::max(1.0, std::abs(expected[k]))) << "trial " << trial;
    }
  }
}

TEST(Velocity, RejectsTimeAtOrPastOne) {
  const AnchorSet a(Tensor::matrix(1, 1, {1.0}));
  EXPECT_THROW(velocity(Tensor::vector({0.0}), 1.0, a), DomainError);
  EXPECT_THROW(velocity(Tensor::vector({0.0}), 1.5, a), DomainError);
}

TEST(AnchorSetTest, ValidatesInputs) {
  EXPECT_THROW(AnchorSet(Tensor::zeros({0, 2})), ShapeError);
  EXPECT_THROW(AnchorSet(Tensor::matrix(1, 1, {NAN})), NumericError);
  EXPECT_THROW(AnchorSet(Tensor::matrix(2, 1, {0, 1}), {0.7, 0.7}), DomainError);
  EXPECT_THROW(AnchorSet(Tensor::matrix(2, 1, {0, 1}), {-0.5, 1.5}), DomainError);
  EXPECT_THROW(AnchorSet(Tensor::matrix(2, 1, {0, 1}), {1.0}), ShapeError);
  EXPECT_NO_THROW(AnchorSet(Tensor::matrix(2, 1, {0, 1}), {0.0, 1.0}));
}

TEST(FlowConfigTest, GridEndsAtOneMinusGuard) {
  FlowConfig cfg;
  const auto grid = time_grid(cfg);
  ASSERT_EQ(grid.size(), 100u);
  EXPECT_EQ(grid.front(), 0.0);
  EXPECT_EQ(grid.back(), 1.0 - cfg.guard);
  for (std::size_t k = 1; k < grid.size(); ++k) EXPECT_GT(grid[k], grid[k - 1]);
  cfg.cutoff = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = FlowConfig{};
  cfg.guard = 1.0;
  EXPECT_THROW(cfg.validate(), DomainError);
  cfg = FlowConfig{};
  cfg.alpha = 1.5;
  EXPECT_THROW(cfg.validate(), DomainError);
}

TEST(IntegrateForward, SingleAnchorFollowsLinearInterpolation) {
  const double a = 1.7, s0 = -0.4;
  FlowConfig cfg;
  const Trajectory traj = integrate_forward(Tensor::vector({s0}), AnchorSet(Tensor::matrix(1, 1, {a})), cfg);
  ASSERT_EQ(traj.states.size(), cfg.steps);
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    const double t = traj.grid[k];
    EXPECT_NEAR(traj.states[k][0], (1 - t) * s0 + t * a, 1e-3);
  }
}

TEST(IntegrateForward, SymmetricAnchorsKeepOriginFixed) {
  const Trajectory traj =
      integrate_forward(Tensor::vector({0.0}), AnchorSet(Tensor::matrix(2, 1, {-2.0, 2.0})), FlowConfig{});
  for (const auto& s : traj.states) EXPECT_EQ(s[0], 0.0);
}

TEST(IntegrateForward, TwoAnchorEndpointMatchesDenseOracle) {
  FlowConfig cfg;
  const Trajectory traj = integrate_forward(Tensor::vector({0.1}), AnchorSet(Tensor::matrix(2, 1, {-1.0, 1.0})), cfg);
  const double oracle = naive_forward({0.1}, {{-1.0}, {1.0}}, 1.0 - cfg.guard, 10000)[0];
  EXPECT_NEAR(oracle, 1.0, 1e-2);
  EXPECT_NEAR(traj.endpoint()[0], 1.0, 1e-2);
  EXPECT_NEAR(traj.endpoint()[0], oracle, 1e-2);
}

TEST(IntegrateForward, UnrecordedKeepsOnlyEndpoint) {
  FlowConfig cfg;
  const AnchorSet a(Tensor::matrix(2, 1, {-1.0, 1.0}));
  const Trajectory full = integrate_forward(Tensor::vector({0.3}), a, cfg, true);
  const Trajectory last = integrate_forward(Tensor::vector({0.3}), a, cfg, false);
  ASSERT_EQ(last.states.size(), 1u);
  EXPECT_EQ(last.endpoint()[0], full.endpoint()[0]);
}

TEST(IntegrateForward, NonFiniteStartIsReported) {
  EXPECT_THROW(integrate_forward(Tensor::vector({NAN}), AnchorSet(Tensor::matrix(1, 1, {1.0})), FlowConfig{}),
               NumericError);
}

TEST(IntegrateForward, MidpointAgreesWithEulerOnSmoothField) {
  FlowConfig euler;
  FlowConfig mid;
  mid.solver = Solver::Midpoint;
  const AnchorSet a(to_matrix({{-1.0, 0.5}, {1.0, 0.0}, {0.0, 2.0}}));
  const Tensor z = Tensor::matrix(1, 2, {0.2, -0.3});
  const Point oracle = naive_forward({0.2, -0.3}, {{-1.0, 0.5}, {1.0, 0.0}, {0.0, 2.0}}, 1.0 - euler.guard, 20000);
  const Tensor e = integrate_forward(z, a, euler).endpoint();
  const Tensor m = integrate_forward(z, a, mid).endpoint();
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_NEAR(e[k], oracle[k], 2e-2);
    EXPECT_NEAR(m[k], oracle[k], 2e-2);
  }
}

TEST(IntegrateBackward, SingleAnchorGivesScaledNoise) {
  for (double alpha : {0.0, 0.45, 1.0}) {
    FlowConfig cfg;
    cfg.alpha = alpha;
    cfg.guard = 0.05;
    const Tensor z = integrate_backward(Tensor::vector({2.5}), Tensor::vector({-0.8}),
                                        AnchorSet(Tensor::matrix(1, 1, {2.5})), cfg);
    EXPECT_NEAR(z[0], alpha * -0.8, 1e-12);
  }
}

TEST(IntegrateBackward, ZoneCentersAreSymmetric) {
  FlowConfig cfg;
  cfg.alpha = 0.0;
  const AnchorSet a(Tensor::matrix(2, 1, {-1.5, 1.5}));
  const Tensor z = integrate_backward(Tensor::matrix(2, 1, {-1.5, 1.5}), Tensor::zeros({2, 1}), a, cfg);
  EXPECT_EQ(z[0], -z[1]);
  EXPECT_NE(z[0], 0.0);
}

TEST(IntegrateBackward, OneDimensionalMisassignmentMatchesClosedForm) {
  // g = 0.5, alpha = 1: a latent lands in the wrong zone iff sign((1-g) a + g eps) != sign(a).
  FlowConfig cfg;
  cfg.guard = 0.5;
  const AnchorSet a(Tensor::matrix(2, 1, {-1.0, 1.0}));
  const std::size_t draws = 100000;
  std::vector<double> src(2 * draws);
  for (std::size_t i = 0; i < draws; ++i) {
    src[2 * i] = -1.0;
    src[2 * i + 1] = 1.0;
  }
  Rng rng(2024);
  const Tensor z = compute_latents(Tensor::matrix(2 * draws, 1, src), a, cfg, rng);
  const auto zones = assign_zones(z, a, cfg);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < zones.size(); ++i) wrong += zones[i] != i % 2;
  const double p = std_normal_cdf(-1.0);
  const double rate = static_cast<double>(wrong) / static_cast<double>(zones.size());
  const double se = std::sqrt(p * (1 - p) / static_cast<double>(zones.size()));
  EXPECT_NEAR(p, 0.1587, 1e-4);
  EXPECT_NEAR(rate, p, 3 * se);
}

TEST(ComputeLatents, SingleAnchorReturnsScaledNoise) {
  FlowConfig cfg;
  cfg.alpha = 0.7;
  Rng rng(5), replay(5);
  const Tensor z = compute_latents(Tensor::matrix(1, 3, {1.0, -2.0, 0.5}), cfg, rng);
  const Tensor eps = replay.normal_tensor({1, 3});
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(z[k], 0.7 * eps[k], 1e-12);
}

TEST(ComputeLatents, CircleAnchorsGiveStandardNormalLatents) {
  FlowConfig cfg;
  cfg.guard = 1e-3;
  const auto anchors = circle(16, 2.0);
  const std::size_t per_anchor = 10000;
  std::vector<double> src;
  src.reserve(16 * per_anchor * 2);
  for (std::size_t d = 0; d < per_anchor; ++d)
    for (const auto& a : anchors) src.insert(src.end(), a.begin(), a.end());
  Rng rng(99);
  const Tensor z = compute_latents(Tensor::matrix(16 * per_anchor, 2, src), AnchorSet(to_matrix(anchors)), cfg, rng);
  const std::size_t m = z.rows();
  double mean[2] = {0, 0}, cov[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t k = 0; k < 2; ++k) mean[k] += z.at(i, k) / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 2; ++b)
        cov[a][b] += (z.at(i, a) - mean[a]) * (z.at(i, b) - mean[b]) / static_cast<double>(m - 1);
  EXPECT_LT(std::hypot(mean[0], mean[1]), 0.05);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) EXPECT_NEAR(cov[a][b], a == b ? 1.0 : 0.0, 0.05);
}

TEST(ComputeLatents, ZeroAlphaIsDeterministic) {
  FlowConfig cfg;
  cfg.alpha = 0.0;
  const Tensor anchors = to_matrix(circle(5, 1.5));
  Rng r1(1), r2(2);
  const Tensor z1 = compute_latents(anchors, cfg, r1);
  const Tensor z2 = compute_latents(anchors, cfg, r2);
  for (std::size_t i = 0; i < z1.numel(); ++i) EXPECT_EQ(z1[i], z2[i]);
}

TEST(ComputeLatents, GradientsReachAnchors) {
  FlowConfig cfg;
  cfg.steps = 12;
  cfg.cutoff = 3;
  cfg.guard = 0.05;
  Rng rng(3);
  const Tensor eps = rng.normal_tensor({3, 2});
  Tensor anchors = to_matrix({{-1.0, 0.2}, {0.8, 0.9}, {0.3, -1.1}}).detach(true);
  GradCheckOptions opt;
  opt.step = 1e-6;
  opt.tolerance = 1e-4;
  const auto report = grad_check(
      [&] { return ops::squared_norm(integrate_backward(anchors, eps, AnchorSet(anchors), cfg)); }, {anchors}, opt);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(ComputeLatents, EqualWeightsMatchUnweightedBitwise) {
  FlowConfig cfg;
  const Tensor anchors = to_matrix(circle(4, 1.0));
  Rng r1(8), r2(8);
  const Tensor plain = compute_latents(anchors, AnchorSet(anchors), cfg, r1);
  const Tensor weighted = compute_latents(anchors, AnchorSet(anchors, {0.25, 0.25, 0.25, 0.25}), cfg, r2);
  for (std::size_t i = 0; i < plain.numel(); ++i) EXPECT_EQ(plain[i], weighted[i]);
  const auto zp = assign_zones(plain, AnchorSet(anchors), cfg);
  const auto zw = assign_zones(plain, AnchorSet(anchors, {0.25, 0.25, 0.25, 0.25}), cfg);
  EXPECT_EQ(zp, zw);
}

TEST(ComputeLatents, ZeroWeightAnchorNeverReceivesMass) {
  FlowConfig cfg;
  const AnchorSet a(Tensor::matrix(3, 1, {-1.0, 0.0, 1.0}), {0.5, 0.0, 0.5});
  Rng rng(4);
  const Tensor z = rng.normal_tensor({200, 1});
  for (auto zone : assign_zones(z, a, cfg)) EXPECT_NE(zone, 1u);
}

TEST(AssignZone, CentersRoundTrip) {
  FlowConfig cfg;
  cfg.alpha = 0.0;
  cfg.guard = 1e-3;
  const Tensor anchors = to_matrix(circle(8, 3.0));
  Rng rng(0);
  const AnchorSet set(anchors);
  const Tensor z = compute_latents(anchors, set, cfg, rng);
  const auto zones = assign_zones(z, set, cfg);
  for (std::size_t i = 0; i < zones.size(); ++i) EXPECT_EQ(zones[i], i);
}

TEST(AssignZone, OneDimensionalZonesSplitAtOrigin) {
  const AnchorSet a(Tensor::matrix(2, 1, {-1.0, 1.0}));
  FlowConfig cfg;
  for (double z : {-2.5, -0.7, -0.01}) EXPECT_EQ(assign_zone(Tensor::vector({z}), a, cfg), 0u);
  for (double z : {0.01, 0.7, 2.5}) EXPECT_EQ(assign_zone(Tensor::vector({z}), a, cfg), 1u);
}

TEST(AssignZone, AgreesWithDenseGridOracle) {
  const std::vector<Point> anchors{{-1.0, 0.0}, {1.0, 0.5}, {0.2, 1.5}};
  const AnchorSet set(to_matrix(anchors));
  FlowConfig cfg;
  Rng rng(17);
  const std::size_t draws = 1000;
  const Tensor z = rng.normal_tensor({draws, 2});
  const auto zones = assign_zones(z, set, cfg);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < draws; ++i) {
    agree += zones[i] == naive_zone({z.at(i, 0), z.at(i, 1)}, anchors, cfg.guard, 10000);
  }
  EXPECT_GE(agree, 990u);
}

TEST(Zones, MisassignmentFallsAsGuardShrinks) {
  const Tensor anchors = to_matrix({{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1.2}, {0.0, -1.2}});
  const AnchorSet set(anchors);
  const std::size_t reps = 2000;
  std::vector<double> src;
  for (std::size_t r = 0; r < reps; ++r) src.insert(src.end(), anchors.data().begin(), anchors.data().end());
  const Tensor sources = Tensor::matrix(4 * reps, 2, src);
  double previous = 1.0;
  for (double g : {0.5, 0.1, 0.01, 0.001}) {
    // Euler round trips leave an O(h) floor near zone boundaries; see below.
    FlowConfig cfg;
    cfg.guard = g;
    cfg.solver = Solver::Midpoint;
    Rng rng(31);
    const auto zones = assign_zones(compute_latents(sources, set, cfg, rng), set, cfg);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < zones.size(); ++i) wrong += zones[i] != i % 4;
    const double rate = static_cast<double>(wrong) / static_cast<double>(zones.size());
    EXPECT_LE(rate, previous) << "g = " << g;
    previous = rate;
  }
  EXPECT_LT(previous, 1e-3);
}

TEST(Zones, EulerRoundTripFloorShrinksWithSteps) {
  const Tensor anchors = to_matrix({{-1.0, 0.0}, {1.0, 0.0}, {0.0, 1.2}, {0.0, -1.2}});
  const AnchorSet set(anchors);
  const std::size_t reps = 2000;
  std::vector<double> src;
  for (std::size_t r = 0; r < reps; ++r) src.insert(src.end(), anchors.data().begin(), anchors.data().end());
  const Tensor sources = Tensor::matrix(4 * reps, 2, src);
  auto rate_for = [&](std::size_t steps) {
    FlowConfig cfg;
    cfg.guard = 1e-3;
    cfg.steps = steps;
    Rng rng(31);
    const auto zones = assign_zones(compute_latents(sources, set, cfg, rng), set, cfg);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < zones.size(); ++i) wrong += zones[i] != i % 4;
    return static_cast<double>(wrong) / static_cast<double>(zones.size());
  };
  const double coarse = rate_for(100);
  const double fine = rate_for(400);
  EXPECT_LT(coarse, 1e-2);
  EXPECT_LT(fine, coarse);
}

TEST(Checkpointing, RecomputeMatchesFullTape) {
  const std::size_t n = 8;
  Rng rng(12);
  const Tensor base = rng.normal_tensor({n, 3});
  const Tensor eps = rng.normal_tensor({n, 3});
  auto run = [&](CheckpointMode mode, std::size_t* recorded) {
    FlowConfig cfg;
    cfg.steps = 10;
    cfg.cutoff = 2;
    cfg.checkpoint = mode;
    Tensor anchors = base.detach(true);
    Tape tape;
    TapeScope scope(tape);
    const Tensor z = integrate_backward(anchors, eps, AnchorSet(anchors), cfg);
    const Trajectory traj = integrate_forward(z, AnchorSet(anchors), cfg);
    const Tensor loss = ops::squared_norm(traj.endpoint());
    *recorded = tape.peak_recorded_values();
    tape.backward(loss);
    return std::vector<double>(anchors.grad().begin(), anchors.grad().end());
  };
  std::size_t full_count = 0, recompute_count = 0;
  const auto full = run(CheckpointMode::FullTape, &full_count);
  const auto recompute = run(CheckpointMode::RecomputeVelocity, &recompute_count);
  for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], recompute[i], 1e-12);
  EXPECT_LT(recompute_count, full_count);
}

}  // namespace
}  // namespace lzn
