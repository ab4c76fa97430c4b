#include "mslam/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mslam;
using mslam::testing::pose_gap;
using mslam::testing::random_pose;

namespace {

std::vector<Pose2D> random_walk(std::mt19937_64& rng, int n)
{
    std::vector<Pose2D> out{random_pose(rng)};
    std::uniform_real_distribution<double> turn(-0.3, 0.3);
    for (int i = 1; i < n; ++i) out.push_back(compose(out.back(), Pose2D(0.25, 0.0, turn(rng))));
    return out;
}

std::vector<Pose2D> moved(const std::vector<Pose2D>& p, const Pose2D& T)
{
    std::vector<Pose2D> out;
    for (const auto& x : p) out.push_back(compose(T, x));
    return out;
}

double objective(const Pose2D& T, const std::vector<Point2>& est, const std::vector<Point2>& truth)
{
    double s = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const Point2 q = transform_point(T, est[i]);
        s += (q.x - truth[i].x) * (q.x - truth[i].x) + (q.y - truth[i].y) * (q.y - truth[i].y);
    }
    return s;
}

} // namespace

TEST(Align, IdentityForEqualInput)
{
    std::mt19937_64 rng(1);
    const auto pts = positions(random_walk(rng, 50));
    EXPECT_LT(pose_gap(align(pts, pts), Pose2D::identity()), 1e-12);
}

TEST(Align, RecoversInverseTransform)
{
    std::mt19937_64 rng(2);
    const auto truth = random_walk(rng, 80);
    const Pose2D T(3.0, -1.0, 0.7);
    const auto est = moved(truth, T);
    EXPECT_LT(pose_gap(align(positions(est), positions(truth)), inverse(T)), 1e-9);
}

TEST(Align, IsStationaryUnderPerturbation)
{
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<Point2> a, b;
        for (int i = 0; i < 30; ++i) {
            a.push_back({g(rng), g(rng)});
            b.push_back({g(rng), g(rng)});
        }
        const Pose2D T = align(a, b);
        const double best = objective(T, a, b);
        for (int k = 0; k < 3; ++k) {
            for (double h : {-1e-3, 1e-3}) {
                Pose2D P = T;
                (k == 0 ? P.x : k == 1 ? P.y : P.theta) += h;
                EXPECT_GE(objective(P, a, b), best - 1e-12);
            }
        }
    }
}

TEST(Align, Errors)
{
    const std::vector<Point2> one{{0, 0}}, two{{0, 0}, {1, 0}}, same{{1, 1}, {1, 1}};
    EXPECT_THROW(align(one, one), MetricError);
    EXPECT_THROW(align(two, one), MetricError);
    EXPECT_THROW(align(same, two), MetricError);
}

TEST(Ate, ZeroForIdenticalAndRigidlyMoved)
{
    std::mt19937_64 rng(4);
    const auto truth = random_walk(rng, 100);
    EXPECT_EQ(ate(truth, truth).rmse, 0.0);
    std::vector<Pose2D> shifted;
    for (const auto& p : truth) shifted.push_back({p.x + 1.0, p.y, p.theta});
    EXPECT_LT(ate(shifted, truth).rmse, 1e-9);
    EXPECT_LT(ate(moved(truth, {-7, 2, 2.5}), truth).rmse, 1e-9);
    EXPECT_LT(ate(moved(truth, {-7, 2, 2.5}), truth).rotation_rmse, 1e-9);
}

TEST(Ate, InvariantUnderRigidMotionAndSymmetric)
{
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const auto truth = random_walk(rng, 120);
        const auto est = random_walk(rng, 120);
        const auto base = ate(est, truth);
        EXPECT_NEAR(ate(moved(est, random_pose(rng)), truth).rmse, base.rmse, 1e-9);
        EXPECT_NEAR(ate(truth, est).rmse, base.rmse, 1e-9);
        double sq = 0.0;
        for (double d : base.per_node) sq += d * d;
        EXPECT_NEAR(base.rmse, std::sqrt(sq / static_cast<double>(base.per_node.size())), 1e-12);
    }
}

TEST(Ate, SingleOutlierScalesAsOneOverRootN)
{
    std::mt19937_64 rng(6);
    const int n = 400;
    const auto truth = random_walk(rng, n);
    auto est = truth;
    const double d = 2.0;
    est[200].x += d;
    const double expect = d / std::sqrt(static_cast<double>(n));
    EXPECT_NEAR(ate(est, truth).rmse, expect, 0.01 * expect);
}

TEST(Ate, Errors)
{
    std::mt19937_64 rng(7);
    const auto a = random_walk(rng, 10);
    const auto b = random_walk(rng, 11);
    EXPECT_THROW(ate(a, b), MetricError);
}
