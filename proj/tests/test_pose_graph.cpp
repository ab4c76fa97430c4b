#include "mslam/graph_io.hpp"
#include "mslam/pose_graph.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace mslam;
using mslam::testing::pose_gap;
using mslam::testing::random_pose;

constexpr double kPi = std::numbers::pi;

TEST(Pose2D, ComposeExamples)
{
    EXPECT_LT(pose_gap(compose({0, 0, 0}, {1, 0, 0}), {1, 0, 0}), 1e-12);
    EXPECT_LT(pose_gap(compose({1, 2, kPi / 2}, {1, 0, 0}), {1, 3, kPi / 2}), 1e-12);
    const Pose2D full = compose({0, 0, kPi}, {0, 0, kPi});
    EXPECT_NEAR(full.theta, 0.0, 1e-12);
}

TEST(Pose2D, BetweenExamples)
{
    const Pose2D p(1.5, -2.0, 0.3);
    EXPECT_LT(pose_gap(between(p, p), Pose2D::identity()), 1e-12);
    EXPECT_LT(pose_gap(between({0, 0, 0}, {2, 0, kPi / 2}), {2, 0, kPi / 2}), 1e-12);
}

TEST(Pose2D, ThetaStaysInHalfOpenRange)
{
    EXPECT_EQ(Pose2D(0, 0, -kPi).theta, kPi);
    EXPECT_EQ(normalize_angle(3 * kPi), kPi);
    std::mt19937_64 rng(3);
    Pose2D acc;
    for (int i = 0; i < 5000; ++i) {
        acc = i % 2 ? compose(acc, random_pose(rng)) : between(random_pose(rng), acc);
        ASSERT_LE(std::abs(acc.theta), kPi);
        ASSERT_NE(acc.theta, -kPi);
    }
}

TEST(Pose2D, IdentityAndRoundTrip)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const Pose2D a = random_pose(rng), b = random_pose(rng);
        EXPECT_LT(pose_gap(compose(a, Pose2D::identity()), a), 1e-12);
        EXPECT_LT(pose_gap(compose(a, between(a, b)), b), 1e-10);
    }
}

TEST(Pose2D, ComposeIsAssociative)
{
    std::mt19937_64 rng(12);
    for (int i = 0; i < 1000; ++i) {
        const Pose2D a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
        EXPECT_LT(pose_gap(compose(compose(a, b), c), compose(a, compose(b, c))), 1e-10);
    }
}

TEST(PoseGraph, RejectsBadEdges)
{
    PoseGraph g;
    g.add_node({});
    g.add_node({1, 0, 0});
    g.add_node({2, 0, 0});
    EXPECT_THROW(g.add_edge(make_edge(0, 5, {}, ConstraintKind::LoopClosure)), GraphError);
    EXPECT_THROW(g.add_edge(make_edge(0, 2, {}, ConstraintKind::Odometry)), GraphError);
    PGEdge bad = make_edge(0, 1, {}, ConstraintKind::Odometry);
    bad.information(0, 0) = -1.0;
    EXPECT_THROW(g.add_edge(bad), GraphError);
    bad.information = Information::Identity();
    bad.information(0, 1) = 0.5; // asymmetric
    EXPECT_THROW(g.add_edge(bad), GraphError);
}

TEST(PoseGraph, DefaultInformationAndRobustFlags)
{
    const PGEdge o = make_edge(0, 1, {}, ConstraintKind::Odometry);
    const PGEdge l = make_edge(0, 2, {}, ConstraintKind::LoopClosure);
    const PGEdge m = make_edge(0, 2, {}, ConstraintKind::Manhattan);
    EXPECT_EQ(o.information.diagonal(), Eigen::Vector3d(50, 50, 100));
    EXPECT_EQ(l.information.diagonal(), Eigen::Vector3d(20, 20, 50));
    EXPECT_EQ(m.information.diagonal(), Eigen::Vector3d(5, 5, 200));
    EXPECT_FALSE(o.robust);
    EXPECT_TRUE(l.robust);
    EXPECT_TRUE(m.robust);
}

TEST(GraphIo, LoadsTwoNodeGraph)
{
    const auto g = load_graph_string("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\n"
                                     "EDGE_SE2 0 1 1 0 0 50 0 0 50 0 100\n");
    ASSERT_EQ(g.size(), 2);
    ASSERT_EQ(g.edges().size(), 1u);
    EXPECT_EQ(g.edges()[0].kind, ConstraintKind::Odometry);
}

TEST(GraphIo, RoundTripIsLossless)
{
    std::mt19937_64 rng(5);
    PoseGraph g = mslam::testing::random_graph(rng, 30, 8, 0.05, 0.3);
    g.set_label(3, TopoLabel::Rackspace);
    g.set_label(4, TopoLabel::Intersection);
    const PoseGraph h = load_graph_string(save_graph_string(g));
    ASSERT_EQ(h.size(), g.size());
    ASSERT_EQ(h.edges().size(), g.edges().size());
    for (NodeId i = 0; i < g.size(); ++i) {
        EXPECT_LT(pose_gap(g.pose(i), h.pose(i)), 1e-9);
        EXPECT_EQ(g.label(i), h.label(i));
    }
    for (std::size_t k = 0; k < g.edges().size(); ++k) {
        const auto &a = g.edges()[k], &b = h.edges()[k];
        EXPECT_EQ(a.from, b.from);
        EXPECT_EQ(a.to, b.to);
        EXPECT_EQ(a.kind, b.kind);
        EXPECT_LT(pose_gap(a.measurement, b.measurement), 1e-9);
        EXPECT_LT((a.information - b.information).cwiseAbs().maxCoeff(), 1e-9);
    }
    EXPECT_EQ(save_graph_string(h), save_graph_string(g));
}

TEST(GraphIo, PlainExportDropsTags)
{
    std::mt19937_64 rng(6);
    const PoseGraph g = mslam::testing::random_graph(rng, 5, 1, 0.0, 0.0);
    const std::string plain = save_graph_string(g, true);
    EXPECT_EQ(plain.find("KIND="), std::string::npos);
    EXPECT_EQ(plain.find("VERTEX_LABEL"), std::string::npos);
    EXPECT_EQ(load_graph_string(plain).size(), 5);
}

namespace {

int error_line(const std::string& text)
{
    try {
        load_graph_string(text);
    } catch (const ParseError& e) {
        return e.line();
    }
    return -1;
}

} // namespace

TEST(GraphIo, ErrorsCarryLineNumbers)
{
    const std::string v3 = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nVERTEX_SE2 2 2 0 0\n";
    EXPECT_EQ(error_line(v3 + "EDGE_SE2 0 5 1 0 0 1 0 0 1 0 1\n"), 4);
    EXPECT_EQ(error_line(v3 + "VERTEX_SE2 1 0 0 0\n"), 4);
    EXPECT_EQ(error_line(v3 + "# comment\nPOINT 1 2\n"), 5);
    EXPECT_EQ(error_line("VERTEX_SE2 0 0 zero 0\n"), 1);
    EXPECT_EQ(error_line("VERTEX_SE2 0 0 0\n"), 1);
    EXPECT_EQ(error_line(v3 + "EDGE_SE2 0 2 1 0 0 1 0 0 1 0 1 KIND=WHAT\n"), 4);
}
