#include "mslam/constraints.hpp"
#include "mslam/pipeline.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using namespace mslam;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<Point2> junction_scan(int col, int band, int beams = 360)
{
    const auto L = generate_layout(LayoutParams{});
    const Point2 j = L.junctions[static_cast<std::size_t>(L.junction(col, band))];
    return raycast(L, {j.x, j.y, 0.0}, beams, 15.0).points;
}

/// Straight chain along x: `a` rackspace nodes, `gap` intersection nodes,
/// then `b` rackspace nodes.
PoseGraph three_runs(int a, int gap, int b)
{
    PoseGraph pg;
    const int n = a + gap + b;
    for (int k = 0; k < n; ++k) {
        const TopoLabel l = k >= a && k < a + gap ? TopoLabel::Intersection : TopoLabel::Rackspace;
        pg.add_node({0.25 * k, 0.0, 0.0}, l);
        if (k > 0) pg.add_edge(make_edge(k - 1, k, {0.25, 0, 0}, ConstraintKind::Odometry));
    }
    return pg;
}

ProposalPair proposal(int i, int j, bool reversed)
{
    ProposalPair p;
    p.meta_i = i;
    p.meta_j = j;
    p.reversed = reversed;
    return p;
}

} // namespace

TEST(Icp, IdenticalScansGiveIdentity)
{
    const auto pts = junction_scan(4, 1);
    const auto r = icp(pts, pts, Pose2D::identity());
    EXPECT_EQ(r.status, IcpStatus::Ok);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.residual, 1e-12);
    EXPECT_LT(std::abs(r.transform.x) + std::abs(r.transform.y) + std::abs(r.transform.theta), 1e-12);
}

TEST(Icp, RecoversKnownTransform)
{
    const auto ref = junction_scan(4, 1);
    const Pose2D T(0.3, -0.2, 0.1);
    std::vector<Point2> moving;
    for (const auto& p : ref) moving.push_back(transform_point(T, p));
    const auto r = icp(ref, moving, Pose2D::identity());
    const Pose2D inv = inverse(T);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.transform.x, inv.x, 1e-3);
    EXPECT_NEAR(r.transform.y, inv.y, 1e-3);
    EXPECT_NEAR(normalize_angle(r.transform.theta - inv.theta), 0.0, 1e-3);
    EXPECT_LE(r.iterations, IcpParams{}.max_iterations);
}

TEST(Icp, ObjectiveNeverIncreases)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    for (int col : {0, 2, 4, 6}) {
        const auto ref = junction_scan(col, 1);
        for (int trial = 0; trial < 5; ++trial) {
            const Pose2D T(u(rng), u(rng), 0.3 * u(rng));
            std::vector<Point2> moving;
            for (const auto& p : ref) moving.push_back(transform_point(T, p));
            const auto r = icp(ref, moving, Pose2D::identity());
            for (std::size_t k = 1; k < r.objective.size(); ++k) {
                ASSERT_LE(r.objective[k], r.objective[k - 1] + 1e-12);
            }
            EXPECT_GE(r.residual, 0.0);
        }
    }
}

TEST(Icp, DifferentAislesDoNotMatch)
{
    const auto L = generate_layout(LayoutParams{});
    auto mid = [&L](int col, int row) {
        const int seg = L.aisle_segment(col, row);
        const Point2 a = L.segment_start(seg), b = L.segment_end(seg);
        return Pose2D((a.x + b.x) / 2, (a.y + b.y) / 2, kPi / 2);
    };
    const Scan ref = raycast(L, mid(0, 0), 180, 15.0);
    for (auto [col, row] : {std::pair{3, 0}, {5, 1}, {7, 2}}) {
        const auto r = icp(ref, raycast(L, mid(col, row), 180, 15.0), Pose2D::identity());
        EXPECT_GT(r.residual, 0.05) << "aisle " << col << "," << row;
    }
}

TEST(Icp, ReportsDegenerateInput)
{
    std::vector<Point2> few{{0, 0}, {1, 0}, {0, 1}};
    EXPECT_EQ(icp(few, few, Pose2D::identity()).status, IcpStatus::TooFewPoints);
    std::vector<Point2> line;
    for (int k = 0; k < 30; ++k) line.push_back({0.1 * k, 0.0});
    EXPECT_EQ(icp(line, line, Pose2D::identity()).status, IcpStatus::Degenerate);
}

TEST(LoopPairs, FractionSampling)
{
    const PoseGraph pg = three_runs(40, 6, 38);
    const auto mg = build_manhattan(pg, group(pg.labels()));
    ASSERT_EQ(mg.size(), 2);
    const MetaNode& a = mg.at(0);
    const MetaNode& b = mg.at(1);
    ASSERT_EQ(a.collection_size(), 40);
    ASSERT_EQ(b.collection_size(), 38);

    const auto one = sample_loop_pairs(proposal(0, 1, false), pg, mg, 1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_NEAR(one[0].pg_i, (a.pg_start + a.pg_end) / 2.0, 0.5);
    EXPECT_NEAR(one[0].pg_j, (b.pg_start + b.pg_end) / 2.0, 0.5);

    const auto five = sample_loop_pairs(proposal(0, 1, false), pg, mg, 5);
    ASSERT_EQ(five.size(), 5u);
    for (int m = 0; m < 5; ++m) {
        const auto& s = five[static_cast<std::size_t>(m)];
        EXPECT_DOUBLE_EQ(s.fraction, (m + 1) / 6.0);
        EXPECT_NEAR(0.25 * (s.pg_i - a.pg_start), s.fraction * a.length, 0.125 + 1e-9);
        EXPECT_NEAR(0.25 * (s.pg_j - b.pg_start), s.fraction * b.length, 0.125 + 1e-9);
        EXPECT_EQ(s.initial, Pose2D::identity());
    }

    const auto rev = sample_loop_pairs(proposal(0, 1, true), pg, mg, 3);
    ASSERT_EQ(rev.size(), 3u);
    EXPECT_DOUBLE_EQ(rev[0].fraction, 0.25);
    EXPECT_NEAR(0.25 * (rev[0].pg_j - b.pg_start), 0.75 * b.length, 0.125 + 1e-9);
    EXPECT_EQ(rev[0].initial.theta, kPi);
    EXPECT_THROW(sample_loop_pairs(proposal(0, 1, false), pg, mg, 0), std::invalid_argument);
}

TEST(LoopConstraints, EmptyProposalsGiveNothing)
{
    const PoseGraph pg = three_runs(20, 4, 20);
    const auto mg = build_manhattan(pg, group(pg.labels()));
    const auto r = build_loop_constraints({}, pg, mg, {}, 5, 0.05);
    EXPECT_TRUE(r.edges.empty());
    EXPECT_TRUE(r.rejected.empty());
}

TEST(LoopConstraints, RetainsTrueRevisitsAndFiltersFalseOnes)
{
    PipelineConfig cfg;
    const auto model = train_model(cfg);
    int true_pairs = 0, true_edges = 0, false_edges = 0, edges = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        const auto sc = simulate(cfg, s);
        PoseGraph exact = sc.run.graph;
        exact.set_poses(sc.truth_poses);
        const auto mg = build_manhattan(exact, sc.topology);
        const auto props = propose(model, mg);
        const auto res = build_loop_constraints(props, exact, mg, sc.run.scans, cfg.loop_pairs, cfg.icp_rho);
        // retention is measured on the first five seeds, the false-discovery rate on all
        for (const auto& p : props) {
            if (s <= 5 && is_true_revisit(p, mg, sc.run.true_regions, sc.truth_poses)) ++true_pairs;
        }
        for (const auto& c : res.accepted) {
            const auto& p = props[static_cast<std::size_t>(c.source_proposal)];
            EXPECT_TRUE(mg.at(p.meta_i).contains(c.pg_i));
            EXPECT_TRUE(mg.at(p.meta_j).contains(c.pg_j));
            EXPECT_LE(c.residual, cfg.icp_rho);
            ++edges;
            if (s <= 5 && is_true_revisit(p, mg, sc.run.true_regions, sc.truth_poses)) ++true_edges;
            if (!is_true_pair(p, mg, sc.run.true_regions)) ++false_edges;
        }
    }
    ASSERT_GT(true_pairs, 0);
    EXPECT_GE(true_edges, 0.8 * cfg.loop_pairs * true_pairs);
    EXPECT_LE(false_edges, 0.05 * edges);
}

TEST(ManhattanConstraints, SameDirectionAndReversed)
{
    PoseGraph pg;
    for (int k = 0; k < 100; ++k) {
        pg.add_node({0.25 * k, 0.0, 0.0});
        if (k > 0) pg.add_edge(make_edge(k - 1, k, {0.25, 0, 0}, ConstraintKind::Odometry));
    }
    auto node = [](int id, NodeId s, NodeId e, double x0, double heading) {
        MetaNode m;
        m.id = id;
        m.label = TopoLabel::Rackspace;
        m.pg_start = s;
        m.pg_end = e;
        m.length = 0.25 * (e - s);
        m.heading = heading;
        m.x_start = x0;
        m.x_end = x0 + m.length * axis_direction(heading).x;
        return m;
    };
    ManhattanGraph mg;
    mg.meta_nodes = {node(0, 0, 39, 0.0, 0.0), node(1, 60, 99, 1.0, 0.0), node(2, 50, 55, 9.0, kPi)};
    const auto rect = rectified_poses(pg, mg);

    const auto same = build_manhattan_constraints({proposal(0, 1, false)}, mg, pg, rect, 3);
    ASSERT_EQ(same.size(), 3u);
    for (const auto& e : same) {
        EXPECT_EQ(e.kind, ConstraintKind::Manhattan);
        EXPECT_EQ(e.measurement.theta, 0.0);
        EXPECT_NEAR(e.measurement.x, 1.0 + 0.25 * (e.to - 60) - 0.25 * (e.from - 0), 1e-12);
        EXPECT_NEAR(e.measurement.y, 0.0, 1e-12);
        EXPECT_TRUE(mg.at(0).contains(e.from));
        EXPECT_TRUE(mg.at(1).contains(e.to));
    }

    const auto rev = build_manhattan_constraints({proposal(0, 2, true)}, mg, pg, rect, 2);
    ASSERT_FALSE(rev.empty());
    EXPECT_LE(rev.size(), 2u);
    for (const auto& e : rev) EXPECT_EQ(e.measurement.theta, kPi);

    EXPECT_TRUE(build_manhattan_constraints({proposal(0, 1, false)}, mg, pg, rect, 0).empty());
}

TEST(ManhattanConstraints, EdgeCountIsBounded)
{
    const PoseGraph pg = three_runs(40, 6, 38);
    const auto mg = build_manhattan(pg, group(pg.labels()));
    for (int n = 1; n <= 8; ++n) {
        const auto e = build_manhattan_constraints({proposal(0, 1, false), proposal(0, 1, true)}, mg, pg, n);
        EXPECT_LE(e.size(), static_cast<std::size_t>(2 * n));
    }
}

TEST(StructureConstraints, SkeletonEdges)
{
    const PoseGraph pg = three_runs(40, 6, 38);
    const auto mg = build_manhattan(pg, group(pg.labels()));
    const auto edges = build_structure_constraints(mg, rectified_poses(pg, mg));
    // one span per meta-node plus one link between the two parallel runs
    ASSERT_EQ(edges.size(), 3u);
    for (const auto& e : edges) {
        EXPECT_EQ(e.kind, ConstraintKind::Manhattan);
        EXPECT_EQ(e.measurement.theta, 0.0);
    }
}
