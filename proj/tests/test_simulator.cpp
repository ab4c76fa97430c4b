#include "mslam/icp.hpp"
#include "mslam/metrics.hpp"
#include "mslam/simulator.hpp"

#include <gtest/gtest.h>

using namespace mslam;

namespace {

double point_segment_distance(const Point2& p, const Point2& a, const Point2& b)
{
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
    return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

Trajectory prefix(const Trajectory& t, std::size_t n) { return {t.begin(), t.begin() + static_cast<std::ptrdiff_t>(n)}; }

} // namespace

TEST(Layout, SingleRack)
{
    LayoutParams p;
    p.n_racks = 1;
    const auto L = generate_layout(p);
    EXPECT_EQ(L.racks.size(), 1u);
    EXPECT_EQ(L.aisle_segments().size(), 2u);
    int corridors = 0;
    for (const auto& s : L.segments) corridors += s.label == TopoLabel::Corridor;
    EXPECT_GE(corridors, 1);
}

TEST(Layout, DefaultScaleIsValid)
{
    const auto L = generate_layout(LayoutParams{});
    EXPECT_EQ(L.racks.size(), 21u);
    for (std::size_t i = 0; i < L.racks.size(); ++i) {
        const Rect& r = L.racks[i];
        EXPECT_GE(r.xmin, 0.0);
        EXPECT_GE(r.ymin, 0.0);
        EXPECT_LE(r.xmax, 30.0);
        EXPECT_LE(r.ymax, 50.0);
        for (std::size_t j = i + 1; j < L.racks.size(); ++j) EXPECT_FALSE(r.overlaps(L.racks[j]));
    }
    // every centerline point lies in exactly one labeled region
    for (const auto& s : L.segments) {
        const Point2 a = L.segment_start(s.id), b = L.segment_end(s.id);
        for (int k = 0; k <= 20; ++k) {
            const Point2 q{a.x + (b.x - a.x) * k / 20.0, a.y + (b.y - a.y) * k / 20.0};
            int hits = 0;
            for (const auto& reg : L.regions) {
                if (reg.area.contains_strict(q)) ++hits;
            }
            EXPECT_LE(hits, 1); // zero only on a shared border
            EXPECT_TRUE(L.region_at(q).has_value());
        }
    }
}

TEST(Layout, DeterministicPerSeed)
{
    LayoutParams p;
    p.seed = 99;
    const auto a = generate_layout(p), b = generate_layout(p);
    ASSERT_EQ(a.racks.size(), b.racks.size());
    for (std::size_t i = 0; i < a.racks.size(); ++i) {
        EXPECT_EQ(a.racks[i].xmin, b.racks[i].xmin);
        EXPECT_EQ(a.racks[i].ymax, b.racks[i].ymax);
    }
}

TEST(Layout, RejectsOverflow)
{
    LayoutParams p;
    p.n_racks = 400;
    EXPECT_THROW(generate_layout(p), SimulationError);
    p.n_racks = 0;
    EXPECT_THROW(generate_layout(p), SimulationError);
}

TEST(Trajectory, OneAisleSamplesByArcLength)
{
    LayoutParams p;
    p.rack_length = 10.0;
    const auto L = generate_layout(p);
    const int seg = L.aisle_segment(0, 0);
    const auto t = generate_trajectory(L, {seg}, 0.25);
    const int region = L.segments[static_cast<std::size_t>(seg)].region;
    int in_aisle = 0;
    for (const auto& tp : t) {
        if (tp.region == region) {
            ++in_aisle;
            EXPECT_EQ(tp.label, TopoLabel::Rackspace);
        }
    }
    EXPECT_NEAR(in_aisle, 40, 1);
}

TEST(Trajectory, PosesLieOnCenterlines)
{
    const auto L = generate_layout(LayoutParams{});
    const auto t = generate_trajectory(L, default_plan(L), 0.25);
    for (const auto& tp : t) {
        double best = 1e9;
        for (const auto& s : L.segments) {
            best = std::min(best, point_segment_distance({tp.pose.x, tp.pose.y}, L.segment_start(s.id), L.segment_end(s.id)));
        }
        ASSERT_LT(best, 1e-9);
    }
}

TEST(Trajectory, RepeatedSegmentIsRevisited)
{
    const auto L = generate_layout(LayoutParams{});
    const int aisle = L.aisle_segment(0, 0);
    const int corridor = L.corridor_segment(0, 1);
    const auto t = generate_trajectory(L, {aisle, corridor, aisle}, 0.25);
    const int region = L.segments[static_cast<std::size_t>(aisle)].region;
    int runs = 0;
    bool inside = false;
    for (const auto& tp : t) {
        const bool now = tp.region == region;
        if (now && !inside) ++runs;
        inside = now;
    }
    EXPECT_EQ(runs, 2);
    EXPECT_THROW(generate_trajectory(L, {}, 0.25), SimulationError);
}

TEST(Corrupt, NoiselessIsIdentity)
{
    const auto L = generate_layout(LayoutParams{});
    const auto t = generate_trajectory(L, default_plan(L), 0.25);
    const auto run = corrupt(L, t, NoiseModel::noiseless());
    ASSERT_EQ(run.graph.size(), static_cast<int>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const Pose2D& e = run.graph.pose(static_cast<NodeId>(i));
        ASSERT_NEAR(e.x, t[i].pose.x, 1e-9);
        ASSERT_NEAR(e.y, t[i].pose.y, 1e-9);
        ASSERT_NEAR(normalize_angle(e.theta - t[i].pose.theta), 0.0, 1e-9);
        ASSERT_EQ(run.graph.label(static_cast<NodeId>(i)), t[i].label);
    }
}

TEST(Corrupt, LabelErrorRateZeroKeepsLabels)
{
    const auto L = generate_layout(LayoutParams{});
    const auto t = generate_trajectory(L, default_plan(L), 0.25);
    NoiseModel n;
    n.label_error_rate = 0.0;
    const auto run = corrupt(L, t, n);
    EXPECT_EQ(run.graph.labels(), run.true_labels);
    n.label_error_rate = 1.0;
    EXPECT_THROW(corrupt(L, t, n), SimulationError);
}

TEST(Corrupt, StrongHeadingBiasDrifts)
{
    const auto L = generate_layout(LayoutParams{});
    const auto t = prefix(generate_trajectory(L, default_plan(L), 0.25), 2000);
    NoiseModel n;
    n.sigma_theta = 0.005;
    n.bias_theta = 0.002;
    const auto run = corrupt(L, t, n);
    std::vector<Pose2D> truth;
    for (const auto& tp : t) truth.push_back(tp.pose);
    EXPECT_GT(ate(run.graph, truth).rmse, 3.0);
}

TEST(Corrupt, DeterministicPerSeed)
{
    const auto L = generate_layout(LayoutParams{});
    const auto t = prefix(generate_trajectory(L, default_plan(L), 0.25), 300);
    NoiseModel n;
    n.seed = 5;
    const auto a = corrupt(L, t, n), b = corrupt(L, t, n);
    for (NodeId i = 0; i < a.graph.size(); ++i) ASSERT_EQ(a.graph.pose(i), b.graph.pose(i));
    ASSERT_EQ(a.graph.labels(), b.graph.labels());
    for (std::size_t i = 0; i < a.scans.size(); ++i) ASSERT_EQ(a.scans[i].points, b.scans[i].points);
}

TEST(Corrupt, DriftGrowsWithPathLength)
{
    const auto L = generate_layout(LayoutParams{});
    const auto full = generate_trajectory(L, default_plan(L), 0.25);
    const std::size_t n = 600;
    std::vector<Pose2D> truth;
    for (const auto& tp : full) truth.push_back(tp.pose);
    double short_sum = 0.0, long_sum = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        NoiseModel nm;
        nm.seed = s;
        const auto run = corrupt(L, prefix(full, 2 * n), nm, ScanParams{4, 1.0});
        const auto est = run.graph.poses();
        short_sum += ate(std::vector<Pose2D>(est.begin(), est.begin() + n), std::vector<Pose2D>(truth.begin(), truth.begin() + n)).rmse;
        long_sum += ate(est, std::vector<Pose2D>(truth.begin(), truth.begin() + 2 * n)).rmse;
    }
    EXPECT_GE(long_sum, short_sum);
}

TEST(Raycast, EmptyBoxSymmetry)
{
    WarehouseLayout box;
    box.width = box.height = 10.0;
    const Scan s = raycast(box, {5, 5, 0}, 4, 20.0);
    ASSERT_EQ(s.points.size(), 4u);
    for (const auto& p : s.points) EXPECT_NEAR(std::hypot(p.x, p.y), 5.0, 1e-12);
    EXPECT_TRUE(raycast(box, {5, 5, 0}, 4, 4.0).points.empty());
}

TEST(Raycast, PointsWithinRangeAndOriginChecked)
{
    const auto L = generate_layout(LayoutParams{});
    const Rect& r = L.racks.front();
    EXPECT_THROW(raycast(L, {(r.xmin + r.xmax) / 2, (r.ymin + r.ymax) / 2, 0}, 90, 15.0), SimulationError);
    const Point2 j = L.junctions[5];
    const Scan s = raycast(L, {j.x, j.y, 0.3}, 180, 8.0);
    for (const auto& p : s.points) EXPECT_LE(std::hypot(p.x, p.y), 8.0);
}

TEST(Raycast, ShiftedScanRecoveredByIcp)
{
    // At a junction both axes are constrained; inside an aisle the along-aisle
    // direction is nearly degenerate for point-to-point matching.
    const auto L = generate_layout(LayoutParams{});
    for (auto [col, band] : {std::pair{3, 1}, {4, 1}, {5, 2}, {6, 2}}) {
        const Point2 j = L.junctions[static_cast<std::size_t>(L.junction(col, band))];
        const Pose2D p(j.x, j.y, 0.0);
        const Pose2D q(p.x + 0.5, p.y, 0.0);
        const auto r = icp(raycast(L, p, 720, 15.0), raycast(L, q, 720, 15.0), Pose2D::identity());
        EXPECT_TRUE(r.converged);
        EXPECT_NEAR(r.transform.x, 0.5, 1e-2);
        EXPECT_NEAR(r.transform.y, 0.0, 1e-2);
        EXPECT_NEAR(r.transform.theta, 0.0, 1e-2);
    }
}
