#pragma once

#include "mslam/geometry.hpp"
#include "mslam/pose_graph.hpp"
#include "mslam/topology.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mslam {

inline constexpr double kHalfPi = std::numbers::pi / 2.0;

/// Snaps an angle to the nearest of {-π/2, 0, π/2, π}. Exact odd multiples of
/// π/4 round away from zero; anything that lands on -π is reported as π.
inline double bin_angle(double phi)
{
    const double k = std::round(normalize_angle(phi) / kHalfPi);
    const int q = static_cast<int>(k);
    switch (q) {
    case -1: return -kHalfPi;
    case 0: return 0.0;
    case 1: return kHalfPi;
    default: return std::numbers::pi;
    }
}

/// Exact unit vector for a binned heading.
inline Point2 axis_direction(double binned_heading)
{
    const int q = static_cast<int>(std::round(binned_heading / kHalfPi));
    switch (q) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case -1: return {0.0, -1.0};
    default: return {-1.0, 0.0};
    }
}

/// Where consecutive-node motion is read from when building the graph.
enum class MotionSource {
    Odometry, ///< odometry edge measurements
    Estimate, ///< relative pose between the current node estimates
};

inline Pose2D step_motion(const PoseGraph& pg, NodeId k, MotionSource source)
{
    if (source == MotionSource::Estimate) return between(pg.pose(k), pg.pose(k + 1));
    const PGEdge* e = pg.odometry(k);
    if (e == nullptr) throw GraphError("missing odometry edge " + std::to_string(k) + "->" + std::to_string(k + 1));
    return e->measurement;
}

/// Integrated path length over [pg_start, pg_end].
inline double segment_length(const PoseGraph& pg, NodeId pg_start, NodeId pg_end,
                             MotionSource source = MotionSource::Odometry)
{
    if (pg_start < 0 || pg_end >= pg.size() || pg_start > pg_end) {
        throw GraphError("invalid node range");
    }
    double len = 0.0;
    for (NodeId k = pg_start; k < pg_end; ++k) {
        const Pose2D m = step_motion(pg, k, source);
        len += std::hypot(m.x, m.y);
    }
    return len;
}

struct MetaNode {
    int id = 0;
    TopoLabel label = TopoLabel::Corridor;
    NodeId pg_start = 0;
    NodeId pg_end = 0;
    double length = 0.0;
    double heading = 0.0;
    double x_start = 0.0, y_start = 0.0, x_end = 0.0, y_end = 0.0;
    int region = 0; ///< index into the topological graph

    int collection_size() const { return pg_end - pg_start + 1; }
    bool contains(NodeId n) const { return n >= pg_start && n <= pg_end; }
};

struct ManhattanEdge {
    int from = 0;
    int to = 0;
    double turn = 0.0; ///< binned heading change from `from` to `to`
};

struct ManhattanGraph {
    std::vector<MetaNode> meta_nodes;
    std::vector<ManhattanEdge> edges;
    MotionSource source = MotionSource::Estimate;

    int size() const { return static_cast<int>(meta_nodes.size()); }
    const MetaNode& at(int id) const { return meta_nodes.at(static_cast<std::size_t>(id)); }
};

/// One meta-node per rackspace/corridor region. Intersections contribute a
/// binned turn and the translation dead-reckoned through them in the
/// rectified frame. The frame starts at the first meta-node with heading 0.
inline ManhattanGraph build_manhattan(const PoseGraph& pg, const TopologicalGraph& tg,
                                      MotionSource source = MotionSource::Estimate)
{
    if (tg.regions.empty()) throw GraphError("empty topological graph");
    if (tg.node_count() != pg.size()) throw GraphError("topological graph does not match pose graph");

    ManhattanGraph mg;
    mg.source = source;
    for (int r = 0; r < static_cast<int>(tg.regions.size()); ++r) {
        const auto& reg = tg.regions[static_cast<std::size_t>(r)];
        if (reg.label == TopoLabel::Intersection) continue;

        MetaNode m;
        m.id = mg.size();
        m.label = reg.label;
        m.pg_start = reg.pg_start;
        m.pg_end = reg.pg_end;
        m.region = r;
        m.length = segment_length(pg, reg.pg_start, reg.pg_end, source);

        if (mg.meta_nodes.empty()) {
            m.heading = 0.0;
        } else {
            const MetaNode& prev = mg.meta_nodes.back();
            // Rotation is accumulated from the middle of the previous meta-node
            // so that a turn hidden inside a short, mislabeled run still counts.
            const NodeId prev_mid = (prev.pg_start + prev.pg_end) / 2;
            const NodeId mid = (m.pg_start + m.pg_end) / 2;
            double tail = 0.0;
            for (NodeId k = prev_mid; k < prev.pg_end; ++k) tail += step_motion(pg, k, source).theta;
            Pose2D p(prev.x_end, prev.y_end, prev.heading + bin_angle(tail));
            double raw_turn = tail;
            for (NodeId k = prev.pg_end; k < m.pg_start; ++k) {
                const Pose2D step = step_motion(pg, k, source);
                p = compose(p, step);
                raw_turn += step.theta;
            }
            for (NodeId k = m.pg_start; k < mid; ++k) raw_turn += step_motion(pg, k, source).theta;
            m.heading = bin_angle(prev.heading + raw_turn);
            // Without an intersection in between, the chain stays continuous.
            const bool adjacent = m.region == prev.region + 1;
            m.x_start = adjacent ? prev.x_end : p.x;
            m.y_start = adjacent ? prev.y_end : p.y;
            mg.edges.push_back({prev.id, m.id, bin_angle(m.heading - prev.heading)});
        }
        const Point2 d = axis_direction(m.heading);
        m.x_end = m.x_start + m.length * d.x;
        m.y_end = m.y_start + m.length * d.y;
        mg.meta_nodes.push_back(m);
    }
    return mg;
}

/// Arc length of each node of `m` measured from m.pg_start.
inline std::vector<double> arc_offsets(const PoseGraph& pg, const MetaNode& m, MotionSource source)
{
    std::vector<double> s{0.0};
    for (NodeId k = m.pg_start; k < m.pg_end; ++k) {
        const Pose2D step = step_motion(pg, k, source);
        s.push_back(s.back() + std::hypot(step.x, step.y));
    }
    return s;
}

/// Pose of every node in the rectified Manhattan frame. Nodes of a meta-node
/// sit on its axis-aligned segment with its binned heading; the remaining
/// nodes are dead-reckoned from the nearest preceding meta-node end (or
/// backwards from the first meta-node start).
inline std::vector<Pose2D> rectified_poses(const PoseGraph& pg, const ManhattanGraph& mg)
{
    const int n = pg.size();
    std::vector<Pose2D> out(static_cast<std::size_t>(n));
    std::vector<bool> placed(static_cast<std::size_t>(n), false);
    for (const auto& m : mg.meta_nodes) {
        const auto s = arc_offsets(pg, m, mg.source);
        const Point2 d = axis_direction(m.heading);
        for (NodeId k = m.pg_start; k <= m.pg_end; ++k) {
            const double off = s[static_cast<std::size_t>(k - m.pg_start)];
            out[static_cast<std::size_t>(k)] = Pose2D(m.x_start + off * d.x, m.y_start + off * d.y, m.heading);
            placed[static_cast<std::size_t>(k)] = true;
        }
    }
    if (mg.meta_nodes.empty()) {
        // No Manhattan structure at all: plain dead reckoning from the origin.
        out[0] = Pose2D::identity();
        for (NodeId k = 0; k + 1 < n; ++k) {
            out[static_cast<std::size_t>(k + 1)] = compose(out[static_cast<std::size_t>(k)], step_motion(pg, k, mg.source));
        }
        return out;
    }
    for (NodeId k = mg.meta_nodes.front().pg_start - 1; k >= 0; --k) {
        out[static_cast<std::size_t>(k)] = compose(out[static_cast<std::size_t>(k + 1)], inverse(step_motion(pg, k, mg.source)));
        placed[static_cast<std::size_t>(k)] = true;
    }
    for (NodeId k = 1; k < n; ++k) {
        if (!placed[static_cast<std::size_t>(k)]) {
            out[static_cast<std::size_t>(k)] = compose(out[static_cast<std::size_t>(k - 1)], step_motion(pg, k - 1, mg.source));
        }
    }
    return out;
}

} // namespace mslam
