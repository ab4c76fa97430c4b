#pragma once

#include "mslam/geometry.hpp"
#include "mslam/pose_graph.hpp"

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace mslam {

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct AteResult {
    double rmse = 0.0;
    std::vector<double> per_node; ///< translational error per node after alignment
    Pose2D alignment;             ///< applied to the estimate
    double rotation_rmse = 0.0;   ///< supplementary, radians
};

/// Rigid transform T minimizing Σ‖T(estimate_i) − truth_i‖².
inline Pose2D align(std::span<const Point2> estimate, std::span<const Point2> truth)
{
    if (estimate.size() != truth.size()) throw MetricError("align: length mismatch");
    if (estimate.size() < 2) throw MetricError("align: need at least two points");
    const double n = static_cast<double>(estimate.size());
    double ex = 0, ey = 0, tx = 0, ty = 0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        ex += estimate[i].x;
        ey += estimate[i].y;
        tx += truth[i].x;
        ty += truth[i].y;
    }
    ex /= n;
    ey /= n;
    tx /= n;
    ty /= n;
    double spread = 0.0, c = 0.0, s = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i) {
        const double ax = estimate[i].x - ex, ay = estimate[i].y - ey;
        const double bx = truth[i].x - tx, by = truth[i].y - ty;
        spread += ax * ax + ay * ay;
        c += ax * bx + ay * by;
        s += ax * by - ay * bx;
    }
    if (spread <= 1e-24 * n) throw MetricError("align: estimate has a single distinct point");
    const double th = std::atan2(s, c);
    const double ct = std::cos(th), st = std::sin(th);
    return {tx - (ct * ex - st * ey), ty - (st * ex + ct * ey), th};
}

inline std::vector<Point2> positions(const std::vector<Pose2D>& poses)
{
    std::vector<Point2> out;
    out.reserve(poses.size());
    for (const auto& p : poses) out.push_back({p.x, p.y});
    return out;
}

inline AteResult ate(const std::vector<Pose2D>& estimate, const std::vector<Pose2D>& truth)
{
    if (estimate.size() != truth.size()) throw MetricError("ate: node count mismatch");
    const auto pe = positions(estimate);
    const auto pt = positions(truth);
    AteResult r;
    r.alignment = align(pe, pt);
    double sq = 0.0, rot = 0.0;
    r.per_node.reserve(pe.size());
    for (std::size_t i = 0; i < pe.size(); ++i) {
        const Point2 q = transform_point(r.alignment, pe[i]);
        const double d = std::hypot(q.x - pt[i].x, q.y - pt[i].y);
        r.per_node.push_back(d);
        sq += d * d;
        const double dth = normalize_angle(estimate[i].theta + r.alignment.theta - truth[i].theta);
        rot += dth * dth;
    }
    r.rmse = std::sqrt(sq / static_cast<double>(pe.size()));
    r.rotation_rmse = std::sqrt(rot / static_cast<double>(pe.size()));
    return r;
}

inline AteResult ate(const PoseGraph& estimate, const std::vector<Pose2D>& truth)
{
    return ate(estimate.poses(), truth);
}

} // namespace mslam
