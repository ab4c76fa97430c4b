#pragma once

#include "mslam/geometry.hpp"
#include "mslam/simulator.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace mslam {

enum class IcpStatus { Ok, TooFewPoints, Degenerate };

struct IcpParams {
    int max_iterations = 50;
    double tolerance = 1e-6; ///< on the per-iteration parameter change (m + rad)
};

struct IcpResult {
    Pose2D transform;       ///< maps moving-scan points into the reference frame
    double residual = 0.0;  ///< mean squared nearest-neighbour distance, m²
    int iterations = 0;
    bool converged = false;
    IcpStatus status = IcpStatus::Ok;
    std::vector<double> objective; ///< mean squared correspondence distance per iteration
};

namespace detail {

/// True when every point lies within `tol` of one line.
inline bool collinear(std::span<const Point2> pts, double tol)
{
    if (pts.size() < 3) return true;
    double mx = 0, my = 0;
    for (const auto& p : pts) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& p : pts) {
        sxx += (p.x - mx) * (p.x - mx);
        sxy += (p.x - mx) * (p.y - my);
        syy += (p.y - my) * (p.y - my);
    }
    const double a = std::atan2(2 * sxy, sxx - syy) / 2.0; // principal direction
    const double nx = -std::sin(a), ny = std::cos(a);
    double worst = 0.0;
    for (const auto& p : pts) worst = std::max(worst, std::abs((p.x - mx) * nx + (p.y - my) * ny));
    return worst < tol;
}

inline std::size_t nearest(std::span<const Point2> ref, const Point2& q, double& d2)
{
    std::size_t best = 0;
    d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double dx = ref[i].x - q.x, dy = ref[i].y - q.y;
        const double d = dx * dx + dy * dy;
        if (d < d2) {
            d2 = d;
            best = i;
        }
    }
    return best;
}

/// Least-squares rigid transform taking src[i] onto dst[i].
inline Pose2D align_pairs(std::span<const Point2> src, std::span<const Point2> dst)
{
    const double n = static_cast<double>(src.size());
    double sx = 0, sy = 0, dx = 0, dy = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        sx += src[i].x;
        sy += src[i].y;
        dx += dst[i].x;
        dy += dst[i].y;
    }
    sx /= n;
    sy /= n;
    dx /= n;
    dy /= n;
    double sin_sum = 0, cos_sum = 0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double ax = src[i].x - sx, ay = src[i].y - sy;
        const double bx = dst[i].x - dx, by = dst[i].y - dy;
        cos_sum += ax * bx + ay * by;
        sin_sum += ax * by - ay * bx;
    }
    const double th = std::atan2(sin_sum, cos_sum);
    const double c = std::cos(th), s = std::sin(th);
    return {dx - (c * sx - s * sy), dy - (s * sx + c * sy), th};
}

} // namespace detail

/// Point-to-point ICP. Every moving point is matched to its nearest
/// reference point, then the closed-form SE(2) alignment is applied.
inline IcpResult icp(std::span<const Point2> reference, std::span<const Point2> moving,
                     const Pose2D& initial, const IcpParams& params = {})
{
    IcpResult res;
    res.transform = initial;
    if (reference.size() < 10 || moving.size() < 10) {
        res.status = IcpStatus::TooFewPoints;
        res.residual = std::numeric_limits<double>::infinity();
        return res;
    }
    if (detail::collinear(reference, 1e-9) || detail::collinear(moving, 1e-9)) {
        res.status = IcpStatus::Degenerate;
        res.residual = std::numeric_limits<double>::infinity();
        return res;
    }

    std::vector<Point2> matched(moving.size());
    auto correspond = [&](const Pose2D& T) {
        double sum = 0.0;
        for (std::size_t i = 0; i < moving.size(); ++i) {
            double d2 = 0.0;
            const auto j = detail::nearest(reference, transform_point(T, moving[i]), d2);
            matched[i] = reference[j];
            sum += d2;
        }
        return sum / static_cast<double>(moving.size());
    };

    Pose2D T = initial;
    double err = correspond(T);
    for (int it = 0; it < params.max_iterations; ++it) {
        res.objective.push_back(err);
        const Pose2D next = detail::align_pairs(moving, matched);
        const double change = std::hypot(next.x - T.x, next.y - T.y) + std::abs(normalize_angle(next.theta - T.theta));
        T = next;
        err = correspond(T);
        res.iterations = it + 1;
        if (change < params.tolerance) {
            res.converged = true;
            break;
        }
    }
    res.objective.push_back(err);
    res.transform = T;
    res.residual = err;
    return res;
}

inline IcpResult icp(const Scan& reference, const Scan& moving, const Pose2D& initial,
                     const IcpParams& params = {})
{
    return icp(std::span<const Point2>(reference.points), std::span<const Point2>(moving.points), initial, params);
}

} // namespace mslam
