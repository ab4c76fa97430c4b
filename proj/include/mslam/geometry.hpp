#pragma once

#include <cmath>
#include <numbers>

namespace mslam {

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a)
{
    constexpr double kTwoPi = 2.0 * std::numbers::pi;
    double r = std::fmod(a, kTwoPi);
    if (r <= -std::numbers::pi) {
        r += kTwoPi;
    } else if (r > std::numbers::pi) {
        r -= kTwoPi;
    }
    return r;
}

/// SE(2) element. theta is kept in (-pi, pi] by every operation below.
struct Pose2D {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;

    Pose2D() = default;
    Pose2D(double x_, double y_, double theta_)
        : x(x_), y(y_), theta(normalize_angle(theta_))
    {}

    static Pose2D identity() { return {}; }

    friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// a ⊕ b
inline Pose2D compose(const Pose2D& a, const Pose2D& b)
{
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, a.theta + b.theta};
}

inline Pose2D inverse(const Pose2D& a)
{
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    return {-c * a.x - s * a.y, s * a.x - c * a.y, -a.theta};
}

/// a⁻¹ ⊕ b: pose of b expressed in the frame of a.
inline Pose2D between(const Pose2D& a, const Pose2D& b)
{
    const double c = std::cos(a.theta);
    const double s = std::sin(a.theta);
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    return {c * dx + s * dy, -s * dx + c * dy, b.theta - a.theta};
}

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

/// Applies a pose to a point (rotate then translate).
inline Point2 transform_point(const Pose2D& p, const Point2& q)
{
    const double c = std::cos(p.theta);
    const double s = std::sin(p.theta);
    return {p.x + c * q.x - s * q.y, p.y + s * q.x + c * q.y};
}

inline double distance(const Point2& a, const Point2& b)
{
    return std::hypot(a.x - b.x, a.y - b.y);
}

} // namespace mslam
