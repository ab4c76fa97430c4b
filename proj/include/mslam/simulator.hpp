#pragma once

#include "mslam/geometry.hpp"
#include "mslam/pose_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslam {

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Rect {
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;

    bool contains(const Point2& p) const
    {
        return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
    }
    bool contains_strict(const Point2& p) const
    {
        return p.x > xmin && p.x < xmax && p.y > ymin && p.y < ymax;
    }
    bool overlaps(const Rect& o) const
    {
        return xmin < o.xmax && o.xmin < xmax && ymin < o.ymax && o.ymin < ymax;
    }
};

struct Region {
    int id = 0;
    TopoLabel label = TopoLabel::Corridor;
    Rect area;
};

/// Centerline piece of the navigation graph between two junctions.
struct NavSegment {
    int id = 0;
    int region = 0; ///< region id of the aisle or corridor piece it runs through
    TopoLabel label = TopoLabel::Rackspace;
    int junction_a = 0;
    int junction_b = 0;
};

struct LayoutParams {
    double width = 30.0;
    double height = 50.0;
    int n_racks = 21;
    double aisle_width = 2.4;
    double rack_width = 1.2;
    double rack_length = 12.0;
    double corridor_width = 3.0;
    double aisle_jitter = 0.15; ///< relative spread of individual aisle widths
    std::uint64_t seed = 1;
};

/// Grid warehouse: rows of racks whose long side runs along y, with aisles
/// between racks (and between the outer racks and the walls) and corridors
/// along the top, the bottom and between rack rows.
struct WarehouseLayout {
    double width = 0.0;
    double height = 0.0;
    int rows = 0;
    int cols = 0;
    std::vector<Rect> racks;
    std::vector<Region> regions;
    std::vector<Point2> junctions;
    std::vector<int> junction_region;
    std::vector<NavSegment> segments;

    /// Region containing p, or nullopt when p is inside a rack or outside the box.
    std::optional<Region> region_at(const Point2& p) const
    {
        for (const auto& r : racks) {
            if (r.contains_strict(p)) return std::nullopt;
        }
        for (const auto& reg : regions) {
            if (reg.area.contains(p)) return reg;
        }
        return std::nullopt;
    }

    TopoLabel label_at(const Point2& p) const
    {
        auto r = region_at(p);
        if (!r) throw SimulationError("position is not in free space");
        return r->label;
    }

    bool in_free_space(const Point2& p) const
    {
        if (p.x < 0.0 || p.y < 0.0 || p.x > width || p.y > height) return false;
        for (const auto& r : racks) {
            if (r.contains_strict(p)) return false;
        }
        return true;
    }

    int aisle_segment(int col, int row) const { return row * (cols + 1) + col; }
    int corridor_segment(int col, int band) const
    {
        return rows * (cols + 1) + band * cols + col;
    }
    int junction(int col, int band) const { return band * (cols + 1) + col; }

    std::vector<int> aisle_segments() const
    {
        std::vector<int> out;
        for (const auto& s : segments) {
            if (s.label == TopoLabel::Rackspace) out.push_back(s.id);
        }
        return out;
    }

    Point2 segment_start(int seg) const { return junctions[static_cast<std::size_t>(segments[static_cast<std::size_t>(seg)].junction_a)]; }
    Point2 segment_end(int seg) const { return junctions[static_cast<std::size_t>(segments[static_cast<std::size_t>(seg)].junction_b)]; }
};

inline WarehouseLayout generate_layout(const LayoutParams& p)
{
    if (p.n_racks < 1) throw SimulationError("n_racks must be at least 1");
    if (p.aisle_width <= 0 || p.rack_width <= 0 || p.rack_length <= 0 || p.corridor_width <= 0 ||
        p.width <= 0 || p.height <= 0) {
        throw SimulationError("layout dimensions must be positive");
    }
    const double min_aisle = p.aisle_width * (1.0 - p.aisle_jitter);

    // Largest column count that fits, then a full rows x cols grid.
    int cols = 0;
    int rows = 0;
    for (int c = std::min(p.n_racks, 1000); c >= 1; --c) {
        if (p.n_racks % c != 0) continue;
        const int r = p.n_racks / c;
        const double w = (c + 1) * min_aisle + c * p.rack_width;
        const double h = (r + 1) * p.corridor_width + r * p.rack_length;
        if (w <= p.width && h <= p.height) {
            cols = c;
            rows = r;
            break;
        }
    }
    if (cols == 0) {
        throw SimulationError("racks do not fit in a " + std::to_string(p.width) + " x " +
                              std::to_string(p.height) + " m box");
    }

    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> jitter(-p.aisle_jitter, p.aisle_jitter);
    std::vector<double> gaps(static_cast<std::size_t>(cols + 1));
    for (auto& g : gaps) g = p.aisle_width * (1.0 + jitter(rng));
    double used = cols * p.rack_width;
    for (double g : gaps) used += g;
    if (used > p.width) {
        const double inner = used - gaps.front() - gaps.back();
        const double outer = (p.width - inner) / 2.0;
        if (outer < min_aisle) throw SimulationError("racks do not fit across the width");
        gaps.front() = gaps.back() = outer;
    } else {
        gaps.front() += (p.width - used) / 2.0;
        gaps.back() += (p.width - used) / 2.0;
    }

    // Band boundaries along y: corridor, row, corridor, row, ..., corridor.
    const double slack_y = p.height - (rows + 1) * p.corridor_width - rows * p.rack_length;
    std::vector<double> corridor_lo(static_cast<std::size_t>(rows + 1));
    std::vector<double> corridor_hi(static_cast<std::size_t>(rows + 1));
    std::vector<double> row_lo(static_cast<std::size_t>(rows));
    std::vector<double> row_hi(static_cast<std::size_t>(rows));
    double y = 0.0;
    for (int b = 0; b <= rows; ++b) {
        double cw = p.corridor_width;
        if (b == 0 || b == rows) cw += rows == 0 ? slack_y : slack_y / 2.0;
        corridor_lo[static_cast<std::size_t>(b)] = y;
        y += cw;
        corridor_hi[static_cast<std::size_t>(b)] = y;
        if (b < rows) {
            row_lo[static_cast<std::size_t>(b)] = y;
            y += p.rack_length;
            row_hi[static_cast<std::size_t>(b)] = y;
        }
    }
    corridor_hi.back() = p.height;

    // Column boundaries along x: gap, rack, gap, ..., gap.
    std::vector<double> gap_lo(gaps.size()), gap_hi(gaps.size());
    std::vector<double> rack_lo(static_cast<std::size_t>(cols)), rack_hi(static_cast<std::size_t>(cols));
    double x = 0.0;
    for (int k = 0; k <= cols; ++k) {
        gap_lo[static_cast<std::size_t>(k)] = x;
        x += gaps[static_cast<std::size_t>(k)];
        gap_hi[static_cast<std::size_t>(k)] = x;
        if (k < cols) {
            rack_lo[static_cast<std::size_t>(k)] = x;
            x += p.rack_width;
            rack_hi[static_cast<std::size_t>(k)] = x;
        }
    }
    gap_hi.back() = p.width;

    WarehouseLayout L;
    L.width = p.width;
    L.height = p.height;
    L.rows = rows;
    L.cols = cols;
    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k < cols; ++k) {
            L.racks.push_back({rack_lo[static_cast<std::size_t>(k)], row_lo[static_cast<std::size_t>(r)],
                               rack_hi[static_cast<std::size_t>(k)], row_hi[static_cast<std::size_t>(r)]});
        }
    }

    auto add_region = [&](TopoLabel label, Rect area) {
        const int id = static_cast<int>(L.regions.size());
        L.regions.push_back({id, label, area});
        return id;
    };
    std::vector<int> aisle_region;
    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k <= cols; ++k) {
            aisle_region.push_back(add_region(
                TopoLabel::Rackspace, {gap_lo[static_cast<std::size_t>(k)], row_lo[static_cast<std::size_t>(r)],
                                       gap_hi[static_cast<std::size_t>(k)], row_hi[static_cast<std::size_t>(r)]}));
        }
    }
    std::vector<int> corridor_region;
    for (int b = 0; b <= rows; ++b) {
        for (int k = 0; k < cols; ++k) {
            corridor_region.push_back(add_region(
                TopoLabel::Corridor, {rack_lo[static_cast<std::size_t>(k)], corridor_lo[static_cast<std::size_t>(b)],
                                      rack_hi[static_cast<std::size_t>(k)], corridor_hi[static_cast<std::size_t>(b)]}));
        }
    }
    for (int b = 0; b <= rows; ++b) {
        for (int k = 0; k <= cols; ++k) {
            const Rect patch{gap_lo[static_cast<std::size_t>(k)], corridor_lo[static_cast<std::size_t>(b)],
                             gap_hi[static_cast<std::size_t>(k)], corridor_hi[static_cast<std::size_t>(b)]};
            L.junction_region.push_back(add_region(TopoLabel::Intersection, patch));
            L.junctions.push_back({(patch.xmin + patch.xmax) / 2.0, (patch.ymin + patch.ymax) / 2.0});
        }
    }

    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k <= cols; ++k) {
            const int id = static_cast<int>(L.segments.size());
            L.segments.push_back({id, aisle_region[static_cast<std::size_t>(r * (cols + 1) + k)],
                                  TopoLabel::Rackspace, L.junction(k, r), L.junction(k, r + 1)});
        }
    }
    for (int b = 0; b <= rows; ++b) {
        for (int k = 0; k < cols; ++k) {
            const int id = static_cast<int>(L.segments.size());
            L.segments.push_back({id, corridor_region[static_cast<std::size_t>(b * cols + k)],
                                  TopoLabel::Corridor, L.junction(k, b), L.junction(k + 1, b)});
        }
    }
    return L;
}

inline WarehouseLayout generate_layout(int n_racks, double aisle_width, double rack_width,
                                       double rack_length, std::uint64_t seed)
{
    LayoutParams p;
    p.n_racks = n_racks;
    p.aisle_width = aisle_width;
    p.rack_width = rack_width;
    p.rack_length = rack_length;
    p.seed = seed;
    return generate_layout(p);
}

struct TrajectoryPoint {
    Pose2D pose;
    TopoLabel label = TopoLabel::Corridor;
    int region = -1; ///< ground-truth region id, simulation only
    double timestamp = 0.0;
};

using Trajectory = std::vector<TrajectoryPoint>;

namespace detail {

/// Dijkstra over junctions; returns the junction sequence from `from` to `to`.
inline std::vector<int> route(const WarehouseLayout& L, int from, int to)
{
    const auto n = L.junctions.size();
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<int> prev(n, -1);
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[static_cast<std::size_t>(from)] = 0.0;
    pq.push({0.0, from});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        for (const auto& s : L.segments) {
            int v = -1;
            if (s.junction_a == u) v = s.junction_b;
            else if (s.junction_b == u) v = s.junction_a;
            else continue;
            const double nd = d + distance(L.junctions[static_cast<std::size_t>(u)],
                                           L.junctions[static_cast<std::size_t>(v)]);
            if (nd < dist[static_cast<std::size_t>(v)] - 1e-12) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                pq.push({nd, v});
            }
        }
    }
    std::vector<int> path;
    for (int v = to; v != -1; v = prev[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

inline double route_length(const WarehouseLayout& L, const std::vector<int>& path)
{
    double len = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        len += distance(L.junctions[static_cast<std::size_t>(path[i - 1])],
                        L.junctions[static_cast<std::size_t>(path[i])]);
    }
    return len;
}

} // namespace detail

/// Follows the plan along centerlines and samples poses every `step` meters.
/// Each plan entry is a navigation segment id that is traversed end to end; the
/// robot reaches it along the shortest route from where it stands. The walk
/// starts just outside the first segment's initial intersection.
inline Trajectory generate_trajectory(const WarehouseLayout& L, const std::vector<int>& plan,
                                      double step = 0.25)
{
    if (plan.empty()) throw SimulationError("empty plan");
    if (step <= 0.0) throw SimulationError("step must be positive");
    for (int s : plan) {
        if (s < 0 || s >= static_cast<int>(L.segments.size())) {
            throw SimulationError("plan references unknown segment " + std::to_string(s));
        }
    }

    std::vector<Point2> waypoints;
    const auto& first = L.segments[static_cast<std::size_t>(plan.front())];
    {
        const Point2 a = L.junctions[static_cast<std::size_t>(first.junction_a)];
        const Point2 b = L.junctions[static_cast<std::size_t>(first.junction_b)];
        const double len = distance(a, b);
        const Point2 dir{(b.x - a.x) / len, (b.y - a.y) / len};
        const Rect& patch = L.regions[static_cast<std::size_t>(L.junction_region[static_cast<std::size_t>(first.junction_a)])].area;
        const double half = std::abs(dir.x) > 0.5 ? (patch.xmax - patch.xmin) / 2.0
                                                  : (patch.ymax - patch.ymin) / 2.0;
        const double off = std::min(half + step / 2.0, len / 2.0);
        waypoints.push_back({a.x + dir.x * off, a.y + dir.y * off});
        waypoints.push_back(b);
    }
    int at = first.junction_b;
    for (std::size_t i = 1; i < plan.size(); ++i) {
        const auto& seg = L.segments[static_cast<std::size_t>(plan[i])];
        const auto ra = detail::route(L, at, seg.junction_a);
        const auto rb = detail::route(L, at, seg.junction_b);
        const bool use_a = detail::route_length(L, ra) <= detail::route_length(L, rb);
        const auto& r = use_a ? ra : rb;
        for (std::size_t k = 1; k < r.size(); ++k) waypoints.push_back(L.junctions[static_cast<std::size_t>(r[k])]);
        at = use_a ? seg.junction_b : seg.junction_a;
        waypoints.push_back(L.junctions[static_cast<std::size_t>(at)]);
    }
    std::vector<Point2> wp;
    for (const auto& p : waypoints) {
        if (wp.empty() || distance(wp.back(), p) > 1e-12) wp.push_back(p);
    }

    std::vector<double> cum{0.0};
    for (std::size_t i = 1; i < wp.size(); ++i) cum.push_back(cum.back() + distance(wp[i - 1], wp[i]));
    const double total = cum.back();

    Trajectory out;
    std::size_t piece = 0;
    for (int k = 0;; ++k) {
        const double s = k * step;
        if (s > total + 1e-9) break;
        while (piece + 2 < wp.size() && s >= cum[piece + 1]) ++piece;
        const Point2& a = wp[piece];
        const Point2& b = wp[piece + 1];
        const double len = cum[piece + 1] - cum[piece];
        const double t = std::clamp((s - cum[piece]) / len, 0.0, 1.0);
        const Point2 pos{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
        TrajectoryPoint tp;
        tp.pose = Pose2D(pos.x, pos.y, std::atan2(b.y - a.y, b.x - a.x));
        const auto reg = L.region_at(pos);
        if (!reg) throw SimulationError("trajectory left free space");
        tp.label = reg->label;
        tp.region = reg->id;
        tp.timestamp = s;
        out.push_back(tp);
    }
    return out;
}

/// Boustrophedon over every aisle row by row, then a return leg that
/// revisits the last aisle column, the bottom corridor and the first aisle.
inline std::vector<int> default_plan(const WarehouseLayout& L)
{
    std::vector<int> plan;
    for (int r = 0; r < L.rows; ++r) {
        for (int i = 0; i <= L.cols; ++i) {
            const int k = r % 2 == 0 ? i : L.cols - i;
            plan.push_back(L.aisle_segment(k, r));
        }
    }
    const int last_col = L.rows % 2 == 1 ? L.cols : 0;
    for (int r = L.rows - 2; r >= 0; --r) plan.push_back(L.aisle_segment(last_col, r));
    if (last_col == L.cols) {
        for (int k = L.cols - 1; k >= 0; --k) plan.push_back(L.corridor_segment(k, 0));
    } else {
        for (int k = 0; k < L.cols; ++k) plan.push_back(L.corridor_segment(k, 0));
    }
    plan.push_back(L.aisle_segment(0, 0));
    return plan;
}

struct NoiseModel {
    double sigma_x = 0.01;      ///< m per step
    double sigma_y = 0.005;     ///< m per step
    double sigma_theta = 0.002; ///< rad per step
    double bias_x = 0.0;
    double bias_y = 0.0;
    double bias_theta = 0.0015;///< rad per step
    double label_error_rate = 0.06;
    double scan_range_sigma = 0.01;
    std::uint64_t seed = 1;

    static NoiseModel noiseless()
    {
        NoiseModel n;
        n.sigma_x = n.sigma_y = n.sigma_theta = 0.0;
        n.bias_x = n.bias_y = n.bias_theta = 0.0;
        n.label_error_rate = 0.0;
        n.scan_range_sigma = 0.0;
        return n;
    }
};

struct Scan {
    std::vector<Point2> points; ///< sensor frame
    std::vector<int> beam_index;
    int beams = 0;
    double max_range = 0.0;
};

struct ScanParams {
    int beams = 180;
    double max_range = 15.0;
};

namespace detail {

/// Distance along a ray to an axis-aligned box boundary, entering from outside.
inline std::optional<double> ray_rect(const Point2& o, double dx, double dy, const Rect& r)
{
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    const double lo[2] = {r.xmin, r.ymin};
    const double hi[2] = {r.xmax, r.ymax};
    const double org[2] = {o.x, o.y};
    const double d[2] = {dx, dy};
    for (int a = 0; a < 2; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (org[a] < lo[a] || org[a] > hi[a]) return std::nullopt;
            continue;
        }
        double t1 = (lo[a] - org[a]) / d[a];
        double t2 = (hi[a] - org[a]) / d[a];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    }
    if (tmax < tmin || tmax < 0.0) return std::nullopt;
    return tmin >= 0.0 ? tmin : 0.0;
}

/// Distance from inside the box [0,w]x[0,h] to its wall.
inline double ray_box_exit(const Point2& o, double dx, double dy, double w, double h)
{
    double t = std::numeric_limits<double>::infinity();
    if (dx > 1e-15) t = std::min(t, (w - o.x) / dx);
    if (dx < -1e-15) t = std::min(t, -o.x / dx);
    if (dy > 1e-15) t = std::min(t, (h - o.y) / dy);
    if (dy < -1e-15) t = std::min(t, -o.y / dy);
    return t;
}

} // namespace detail

/// Casts `beams` rays at 2πk/beams in the sensor frame. `rng` is only
/// consulted when range_sigma > 0.
template <class Rng>
Scan raycast(const WarehouseLayout& L, const Pose2D& pose, int beams, double max_range,
             double range_sigma, Rng& rng)
{
    const Point2 o{pose.x, pose.y};
    if (!L.in_free_space(o)) throw SimulationError("scan origin is inside a rack or outside the box");
    Scan scan;
    scan.beams = beams;
    scan.max_range = max_range;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int k = 0; k < beams; ++k) {
        const double a = 2.0 * std::numbers::pi * k / beams;
        const double wa = pose.theta + a;
        const double dx = std::cos(wa);
        const double dy = std::sin(wa);
        double t = detail::ray_box_exit(o, dx, dy, L.width, L.height);
        for (const auto& r : L.racks) {
            if (auto hit = detail::ray_rect(o, dx, dy, r); hit && *hit < t) t = *hit;
        }
        if (!(t <= max_range)) continue;
        double range = t;
        if (range_sigma > 0.0) range = std::clamp(t + range_sigma * noise(rng), 0.0, max_range);
        scan.points.push_back({range * std::cos(a), range * std::sin(a)});
        scan.beam_index.push_back(k);
    }
    return scan;
}

inline Scan raycast(const WarehouseLayout& L, const Pose2D& pose, int beams, double max_range)
{
    std::mt19937_64 unused(0);
    return raycast(L, pose, beams, max_range, 0.0, unused);
}

struct SimulatedRun {
    PoseGraph graph;          ///< dead-reckoned estimates, noisy labels, odometry edges
    std::vector<TopoLabel> true_labels;
    std::vector<int> true_regions;
    std::vector<Scan> scans;
};

/// Derives independent streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline SimulatedRun corrupt(const WarehouseLayout& L, const Trajectory& truth, const NoiseModel& noise,
                            const ScanParams& scan_params = {})
{
    if (truth.size() < 2) throw SimulationError("corrupt needs at least two poses");
    if (noise.sigma_x < 0 || noise.sigma_y < 0 || noise.sigma_theta < 0 || noise.scan_range_sigma < 0) {
        throw SimulationError("noise sigmas must be non-negative");
    }
    if (!(noise.label_error_rate >= 0.0 && noise.label_error_rate < 1.0)) {
        throw SimulationError("label_error_rate must be in [0, 1)");
    }
    std::mt19937_64 odom_rng(mix_seed(noise.seed, 0));
    std::mt19937_64 label_rng(mix_seed(noise.seed, 1));
    std::mt19937_64 scan_rng(mix_seed(noise.seed, 2));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, 1);

    SimulatedRun run;
    Pose2D est = truth.front().pose;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        TopoLabel label = truth[i].label;
        if (noise.label_error_rate > 0.0 && unit(label_rng) < noise.label_error_rate) {
            const int cur = static_cast<int>(label);
            const int shift = 1 + other(label_rng);
            label = static_cast<TopoLabel>((cur + shift) % 3);
        }
        if (i > 0) {
            const Pose2D rel = between(truth[i - 1].pose, truth[i].pose);
            Pose2D z(rel.x + noise.sigma_x * gauss(odom_rng) + noise.bias_x,
                     rel.y + noise.sigma_y * gauss(odom_rng) + noise.bias_y,
                     rel.theta + noise.sigma_theta * gauss(odom_rng) + noise.bias_theta);
            est = compose(est, z);
            run.graph.add_node(est, label);
            run.graph.add_edge(make_edge(static_cast<NodeId>(i - 1), static_cast<NodeId>(i), z,
                                         ConstraintKind::Odometry));
        } else {
            run.graph.add_node(est, label);
        }
        run.true_labels.push_back(truth[i].label);
        run.true_regions.push_back(truth[i].region);
        run.scans.push_back(raycast(L, truth[i].pose, scan_params.beams, scan_params.max_range,
                                    noise.scan_range_sigma, scan_rng));
    }
    return run;
}

} // namespace mslam
