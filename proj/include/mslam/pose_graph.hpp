#pragma once

#include "mslam/geometry.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mslam {

using NodeId = int;
using Information = Eigen::Matrix3d;

enum class TopoLabel { Rackspace, Corridor, Intersection };

inline constexpr TopoLabel kAllLabels[] = {TopoLabel::Rackspace, TopoLabel::Corridor,
                                           TopoLabel::Intersection};

enum class ConstraintKind { Odometry, LoopClosure, Manhattan };

inline std::string_view to_string(TopoLabel label)
{
    switch (label) {
    case TopoLabel::Rackspace: return "RACKSPACE";
    case TopoLabel::Corridor: return "CORRIDOR";
    case TopoLabel::Intersection: return "INTERSECTION";
    }
    return "?";
}

inline std::optional<TopoLabel> parse_label(std::string_view s)
{
    if (s == "RACKSPACE") return TopoLabel::Rackspace;
    if (s == "CORRIDOR") return TopoLabel::Corridor;
    if (s == "INTERSECTION") return TopoLabel::Intersection;
    return std::nullopt;
}

inline std::string_view to_string(ConstraintKind kind)
{
    switch (kind) {
    case ConstraintKind::Odometry: return "ODOM";
    case ConstraintKind::LoopClosure: return "LOOP";
    case ConstraintKind::Manhattan: return "MANHATTAN";
    }
    return "?";
}

inline std::optional<ConstraintKind> parse_kind(std::string_view s)
{
    if (s == "ODOM") return ConstraintKind::Odometry;
    if (s == "LOOP") return ConstraintKind::LoopClosure;
    if (s == "MANHATTAN") return ConstraintKind::Manhattan;
    return std::nullopt;
}

// Default information matrices (1/m², 1/m², 1/rad²). Manhattan edges trust the
// binned orientation and only loosely the rectified translation.
inline Information default_information(ConstraintKind kind)
{
    switch (kind) {
    case ConstraintKind::Odometry: return Eigen::Vector3d(50, 50, 100).asDiagonal();
    case ConstraintKind::LoopClosure: return Eigen::Vector3d(20, 20, 50).asDiagonal();
    case ConstraintKind::Manhattan: return Eigen::Vector3d(5, 5, 200).asDiagonal();
    }
    return Information::Identity();
}

inline bool is_valid_information(const Information& info)
{
    if (!info.allFinite() || !info.isApprox(info.transpose(), 1e-12)) {
        return false;
    }
    Eigen::SelfAdjointEigenSolver<Information> es(info, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() > 0.0;
}

struct PGEdge {
    NodeId from = 0;
    NodeId to = 0;
    Pose2D measurement;
    Information information = Information::Identity();
    ConstraintKind kind = ConstraintKind::Odometry;
    bool robust = false;
};

inline PGEdge make_edge(NodeId from, NodeId to, const Pose2D& z, ConstraintKind kind)
{
    return PGEdge{from, to, z, default_information(kind), kind,
                  kind != ConstraintKind::Odometry};
}

struct PGNode {
    NodeId id = 0;
    Pose2D pose;
    TopoLabel label = TopoLabel::Corridor;
};

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Nodes carry ids 0..n-1 in order; node 0 is the gauge.
class PoseGraph {
public:
    NodeId add_node(const Pose2D& pose, TopoLabel label = TopoLabel::Corridor)
    {
        const auto id = static_cast<NodeId>(nodes_.size());
        nodes_.push_back({id, pose, label});
        odom_index_.push_back(-1);
        return id;
    }

    void add_edge(const PGEdge& e)
    {
        if (!has_node(e.from) || !has_node(e.to) || e.from == e.to) {
            throw GraphError("edge " + std::to_string(e.from) + "->" + std::to_string(e.to) +
                             " references a missing node");
        }
        if (e.kind == ConstraintKind::Odometry && e.to != e.from + 1) {
            throw GraphError("odometry edge must connect consecutive ids");
        }
        if (!is_valid_information(e.information)) {
            throw GraphError("information matrix is not symmetric positive definite");
        }
        if (e.kind == ConstraintKind::Odometry) {
            odom_index_[static_cast<std::size_t>(e.from)] = static_cast<int>(edges_.size());
        }
        edges_.push_back(e);
    }

    bool has_node(NodeId id) const { return id >= 0 && id < size(); }
    int size() const { return static_cast<int>(nodes_.size()); }
    bool empty() const { return nodes_.empty(); }

    const std::vector<PGNode>& nodes() const { return nodes_; }
    const std::vector<PGEdge>& edges() const { return edges_; }

    const Pose2D& pose(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).pose; }
    void set_pose(NodeId id, const Pose2D& p) { nodes_.at(static_cast<std::size_t>(id)).pose = p; }
    TopoLabel label(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).label; }
    void set_label(NodeId id, TopoLabel l) { nodes_.at(static_cast<std::size_t>(id)).label = l; }

    std::vector<Pose2D> poses() const
    {
        std::vector<Pose2D> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back(n.pose);
        return out;
    }

    std::vector<TopoLabel> labels() const
    {
        std::vector<TopoLabel> out;
        out.reserve(nodes_.size());
        for (const auto& n : nodes_) out.push_back(n.label);
        return out;
    }

    void set_poses(const std::vector<Pose2D>& p)
    {
        if (p.size() != nodes_.size()) throw GraphError("pose count mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) nodes_[i].pose = p[i];
    }

    /// Odometry edge i -> i+1, if present.
    const PGEdge* odometry(NodeId i) const
    {
        if (i < 0 || i + 1 >= size()) return nullptr;
        const int k = odom_index_[static_cast<std::size_t>(i)];
        return k < 0 ? nullptr : &edges_[static_cast<std::size_t>(k)];
    }

    /// Copy with only the odometry edges.
    PoseGraph odometry_only() const
    {
        PoseGraph g = *this;
        g.clear_edges_except_odometry();
        return g;
    }

    void clear_edges_except_odometry()
    {
        std::erase_if(edges_, [](const PGEdge& e) { return e.kind != ConstraintKind::Odometry; });
        rebuild_odom_index();
    }

private:
    void rebuild_odom_index()
    {
        odom_index_.assign(nodes_.size(), -1);
        for (std::size_t k = 0; k < edges_.size(); ++k) {
            const auto& e = edges_[k];
            if (e.kind == ConstraintKind::Odometry) {
                odom_index_[static_cast<std::size_t>(e.from)] = static_cast<int>(k);
            }
        }
    }

    std::vector<PGNode> nodes_;
    std::vector<PGEdge> edges_;
    std::vector<int> odom_index_;
};

/// Chains the odometry measurements from node 0's pose.
inline std::vector<Pose2D> dead_reckon(const PoseGraph& g)
{
    std::vector<Pose2D> out;
    if (g.empty()) return out;
    out.push_back(g.pose(0));
    for (NodeId i = 0; i + 1 < g.size(); ++i) {
        const PGEdge* e = g.odometry(i);
        if (e == nullptr) throw GraphError("missing odometry edge " + std::to_string(i));
        out.push_back(compose(out.back(), e->measurement));
    }
    return out;
}

} // namespace mslam
