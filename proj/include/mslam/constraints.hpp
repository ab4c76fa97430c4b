#pragma once

#include "mslam/icp.hpp"
#include "mslam/manhattan.hpp"
#include "mslam/pose_graph.hpp"
#include "mslam/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace mslam {

struct LoopPairSample {
    NodeId pg_i = 0;
    NodeId pg_j = 0;
    Pose2D initial;
    double fraction = 0.0; ///< arc-length fraction along meta_i
};

struct LoopCandidate {
    NodeId pg_i = 0;
    NodeId pg_j = 0;
    Pose2D measurement;
    double residual = 0.0;
    bool converged = false;
    int source_proposal = 0;
};

namespace detail {

/// Node of `m` whose arc offset is closest to `fraction` of its length.
inline NodeId node_at_fraction(const MetaNode& m, const std::vector<double>& offsets, double fraction)
{
    const double target = fraction * offsets.back();
    std::size_t best = 0;
    double best_d = std::abs(offsets[0] - target);
    for (std::size_t k = 1; k < offsets.size(); ++k) {
        const double d = std::abs(offsets[k] - target);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return m.pg_start + static_cast<NodeId>(best);
}

/// Pairs at fractions 1/(k+1) .. k/(k+1); the second region is walked from its
/// far end when the proposal is reversed. Falls back to fewer pairs when a
/// region holds fewer than k nodes.
inline std::vector<std::pair<NodeId, NodeId>> fraction_pairs(const PoseGraph& pg, const ManhattanGraph& mg,
                                                             const ProposalPair& p, int k,
                                                             std::vector<double>* fractions = nullptr)
{
    std::vector<std::pair<NodeId, NodeId>> out;
    if (k < 1) return out;
    const MetaNode& a = mg.at(p.meta_i);
    const MetaNode& b = mg.at(p.meta_j);
    const int count = std::min({k, a.collection_size(), b.collection_size()});
    const auto off_a = arc_offsets(pg, a, mg.source);
    const auto off_b = arc_offsets(pg, b, mg.source);
    for (int m = 1; m <= count; ++m) {
        const double f = static_cast<double>(m) / (count + 1);
        const NodeId i = node_at_fraction(a, off_a, f);
        const NodeId j = node_at_fraction(b, off_b, p.reversed ? 1.0 - f : f);
        if (std::find(out.begin(), out.end(), std::pair{i, j}) != out.end()) continue;
        out.emplace_back(i, j);
        if (fractions) fractions->push_back(f);
    }
    return out;
}

} // namespace detail

inline std::vector<LoopPairSample> sample_loop_pairs(const ProposalPair& proposal, const PoseGraph& pg,
                                                     const ManhattanGraph& mg, int k)
{
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<double> fr;
    const auto pairs = detail::fraction_pairs(pg, mg, proposal, k, &fr);
    const Pose2D guess = proposal.reversed ? Pose2D(0.0, 0.0, std::numbers::pi) : Pose2D::identity();
    std::vector<LoopPairSample> out;
    for (std::size_t m = 0; m < pairs.size(); ++m) out.push_back({pairs[m].first, pairs[m].second, guess, fr[m]});
    return out;
}

struct LoopClosureResult {
    std::vector<PGEdge> edges;
    std::vector<LoopCandidate> accepted;
    std::vector<LoopCandidate> rejected;
};

/// ICP on k sampled pairs per proposal; keeps converged matches whose
/// residual does not exceed rho (m²).
inline LoopClosureResult build_loop_constraints(const std::vector<ProposalPair>& proposals, const PoseGraph& pg,
                                                const ManhattanGraph& mg, const std::vector<Scan>& scans, int k,
                                                double rho, const IcpParams& icp_params = {})
{
    LoopClosureResult out;
    for (const auto& p : proposals) {
        for (const auto& s : sample_loop_pairs(p, pg, mg, k)) {
            const auto r = icp(scans.at(static_cast<std::size_t>(s.pg_i)), scans.at(static_cast<std::size_t>(s.pg_j)),
                               s.initial, icp_params);
            LoopCandidate c{s.pg_i, s.pg_j, r.transform, r.residual, r.converged, p.id};
            if (r.status == IcpStatus::Ok && r.converged && r.residual <= rho) {
                out.edges.push_back(make_edge(s.pg_i, s.pg_j, r.transform, ConstraintKind::LoopClosure));
                out.accepted.push_back(c);
            } else {
                out.rejected.push_back(c);
            }
        }
    }
    return out;
}

/// Relative poses between matched nodes taken from the rectified frame, with
/// the relative heading pinned to 0 (same direction) or π (reversed).
inline std::vector<PGEdge> build_manhattan_constraints(const std::vector<ProposalPair>& proposals,
                                                       const ManhattanGraph& mg, const PoseGraph& pg,
                                                       const std::vector<Pose2D>& rectified, int neighborhood)
{
    std::vector<PGEdge> out;
    if (neighborhood < 1) return out;
    for (const auto& p : proposals) {
        for (const auto& [i, j] : detail::fraction_pairs(pg, mg, p, neighborhood)) {
            Pose2D z = between(rectified[static_cast<std::size_t>(i)], rectified[static_cast<std::size_t>(j)]);
            z.theta = p.reversed ? std::numbers::pi : 0.0;
            out.push_back(make_edge(i, j, z, ConstraintKind::Manhattan));
        }
    }
    return out;
}

inline std::vector<PGEdge> build_manhattan_constraints(const std::vector<ProposalPair>& proposals,
                                                       const ManhattanGraph& mg, const PoseGraph& pg,
                                                       int neighborhood)
{
    return build_manhattan_constraints(proposals, mg, pg, rectified_poses(pg, mg), neighborhood);
}

/// Manhattan edges carrying the skeleton itself, independent of proposals:
/// the two ends of every meta-node (Δθ = 0), and the end of a meta-node with
/// the start of each of the next two meta-nodes that run parallel to it
/// (Δθ = 0 or π). Perpendicular neighbours get no edge.
inline std::vector<PGEdge> build_structure_constraints(const ManhattanGraph& mg, const std::vector<Pose2D>& rectified)
{
    std::vector<PGEdge> out;
    auto rel = [&rectified](NodeId i, NodeId j, double dtheta) {
        Pose2D z = between(rectified[static_cast<std::size_t>(i)], rectified[static_cast<std::size_t>(j)]);
        z.theta = dtheta;
        return make_edge(i, j, z, ConstraintKind::Manhattan);
    };
    for (int a = 0; a < mg.size(); ++a) {
        const MetaNode& m = mg.at(a);
        if (m.pg_end > m.pg_start) out.push_back(rel(m.pg_start, m.pg_end, 0.0));
        for (int b = a + 1; b <= a + 2 && b < mg.size(); ++b) {
            const MetaNode& o = mg.at(b);
            const double turn = bin_angle(o.heading - m.heading);
            if (turn != 0.0 && turn != std::numbers::pi) continue;
            out.push_back(rel(m.pg_end, o.pg_start, turn));
        }
    }
    return out;
}

} // namespace mslam
