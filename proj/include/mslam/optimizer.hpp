#pragma once

#include "mslam/geometry.hpp"
#include "mslam/pose_graph.hpp"

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mslam {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SolveMode { Batch, Incremental };

struct SolverConfig {
    int max_iterations = 100;
    double chi2_rel_tol = 1e-6;
    double damping = 1e-4; ///< initial Levenberg-Marquardt lambda
    double dcs_phi = 1.0;
    std::vector<ConstraintKind> robust_kinds{ConstraintKind::LoopClosure, ConstraintKind::Manhattan};
    SolveMode mode = SolveMode::Batch;
    int incremental_batch_period = 10;

    /// Odometry is never robust-scaled.
    bool is_robust(const PGEdge& e) const
    {
        if (!e.robust || e.kind == ConstraintKind::Odometry) return false;
        return std::find(robust_kinds.begin(), robust_kinds.end(), e.kind) != robust_kinds.end();
    }

    void validate() const
    {
        if (!(chi2_rel_tol > 0.0) || !(damping > 0.0)) throw SolverError("tolerances must be positive");
        if (!(dcs_phi > 0.0)) throw SolverError("phi must be positive");
        if (max_iterations < 1 || incremental_batch_period < 1) throw SolverError("iteration counts must be positive");
    }
};

struct SolveReport {
    double initial_chi2 = 0.0;
    double final_chi2 = 0.0;
    int iterations = 0;
    std::vector<double> scales; ///< DCS factor per edge at the solution (1 for non-robust edges)
    bool converged = false;
};

/// Error of edge i→j: log-map of Z⁻¹ · (xi⁻¹ · xj), angle wrapped to (-π, π].
inline Eigen::Vector3d residual(const PGEdge& e, const Pose2D& xi, const Pose2D& xj)
{
    const Pose2D err = between(e.measurement, between(xi, xj));
    return {err.x, err.y, err.theta};
}

struct EdgeJacobians {
    Eigen::Matrix3d d_xi;
    Eigen::Matrix3d d_xj;
};

/// Jacobians of residual() with respect to (x, y, θ) of each endpoint.
inline EdgeJacobians residual_jacobians(const PGEdge& e, const Pose2D& xi, const Pose2D& xj)
{
    const double ci = std::cos(xi.theta), si = std::sin(xi.theta);
    const double cz = std::cos(e.measurement.theta), sz = std::sin(e.measurement.theta);
    Eigen::Matrix2d RiT;
    RiT << ci, si, -si, ci;
    Eigen::Matrix2d RzT;
    RzT << cz, sz, -sz, cz;
    Eigen::Matrix2d dRiT;
    dRiT << -si, ci, -ci, -si;
    const Eigen::Vector2d dt(xj.x - xi.x, xj.y - xi.y);
    const Eigen::Matrix2d A = RzT * RiT;

    EdgeJacobians J;
    J.d_xi.setZero();
    J.d_xj.setZero();
    J.d_xi.topLeftCorner<2, 2>() = -A;
    J.d_xi.block<2, 1>(0, 2) = RzT * dRiT * dt;
    J.d_xi(2, 2) = -1.0;
    J.d_xj.topLeftCorner<2, 2>() = A;
    J.d_xj(2, 2) = 1.0;
    return J;
}

/// Dynamic covariance scaling factor min(1, 2Φ/(Φ + χ²)).
inline double dcs_scale(double chi2_edge, double phi)
{
    return std::min(1.0, 2.0 * phi / (phi + chi2_edge));
}

inline double edge_chi2(const PGEdge& e, const std::vector<Pose2D>& poses)
{
    const Eigen::Vector3d r = residual(e, poses[static_cast<std::size_t>(e.from)], poses[static_cast<std::size_t>(e.to)]);
    return r.dot(e.information * r);
}

inline double edge_chi2(const PGEdge& e, const PoseGraph& g)
{
    const Eigen::Vector3d r = residual(e, g.pose(e.from), g.pose(e.to));
    return r.dot(e.information * r);
}

/// Unweighted total χ² (no robust scaling).
inline double chi2(const PoseGraph& g)
{
    double total = 0.0;
    for (const auto& e : g.edges()) total += edge_chi2(e, g);
    return total;
}

/// Robust per-edge cost whose derivative in χ² is the DCS weight s²:
/// χ² up to Φ, then 3Φ − 4Φ²/(Φ + χ²), bounded by 3Φ.
inline double dcs_cost(double chi2_edge, double phi)
{
    if (chi2_edge <= phi) return chi2_edge;
    return 3.0 * phi - 4.0 * phi * phi / (phi + chi2_edge);
}

/// Objective minimised by the solver: plain χ² on non-robust edges, dcs_cost
/// on robust ones. Also returns the DCS factors evaluated at `poses`.
inline double robust_chi2(const std::vector<PGEdge>& edges, const std::vector<Pose2D>& poses,
                          const SolverConfig& cfg, std::vector<double>* scales = nullptr)
{
    double total = 0.0;
    if (scales) scales->assign(edges.size(), 1.0);
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const double c = edge_chi2(edges[k], poses);
        if (cfg.is_robust(edges[k])) {
            if (scales) (*scales)[k] = dcs_scale(c, cfg.dcs_phi);
            total += dcs_cost(c, cfg.dcs_phi);
        } else {
            total += c;
        }
    }
    return total;
}

/// Nodes that cannot be reached from node 0 along any edge.
inline std::vector<NodeId> unreachable_nodes(int n, const std::vector<PGEdge>& edges)
{
    std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(n));
    for (const auto& e : edges) {
        adj[static_cast<std::size_t>(e.from)].push_back(e.to);
        adj[static_cast<std::size_t>(e.to)].push_back(e.from);
    }
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<NodeId> q;
    if (n > 0) {
        q.push(0);
        seen[0] = true;
    }
    while (!q.empty()) {
        const NodeId u = q.front();
        q.pop();
        for (NodeId v : adj[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(v)]) {
                seen[static_cast<std::size_t>(v)] = true;
                q.push(v);
            }
        }
    }
    std::vector<NodeId> out;
    for (NodeId i = 0; i < n; ++i) {
        if (!seen[static_cast<std::size_t>(i)]) out.push_back(i);
    }
    return out;
}

namespace detail {

/// Levenberg-Marquardt over the nodes flagged free (node 0 is always held).
inline SolveReport levenberg_marquardt(std::vector<Pose2D>& poses, const std::vector<PGEdge>& edges,
                                       const std::vector<bool>& free, const SolverConfig& cfg)
{
    const int n = static_cast<int>(poses.size());
    std::vector<int> index(static_cast<std::size_t>(n), -1);
    int nv = 0;
    for (int i = 1; i < n; ++i) {
        if (free[static_cast<std::size_t>(i)]) index[static_cast<std::size_t>(i)] = nv++;
    }
    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < edges.size(); ++k) {
        if (index[static_cast<std::size_t>(edges[k].from)] >= 0 || index[static_cast<std::size_t>(edges[k].to)] >= 0) {
            active.push_back(k);
        }
    }

    SolveReport rep;
    std::vector<double> scales;
    double cost = robust_chi2(edges, poses, cfg, &scales);
    rep.initial_chi2 = cost;
    rep.final_chi2 = cost;
    rep.scales = scales;
    if (nv == 0 || active.empty()) {
        rep.converged = true;
        return rep;
    }

    const Eigen::Index dim = 3 * nv;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    bool analyzed = false;
    double lambda = cfg.damping;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(active.size() * 36 * 4);

    for (int it = 0; it < cfg.max_iterations; ++it) {
        trip.clear();
        Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
        for (std::size_t k : active) {
            const auto& e = edges[k];
            const auto& xi = poses[static_cast<std::size_t>(e.from)];
            const auto& xj = poses[static_cast<std::size_t>(e.to)];
            const Eigen::Vector3d r = residual(e, xi, xj);
            const auto J = residual_jacobians(e, xi, xj);
            const double w = scales[k] * scales[k];
            const Eigen::Matrix3d Om = w * e.information;
            const int a = index[static_cast<std::size_t>(e.from)];
            const int c = index[static_cast<std::size_t>(e.to)];
            auto put = [&trip](int r0, int c0, const Eigen::Matrix3d& M) {
                for (int u = 0; u < 3; ++u) {
                    for (int v = 0; v < 3; ++v) trip.emplace_back(3 * r0 + u, 3 * c0 + v, M(u, v));
                }
            };
            if (a >= 0) {
                put(a, a, J.d_xi.transpose() * Om * J.d_xi);
                b.segment<3>(3 * a) += J.d_xi.transpose() * Om * r;
            }
            if (c >= 0) {
                put(c, c, J.d_xj.transpose() * Om * J.d_xj);
                b.segment<3>(3 * c) += J.d_xj.transpose() * Om * r;
            }
            if (a >= 0 && c >= 0) {
                const Eigen::Matrix3d Hac = J.d_xi.transpose() * Om * J.d_xj;
                put(a, c, Hac);
                put(c, a, Hac.transpose());
            }
        }
        if (b.lpNorm<Eigen::Infinity>() < 1e-14) {
            rep.converged = true;
            break;
        }
        Eigen::SparseMatrix<double> H(dim, dim);
        H.setFromTriplets(trip.begin(), trip.end());
        const Eigen::VectorXd diag = H.diagonal();
        if (!analyzed) {
            solver.analyzePattern(H);
            analyzed = true;
        }

        bool accepted = false;
        bool factor_ok = false;
        while (lambda < 1e12) {
            Eigen::SparseMatrix<double> A = H;
            for (Eigen::Index i = 0; i < dim; ++i) A.coeffRef(i, i) += lambda * std::max(diag[i], 1e-9);
            solver.factorize(A);
            if (solver.info() != Eigen::Success) {
                lambda *= 10.0;
                continue;
            }
            factor_ok = true;
            const Eigen::VectorXd dx = solver.solve(-b);
            if (!dx.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            std::vector<Pose2D> trial = poses;
            for (int i = 1; i < n; ++i) {
                const int v = index[static_cast<std::size_t>(i)];
                if (v < 0) continue;
                auto& p = trial[static_cast<std::size_t>(i)];
                p = Pose2D(p.x + dx[3 * v], p.y + dx[3 * v + 1], p.theta + dx[3 * v + 2]);
            }
            std::vector<double> trial_scales;
            const double trial_cost = robust_chi2(edges, trial, cfg, &trial_scales);
            if (trial_cost < cost) {
                poses = std::move(trial);
                scales = std::move(trial_scales);
                const double rel = (cost - trial_cost) / std::max(cost, 1e-300);
                cost = trial_cost;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                rep.iterations = it + 1;
                if (rel < cfg.chi2_rel_tol) rep.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!factor_ok) throw SolverError("normal equations could not be solved; the graph is under-constrained");
        if (!accepted) {
            rep.converged = true; // no descent direction left at this damping range
            break;
        }
        if (rep.converged) break;
    }
    rep.final_chi2 = cost;
    rep.scales = scales;
    return rep;
}

} // namespace detail

/// Levenberg-Marquardt with node 0 fixed. Robust edges enter the normal
/// equations with their information scaled by s², refreshed at every
/// linearization (iteratively reweighted least squares); steps are accepted
/// only when robust_chi2 decreases.
inline std::pair<PoseGraph, SolveReport> solve_batch(const PoseGraph& pg, const SolverConfig& cfg = {})
{
    cfg.validate();
    if (pg.empty()) throw SolverError("empty graph");
    if (const auto lost = unreachable_nodes(pg.size(), pg.edges()); !lost.empty()) {
        std::string msg = "graph is disconnected; unreachable nodes:";
        for (std::size_t k = 0; k < lost.size() && k < 20; ++k) msg += " " + std::to_string(lost[k]);
        if (lost.size() > 20) msg += " ...";
        throw SolverError(msg);
    }
    std::vector<Pose2D> poses = pg.poses();
    const std::vector<bool> free(poses.size(), true);
    SolveReport rep = detail::levenberg_marquardt(poses, pg.edges(), free, cfg);
    PoseGraph out = pg;
    out.set_poses(poses);
    return {std::move(out), std::move(rep)};
}

/// Streams nodes in id order. Each new node is dead-reckoned from the latest
/// estimate; a local solve over the last 3·period nodes runs every `period`
/// nodes, and any loop or Manhattan edge triggers a full relinearized solve.
class IncrementalSolver {
public:
    IncrementalSolver(const SolverConfig& cfg, const Pose2D& origin, TopoLabel label = TopoLabel::Corridor)
        : cfg_(cfg)
    {
        cfg_.validate();
        graph_.add_node(origin, label);
        poses_.push_back(origin);
    }

    /// `increment`, when given, replaces the odometry measurement as the
    /// dead-reckoning step used for the initial guess.
    void add_node(const PGEdge& odometry, TopoLabel label = TopoLabel::Corridor, const Pose2D* increment = nullptr)
    {
        const NodeId id = graph_.size();
        if (odometry.kind != ConstraintKind::Odometry || odometry.from != id - 1 || odometry.to != id) {
            throw SolverError("out-of-order node: expected odometry " + std::to_string(id - 1) + "->" +
                              std::to_string(id));
        }
        const Pose2D init = compose(poses_.back(), increment ? *increment : odometry.measurement);
        graph_.add_node(init, label);
        graph_.add_edge(odometry);
        poses_.push_back(init);
        const int period = std::max(1, cfg_.incremental_batch_period);
        if (id % period == 0) local_solve(3 * period);
    }

    /// Adds loop/Manhattan edges between existing nodes and re-solves the whole graph.
    void add_constraints(const std::vector<PGEdge>& edges)
    {
        if (edges.empty()) return;
        for (const auto& e : edges) graph_.add_edge(e);
        full_solve();
    }

    /// Final full solve; returns the optimized graph.
    PoseGraph finish()
    {
        full_solve();
        PoseGraph g = graph_;
        g.set_poses(poses_);
        return g;
    }

    const std::vector<SolveReport>& reports() const { return reports_; }
    int size() const { return graph_.size(); }
    const std::vector<Pose2D>& estimate() const { return poses_; }

private:
    void local_solve(int window)
    {
        std::vector<bool> free(poses_.size(), false);
        for (int i = std::max(1, static_cast<int>(poses_.size()) - window); i < static_cast<int>(poses_.size()); ++i) {
            free[static_cast<std::size_t>(i)] = true;
        }
        detail::levenberg_marquardt(poses_, graph_.edges(), free, cfg_);
    }

    void full_solve()
    {
        const std::vector<bool> free(poses_.size(), true);
        reports_.push_back(detail::levenberg_marquardt(poses_, graph_.edges(), free, cfg_));
    }

    SolverConfig cfg_;
    PoseGraph graph_;
    std::vector<Pose2D> poses_;
    std::vector<SolveReport> reports_;
};

/// Replays a complete graph through IncrementalSolver: constraint edges are
/// released once both endpoints exist. New nodes are dead-reckoned with the
/// odometry, or with the steps of the graph's own estimate when
/// `follow_estimate` is set (warm start).
inline std::pair<PoseGraph, std::vector<SolveReport>> solve_incremental(const PoseGraph& pg, const SolverConfig& cfg = {},
                                                                        bool follow_estimate = false)
{
    if (pg.empty()) throw SolverError("empty graph");
    if (const auto lost = unreachable_nodes(pg.size(), pg.edges()); !lost.empty()) {
        throw SolverError("graph is disconnected");
    }
    std::vector<std::vector<PGEdge>> arriving(static_cast<std::size_t>(pg.size()));
    for (const auto& e : pg.edges()) {
        if (e.kind == ConstraintKind::Odometry) continue;
        arriving[static_cast<std::size_t>(std::max(e.from, e.to))].push_back(e);
    }
    IncrementalSolver inc(cfg, pg.pose(0), pg.label(0));
    for (NodeId k = 1; k < pg.size(); ++k) {
        const PGEdge* odo = pg.odometry(k - 1);
        if (odo == nullptr) throw SolverError("missing odometry edge into node " + std::to_string(k));
        if (follow_estimate) {
            const Pose2D step = between(pg.pose(k - 1), pg.pose(k));
            inc.add_node(*odo, pg.label(k), &step);
        } else {
            inc.add_node(*odo, pg.label(k));
        }
        inc.add_constraints(arriving[static_cast<std::size_t>(k)]);
    }
    PoseGraph out = inc.finish();
    // Keep the caller's edge order.
    PoseGraph result = pg;
    result.set_poses(out.poses());
    return {std::move(result), inc.reports()};
}

inline std::pair<PoseGraph, SolveReport> solve(const PoseGraph& pg, const SolverConfig& cfg, bool follow_estimate = false)
{
    if (cfg.mode == SolveMode::Batch) return solve_batch(pg, cfg);
    auto [g, reports] = solve_incremental(pg, cfg, follow_estimate);
    SolveReport rep = reports.empty() ? SolveReport{} : reports.back();
    if (!reports.empty()) rep.initial_chi2 = reports.front().initial_chi2;
    return {std::move(g), std::move(rep)};
}

} // namespace mslam
