#pragma once

#include "mslam/constraints.hpp"
#include "mslam/icp.hpp"
#include "mslam/manhattan.hpp"
#include "mslam/metrics.hpp"
#include "mslam/optimizer.hpp"
#include "mslam/pose_graph.hpp"
#include "mslam/similarity.hpp"
#include "mslam/simulator.hpp"
#include "mslam/topology.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace mslam {

enum class StageId { Unoptimized, ManhattanOnly, ManhattanPlusLC, DensePlusLC, FeedbackLoop, IncrementalFeedback };

inline constexpr StageId kAllStages[] = {StageId::Unoptimized,     StageId::ManhattanOnly, StageId::ManhattanPlusLC,
                                         StageId::DensePlusLC,     StageId::FeedbackLoop,  StageId::IncrementalFeedback};

inline std::string_view to_string(StageId s)
{
    switch (s) {
    case StageId::Unoptimized: return "unoptimized";
    case StageId::ManhattanOnly: return "manhattan_only";
    case StageId::ManhattanPlusLC: return "manhattan_lc";
    case StageId::DensePlusLC: return "dense_lc";
    case StageId::FeedbackLoop: return "feedback";
    case StageId::IncrementalFeedback: return "incremental_feedback";
    }
    return "?";
}

inline std::optional<StageId> parse_stage(std::string_view s)
{
    for (StageId id : kAllStages) {
        if (to_string(id) == s) return id;
    }
    return std::nullopt;
}

/// Stage comparisons need runs that land on the same minimum to agree to
/// well below a millimetre, so the pipeline converges further than the
/// solver's own default.
inline SolverConfig tight_solver()
{
    SolverConfig c;
    c.chi2_rel_tol = 1e-10;
    return c;
}

struct PipelineConfig {
    LayoutParams layout;
    NoiseModel noise;
    ScanParams scan;
    double step = 0.25;
    int smoothing_window = 5; ///< 1 disables label smoothing
    int min_run = 3;
    int loop_pairs = 5;       ///< k: ICP pairs sampled per proposal
    double icp_rho = 0.05;    ///< m², residual filter for loop edges
    int manhattan_neighborhood = 3;
    bool structure_constraints = true; ///< skeleton edges alongside the proposal-driven ones
    IcpParams icp;
    SolverConfig solver = tight_solver();
    int max_cycles = 10;
    double feedback_chi2_tol = 1e-4;

    SynthesisSpec synthesis;
    TrainConfig training;
    int training_pairs = 2000;
    std::uint64_t mlp_seed = 1;
    double tau_high = 0.5;
    double tau_low = 0.8;
};

/// One simulated run: layout, ground truth and the corrupted observations.
struct Scenario {
    std::uint64_t seed = 0;
    WarehouseLayout layout;
    Trajectory truth;
    SimulatedRun run;
    TopologicalGraph topology; ///< from the noisy labels
    std::vector<Pose2D> truth_poses;
};

inline Scenario simulate(const PipelineConfig& cfg, std::uint64_t seed)
{
    Scenario s;
    s.seed = seed;
    LayoutParams lp = cfg.layout;
    lp.seed = mix_seed(seed, 10);
    s.layout = generate_layout(lp);
    s.truth = generate_trajectory(s.layout, default_plan(s.layout), cfg.step);
    NoiseModel nm = cfg.noise;
    nm.seed = mix_seed(seed, 11);
    s.run = corrupt(s.layout, s.truth, nm, cfg.scan);
    const auto labels = cfg.smoothing_window > 1 ? smooth_labels(s.run.graph.labels(), cfg.smoothing_window)
                                                 : s.run.graph.labels();
    s.topology = group(labels, cfg.min_run);
    for (const auto& tp : s.truth) s.truth_poses.push_back(tp.pose);
    return s;
}

inline SiameseModel train_model(const PipelineConfig& cfg)
{
    const auto pairs = synthesize_training_pairs(cfg.synthesis, cfg.training_pairs, mix_seed(cfg.mlp_seed, 20));
    SiameseModel init = SiameseModel::initialized(mix_seed(cfg.mlp_seed, 21));
    init.feature_scale = 1.0 / cfg.synthesis.extent;
    TrainConfig tc = cfg.training;
    tc.seed = mix_seed(cfg.mlp_seed, 22);
    SiameseModel m = train(init, pairs, tc).model;
    m.tau_high = cfg.tau_high;
    m.tau_low = cfg.tau_low;
    return m;
}

/// Most frequent ground-truth region among a meta-node's nodes (ties → smallest id).
inline int majority_region(const MetaNode& m, const std::vector<int>& true_regions)
{
    std::map<int, int> count;
    for (NodeId k = m.pg_start; k <= m.pg_end; ++k) ++count[true_regions[static_cast<std::size_t>(k)]];
    int best = -1, best_n = -1;
    for (const auto& [r, n] : count) {
        if (n > best_n) {
            best = r;
            best_n = n;
        }
    }
    return best;
}

inline bool is_true_pair(const ProposalPair& p, const ManhattanGraph& mg, const std::vector<int>& true_regions)
{
    return majority_region(mg.at(p.meta_i), true_regions) == majority_region(mg.at(p.meta_j), true_regions);
}

/// A true pair whose reversal flag also agrees with the true headings at the
/// two meta-node midpoints, so its loop measurements are physically right.
inline bool is_true_revisit(const ProposalPair& p, const ManhattanGraph& mg, const std::vector<int>& true_regions,
                            const std::vector<Pose2D>& truth)
{
    if (!is_true_pair(p, mg, true_regions)) return false;
    const MetaNode& a = mg.at(p.meta_i);
    const MetaNode& b = mg.at(p.meta_j);
    const double ha = truth[static_cast<std::size_t>((a.pg_start + a.pg_end) / 2)].theta;
    const double hb = truth[static_cast<std::size_t>((b.pg_start + b.pg_end) / 2)].theta;
    const bool opposite = std::abs(normalize_angle(hb - ha)) > kHalfPi;
    return opposite == p.reversed;
}

struct CycleRecord {
    int cycle = 0;
    int proposals = 0;
    int tp = 0;
    int fp = 0;
    int loop_edges = 0;
    int manhattan_edges = 0;
    double chi2 = 0.0;
    double ate = 0.0; ///< diagnostic only
    bool solved = true; ///< false for the closing cycle of a proposal fixpoint

    double accuracy() const { return proposals == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
};

struct FeedbackState {
    int cycle = 0;
    PoseGraph graph;
    ManhattanGraph mg;
    std::vector<ProposalPair> proposals;
    CycleRecord record;
    SolveReport report;
    std::vector<LoopCandidate> rejected;
};

struct FeedbackHistory {
    std::vector<FeedbackState> cycles;
    bool converged = false;

    int solved_cycles() const
    {
        return static_cast<int>(std::count_if(cycles.begin(), cycles.end(), [](const FeedbackState& c) { return c.record.solved; }));
    }
};

struct StageResult {
    StageId stage = StageId::Unoptimized;
    PoseGraph graph;
    AteResult ate;
    SolveReport report;
    std::vector<CycleRecord> cycles;
    std::vector<LoopCandidate> rejected;
    bool converged = true;
};

namespace detail {

/// Rigidly moves `poses` so that the first one coincides with `anchor`.
inline std::vector<Pose2D> anchor_to(const std::vector<Pose2D>& poses, const Pose2D& anchor)
{
    const Pose2D T = compose(anchor, inverse(poses.front()));
    std::vector<Pose2D> out;
    out.reserve(poses.size());
    for (const auto& p : poses) out.push_back(compose(T, p));
    return out;
}

using IcpKey = std::tuple<NodeId, NodeId, bool>;

/// ICP results memoised across feedback cycles; proposals that persist do not
/// re-run the matcher.
struct IcpCache {
    std::map<IcpKey, IcpResult> results;

    LoopClosureResult build(const std::vector<ProposalPair>& proposals, const PoseGraph& pg, const ManhattanGraph& mg,
                            const std::vector<Scan>& scans, int k, double rho, const IcpParams& params)
    {
        LoopClosureResult out;
        for (const auto& p : proposals) {
            for (const auto& s : sample_loop_pairs(p, pg, mg, k)) {
                const IcpKey key{s.pg_i, s.pg_j, p.reversed};
                auto it = results.find(key);
                if (it == results.end()) {
                    it = results
                             .emplace(key, icp(scans.at(static_cast<std::size_t>(s.pg_i)),
                                               scans.at(static_cast<std::size_t>(s.pg_j)), s.initial, params))
                             .first;
                }
                const IcpResult& r = it->second;
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
};

struct CycleOptions {
    bool high_only = false;
    bool use_loops = true;
    double rho = 0.05;
    SolveMode mode = SolveMode::Batch;
};

/// One build-MG → propose → constrain → solve pass. `estimate` carries the
/// current node estimates; `init` is the optimizer's starting point.
/// Builds the Manhattan graph on `estimate` and scores its proposals against
/// the simulator's region identity.
inline FeedbackState propose_cycle(const Scenario& sc, const PoseGraph& estimate, const SiameseModel& model,
                                   const CycleOptions& opt)
{
    FeedbackState st;
    st.graph = estimate;
    st.mg = build_manhattan(estimate, sc.topology, MotionSource::Estimate);
    auto proposals = propose(model, st.mg);
    if (opt.high_only) {
        std::erase_if(proposals, [](const ProposalPair& p) { return p.band != ConfidenceBand::High; });
        for (int k = 0; k < static_cast<int>(proposals.size()); ++k) proposals[static_cast<std::size_t>(k)].id = k;
    }
    st.proposals = std::move(proposals);
    st.record.proposals = static_cast<int>(st.proposals.size());
    for (const auto& p : st.proposals) {
        if (is_true_pair(p, st.mg, sc.run.true_regions)) ++st.record.tp;
        else ++st.record.fp;
    }
    st.record.ate = ate(estimate, sc.truth_poses).rmse;
    return st;
}

/// Turns the proposals of `st` into constraints and solves. `init` is the
/// optimizer's starting point (rectified poses when null).
inline void solve_cycle(FeedbackState& st, const Scenario& sc, const std::vector<Pose2D>* init,
                        const PipelineConfig& cfg, const CycleOptions& opt, IcpCache& cache)
{
    const PoseGraph estimate = st.graph;
    const auto& proposals = st.proposals;

    const auto rect = rectified_poses(estimate, st.mg);
    PoseGraph g = sc.run.graph.odometry_only();
    const auto manhattan = build_manhattan_constraints(proposals, st.mg, estimate, rect, cfg.manhattan_neighborhood);
    for (const auto& e : manhattan) g.add_edge(e);
    int structural = 0;
    if (cfg.structure_constraints) {
        for (const auto& e : build_structure_constraints(st.mg, rect)) {
            g.add_edge(e);
            ++structural;
        }
    }
    int loops = 0;
    if (opt.use_loops) {
        auto lc = cache.build(proposals, estimate, st.mg, sc.run.scans, cfg.loop_pairs, opt.rho, cfg.icp);
        for (const auto& e : lc.edges) g.add_edge(e);
        loops = static_cast<int>(lc.edges.size());
        st.rejected = std::move(lc.rejected);
    }
    g.set_poses(init ? *init : anchor_to(rect, sc.run.graph.pose(0)));

    SolverConfig sc_cfg = cfg.solver;
    sc_cfg.mode = opt.mode;
    auto [solved, report] = solve(g, sc_cfg, true);
    st.graph = std::move(solved);
    st.report = report;
    st.record.loop_edges = loops;
    st.record.manhattan_edges = static_cast<int>(manhattan.size()) + structural;
    st.record.chi2 = report.final_chi2;
    st.record.ate = ate(st.graph, sc.truth_poses).rmse;
}

inline bool same_proposals(const std::vector<ProposalPair>& a, const std::vector<ProposalPair>& b)
{
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].meta_i != b[k].meta_i || a[k].meta_j != b[k].meta_j || a[k].reversed != b[k].reversed ||
            a[k].band != b[k].band) {
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Cyclic pipeline: every cycle rebuilds the Manhattan graph on the previous
/// optimized estimate, proposes, constrains and solves. The first cycle works
/// on the corrupted input and starts the optimizer from its rectified poses;
/// later cycles warm-start. A cycle whose proposal set equals the previous one
/// is a fixpoint and closes the loop without re-solving; a χ² plateau or
/// max_cycles also stop it.
inline FeedbackHistory run_feedback(const Scenario& sc, const SiameseModel& model, const PipelineConfig& cfg,
                                    SolveMode mode = SolveMode::Batch)
{
    FeedbackHistory h;
    detail::IcpCache cache;
    detail::CycleOptions opt;
    opt.rho = cfg.icp_rho;
    opt.mode = mode;
    PoseGraph estimate = sc.run.graph;
    const int max_cycles = std::max(1, cfg.max_cycles);
    for (int c = 1; c <= max_cycles; ++c) {
        auto st = detail::propose_cycle(sc, estimate, model, opt);
        st.cycle = st.record.cycle = c;
        if (!h.cycles.empty() && detail::same_proposals(h.cycles.back().proposals, st.proposals)) {
            st.record.solved = false;
            st.report = h.cycles.back().report;
            st.record.chi2 = h.cycles.back().record.chi2;
            h.cycles.push_back(std::move(st));
            h.converged = true;
            break;
        }
        const std::vector<Pose2D> warm = estimate.poses();
        detail::solve_cycle(st, sc, c == 1 ? nullptr : &warm, cfg, opt, cache);
        estimate = st.graph;
        bool plateau = false;
        if (!h.cycles.empty()) {
            const double prev = h.cycles.back().record.chi2;
            plateau = std::abs(prev - st.record.chi2) / std::max(prev, 1e-300) < cfg.feedback_chi2_tol;
        }
        h.cycles.push_back(std::move(st));
        if (plateau) {
            h.converged = true;
            break;
        }
    }
    return h;
}

inline StageResult run_stage(StageId stage, const Scenario& sc, const SiameseModel& model, const PipelineConfig& cfg)
{
    StageResult r;
    r.stage = stage;
    if (stage == StageId::Unoptimized) {
        r.graph = sc.run.graph;
    } else if (stage == StageId::FeedbackLoop || stage == StageId::IncrementalFeedback) {
        const auto h =
            run_feedback(sc, model, cfg, stage == StageId::FeedbackLoop ? SolveMode::Batch : SolveMode::Incremental);
        r.graph = h.cycles.back().graph;
        r.report = h.cycles.back().report;
        r.rejected = h.cycles.back().rejected;
        r.converged = h.converged;
        for (const auto& c : h.cycles) r.cycles.push_back(c.record);
    } else {
        detail::IcpCache cache;
        detail::CycleOptions opt;
        opt.high_only = stage != StageId::DensePlusLC;
        opt.use_loops = stage != StageId::ManhattanOnly;
        opt.rho = cfg.icp_rho;
        opt.mode = cfg.solver.mode;
        auto st = detail::propose_cycle(sc, sc.run.graph, model, opt);
        detail::solve_cycle(st, sc, nullptr, cfg, opt, cache);
        st.cycle = st.record.cycle = 1;
        r.graph = std::move(st.graph);
        r.report = st.report;
        r.rejected = std::move(st.rejected);
        r.cycles.push_back(st.record);
    }
    r.ate = ate(r.graph, sc.truth_poses);
    return r;
}

struct RobustnessRow {
    double fraction = 0.0;
    double ate_dcs = 0.0;
    double ate_nonrobust = 0.0;
    int true_pairs = 0;
    int fp_pairs = 0;
    int fn_pairs = 0;
};

/// Loop-closure-only graphs built from the ground-truth revisits, with a share
/// of the true pairs replaced by half false positives (edges between unrelated
/// regions, unfiltered) and half false negatives (deleted), solved with and
/// without DCS.
inline std::vector<RobustnessRow> robustness_sweep(const Scenario& sc, const SiameseModel& model,
                                                   const PipelineConfig& cfg, const std::vector<double>& fractions)
{
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 0.9)) throw std::invalid_argument("outlier fraction must lie in [0, 0.9]");
    }
    const ManhattanGraph mg = build_manhattan(sc.run.graph, sc.topology, MotionSource::Estimate);
    auto proposals = propose(model, mg);
    std::erase_if(proposals, [&](const ProposalPair& p) { return !is_true_revisit(p, mg, sc.run.true_regions, sc.truth_poses); });
    detail::IcpCache cache;
    const auto lc = cache.build(proposals, sc.run.graph, mg, sc.run.scans, cfg.loop_pairs, cfg.icp_rho, cfg.icp);
    const auto init = detail::anchor_to(rectified_poses(sc.run.graph, mg), sc.run.graph.pose(0));
    const auto& regions = sc.run.true_regions;

    std::vector<RobustnessRow> rows;
    for (double f : fractions) {
        std::mt19937_64 rng(mix_seed(sc.seed, 30 + static_cast<std::uint64_t>(std::llround(f * 1000))));
        std::vector<PGEdge> edges = lc.edges;
        const int n_bad = static_cast<int>(std::lround(f * static_cast<double>(edges.size())));
        const int n_fn = n_bad / 2;
        const int n_fp = n_bad - n_fn;
        std::shuffle(edges.begin(), edges.end(), rng);
        edges.resize(edges.size() - static_cast<std::size_t>(std::min<int>(n_fn, static_cast<int>(edges.size()))));
        std::uniform_int_distribution<int> node(0, sc.run.graph.size() - 1);
        int added = 0;
        while (added < n_fp) {
            const int a = node(rng), b = node(rng);
            if (std::abs(a - b) < 20 || regions[static_cast<std::size_t>(a)] == regions[static_cast<std::size_t>(b)]) {
                continue;
            }
            const bool flip = (rng() & 1u) != 0;
            const Pose2D guess = flip ? Pose2D(0.0, 0.0, std::numbers::pi) : Pose2D::identity();
            const auto r = icp(sc.run.scans[static_cast<std::size_t>(a)], sc.run.scans[static_cast<std::size_t>(b)],
                               guess, cfg.icp);
            if (r.status != IcpStatus::Ok) continue;
            edges.push_back(make_edge(a, b, r.transform, ConstraintKind::LoopClosure));
            ++added;
        }
        PoseGraph g = sc.run.graph.odometry_only();
        for (const auto& e : edges) g.add_edge(e);
        g.set_poses(init);

        RobustnessRow row;
        row.fraction = f;
        row.true_pairs = static_cast<int>(lc.edges.size());
        row.fp_pairs = n_fp;
        row.fn_pairs = n_fn;
        SolverConfig robust = cfg.solver;
        robust.mode = SolveMode::Batch;
        SolverConfig plain = robust;
        plain.robust_kinds.clear();
        row.ate_dcs = ate(solve_batch(g, robust).first, sc.truth_poses).rmse;
        row.ate_nonrobust = ate(solve_batch(g, plain).first, sc.truth_poses).rmse;
        rows.push_back(row);
    }
    return rows;
}

} // namespace mslam
