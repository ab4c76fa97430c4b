// Simulates one warehouse run, trains the pair classifier and compares the
// dead-reckoned trajectory with the feedback-loop estimate.

#include "mslam/pipeline.hpp"

#include <fmt/core.h>

#include <cstdlib>

int main(int argc, char** argv)
{
    using namespace mslam;
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;

    PipelineConfig cfg;
    const Scenario sc = simulate(cfg, seed);
    fmt::print("{} poses, {} regions, {} scans\n", sc.run.graph.size(), sc.topology.regions.size(), sc.run.scans.size());

    const SiameseModel model = train_model(cfg);
    const auto history = run_feedback(sc, model, cfg);
    for (const auto& c : history.cycles) {
        fmt::print("cycle {}: {} proposals ({} true), {} loop edges, chi2 {:.3f}{}\n", c.record.cycle,
                   c.record.proposals, c.record.tp, c.record.loop_edges, c.record.chi2,
                   c.record.solved ? "" : " (fixpoint)");
    }

    const double before = ate(sc.run.graph, sc.truth_poses).rmse;
    const double after = ate(history.cycles.back().graph, sc.truth_poses).rmse;
    fmt::print("ATE {:.3f} m -> {:.3f} m\n", before, after);
    return 0;
}
