#include "mslam/config.hpp"
#include "mslam/graph_io.hpp"
#include "mslam/io.hpp"
#include "mslam/metrics.hpp"
#include "mslam/pipeline.hpp"
#include "mslam/svg.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace mslam;

namespace {

/// Error in the data handed to a subcommand (exit code 2).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string flag_name(const std::string& key)
{
    std::string f = key;
    for (char& c : f) {
        if (c == '_') c = '-';
    }
    return "--" + f;
}

/// Per-subcommand parameter flags. Values are kept as strings and applied on
/// top of the config file, so a flag always wins.
struct ParamFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
    bool no_robust = false;

    void attach(CLI::App& app)
    {
        const RunConfig defaults;
        app.add_option("--config", config_file, "key = value parameter file")->check(CLI::ExistingFile);
        for (const auto& k : config_keys()) {
            options[k.name] =
                app.add_option(flag_name(k.name), values[k.name], k.help)->default_str(k.get(defaults));
        }
        app.add_flag("--no-robust", no_robust, "disable DCS (same as --robust false)");
    }

    /// default < config file < MANHATTAN_SLAM_SEED (seed only) < flags
    RunConfig resolve() const
    {
        RunConfig cfg;
        if (!config_file.empty()) {
            try {
                apply_config_string(cfg, read_file(config_file));
            } catch (const ConfigError& e) {
                throw DataError(config_file + ": " + e.what());
            }
        }
        if (const char* env = std::getenv("MANHATTAN_SLAM_SEED")) {
            try {
                set_value(cfg, "seed", env);
            } catch (const ConfigError& e) {
                throw CLI::ValidationError("MANHATTAN_SLAM_SEED", e.what());
            }
        }
        for (const auto& k : config_keys()) {
            if (options.at(k.name)->count() == 0) continue;
            try {
                k.set(cfg, values.at(k.name));
            } catch (const ConfigError& e) {
                throw CLI::ValidationError(flag_name(k.name), e.what());
            }
        }
        if (no_robust) set_value(cfg, "robust", "false");
        if (cfg.seeds < 1) throw CLI::ValidationError("--seeds", "must be at least 1");
        try {
            cfg.pipeline.solver.validate();
        } catch (const SolverError& e) {
            throw CLI::ValidationError("solver", e.what());
        }
        return cfg;
    }
};

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / fmt::format("seed_{}", seed); }

// ---------------------------------------------------------------- generate

int cmd_generate(const RunConfig& cfg, const fs::path& out)
{
    for (int k = 0; k < cfg.seeds; ++k) {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(k);
        const Scenario sc = simulate(cfg.pipeline, seed);
        const fs::path dir = cfg.seeds == 1 ? out : seed_dir(out, seed);
        write_file(dir / "graph.g2o", save_graph_string(sc.run.graph));
        write_file(dir / "scans.csv", scans_csv(sc.run.scans));
        write_file(dir / "truth.csv", truth_csv(sc.truth));
        write_file(dir / "topology.csv", topology_csv(sc.topology));
        write_file(dir / "manhattan.csv", manhattan_csv(build_manhattan(sc.run.graph, sc.topology)));
        fmt::print("seed {}: {} nodes, {} regions -> {}\n", seed, sc.run.graph.size(), sc.topology.regions.size(),
                   dir.string());
    }
    return 0;
}

// --------------------------------------------------------------------- run

struct SeedOutcome {
    std::uint64_t seed = 0;
    Scenario scenario;
    std::vector<StageResult> stages;
    std::vector<RobustnessRow> robustness;
};

std::vector<Point2> aligned_positions(const PoseGraph& g, const std::vector<Pose2D>& truth)
{
    const auto r = ate(g, truth);
    std::vector<Point2> pts;
    for (const auto& p : g.poses()) pts.push_back(transform_point(r.alignment, {p.x, p.y}));
    return pts;
}

int cmd_run(const RunConfig& cfg, const std::string& stage_name, const fs::path& out, bool sweep,
            const std::vector<double>& fractions, int jobs)
{
    std::vector<StageId> stages;
    if (stage_name == "all") {
        stages.assign(std::begin(kAllStages), std::end(kAllStages));
    } else if (auto s = parse_stage(stage_name)) {
        stages.push_back(*s);
    } else {
        throw CLI::ValidationError("--stage", "unknown stage '" + stage_name + "'");
    }
    for (double f : fractions) {
        if (!(f >= 0.0 && f <= 0.9)) throw CLI::ValidationError("--fractions", "values must lie in [0, 0.9]");
    }

    const SiameseModel model = train_model(cfg.pipeline);
    auto work = [&](std::uint64_t seed) {
        SeedOutcome o;
        o.seed = seed;
        o.scenario = simulate(cfg.pipeline, seed);
        for (StageId s : stages) o.stages.push_back(run_stage(s, o.scenario, model, cfg.pipeline));
        if (sweep) o.robustness = robustness_sweep(o.scenario, model, cfg.pipeline, fractions);
        return o;
    };

    // Seeds are independent; workers only compute, the loop below writes.
    std::vector<SeedOutcome> results(static_cast<std::size_t>(cfg.seeds));
    const int workers = std::max(1, std::min(jobs, cfg.seeds));
    for (int base = 0; base < cfg.seeds; base += workers) {
        std::vector<std::future<SeedOutcome>> batch;
        for (int k = base; k < std::min(cfg.seeds, base + workers); ++k) {
            batch.push_back(std::async(std::launch::async, work, cfg.seed + static_cast<std::uint64_t>(k)));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) results[static_cast<std::size_t>(base) + k] = batch[k].get();
    }

    std::string ladder = "stage,seed,ate,rotation_rmse\n";
    std::string feedback = "stage,seed,cycle,proposals,tp,fp,accuracy,loop_edges,manhattan_edges,chi2,solved\n";
    std::string report = "stage,seed,initial_chi2,final_chi2,iterations,converged\n";
    std::string rejected = "stage,seed,pg_i,pg_j,residual\n";
    std::string robustness = "seed,fraction,ate_dcs,ate_nonrobust,true_edges,fp_edges,fn_edges\n";
    std::vector<double> mean(stages.size(), 0.0);

    for (std::size_t si = 0; si < stages.size(); ++si) {
        const auto name = to_string(stages[si]);
        for (const auto& o : results) {
            const StageResult& r = o.stages[si];
            mean[si] += r.ate.rmse / cfg.seeds;
            ladder += fmt::format("{},{},{:.6f},{:.6f}\n", name, o.seed, r.ate.rmse, r.ate.rotation_rmse);
            for (const auto& c : r.cycles) {
                feedback += fmt::format("{},{},{},{},{},{},{:.4f},{},{},{:.6f},{}\n", name, o.seed, c.cycle,
                                        c.proposals, c.tp, c.fp, c.accuracy(), c.loop_edges, c.manhattan_edges,
                                        c.chi2, c.solved ? 1 : 0);
            }
            if (stages[si] != StageId::Unoptimized) {
                report += fmt::format("{},{},{:.6f},{:.6f},{},{}\n", name, o.seed, r.report.initial_chi2,
                                      r.report.final_chi2, r.report.iterations, r.report.converged ? 1 : 0);
            }
            for (const auto& c : r.rejected) {
                rejected += fmt::format("{},{},{},{},{:.6f}\n", name, o.seed, c.pg_i, c.pg_j, c.residual);
            }
        }
    }
    for (const auto& o : results) {
        for (const auto& row : o.robustness) {
            robustness += fmt::format("{},{:.2f},{:.6f},{:.6f},{},{},{}\n", o.seed, row.fraction, row.ate_dcs,
                                      row.ate_nonrobust, row.true_pairs, row.fp_pairs, row.fn_pairs);
        }
        const fs::path dir = seed_dir(out, o.seed);
        std::vector<PlotSeries> series{{"truth", positions(o.scenario.truth_poses), ""}};
        for (std::size_t si = 0; si < stages.size(); ++si) {
            write_file(dir / fmt::format("{}.g2o", to_string(stages[si])), save_graph_string(o.stages[si].graph));
        }
        write_file(dir / "truth.csv", truth_csv(o.scenario.truth));
        series.push_back({"unoptimized", aligned_positions(o.scenario.run.graph, o.scenario.truth_poses), ""});
        if (stages.back() != StageId::Unoptimized) {
            series.push_back({std::string(to_string(stages.back())),
                              aligned_positions(o.stages.back().graph, o.scenario.truth_poses), ""});
        }
        write_file(dir / "trajectories.svg", render_svg(series, {fmt::format("seed {}", o.seed)}));
    }

    write_file(out / "ladder.csv", ladder);
    write_file(out / "feedback.csv", feedback);
    write_file(out / "report.csv", report);
    write_file(out / "rejected_loops.csv", rejected);
    if (sweep) write_file(out / "robustness.csv", robustness);
    write_file(out / "config.txt", dump_config(cfg));

    fmt::print("{:<22} {:>10}\n", "stage", "mean ATE");
    for (std::size_t si = 0; si < stages.size(); ++si) {
        fmt::print("{:<22} {:>10.4f}\n", to_string(stages[si]), mean[si]);
    }
    return 0;
}

// ---------------------------------------------------------------- evaluate

PoseGraph load_graph_checked(const fs::path& path)
{
    try {
        return load_graph_file(path);
    } catch (const ParseError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<Pose2D> load_truth_checked(const fs::path& path)
{
    try {
        return parse_truth_csv(read_file(path));
    } catch (const ParseError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

int cmd_evaluate(const fs::path& est, const fs::path& truth_path, const fs::path& out)
{
    const PoseGraph g = load_graph_checked(est);
    const std::vector<Pose2D> truth = load_truth_checked(truth_path);
    const AteResult r = ate(g, truth);
    write_file(out / "ate_per_node.csv", ate_csv(r.per_node));
    fmt::print("rmse {:.3f}\nrotation_rmse {:.4f}\n", r.rmse, r.rotation_rmse);
    return 0;
}

// -------------------------------------------------------------------- plot

int cmd_plot(const std::vector<std::string>& graphs, const std::string& truth_path, const fs::path& out,
             const std::string& title)
{
    std::vector<Pose2D> truth;
    if (!truth_path.empty()) truth = load_truth_checked(truth_path);
    std::vector<PlotSeries> series;
    if (!truth.empty()) series.push_back({"truth", positions(truth), ""});
    for (const auto& path : graphs) {
        const PoseGraph g = load_graph_checked(path);
        const std::string name = fs::path(path).stem().string();
        series.push_back({name, truth.empty() ? positions(g.poses()) : aligned_positions(g, truth), ""});
    }
    write_file(out, render_svg(series, {title}));
    fmt::print("wrote {}\n", out.string());
    return 0;
}

// -------------------------------------------------------------- export-g2o

int cmd_export(const fs::path& in, const fs::path& out, bool plain)
{
    write_file(out, save_graph_string(load_graph_checked(in), plain));
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Manhattan-constrained pose-graph SLAM on synthetic warehouses"};
    app.require_subcommand(1);
    app.get_formatter()->column_width(34);

    auto* gen = app.add_subcommand("generate", "simulate a run and write graph, scans and truth");
    ParamFlags gen_params;
    gen_params.attach(*gen);
    std::string gen_out = "generated";
    gen->add_option("--out", gen_out, "output directory")->capture_default_str();

    auto* run = app.add_subcommand("run", "run pipeline stages and write the result tables");
    ParamFlags run_params;
    run_params.attach(*run);
    std::string stage = "all";
    std::string run_out = "results";
    std::vector<double> fractions{0.0, 0.1, 0.2, 0.3, 0.5};
    bool sweep = false;
    int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    run->add_option("--stage", stage, "stage name or 'all'")->capture_default_str();
    run->add_option("--out", run_out, "output directory")->capture_default_str();
    run->add_option("--fractions", fractions, "outlier fractions for the robustness sweep")
        ->delimiter(',')
        ->capture_default_str();
    run->add_flag("--sweep", sweep, "run the robustness sweep (always on with --stage all)");
    run->add_option("--jobs", jobs, "parallel seed workers")->capture_default_str();

    auto* eval = app.add_subcommand("evaluate", "ATE of an estimate graph against a truth table");
    std::string est, truth, eval_out = ".";
    eval->add_option("--est", est, "estimate graph file")->required();
    eval->add_option("--truth", truth, "truth.csv")->required();
    eval->add_option("--out", eval_out, "directory for ate_per_node.csv")->capture_default_str();

    auto* plot = app.add_subcommand("plot", "overlay trajectories as SVG");
    std::vector<std::string> graphs;
    std::string plot_truth, plot_out = "trajectories.svg", plot_title;
    plot->add_option("graphs", graphs, "graph files")->required();
    plot->add_option("--truth", plot_truth, "truth.csv; estimates are aligned to it");
    plot->add_option("--out", plot_out, "SVG file")->capture_default_str();
    plot->add_option("--title", plot_title, "plot title");

    auto* exp = app.add_subcommand("export-g2o", "rewrite a graph file");
    std::string exp_in, exp_out;
    bool plain = false;
    exp->add_option("--in", exp_in, "input graph")->required();
    exp->add_option("--out", exp_out, "output file")->required();
    exp->add_flag("--plain-g2o", plain, "drop labels and KIND tokens");

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_generate(gen_params.resolve(), gen_out);
        if (*run) {
            const RunConfig cfg = run_params.resolve();
            return cmd_run(cfg, stage, run_out, sweep || stage == "all", fractions, jobs);
        }
        if (*eval) return cmd_evaluate(est, truth, eval_out);
        if (*plot) return cmd_plot(graphs, plot_truth, plot_out, plot_title);
        if (*exp) return cmd_export(exp_in, exp_out, plain);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        // file, parse, graph, metric and solver failures are all data errors
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 1;
}
