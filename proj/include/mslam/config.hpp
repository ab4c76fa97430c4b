#pragma once

#include "mslam/pipeline.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mslam {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Everything a run depends on: the pipeline parameters plus the seed range.
struct RunConfig {
    PipelineConfig pipeline;
    std::uint64_t seed = 1;
    int seeds = 1;
};

/// One tunable parameter, addressable by name from config files and flags.
struct ConfigKey {
    std::string name;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text)
{
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(fmt::format("{}: bad value '{}'", key, text));
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& text)
{
    if (text == "true" || text == "1" || text == "on") return true;
    if (text == "false" || text == "0" || text == "off") return false;
    throw ConfigError(fmt::format("{}: expected true/false, got '{}'", key, text));
}

template <class T, class Field>
ConfigKey number_key(std::string name, std::string help, Field field)
{
    return {name, std::move(help), [field](const RunConfig& c) { return fmt::format("{}", field(c)); },
            [field, name](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(name, v); }};
}

template <class Field>
ConfigKey bool_key(std::string name, std::string help, Field field)
{
    return {name, std::move(help), [field](const RunConfig& c) { return std::string(field(c) ? "true" : "false"); },
            [field, name](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

inline std::string trim(const std::string& s)
{
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

} // namespace detail

#define MSLAM_KEY(T, name, help, expr) \
    detail::number_key<T>(name, help, [](auto& c) -> decltype(auto) { return (expr); })
#define MSLAM_BOOL(name, help, expr) detail::bool_key(name, help, [](auto& c) -> decltype(auto) { return (expr); })

/// The full parameter table, in a fixed order.
inline const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys = {
        MSLAM_KEY(std::uint64_t, "seed", "first simulation seed", c.seed),
        MSLAM_KEY(int, "seeds", "number of consecutive seeds", c.seeds),
        MSLAM_KEY(double, "width", "warehouse width (m)", c.pipeline.layout.width),
        MSLAM_KEY(double, "height", "warehouse height (m)", c.pipeline.layout.height),
        MSLAM_KEY(int, "n_racks", "number of racks", c.pipeline.layout.n_racks),
        MSLAM_KEY(double, "aisle_width", "aisle width (m)", c.pipeline.layout.aisle_width),
        MSLAM_KEY(double, "rack_width", "rack width (m)", c.pipeline.layout.rack_width),
        MSLAM_KEY(double, "rack_length", "rack length (m)", c.pipeline.layout.rack_length),
        MSLAM_KEY(double, "corridor_width", "corridor width (m)", c.pipeline.layout.corridor_width),
        MSLAM_KEY(double, "aisle_jitter", "relative spread of aisle widths", c.pipeline.layout.aisle_jitter),
        MSLAM_KEY(double, "step", "trajectory sampling step (m)", c.pipeline.step),
        MSLAM_KEY(double, "sigma_x", "odometry noise, forward (m/step)", c.pipeline.noise.sigma_x),
        MSLAM_KEY(double, "sigma_y", "odometry noise, lateral (m/step)", c.pipeline.noise.sigma_y),
        MSLAM_KEY(double, "sigma_theta", "odometry noise, heading (rad/step)", c.pipeline.noise.sigma_theta),
        MSLAM_KEY(double, "bias_x", "odometry bias, forward (m/step)", c.pipeline.noise.bias_x),
        MSLAM_KEY(double, "bias_y", "odometry bias, lateral (m/step)", c.pipeline.noise.bias_y),
        MSLAM_KEY(double, "bias_theta", "odometry bias, heading (rad/step)", c.pipeline.noise.bias_theta),
        MSLAM_KEY(double, "label_error_rate", "probability of a wrong place label", c.pipeline.noise.label_error_rate),
        MSLAM_KEY(double, "scan_range_sigma", "range noise (m)", c.pipeline.noise.scan_range_sigma),
        MSLAM_KEY(int, "beams", "beams per scan", c.pipeline.scan.beams),
        MSLAM_KEY(double, "max_range", "scan range limit (m)", c.pipeline.scan.max_range),
        MSLAM_KEY(int, "smoothing_window", "label majority window (1 = off)", c.pipeline.smoothing_window),
        MSLAM_KEY(int, "min_run", "shortest label run kept as a region", c.pipeline.min_run),
        MSLAM_KEY(int, "loop_pairs", "ICP pairs sampled per proposal", c.pipeline.loop_pairs),
        MSLAM_KEY(double, "icp_rho", "ICP residual filter (m^2)", c.pipeline.icp_rho),
        MSLAM_KEY(int, "icp_max_iterations", "ICP iteration cap", c.pipeline.icp.max_iterations),
        MSLAM_KEY(double, "icp_tolerance", "ICP step tolerance", c.pipeline.icp.tolerance),
        MSLAM_KEY(int, "manhattan_neighborhood", "node pairs per Manhattan proposal", c.pipeline.manhattan_neighborhood),
        MSLAM_BOOL("structure_constraints", "add skeleton Manhattan edges", c.pipeline.structure_constraints),
        MSLAM_KEY(int, "max_iters", "solver iteration cap", c.pipeline.solver.max_iterations),
        MSLAM_KEY(double, "chi2_tol", "solver relative chi2 tolerance", c.pipeline.solver.chi2_rel_tol),
        MSLAM_KEY(double, "damping", "initial LM damping", c.pipeline.solver.damping),
        MSLAM_KEY(double, "phi", "DCS kernel parameter", c.pipeline.solver.dcs_phi),
        ConfigKey{"robust", "DCS on loop and Manhattan edges",
                  [](const RunConfig& c) { return std::string(c.pipeline.solver.robust_kinds.empty() ? "false" : "true"); },
                  [](RunConfig& c, const std::string& v) {
                      c.pipeline.solver.robust_kinds.clear();
                      if (detail::parse_bool("robust", v)) {
                          c.pipeline.solver.robust_kinds = {ConstraintKind::LoopClosure, ConstraintKind::Manhattan};
                      }
                  }},
        ConfigKey{"mode", "solver mode for single-pass stages (batch|incremental)",
                  [](const RunConfig& c) {
                      return std::string(c.pipeline.solver.mode == SolveMode::Batch ? "batch" : "incremental");
                  },
                  [](RunConfig& c, const std::string& v) {
                      if (v == "batch") c.pipeline.solver.mode = SolveMode::Batch;
                      else if (v == "incremental") c.pipeline.solver.mode = SolveMode::Incremental;
                      else throw ConfigError("mode: expected batch or incremental, got '" + v + "'");
                  }},
        MSLAM_KEY(int, "incremental_period", "nodes between incremental solves", c.pipeline.solver.incremental_batch_period),
        MSLAM_KEY(int, "max_cycles", "feedback cycle cap", c.pipeline.max_cycles),
        MSLAM_KEY(double, "feedback_chi2_tol", "feedback chi2 plateau tolerance", c.pipeline.feedback_chi2_tol),
        MSLAM_KEY(int, "training_pairs", "synthetic MLP training pairs", c.pipeline.training_pairs),
        MSLAM_KEY(int, "epochs", "MLP training epochs", c.pipeline.training.epochs),
        MSLAM_KEY(double, "learning_rate", "MLP learning rate", c.pipeline.training.learning_rate),
        MSLAM_KEY(int, "batch_size", "MLP minibatch size", c.pipeline.training.batch_size),
        MSLAM_KEY(std::uint64_t, "mlp_seed", "MLP synthesis and training seed", c.pipeline.mlp_seed),
        MSLAM_KEY(double, "tau_high", "high-confidence embedding distance", c.pipeline.tau_high),
        MSLAM_KEY(double, "tau_low", "low-confidence embedding distance", c.pipeline.tau_low),
    };
    return keys;
}

#undef MSLAM_KEY
#undef MSLAM_BOOL

inline const ConfigKey* find_key(const std::string& name)
{
    for (const auto& k : config_keys()) {
        if (k.name == name) return &k;
    }
    return nullptr;
}

inline void set_value(RunConfig& cfg, const std::string& name, const std::string& value)
{
    const ConfigKey* k = find_key(name);
    if (k == nullptr) throw ConfigError("unknown config key '" + name + "'");
    k->set(cfg, value);
}

/// Flat `key = value` lines; '#' starts a comment. Returns the pairs in file
/// order so that errors can name a line.
inline std::vector<std::pair<std::string, std::string>> parse_config(std::istream& in)
{
    std::vector<std::pair<std::string, std::string>> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected key = value", n));
        auto key = detail::trim(line.substr(0, eq));
        auto val = detail::trim(line.substr(eq + 1));
        if (find_key(key) == nullptr) throw ConfigError(fmt::format("config line {}: unknown key '{}'", n, key));
        out.emplace_back(std::move(key), std::move(val));
    }
    return out;
}

inline void apply_config(RunConfig& cfg, std::istream& in)
{
    for (const auto& [k, v] : parse_config(in)) set_value(cfg, k, v);
}

inline void apply_config_string(RunConfig& cfg, const std::string& text)
{
    std::istringstream is(text);
    apply_config(cfg, is);
}

/// Serializes every key, one per line, in table order.
inline std::string dump_config(const RunConfig& cfg)
{
    std::string out;
    for (const auto& k : config_keys()) out += fmt::format("{} = {}\n", k.name, k.get(cfg));
    return out;
}

} // namespace mslam
