#pragma once

#include "mslam/constraints.hpp"
#include "mslam/graph_io.hpp"
#include "mslam/manhattan.hpp"
#include "mslam/optimizer.hpp"
#include "mslam/simulator.hpp"
#include "mslam/topology.hpp"

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mslam {

/// A file could not be opened; carries the path.
class FileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot write " + path.string());
    out << text;
}

inline PoseGraph load_graph_file(const std::filesystem::path& path)
{
    return load_graph_string(read_file(path));
}

inline std::string scans_csv(const std::vector<Scan>& scans)
{
    std::string out = "node_id,beam_index,x,y\n";
    for (std::size_t n = 0; n < scans.size(); ++n) {
        const auto& s = scans[n];
        for (std::size_t k = 0; k < s.points.size(); ++k) {
            out += fmt::format("{},{},{},{}\n", n, s.beam_index[k], s.points[k].x, s.points[k].y);
        }
    }
    return out;
}

inline std::string truth_csv(const Trajectory& truth)
{
    std::string out = "node_id,x,y,theta,label\n";
    for (std::size_t n = 0; n < truth.size(); ++n) {
        const auto& p = truth[n].pose;
        out += fmt::format("{},{},{},{},{}\n", n, p.x, p.y, p.theta, to_string(truth[n].label));
    }
    return out;
}

/// Reads node poses back from a truth table. Node ids must run 0..n-1.
inline std::vector<Pose2D> parse_truth_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    std::vector<Pose2D> out;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (n == 1 && line.rfind("node_id", 0) == 0) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        for (std::string tok; std::getline(ls, tok, ',');) f.push_back(tok);
        if (f.size() < 4) throw ParseError(n, "expected node_id,x,y,theta[,label]");
        const int id = detail::to_int(f[0], n);
        if (id != static_cast<int>(out.size())) throw ParseError(n, "node ids must be consecutive from 0");
        out.emplace_back(detail::to_double(f[1], n), detail::to_double(f[2], n), detail::to_double(f[3], n));
    }
    return out;
}

inline std::string topology_csv(const TopologicalGraph& tg)
{
    std::string out = "region_id,label,pg_start,pg_end\n";
    for (std::size_t r = 0; r < tg.regions.size(); ++r) {
        const auto& reg = tg.regions[r];
        out += fmt::format("{},{},{},{}\n", r, to_string(reg.label), reg.pg_start, reg.pg_end);
    }
    return out;
}

inline std::string manhattan_csv(const ManhattanGraph& mg)
{
    std::string out = "meta_id,label,pg_start,pg_end,length,heading,x_start,y_start,x_end,y_end\n";
    for (const auto& m : mg.meta_nodes) {
        out += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n", m.id, to_string(m.label),
                           m.pg_start, m.pg_end, m.length, m.heading, m.x_start, m.y_start, m.x_end, m.y_end);
    }
    return out;
}

inline std::string ate_csv(const std::vector<double>& per_node)
{
    std::string out = "node_id,error\n";
    for (std::size_t i = 0; i < per_node.size(); ++i) out += fmt::format("{},{:.9f}\n", i, per_node[i]);
    return out;
}

} // namespace mslam
