#pragma once

#include "mslam/pose_graph.hpp"

#include <fmt/format.h>

#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mslam {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
    {}
    int line() const { return line_; }

private:
    int line_;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line)
{
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline double to_double(const std::string& s, int line)
{
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError(line, "bad number '" + s + "'");
    return v;
}

inline int to_int(const std::string& s, int line)
{
    int v = 0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ParseError(line, "bad integer '" + s + "'");
    return v;
}

} // namespace detail

/// Reads the g2o-style SE2 text format. Edges without a KIND token are
/// classified as odometry when they join consecutive ids, loop closures otherwise.
inline PoseGraph load_graph(std::istream& in)
{
    struct Vertex {
        Pose2D pose;
        TopoLabel label = TopoLabel::Corridor;
        int line = 0;
    };
    struct PendingEdge {
        PGEdge edge;
        int line = 0;
    };
    std::map<int, Vertex> vertices;
    std::vector<std::pair<int, std::pair<int, TopoLabel>>> labels;
    std::vector<PendingEdge> edges;

    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        const auto tok = detail::split_ws(raw);
        if (tok.empty()) continue;
        const std::string& type = tok[0];
        if (type == "VERTEX_SE2") {
            if (tok.size() != 5) throw ParseError(line_no, "VERTEX_SE2 expects 4 fields");
            const int id = detail::to_int(tok[1], line_no);
            if (vertices.contains(id)) {
                throw ParseError(line_no, "duplicate vertex id " + std::to_string(id));
            }
            vertices[id] = Vertex{{detail::to_double(tok[2], line_no),
                                   detail::to_double(tok[3], line_no),
                                   detail::to_double(tok[4], line_no)},
                                  TopoLabel::Corridor, line_no};
        } else if (type == "VERTEX_LABEL") {
            if (tok.size() != 3) throw ParseError(line_no, "VERTEX_LABEL expects 2 fields");
            const auto label = parse_label(tok[2]);
            if (!label) throw ParseError(line_no, "unknown label '" + tok[2] + "'");
            labels.push_back({line_no, {detail::to_int(tok[1], line_no), *label}});
        } else if (type == "EDGE_SE2") {
            if (tok.size() != 12 && tok.size() != 13) {
                throw ParseError(line_no, "EDGE_SE2 expects 11 fields and an optional KIND");
            }
            PGEdge e;
            e.from = detail::to_int(tok[1], line_no);
            e.to = detail::to_int(tok[2], line_no);
            e.measurement = {detail::to_double(tok[3], line_no), detail::to_double(tok[4], line_no),
                             detail::to_double(tok[5], line_no)};
            double v[6];
            for (int k = 0; k < 6; ++k) v[k] = detail::to_double(tok[6 + static_cast<std::size_t>(k)], line_no);
            e.information << v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5];
            if (tok.size() == 13) {
                const std::string& kt = tok[12];
                if (kt.rfind("KIND=", 0) != 0) throw ParseError(line_no, "expected KIND=<...>");
                const auto kind = parse_kind(kt.substr(5));
                if (!kind) throw ParseError(line_no, "unknown edge kind '" + kt + "'");
                e.kind = *kind;
            } else {
                e.kind = e.to == e.from + 1 ? ConstraintKind::Odometry : ConstraintKind::LoopClosure;
            }
            e.robust = e.kind != ConstraintKind::Odometry;
            edges.push_back({e, line_no});
        } else {
            throw ParseError(line_no, "unknown record type '" + type + "'");
        }
    }

    PoseGraph g;
    int expected = 0;
    for (const auto& [id, v] : vertices) {
        if (id != expected) throw ParseError(v.line, "vertex ids must be contiguous from 0");
        g.add_node(v.pose, v.label);
        ++expected;
    }
    for (const auto& [line, entry] : labels) {
        if (!g.has_node(entry.first)) {
            throw ParseError(line, "label for unknown vertex " + std::to_string(entry.first));
        }
        g.set_label(entry.first, entry.second);
    }
    for (const auto& pe : edges) {
        try {
            g.add_edge(pe.edge);
        } catch (const GraphError& err) {
            throw ParseError(pe.line, err.what());
        }
    }
    return g;
}

inline PoseGraph load_graph_string(const std::string& text)
{
    std::istringstream is(text);
    return load_graph(is);
}

/// Writes the graph; `plain_g2o` drops labels and KIND tokens for interop.
inline void save_graph(std::ostream& out, const PoseGraph& g, bool plain_g2o = false)
{
    for (const auto& n : g.nodes()) {
        out << fmt::format("VERTEX_SE2 {} {} {} {}\n", n.id, n.pose.x, n.pose.y, n.pose.theta);
    }
    if (!plain_g2o) {
        for (const auto& n : g.nodes()) {
            out << fmt::format("VERTEX_LABEL {} {}\n", n.id, to_string(n.label));
        }
    }
    for (const auto& e : g.edges()) {
        const auto& I = e.information;
        out << fmt::format("EDGE_SE2 {} {} {} {} {} {} {} {} {} {} {}", e.from, e.to,
                           e.measurement.x, e.measurement.y, e.measurement.theta, I(0, 0),
                           I(0, 1), I(0, 2), I(1, 1), I(1, 2), I(2, 2));
        if (!plain_g2o) out << " KIND=" << to_string(e.kind);
        out << '\n';
    }
}

inline std::string save_graph_string(const PoseGraph& g, bool plain_g2o = false)
{
    std::ostringstream os;
    save_graph(os, g, plain_g2o);
    return os.str();
}

} // namespace mslam
