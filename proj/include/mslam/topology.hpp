#pragma once

#include "mslam/pose_graph.hpp"

#include <array>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mslam {

struct TopoRegion {
    TopoLabel label = TopoLabel::Corridor;
    NodeId pg_start = 0;
    NodeId pg_end = 0; ///< inclusive

    int size() const { return pg_end - pg_start + 1; }
    friend bool operator==(const TopoRegion&, const TopoRegion&) = default;
};

/// Path graph of labeled regions from a single traversal; region k is
/// adjacent to region k+1 only.
struct TopologicalGraph {
    std::vector<TopoRegion> regions;

    std::vector<std::pair<int, int>> edges() const
    {
        std::vector<std::pair<int, int>> out;
        for (int k = 0; k + 1 < static_cast<int>(regions.size()); ++k) out.emplace_back(k, k + 1);
        return out;
    }

    /// Region index containing node `id`, or -1.
    int region_of(NodeId id) const
    {
        int lo = 0;
        int hi = static_cast<int>(regions.size()) - 1;
        while (lo <= hi) {
            const int mid = (lo + hi) / 2;
            const auto& r = regions[static_cast<std::size_t>(mid)];
            if (id < r.pg_start) hi = mid - 1;
            else if (id > r.pg_end) lo = mid + 1;
            else return mid;
        }
        return -1;
    }

    int node_count() const { return regions.empty() ? 0 : regions.back().pg_end + 1; }

    friend bool operator==(const TopologicalGraph&, const TopologicalGraph&) = default;
};

/// Majority vote in a centered window (clipped at the ends). Ties between the
/// most frequent labels keep the original label.
inline std::vector<TopoLabel> smooth_labels(const std::vector<TopoLabel>& labels, int window)
{
    if (window < 1 || window % 2 == 0) throw std::invalid_argument("window must be odd and >= 1");
    const int n = static_cast<int>(labels.size());
    const int half = window / 2;
    std::vector<TopoLabel> out(labels.size());
    for (int i = 0; i < n; ++i) {
        std::array<int, 3> count{};
        for (int j = std::max(0, i - half); j <= std::min(n - 1, i + half); ++j) {
            ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(j)])];
        }
        const auto orig = labels[static_cast<std::size_t>(i)];
        int best = 0;
        int winners = 0;
        for (int l = 0; l < 3; ++l) {
            if (count[static_cast<std::size_t>(l)] > count[static_cast<std::size_t>(best)]) {
                best = l;
                winners = 1;
            } else if (count[static_cast<std::size_t>(l)] == count[static_cast<std::size_t>(best)]) {
                ++winners;
            }
        }
        out[static_cast<std::size_t>(i)] = winners == 1 ? static_cast<TopoLabel>(best) : orig;
    }
    return out;
}

/// Maximal runs of equal labels; runs shorter than `min_run` are absorbed by
/// the preceding region (the first run is kept as is).
inline TopologicalGraph group(const std::vector<TopoLabel>& labels, int min_run = 3)
{
    TopologicalGraph tg;
    const int n = static_cast<int>(labels.size());
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && labels[static_cast<std::size_t>(j + 1)] == labels[static_cast<std::size_t>(i)]) ++j;
        const TopoRegion run{labels[static_cast<std::size_t>(i)], i, j};
        if (tg.regions.empty()) {
            tg.regions.push_back(run);
        } else if (run.size() < min_run || tg.regions.back().label == run.label) {
            tg.regions.back().pg_end = j;
        } else {
            tg.regions.push_back(run);
        }
        i = j + 1;
    }
    return tg;
}

/// Per-node labels implied by the regions.
inline std::vector<TopoLabel> labels_of(const TopologicalGraph& tg)
{
    std::vector<TopoLabel> out;
    for (const auto& r : tg.regions) out.insert(out.end(), static_cast<std::size_t>(r.size()), r.label);
    return out;
}

} // namespace mslam
