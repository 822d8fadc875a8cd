#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptdp/core.hpp"
#include "ptdp/tdp.hpp"

namespace ptdp {

inline constexpr int schema_version = 1;

inline void check_connectivity(int connectivity) {
    if (connectivity != 6 && connectivity != 18 && connectivity != 26)
        throw invalid_input("connectivity must be 6, 18 or 26 (got " + std::to_string(connectivity) + ")");
}

namespace detail {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    // The smaller root wins, so each root is the smallest index of its set.
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (b < a) std::swap(a, b);
        parent_[b] = a;
    }

private:
    std::vector<std::size_t> parent_;
};

// Neighbour offsets that precede the current voxel in scan order; visiting
// only these during a scan still links every neighbouring pair once.
inline std::vector<std::array<int, 3>> backward_offsets(int connectivity) {
    std::vector<std::array<int, 3>> out;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (order == 0) continue;
                if ((connectivity == 6 && order > 1) || (connectivity == 18 && order > 2)) continue;
                if (dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0)))) out.push_back({dx, dy, dz});
            }
    return out;
}

// Connected components of the voxels flagged in `keep`.
inline std::vector<VoxelSubset> label_components(const std::vector<char>& keep, const VolumeGeometry& g,
                                                 int connectivity) {
    const std::size_t m = g.size();
    const auto offsets = backward_offsets(connectivity);
    DisjointSets sets(m);
    for (Index i = 0; i < m; ++i) {
        if (!keep[i]) continue;
        const Coord c = g.coord_of(i);
        for (const auto& o : offsets) {
            auto j = g.index_of({c.x + o[0], c.y + o[1], c.z + o[2]});
            if (j && keep[*j]) sets.unite(i, *j);
        }
    }
    std::vector<std::vector<Index>> groups;
    std::vector<std::int64_t> slot(m, -1);
    for (Index i = 0; i < m; ++i) {
        if (!keep[i]) continue;
        const std::size_t r = sets.find(i);
        if (slot[r] < 0) {
            slot[r] = static_cast<std::int64_t>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(slot[r])].push_back(i);
    }
    // groups are already in order of smallest member; a stable sort by size keeps that as the tie-break
    std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    std::vector<VoxelSubset> out;
    out.reserve(groups.size());
    for (auto& grp : groups) out.push_back(VoxelSubset::from_indices(std::move(grp), m));
    return out;
}

inline void check_map(std::span<const double> stat_map, const VolumeGeometry& g) {
    if (stat_map.size() != g.size())
        throw invalid_input("statistic map has " + std::to_string(stat_map.size()) + " values but the geometry has " +
                            std::to_string(g.size()) + " in-mask voxels");
}

}  // namespace detail

/// Connected components of {i : stat_i > z}, largest first, ties broken by smallest index.
inline std::vector<VoxelSubset> threshold_clusters(std::span<const double> stat_map, const VolumeGeometry& g,
                                                   double z, int connectivity = 26) {
    check_connectivity(connectivity);
    detail::check_map(stat_map, g);
    std::vector<char> keep(g.size());
    for (Index i = 0; i < g.size(); ++i) keep[i] = stat_map[i] > z;
    return detail::label_components(keep, g, connectivity);
}

/// Components of {i in parent : stat_i > z_higher}; each is a subset of parent.
inline std::vector<VoxelSubset> drill_down(const VoxelSubset& parent, std::span<const double> stat_map,
                                           const VolumeGeometry& g, double z_higher, int connectivity = 26) {
    if (parent.empty()) throw invalid_input("cannot drill into an empty cluster");
    check_connectivity(connectivity);
    detail::check_map(stat_map, g);
    std::vector<char> keep(g.size(), 0);
    for (Index i : parent.indices()) {
        if (i >= g.size()) throw invalid_input("parent voxel index " + std::to_string(i) + " out of range");
        keep[i] = stat_map[i] > z_higher;
    }
    return detail::label_components(keep, g, connectivity);
}

struct ClusterInfo {
    std::size_t id = 0;  // 1-based, in report order
    VoxelSubset subset;
    TdpResult tdp;
    Coord peak_coord;
    Index peak_index = 0;
    double peak_stat = 0.0;
};

struct ClusterReport {
    double threshold = 0.0;
    int connectivity = 26;
    std::vector<ClusterInfo> clusters;
};

/// TDP bound and peak per subset. The peak is the largest |stat|, first in scan order on ties.
inline ClusterReport build_report(const std::vector<VoxelSubset>& subsets, std::span<const double> observed_p,
                                  const CriticalVector& critical, std::span<const double> stat_map,
                                  const VolumeGeometry& g, double threshold, int connectivity = 26) {
    check_connectivity(connectivity);
    detail::check_map(stat_map, g);
    if (observed_p.size() != g.size()) throw invalid_input("p-value vector does not match the geometry");
    ClusterReport report{threshold, connectivity, {}};
    report.clusters.reserve(subsets.size());
    for (const auto& s : subsets) {
        ClusterInfo info;
        info.id = report.clusters.size() + 1;
        info.subset = s;
        info.tdp = tdp_lower_bound(s, observed_p, critical);
        double best = -1.0;
        for (Index i : s.indices()) {
            const double a = std::fabs(stat_map[i]);
            if (a > best) {
                best = a;
                info.peak_index = i;
            }
        }
        info.peak_stat = stat_map[info.peak_index];
        info.peak_coord = g.coord_of(info.peak_index);
        report.clusters.push_back(std::move(info));
    }
    return report;
}

/// Per-voxel map carrying each cluster's TDP bound, 0 outside clusters.
inline std::vector<double> tdp_map(const ClusterReport& report, std::size_t m) {
    std::vector<double> out(m, 0.0);
    for (const auto& c : report.clusters)
        for (Index i : c.subset.indices()) {
            if (i >= m) throw invalid_input("cluster voxel index out of range for the map");
            out[i] = c.tdp.tdp();
        }
    return out;
}

// Infinite statistics (zero-variance voxels) are written as strings since JSON has no infinity.
inline nlohmann::json number_or_string(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline nlohmann::json to_json(const TdpResult& r) {
    return {{"size", r.size}, {"lower_bound", r.lower_bound}, {"tdp", r.tdp()}, {"argmax_u", r.argmax_u}};
}

inline nlohmann::json to_json(const ClusterReport& report, const VolumeGeometry* g = nullptr, bool voxels = false) {
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& c : report.clusters) {
        nlohmann::json j{{"id", c.id},
                         {"size", c.subset.size()},
                         {"tdp_lower_bound", c.tdp.lower_bound},
                         {"tdp", c.tdp.tdp()},
                         {"argmax_u", c.tdp.argmax_u},
                         {"peak", {{"x", c.peak_coord.x}, {"y", c.peak_coord.y}, {"z", c.peak_coord.z}}},
                         {"peak_index", c.peak_index},
                         {"peak_stat", number_or_string(c.peak_stat)}};
        if (voxels) {
            j["voxels"] = c.subset.indices();
            if (g) {
                nlohmann::json coords = nlohmann::json::array();
                for (Index i : c.subset.indices()) {
                    const Coord p = g->coord_of(i);
                    coords.push_back({p.x, p.y, p.z});
                }
                j["coords"] = std::move(coords);
            }
        }
        clusters.push_back(std::move(j));
    }
    return {{"schema_version", schema_version},
            {"threshold", report.threshold},
            {"connectivity", report.connectivity},
            {"clusters", std::move(clusters)}};
}

}  // namespace ptdp
