#include <gtest/gtest.h>

#include <algorithm>
#include <deque>
#include <set>

#include "ptdp/cluster.hpp"
#include "ptdp/rng.hpp"

using namespace ptdp;

namespace {

// Breadth-first flood fill on grid coordinates, written independently of the union-find labeling.
std::set<std::vector<Index>> flood_fill(const std::vector<double>& stat, const VolumeGeometry& g, double z, int conn,
                                        const VoxelSubset* within = nullptr) {
    const int limit = conn == 6 ? 1 : conn == 18 ? 2 : 3;
    std::vector<char> seen(g.size(), 0);
    std::set<std::vector<Index>> out;
    auto eligible = [&](Index i) { return stat[i] > z && (!within || within->contains(i)); };
    for (Index start = 0; start < g.size(); ++start) {
        if (seen[start] || !eligible(start)) continue;
        std::vector<Index> comp;
        std::deque<Index> queue{start};
        seen[start] = 1;
        while (!queue.empty()) {
            Index cur = queue.front();
            queue.pop_front();
            comp.push_back(cur);
            Coord c = g.coord_of(cur);
            for (Index other = 0; other < g.size(); ++other) {
                if (seen[other] || !eligible(other)) continue;
                Coord d = g.coord_of(other);
                int ax = std::abs(d.x - c.x), ay = std::abs(d.y - c.y), az = std::abs(d.z - c.z);
                if (std::max({ax, ay, az}) == 1 && ax + ay + az <= limit) {
                    seen[other] = 1;
                    queue.push_back(other);
                }
            }
        }
        std::sort(comp.begin(), comp.end());
        out.insert(comp);
    }
    return out;
}

std::set<std::vector<Index>> as_set(const std::vector<VoxelSubset>& v) {
    std::set<std::vector<Index>> out;
    for (const auto& s : v) out.insert(s.indices());
    return out;
}

CriticalVector simes_vector(std::size_t m, double alpha) {
    CriticalVector cv;
    for (std::size_t i = 1; i <= m; ++i) cv.values.push_back(static_cast<double>(i) * alpha / static_cast<double>(m));
    return cv;
}

}  // namespace

TEST(Threshold, FaceNeighbours) {
    auto g = full_geometry({2, 1, 1});
    std::vector<double> stat{5, 5};
    auto c = threshold_clusters(stat, g, 3.2, 6);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(c[0].size(), 2u);
}

TEST(Threshold, DiagonalNeighboursDependOnConnectivity) {
    auto g = full_geometry({2, 2, 1});
    std::vector<double> stat{5, 0, 0, 5};  // (0,0,0) and (1,1,0)
    EXPECT_EQ(threshold_clusters(stat, g, 3.2, 6).size(), 2u);
    EXPECT_EQ(threshold_clusters(stat, g, 3.2, 18).size(), 1u);
    auto g3 = full_geometry({2, 2, 2});
    std::vector<double> corner(8, 0.0);
    corner[0] = corner[7] = 5;  // only a vertex in common
    EXPECT_EQ(threshold_clusters(corner, g3, 3.2, 18).size(), 2u);
    EXPECT_EQ(threshold_clusters(corner, g3, 3.2, 26).size(), 1u);
}

TEST(Threshold, StrictInequalityAndEmptyResult) {
    auto g = full_geometry({3, 1, 1});
    std::vector<double> stat{3.2, 3.2, 3.2};
    EXPECT_TRUE(threshold_clusters(stat, g, 3.2).empty());
    EXPECT_THROW(threshold_clusters(stat, g, 3.2, 8), invalid_input);
    EXPECT_THROW(threshold_clusters(std::vector<double>{1.0}, g, 0.0), invalid_input);
}

TEST(Threshold, OrderedBySizeThenSmallestIndex) {
    auto g = full_geometry({7, 1, 1});
    std::vector<double> stat{5, 0, 5, 5, 0, 5, 0};
    auto c = threshold_clusters(stat, g, 1.0);
    ASSERT_EQ(c.size(), 3u);
    EXPECT_EQ(c[0].indices(), (std::vector<Index>{2, 3}));
    EXPECT_EQ(c[1].indices(), (std::vector<Index>{0}));
    EXPECT_EQ(c[2].indices(), (std::vector<Index>{5}));
}

TEST(Threshold, MatchesFloodFillOracle) {
    Rng rng(1);
    auto g = full_geometry({10, 10, 10});
    for (int trial = 0; trial < 6; ++trial) {
        std::vector<double> stat(g.size());
        for (auto& v : stat) v = rng.normal();
        for (int conn : {6, 18, 26}) {
            const double z = 0.2 + 0.3 * trial;
            auto labels = threshold_clusters(stat, g, z, conn);
            EXPECT_EQ(as_set(labels), flood_fill(stat, g, z, conn)) << "conn " << conn << " z " << z;
            // partition of the supra-threshold set
            std::size_t total = 0;
            for (const auto& s : labels) total += s.size();
            EXPECT_EQ(total, static_cast<std::size_t>(std::count_if(stat.begin(), stat.end(), [&](double v) { return v > z; })));
        }
    }
}

TEST(Threshold, MaskedGeometryMatchesOracle) {
    Rng rng(2);
    std::vector<bool> mask(8 * 7 * 6);
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = rng.uniform() < 0.7;
    auto g = build_geometry({8, 7, 6}, mask);
    std::vector<double> stat(g.size());
    for (auto& v : stat) v = rng.normal();
    for (int conn : {6, 18, 26}) EXPECT_EQ(as_set(threshold_clusters(stat, g, 0.0, conn)), flood_fill(stat, g, 0.0, conn));
}

TEST(Threshold, Deterministic) {
    Rng rng(3);
    auto g = full_geometry({9, 8, 7});
    std::vector<double> stat(g.size());
    for (auto& v : stat) v = rng.normal();
    EXPECT_EQ(threshold_clusters(stat, g, 0.5), threshold_clusters(stat, g, 0.5));
}

TEST(DrillDown, BelowMinimumReturnsParent) {
    auto g = full_geometry({4, 1, 1});
    std::vector<double> stat{5, 6, 7, 0};
    auto parent = threshold_clusters(stat, g, 3.2).at(0);
    auto sub = drill_down(parent, stat, g, 4.0);
    ASSERT_EQ(sub.size(), 1u);
    EXPECT_EQ(sub[0], parent);
    EXPECT_TRUE(drill_down(parent, stat, g, 7.0).empty());
    EXPECT_THROW(drill_down(VoxelSubset{}, stat, g, 4.0), invalid_input);
}

TEST(DrillDown, NestedAndMonotone) {
    Rng rng(4);
    auto g = full_geometry({12, 12, 6});
    const std::size_t m = g.size();
    std::vector<double> stat(m), p(m);
    for (Index i = 0; i < m; ++i) {
        const Coord c = g.coord_of(i);
        const double bump = 4.5 * std::exp(-((c.x - 5) * (c.x - 5) + (c.y - 6) * (c.y - 6) + (c.z - 3) * (c.z - 3)) / 8.0);
        stat[i] = bump + rng.normal();
        p[i] = std::erfc(stat[i] / std::sqrt(2.0)) / 2.0;
    }
    auto cv = simes_vector(m, 0.05);
    for (const auto& parent : threshold_clusters(stat, g, 2.0)) {
        const auto pr = tdp_lower_bound(parent, p, cv);
        auto subs = drill_down(parent, stat, g, 3.0);
        EXPECT_EQ(as_set(subs), flood_fill(stat, g, 3.0, 26, &parent));
        for (const auto& s : subs) {
            EXPECT_TRUE(s.is_subset_of(parent));
            EXPECT_LE(tdp_lower_bound(s, p, cv).lower_bound, pr.lower_bound);
        }
    }
}

TEST(Report, SingletonAboveCriticalValue) {
    auto g = full_geometry({3, 1, 1});
    std::vector<double> stat{4.0, 0.0, 0.0}, p{0.5, 0.9, 0.9};
    auto report = build_report(threshold_clusters(stat, g, 3.2), p, simes_vector(3, 0.05), stat, g, 3.2);
    ASSERT_EQ(report.clusters.size(), 1u);
    EXPECT_EQ(report.clusters[0].tdp.lower_bound, 0u);
    EXPECT_EQ(report.clusters[0].id, 1u);
}

TEST(Report, EmptyReportIsValidJson) {
    auto g = full_geometry({2, 2, 2});
    std::vector<double> stat(8, 0.0), p(8, 1.0);
    auto report = build_report({}, p, simes_vector(8, 0.05), stat, g, 3.2);
    auto j = to_json(report);
    EXPECT_EQ(j["schema_version"], schema_version);
    EXPECT_TRUE(j["clusters"].is_array());
    EXPECT_TRUE(j["clusters"].empty());
    auto back = nlohmann::json::parse(j.dump());
    EXPECT_EQ(back, j);
}

TEST(Report, PerClusterBoundsComposeAndPeaksAreFirstMax) {
    Rng rng(5);
    auto g = full_geometry({10, 10, 4});
    const std::size_t m = g.size();
    std::vector<double> stat(m), p(m);
    for (Index i = 0; i < m; ++i) {
        stat[i] = rng.normal() + (g.coord_of(i).x < 3 ? 3.0 : 0.0) + (g.coord_of(i).x > 7 ? -3.0 : 0.0);
        p[i] = std::erfc(std::fabs(stat[i]) / std::sqrt(2.0));
    }
    std::vector<double> abs_stat(m);
    for (Index i = 0; i < m; ++i) abs_stat[i] = std::fabs(stat[i]);
    auto subsets = threshold_clusters(abs_stat, g, 2.0);
    ASSERT_GE(subsets.size(), 3u);
    subsets.resize(3);
    auto cv = simes_vector(m, 0.05);
    auto report = build_report(subsets, p, cv, stat, g, 2.0);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& c = report.clusters[k];
        EXPECT_EQ(c.tdp, tdp_lower_bound(subsets[k], p, cv));
        Index expect = subsets[k].indices().front();
        for (Index i : subsets[k].indices())
            if (std::fabs(stat[i]) > std::fabs(stat[expect])) expect = i;
        EXPECT_EQ(c.peak_index, expect);
        EXPECT_EQ(c.peak_stat, stat[expect]);
        EXPECT_EQ(c.peak_coord, g.coord_of(expect));
    }
    auto j = to_json(report, &g, true);
    EXPECT_EQ(j["clusters"][0]["voxels"].size(), subsets[0].size());
    EXPECT_FALSE(to_json(report)["clusters"][0].contains("voxels"));
}

TEST(Report, TdpMapAndInfinitePeaks) {
    auto g = full_geometry({3, 1, 1});
    std::vector<double> stat{std::numeric_limits<double>::infinity(), 5.0, 0.0}, p{0.001, 0.001, 0.9};
    auto report = build_report(threshold_clusters(stat, g, 3.2), p, simes_vector(3, 0.05), stat, g, 3.2);
    EXPECT_EQ(to_json(report)["clusters"][0]["peak_stat"], "inf");
    auto map = tdp_map(report, 3);
    EXPECT_EQ(map, (std::vector<double>{1.0, 1.0, 0.0}));
}
