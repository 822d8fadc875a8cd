// Thresholds a small 3-D map, reports cluster TDP bounds, then drills into
// the largest cluster at a higher threshold.
#include <iostream>

#include "ptdp/cluster.hpp"
#include "ptdp/pipeline.hpp"
#include "ptdp/rng.hpp"

int main() {
    const std::array<int, 3> dims{12, 12, 6};
    const auto g = ptdp::full_geometry(dims);
    ptdp::Rng rng(5);
    ptdp::Matrix<double> d(24, g.size());
    for (std::size_t s = 0; s < d.rows(); ++s)
        for (ptdp::Index i = 0; i < g.size(); ++i) {
            const auto c = g.coord_of(i);
            // A blob whose effect decays away from (4,4,2).
            const int r2 = (c.x - 4) * (c.x - 4) + (c.y - 4) * (c.y - 4) + (c.z - 2) * (c.z - 2);
            d(s, i) = rng.normal() + (r2 <= 9 ? 1.5 - 0.1 * r2 : 0.0);
        }

    ptdp::AnalysisConfig cfg;
    cfg.w = 1000;
    cfg.seed = 2;
    const auto a = ptdp::analyze(ptdp::make_contrasts(d, g), cfg);

    const double z = 3.0;
    auto top = ptdp::build_report(ptdp::threshold_clusters(a.observed_stat, g, z), a.observed_p, a.critical,
                                  a.observed_stat, g, z);
    std::cout << ptdp::to_json(top, &g).dump(2) << "\n";
    if (top.clusters.empty()) return 0;

    const double z2 = 5.0;
    auto sub = ptdp::build_report(ptdp::drill_down(top.clusters[0].subset, a.observed_stat, g, z2), a.observed_p,
                                  a.critical, a.observed_stat, g, z2);
    std::cout << "drill into cluster 1 at " << z2 << ":\n" << ptdp::to_json(sub, &g).dump(2) << "\n";
}
