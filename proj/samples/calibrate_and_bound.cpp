// Calibrates a Simes-shaped critical vector on simulated one-sample data and
// bounds the number of active voxels in a few subsets.
#include <iostream>

#include "ptdp/pipeline.hpp"
#include "ptdp/rng.hpp"

int main() {
    constexpr std::size_t subjects = 20, voxels = 500, active = 100;
    ptdp::Rng rng(11);
    ptdp::Matrix<double> d(subjects, voxels);
    for (std::size_t s = 0; s < subjects; ++s)
        for (std::size_t v = 0; v < voxels; ++v) d(s, v) = rng.normal() + (v < active ? 1.0 : 0.0);

    ptdp::AnalysisConfig cfg;
    cfg.w = 500;
    cfg.seed = 1;
    const auto a = ptdp::analyze(ptdp::make_contrasts(d), cfg);
    std::cout << "lambda_alpha = " << a.calibration.lambda_alpha << "\n";

    auto range = [&](std::size_t lo, std::size_t hi) {
        std::vector<ptdp::Index> idx;
        for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
        return ptdp::VoxelSubset::from_indices(idx, voxels);
    };
    for (auto [lo, hi] : {std::pair<std::size_t, std::size_t>{0, 100}, {0, 200}, {100, 500}, {0, 500}}) {
        const auto r = ptdp::tdp_lower_bound(range(lo, hi), a.observed_p, a.critical);
        std::cout << "voxels [" << lo << ", " << hi << "): at least " << r.lower_bound << " active (TDP >= "
                  << r.tdp() << ")\n";
    }
}
