#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ptdp/calibration.hpp"
#include "ptdp/special.hpp"
#include "ptdp/stats.hpp"
#include "ptdp/tdp.hpp"

namespace ptdp {

/// Everything needed to go from subject contrasts to a calibrated critical vector.
struct AnalysisConfig {
    double alpha = 0.05;
    FamilyKind family = FamilyKind::simes_shift;
    double delta = 0.0;
    std::size_t w = 1000;
    std::uint64_t seed = 0;
    SchemeKind scheme = SchemeKind::sign_flip;
    std::vector<int> group_labels;  // group_label scheme only
    Alternative alternative = Alternative::two_sided;
    PValueMethod pvalue_method = PValueMethod::student_t;
    unsigned threads = 0;
};

/// Derived state of one analysis. Only the observed rows are kept.
struct Analysis {
    AnalysisConfig config;
    std::vector<double> observed_stat;
    std::vector<double> observed_p;
    double degrees_of_freedom = 1.0;
    Calibration calibration;
    CriticalVector critical;
};

using ProgressFn = std::function<void(double)>;

inline PermutationScheme scheme_of(const AnalysisConfig& c) {
    return PermutationScheme{c.scheme, c.w, c.seed, c.group_labels};
}

/// statistics -> p-values -> calibration. The progress callback, when set,
/// receives a fraction after each stage.
inline Analysis analyze(const SubjectContrasts& data, const AnalysisConfig& config, const ProgressFn& progress = {}) {
    auto report = [&](double f) {
        if (progress) progress(f);
    };
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw invalid_input("alpha must lie in (0, 1)");
    const auto family = make_family(config.family, data.voxels(), config.delta);
    report(0.0);
    auto stats = compute_statistics(data, scheme_of(config), config.alternative, config.threads);
    report(0.4);
    auto pvals = compute_pvalues(stats, config.pvalue_method, config.threads);
    report(0.6);
    Analysis a;
    a.config = config;
    a.observed_stat.assign(stats.observed().begin(), stats.observed().end());
    a.observed_p.assign(pvals.observed().begin(), pvals.observed().end());
    a.degrees_of_freedom = stats.degrees_of_freedom;
    a.calibration = calibrate(pvals, family, config.alpha, config.threads);
    a.critical = permutation_critical_vector(a.calibration);
    if (config.pvalue_method == PValueMethod::rank)
        a.calibration.warnings.push_back(
            "rank p-values are discrete; ties at the calibrated curve make the bound slightly liberal");
    report(1.0);
    return a;
}

/// Parametric t-test p-values of the observed statistics.
inline std::vector<double> parametric_pvalues(std::span<const double> t, double df, Alternative alt) {
    std::vector<double> p(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        switch (alt) {
            case Alternative::two_sided: p[i] = special::student_t_two_sided(t[i], df); break;
            case Alternative::greater: p[i] = special::student_t_upper(t[i], df); break;
            case Alternative::less: p[i] = special::student_t_upper(-t[i], df); break;
        }
    }
    return p;
}

/// Simes/Hommel baseline: parametric p-values, Hommel's h and l_i = i alpha / h.
struct ParametricBaseline {
    std::vector<double> p;
    HommelH h;
    CriticalVector critical;
};

inline ParametricBaseline parametric_baseline(std::span<const double> observed_stat, double df, Alternative alt,
                                              double alpha) {
    ParametricBaseline b;
    b.p = parametric_pvalues(observed_stat, df, alt);
    b.h = hommel_h(b.p, alpha);
    b.critical = parametric_critical_vector(b.h, b.p.size());
    return b;
}

inline ParametricBaseline parametric_baseline(const Analysis& a) {
    return parametric_baseline(a.observed_stat, a.degrees_of_freedom, a.config.alternative, a.config.alpha);
}

}  // namespace ptdp
