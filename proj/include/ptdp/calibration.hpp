#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ptdp/families.hpp"
#include "ptdp/parallel.hpp"
#include "ptdp/stats.hpp"

namespace ptdp {

/// Permutation-calibrated member l(lambda_alpha) of a critical family.
struct Calibration {
    CriticalFamily family;
    double alpha = 0.05;
    double lambda_alpha = 0.0;
    std::size_t order_statistic = 1;  // k: lambda_alpha is the k-th smallest lambda_j
    std::vector<double> per_permutation_lambdas;
    std::vector<double> critical_vector;
    std::vector<std::string> warnings;
};

/// Order statistic used for lambda_alpha: k = floor(alpha * w) + 1. The small
/// slack absorbs binary representation error of alpha (0.05 * 20 must give 1).
inline std::size_t calibration_rank(double alpha, std::size_t w) {
    const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(w) + 1e-9)) + 1;
    return std::min(k, w);
}

/// lambda_j for every transformation row.
inline std::vector<double> permutation_lambdas(const PValueMatrix& pvals, const CriticalFamily& family,
                                               unsigned threads = 0) {
    const std::size_t w = pvals.w();
    std::vector<double> lambdas(w);
    parallel_for(w, threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<double> scratch(pvals.m());
        for (std::size_t j = begin; j < end; ++j) {
            const auto row = pvals.values.row(j);
            std::copy(row.begin(), row.end(), scratch.begin());
            std::sort(scratch.begin(), scratch.end());
            lambdas[j] = max_lambda_dominated(family, scratch);
        }
    });
    return lambdas;
}

/// Largest lambda such that at least (1 - alpha) w rows dominate l(lambda):
/// the k-th smallest lambda_j with k = floor(alpha w) + 1.
inline Calibration calibrate(const PValueMatrix& pvals, const CriticalFamily& family, double alpha,
                             unsigned threads = 0) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0, 1)");
    family.validate();
    if (family.m != pvals.m())
        throw invalid_input("family has m = " + std::to_string(family.m) + " but the p-value matrix has " +
                            std::to_string(pvals.m()) + " columns");
    if (pvals.w() < 1) throw invalid_input("empty p-value matrix");

    Calibration cal;
    cal.family = family;
    cal.alpha = alpha;
    cal.per_permutation_lambdas = permutation_lambdas(pvals, family, threads);
    const std::size_t w = pvals.w();
    cal.order_statistic = calibration_rank(alpha, w);
    if (alpha * static_cast<double>(w) < 1.0)
        cal.warnings.push_back("alpha * w = " + std::to_string(alpha * static_cast<double>(w)) +
                               " < 1: the calibration cannot exclude the observed row and has no power");
    std::vector<double> sorted = cal.per_permutation_lambdas;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cal.order_statistic - 1),
                     sorted.end());
    cal.lambda_alpha = sorted[cal.order_statistic - 1];
    cal.critical_vector = critical_values(family, cal.lambda_alpha);
    return cal;
}

/// Number of rows whose sorted p-values dominate l(lambda), by forward evaluation.
inline std::size_t condition_count(const PValueMatrix& pvals, const CriticalFamily& family, double lambda) {
    family.validate();
    if (family.m != pvals.m()) throw invalid_input("family size does not match p-value matrix");
    std::vector<double> l = critical_values(family, lambda);
    std::vector<double> scratch(pvals.m());
    std::size_t count = 0;
    for (std::size_t j = 0; j < pvals.w(); ++j) {
        const auto row = pvals.values.row(j);
        std::copy(row.begin(), row.end(), scratch.begin());
        std::sort(scratch.begin(), scratch.end());
        bool ok = true;
        for (std::size_t i = 0; i < l.size() && ok; ++i) ok = scratch[i] >= l[i];
        count += ok;
    }
    return count;
}

/// Diagnostic only: calibration restricted to a known set of null columns
/// (available in simulations). Never used for inference.
inline Calibration calibrate_on_columns(const PValueMatrix& pvals, FamilyKind kind, double delta, double alpha,
                                        const std::vector<Index>& columns, unsigned threads = 0) {
    if (columns.empty()) throw invalid_input("restricted calibration needs at least one column");
    PValueMatrix sub{Matrix<double>(pvals.w(), columns.size()), pvals.scheme, pvals.alternative, pvals.method};
    for (std::size_t j = 0; j < pvals.w(); ++j)
        for (std::size_t c = 0; c < columns.size(); ++c) sub.values(j, c) = pvals.values(j, columns.at(c));
    return calibrate(sub, make_family(kind, columns.size(), delta), alpha, threads);
}

}  // namespace ptdp
