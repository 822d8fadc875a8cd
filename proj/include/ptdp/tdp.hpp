#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptdp/calibration.hpp"
#include "ptdp/core.hpp"

namespace ptdp {

enum class VectorSource { permutation, parametric };

/// Nondecreasing critical values l_1..l_m. A parametric vector with h = 0
/// holds +inf everywhere, meaning every voxel counts as a discovery.
struct CriticalVector {
    std::vector<double> values;
    VectorSource source = VectorSource::permutation;
    double alpha = 0.05;
    std::optional<std::size_t> h;  // parametric only

    bool full_discovery() const noexcept { return source == VectorSource::parametric && h && *h == 0; }

    void validate() const {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (std::isnan(values[i])) throw invalid_input("critical vector contains NaN");
            if (i > 0 && values[i] < values[i - 1])
                throw invalid_input("critical vector must be nondecreasing (index " + std::to_string(i + 1) + ")");
        }
    }
};

inline CriticalVector permutation_critical_vector(const Calibration& cal) {
    CriticalVector cv{cal.critical_vector, VectorSource::permutation, cal.alpha, std::nullopt};
    cv.validate();
    return cv;
}

/// max over 1 <= u <= |S| of 1 - u + #{i in S : p_i <= l_u}. Subset p-values
/// are sorted once and a single pointer advances as u grows, which is valid
/// because l is nondecreasing. The smallest maximizing u is reported.
inline TdpResult tdp_lower_bound(const VoxelSubset& subset, std::span<const double> observed_p,
                                 const CriticalVector& critical) {
    if (subset.empty()) throw invalid_input("TDP bound requested for an empty subset");
    const std::size_t s = subset.size();
    if (critical.values.size() < s)
        throw invalid_input("critical vector has " + std::to_string(critical.values.size()) +
                            " entries but the subset has " + std::to_string(s) + " voxels");
    std::vector<double> ps;
    ps.reserve(s);
    for (Index i : subset.indices()) {
        if (i >= observed_p.size())
            throw invalid_input("voxel index " + std::to_string(i) + " outside the p-value vector");
        ps.push_back(observed_p[i]);
    }
    std::sort(ps.begin(), ps.end());

    TdpResult best{0, s, 1};
    long long best_value = std::numeric_limits<long long>::min();
    std::size_t count = 0;
    for (std::size_t u = 1; u <= s; ++u) {
        const double l = critical.values[u - 1];
        while (count < s && ps[count] <= l) ++count;
        const long long value = 1 - static_cast<long long>(u) + static_cast<long long>(count);
        if (value > best_value) {
            best_value = value;
            best.argmax_u = u;
        }
        if (count == s) break;  // later u only lower the value
    }
    best.lower_bound = static_cast<std::size_t>(std::max<long long>(best_value, 0));
    return best;
}

/// Largest size of a subset whose Simes test is not rejected at level alpha.
struct HommelH {
    std::size_t h = 0;
    double alpha = 0.05;
};

/// h = max{i : p_(m-i+j) > j alpha / i for all j <= i}. With k = m - i + j the
/// condition reads i (alpha - p_(k)) < alpha (m - k), so each sorted p-value
/// gives a bound B_k on i; scanning i upwards over the largest p-values, the
/// feasible i form a prefix and h is its end.
inline HommelH hommel_h(std::span<const double> observed_p, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw invalid_input("alpha must lie in (0, 1)");
    const std::size_t m = observed_p.size();
    std::vector<double> q(observed_p.begin(), observed_p.end());
    for (double p : q)
        if (!(p >= 0.0 && p <= 1.0)) throw invalid_input("p-values must lie in [0, 1]");
    std::sort(q.begin(), q.end());
    HommelH out{0, alpha};
    double bound = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i <= m; ++i) {
        const std::size_t k = m - i + 1;  // 1-based rank of the newly included p-value
        const double p = q[k - 1];
        const double room = alpha * static_cast<double>(m - k);
        if (p < alpha)
            bound = std::min(bound, room / (alpha - p));
        else if (p == alpha && k == m)
            bound = 0.0;
        if (!(static_cast<double>(i) < bound)) break;
        out.h = i;
    }
    // The rearranged bound can round differently from p > j alpha / i at exact
    // ties, so settle h against the defining comparison.
    auto direct = [&](std::size_t i) {
        for (std::size_t j = 1; j <= i; ++j)
            if (!(q[m - i + j - 1] > static_cast<double>(j) * alpha / static_cast<double>(i))) return false;
        return true;
    };
    while (out.h > 0 && !direct(out.h)) --out.h;
    while (out.h < m && direct(out.h + 1)) ++out.h;
    return out;
}

/// Simes-based ARI vector l_i = i alpha / h (all +inf when h = 0).
inline CriticalVector parametric_critical_vector(const HommelH& h, std::size_t m) {
    CriticalVector cv;
    cv.source = VectorSource::parametric;
    cv.alpha = h.alpha;
    cv.h = h.h;
    cv.values.resize(m);
    for (std::size_t i = 1; i <= m; ++i)
        cv.values[i - 1] = h.h == 0 ? std::numeric_limits<double>::infinity()
                                    : static_cast<double>(i) * h.alpha / static_cast<double>(h.h);
    return cv;
}

/// Test oracle: |S| minus the size of the largest U in S that the local
/// critical-vector test does not reject (p^U_(i) > l_i for all i), by
/// enumerating every subset. Refuses m > 12.
inline std::size_t closed_testing_oracle(const VoxelSubset& subset, std::span<const double> observed_p,
                                         const CriticalVector& critical) {
    constexpr std::size_t max_m = 12;
    if (observed_p.size() > max_m)
        throw invalid_input("closed testing oracle is limited to m <= " + std::to_string(max_m));
    if (subset.empty()) throw invalid_input("closed testing oracle needs a nonempty subset");
    const std::size_t s = subset.size();
    std::vector<double> ps;
    for (Index i : subset.indices()) ps.push_back(observed_p[i]);
    std::size_t largest = 0;
    std::vector<double> u;
    for (std::uint32_t mask = 1; mask < (1u << s); ++mask) {
        u.clear();
        for (std::size_t b = 0; b < s; ++b)
            if (mask & (1u << b)) u.push_back(ps[b]);
        std::sort(u.begin(), u.end());
        bool rejected = false;
        for (std::size_t i = 0; i < u.size() && !rejected; ++i) rejected = u[i] <= critical.values[i];
        if (!rejected) largest = std::max(largest, u.size());
    }
    return s - largest;
}

}  // namespace ptdp
