#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ptdp/core.hpp"
#include "ptdp/special.hpp"

namespace ptdp {

enum class FamilyKind { simes_shift, aorc_shift, higher_criticism, beta_quantile };

inline std::string_view to_string(FamilyKind k) {
    switch (k) {
        case FamilyKind::simes_shift: return "simes";
        case FamilyKind::aorc_shift: return "aorc";
        case FamilyKind::higher_criticism: return "hc";
        case FamilyKind::beta_quantile: return "beta";
    }
    return "simes";
}

inline FamilyKind parse_family(std::string_view s) {
    if (s == "simes" || s == "simes_shift") return FamilyKind::simes_shift;
    if (s == "aorc" || s == "aorc_shift") return FamilyKind::aorc_shift;
    if (s == "hc" || s == "higher_criticism") return FamilyKind::higher_criticism;
    if (s == "beta" || s == "beta_quantile") return FamilyKind::beta_quantile;
    throw invalid_input("unknown critical family '" + std::string(s) + "'");
}

/// A monotone family of candidate critical vectors l(lambda), lambda in an
/// interval [lambda_min, lambda_max]:
///
///   simes  l_i = (i - delta) lambda / (m - delta),                     lambda in [0, 1]
///   aorc   l_i = (i - delta) lambda / ((m - delta) - (i - delta)(1 - lambda)),
///                                                                    lambda in [0, cap]
///   hc     l_i = smaller root of (m + lambda^2) x^2 - (2i + lambda^2) x + i^2/m,
///                                                                    lambda in (-inf, 0]
///   beta   l_i = lambda-quantile of Beta(i, m + 1 - i),               lambda in [0, 1]
///
/// The hc vector only depends on lambda^2 and shrinks as |lambda| grows, so
/// the family is indexed by lambda <= 0 to make it nondecreasing in lambda;
/// -lambda is then the higher-criticism threshold. The aorc cap is
/// `aorc_lambda_max`, lowered when needed so the denominator stays positive
/// for the shifted entries i < delta.
struct CriticalFamily {
    FamilyKind kind = FamilyKind::simes_shift;
    std::size_t m = 1;
    double delta = 0.0;
    double aorc_lambda_max = 100.0;

    void validate() const {
        if (m < 1) throw invalid_input("critical family needs m >= 1");
        if (!(delta >= 0.0) || !(delta < static_cast<double>(m)))
            throw invalid_input("shift delta must satisfy 0 <= delta < m");
        if (delta != 0.0 && (kind == FamilyKind::higher_criticism || kind == FamilyKind::beta_quantile))
            throw invalid_input("shift delta is only defined for the simes and aorc families");
        if (!(aorc_lambda_max > 0.0)) throw invalid_input("aorc lambda cap must be positive");
    }

    double lambda_min() const noexcept {
        return kind == FamilyKind::higher_criticism ? -std::numeric_limits<double>::infinity() : 0.0;
    }

    double lambda_max() const noexcept {
        switch (kind) {
            case FamilyKind::simes_shift: return 1.0;
            case FamilyKind::beta_quantile: return 1.0;
            case FamilyKind::higher_criticism: return 0.0;
            case FamilyKind::aorc_shift: {
                // Denominator (m - i) + (i - delta) lambda vanishes first at i = 1.
                double cap = aorc_lambda_max;
                if (delta > 1.0) cap = std::min(cap, (static_cast<double>(m) - 1.0) / (delta - 1.0));
                return cap;
            }
        }
        return 1.0;
    }
};

inline CriticalFamily make_family(FamilyKind kind, std::size_t m, double delta = 0.0) {
    CriticalFamily f{kind, m, delta};
    f.validate();
    return f;
}

/// l_i(lambda) for 1 <= i <= m.
inline double evaluate(const CriticalFamily& f, double lambda, std::size_t i) {
    if (i < 1 || i > f.m)
        throw invalid_input("critical vector index " + std::to_string(i) + " outside 1.." + std::to_string(f.m));
    if (std::isnan(lambda) || lambda < f.lambda_min() || lambda > f.lambda_max())
        throw invalid_input("lambda " + std::to_string(lambda) + " outside the admissible range of family " +
                            std::string(to_string(f.kind)));
    const double m = static_cast<double>(f.m);
    const double di = static_cast<double>(i);
    switch (f.kind) {
        case FamilyKind::simes_shift: return (di - f.delta) * lambda / (m - f.delta);
        case FamilyKind::aorc_shift: {
            if (lambda == 0.0) return 0.0;
            const double s = di - f.delta;
            return s * lambda / ((m - di) + s * lambda);
        }
        case FamilyKind::higher_criticism: {
            if (lambda == 0.0) return di / m;
            const double l2 = lambda * lambda;
            // Discriminant (2i + l2)^2 - 4 i^2 (m + l2) / m, expanded to avoid cancellation.
            const double disc = l2 * (l2 + 4.0 * di * (1.0 - di / m));
            const double c = di * di / m;
            return 2.0 * c / ((2.0 * di + l2) + std::sqrt(std::max(disc, 0.0)));
        }
        case FamilyKind::beta_quantile: return special::ibeta_inv(di, m + 1.0 - di, lambda);
    }
    return 0.0;
}

inline std::vector<double> critical_values(const CriticalFamily& f, double lambda) {
    std::vector<double> out(f.m);
    for (std::size_t i = 1; i <= f.m; ++i) out[i - 1] = evaluate(f, lambda, i);
    return out;
}

/// True when every sorted p-value satisfies p_(i) >= l_i(lambda).
inline bool dominates(const CriticalFamily& f, double lambda, std::span<const double> sorted_p) {
    for (std::size_t i = 1; i <= sorted_p.size(); ++i)
        if (sorted_p[i - 1] < evaluate(f, lambda, i)) return false;
    return true;
}

namespace detail {

// sup{lambda : l_i(lambda) <= p}, +inf when entry i never binds.
inline double entry_bound(const CriticalFamily& f, std::size_t i, double p) {
    const double inf = std::numeric_limits<double>::infinity();
    const double m = static_cast<double>(f.m);
    const double di = static_cast<double>(i);
    switch (f.kind) {
        case FamilyKind::simes_shift:
            if (di <= f.delta) return inf;
            return p * (m - f.delta) / (di - f.delta);
        case FamilyKind::aorc_shift:
            if (di <= f.delta || p >= 1.0) return inf;
            return p * (m - di) / ((di - f.delta) * (1.0 - p));
        case FamilyKind::higher_criticism: {
            if (p >= di / m) return inf;
            if (p <= 0.0) return -inf;
            return -std::sqrt(m) * (di / m - p) / std::sqrt(p * (1.0 - p));
        }
        case FamilyKind::beta_quantile: return special::ibeta(di, m + 1.0 - di, p);
    }
    return inf;
}

// Moves lambda to the largest double at which the row dominates l(lambda).
// Only entries whose bound is within `near` of lambda are re-checked, which is
// where rounding can flip the comparison.
inline double settle_feasible(const CriticalFamily& f, double lambda, std::span<const double> sorted_p,
                              std::span<const double> bounds) {
    const double lo = f.lambda_min();
    auto feasible = [&](double lam) {
        const double near = 1e-9 * std::max(std::fabs(lam), 1e-300);
        for (std::size_t i = 1; i <= sorted_p.size(); ++i) {
            if (bounds[i - 1] - lam > near && f.kind == FamilyKind::beta_quantile) continue;
            if (sorted_p[i - 1] < evaluate(f, lam, i)) return false;
        }
        return true;
    };
    double step = std::max(std::fabs(lambda) * std::numeric_limits<double>::epsilon(), 1e-300);
    for (int it = 0; it < 400 && !feasible(lambda); ++it) {
        lambda -= step;
        step *= 2.0;
        if (lambda <= lo) return lo;
    }
    // The closed form can also land a few ulps low; climb to the last feasible double.
    const double hi = f.lambda_max();
    for (int it = 0; it < 64 && lambda < hi; ++it) {
        const double up = std::nextafter(lambda, hi);
        if (!feasible(up)) break;
        lambda = up;
    }
    return lambda;
}

}  // namespace detail

/// Largest lambda in the family's range such that the ascending row
/// `sorted_p` dominates l(lambda) entry-wise, from the closed-form inversion
/// of each entry. The result is nudged by a few ulps if rounding requires, so that dominates(f, result, sorted_p) always holds.
inline double max_lambda_dominated(const CriticalFamily& f, std::span<const double> sorted_p) {
    if (sorted_p.size() != f.m)
        throw invalid_input("p-value row has length " + std::to_string(sorted_p.size()) + ", family expects " +
                            std::to_string(f.m));
    std::vector<double> bounds(f.m);
    double lambda = f.lambda_max();
    for (std::size_t i = 1; i <= f.m; ++i) {
        bounds[i - 1] = detail::entry_bound(f, i, sorted_p[i - 1]);
        lambda = std::min(lambda, bounds[i - 1]);
    }
    lambda = std::max(lambda, f.lambda_min());
    if (f.kind == FamilyKind::higher_criticism && std::isinf(lambda)) return lambda;
    return detail::settle_feasible(f, lambda, sorted_p, bounds);
}

/// Same supremum found by bisection on lambda using forward evaluation only.
/// Used to cross-check the closed forms.
inline double max_lambda_dominated_bisect(const CriticalFamily& f, std::span<const double> sorted_p,
                                          double rel_tol = 1e-10) {
    if (sorted_p.size() != f.m) throw invalid_input("p-value row length does not match family");
    double hi = f.lambda_max();
    if (dominates(f, hi, sorted_p)) return hi;
    double lo = f.lambda_min();
    if (std::isinf(lo)) {
        lo = -1.0;
        while (!dominates(f, lo, sorted_p)) {
            hi = lo;
            lo *= 2.0;
            if (lo < -1e300) return -std::numeric_limits<double>::infinity();
        }
    }
    while (hi - lo > std::max(rel_tol * std::max(std::fabs(lo), std::fabs(hi)), 1e-15)) {
        const double mid = lo + 0.5 * (hi - lo);
        if (dominates(f, mid, sorted_p))
            lo = mid;
        else
            hi = mid;
    }
    return lo;
}

}  // namespace ptdp
