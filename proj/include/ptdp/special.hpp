#pragma once

#include <cmath>
#include <limits>

#include "ptdp/core.hpp"

// Regularized incomplete beta and friends. Absolute accuracy target is 1e-12
// for the CDF; the quantile returns the smallest double whose CDF reaches the
// requested level, so quantile and CDF are consistent with each other.

namespace ptdp::special {

namespace detail {

// Continued fraction for I_x(a,b), modified Lentz.
inline double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

inline double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

}  // namespace detail

/// I_x(a, b) with y = 1 - x supplied separately to avoid cancellation.
inline double ibeta(double a, double b, double x, double y) {
    if (!(a > 0.0) || !(b > 0.0)) throw invalid_input("incomplete beta needs positive shape parameters");
    if (x <= 0.0) return 0.0;
    if (y <= 0.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log(y) - detail::log_beta(a, b);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * detail::beta_cf(a, b, x) / a;
    return 1.0 - std::exp(log_front) * detail::beta_cf(b, a, y) / b;
}

inline double ibeta(double a, double b, double x) { return ibeta(a, b, x, 1.0 - x); }

/// Complement 1 - I_x(a, b), computed without cancellation.
inline double ibetac(double a, double b, double x, double y) { return ibeta(b, a, y, x); }

inline double beta_density(double a, double b, double x) {
    if (x <= 0.0 || x >= 1.0) return 0.0;
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - detail::log_beta(a, b));
}

/// Smallest double x in [0, 1] with I_x(a, b) >= level.
inline double ibeta_inv(double a, double b, double level) {
    if (!(level >= 0.0 && level <= 1.0)) throw invalid_input("beta quantile level must lie in [0, 1]");
    if (level == 0.0) return 0.0;
    if (level == 1.0) return 1.0;
    // Invariant: F(lo) < level <= F(hi).
    double lo = 0.0;
    double hi = 1.0;
    double x = a / (a + b);
    for (int it = 0; it < 60; ++it) {
        const double f = ibeta(a, b, x);
        if (f >= level)
            hi = x;
        else
            lo = x;
        if (std::fabs(f - level) <= 1e-15 * level) break;
        const double dens = beta_density(a, b, x);
        double next = dens > 0.0 ? x - (f - level) / dens : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (next == x) break;
        x = next;
    }
    // Tighten the bracket around the Newton estimate, then bisect on the double grid.
    const bool above = ibeta(a, b, x) >= level;
    double step = std::max(std::fabs(x) * 1e-14, std::numeric_limits<double>::denorm_min());
    for (int it = 0; it < 200; ++it) {
        const double cand = above ? x - step : x + step;
        if (above ? cand <= lo : cand >= hi) break;
        if (ibeta(a, b, cand) >= level) {
            hi = cand;
            if (!above) break;
        } else {
            lo = cand;
            if (above) break;
        }
        step *= 4.0;
    }
    if (above)
        hi = std::min(hi, x);
    else
        lo = std::max(lo, x);
    for (int it = 0; it < 2000; ++it) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi) break;
        if (ibeta(a, b, mid) >= level)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

/// Upper tail P(T >= t) of Student's t with df degrees of freedom.
inline double student_t_upper(double t, double df) {
    if (std::isnan(t)) throw invalid_input("t statistic is NaN");
    if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
    const double t2 = t * t;
    const double x = df / (df + t2);
    const double y = t2 / (df + t2);
    const double half_tail = 0.5 * ibeta(0.5 * df, 0.5, x, y);
    return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

/// Two-sided P(|T| >= |t|).
inline double student_t_two_sided(double t, double df) {
    if (std::isnan(t)) throw invalid_input("t statistic is NaN");
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    return std::min(1.0, ibeta(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2)));
}

}  // namespace ptdp::special
