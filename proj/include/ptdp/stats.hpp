#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "ptdp/core.hpp"
#include "ptdp/parallel.hpp"
#include "ptdp/rng.hpp"
#include "ptdp/special.hpp"

namespace ptdp {

enum class SchemeKind { sign_flip, group_label };
enum class Alternative { two_sided, greater, less };

/// How statistics are turned into p-values. Both are applied identically to
/// every transformation row, which is all the calibration needs.
///  - rank: per-voxel permutation rank, p = #{k : T^k at least as extreme as T^j} / w
///  - student_t: Student-t tail probability of each statistic
enum class PValueMethod { rank, student_t };

inline std::string_view to_string(SchemeKind k) { return k == SchemeKind::sign_flip ? "sign_flip" : "group_label"; }
inline std::string_view to_string(Alternative a) {
    switch (a) {
        case Alternative::two_sided: return "two_sided";
        case Alternative::greater: return "greater";
        case Alternative::less: return "less";
    }
    return "two_sided";
}
inline std::string_view to_string(PValueMethod m) { return m == PValueMethod::rank ? "rank" : "student_t"; }

inline Alternative parse_alternative(std::string_view s) {
    if (s == "two_sided" || s == "two-sided" || s == "two.sided") return Alternative::two_sided;
    if (s == "greater") return Alternative::greater;
    if (s == "less") return Alternative::less;
    throw invalid_input("unknown alternative '" + std::string(s) + "'");
}
inline PValueMethod parse_pvalue_method(std::string_view s) {
    if (s == "rank") return PValueMethod::rank;
    if (s == "t" || s == "student_t" || s == "student-t") return PValueMethod::student_t;
    throw invalid_input("unknown p-value method '" + std::string(s) + "'");
}

/// A set of w random transformations; transformation 0 is always the identity.
struct PermutationScheme {
    SchemeKind kind = SchemeKind::sign_flip;
    std::size_t w = 1000;
    std::uint64_t seed = 0;
    std::vector<int> group_labels;  // length J, values 1 or 2; group_label only

    void validate(std::size_t subjects) const {
        if (w < 2) throw invalid_input("need at least 2 transformations (w >= 2)");
        if (kind == SchemeKind::group_label) {
            if (group_labels.size() != subjects)
                throw invalid_input("group label count " + std::to_string(group_labels.size()) +
                                    " does not match subject count " + std::to_string(subjects));
            std::size_t n1 = 0, n2 = 0;
            for (int g : group_labels) {
                if (g == 1)
                    ++n1;
                else if (g == 2)
                    ++n2;
                else
                    throw invalid_input("group labels must be 1 or 2");
            }
            if (n1 < 2 || n2 < 2)
                throw invalid_input("each group needs at least 2 subjects (got " + std::to_string(n1) + " and " +
                                    std::to_string(n2) + ")");
        }
    }
};

/// Sign vectors for a sign-flip scheme: row 0 is all +1, rows 1..w-1 are
/// i.i.d. uniform over {-1,+1}^J (duplicates allowed).
inline Matrix<signed char> sign_flips(const PermutationScheme& scheme, std::size_t subjects) {
    Matrix<signed char> flips(scheme.w, subjects, 1);
    Rng rng(scheme.seed);
    for (std::size_t j = 1; j < scheme.w; ++j) {
        std::uint64_t bits = 0;
        for (std::size_t k = 0; k < subjects; ++k) {
            if (k % 64 == 0) bits = rng();
            flips(j, k) = (bits & 1u) ? 1 : -1;
            bits >>= 1;
        }
    }
    return flips;
}

/// Group labels per transformation: row 0 is the original labelling, later
/// rows are independent uniform shuffles of it.
inline Matrix<signed char> label_permutations(const PermutationScheme& scheme) {
    const std::size_t J = scheme.group_labels.size();
    Matrix<signed char> labels(scheme.w, J);
    std::vector<int> current(scheme.group_labels);
    for (std::size_t k = 0; k < J; ++k) labels(0, k) = static_cast<signed char>(current[k]);
    Rng rng(scheme.seed);
    for (std::size_t j = 1; j < scheme.w; ++j) {
        current = scheme.group_labels;
        rng.shuffle(current);
        for (std::size_t k = 0; k < J; ++k) labels(j, k) = static_cast<signed char>(current[k]);
    }
    return labels;
}

/// w x m test statistics; row 0 belongs to the untransformed data.
struct StatisticMatrix {
    Matrix<double> values;
    PermutationScheme scheme;
    Alternative alternative = Alternative::two_sided;
    double degrees_of_freedom = 1.0;

    std::size_t w() const noexcept { return values.rows(); }
    std::size_t m() const noexcept { return values.cols(); }
    std::span<const double> observed() const noexcept { return values.row(0); }
};

/// w x m p-values; row 0 holds the observed p-values.
struct PValueMatrix {
    Matrix<double> values;
    PermutationScheme scheme;
    Alternative alternative = Alternative::two_sided;
    PValueMethod method = PValueMethod::rank;

    std::size_t w() const noexcept { return values.rows(); }
    std::size_t m() const noexcept { return values.cols(); }
    std::span<const double> observed() const noexcept { return values.row(0); }
};

namespace detail {

// mean / sd -> t, with the zero-variance convention: +-inf by the sign of the
// mean, exactly 0 when the mean is 0.
inline double t_or_sentinel(double mean, double var, double scale, bool constant) {
    if (constant || var <= 0.0) {
        if (mean > 0.0) return std::numeric_limits<double>::infinity();
        if (mean < 0.0) return -std::numeric_limits<double>::infinity();
        return 0.0;
    }
    return mean / std::sqrt(var * scale);
}

}  // namespace detail

/// One-sample t statistics for every sign-flip transformation:
/// T = mean / sqrt(var / J), var with divisor J - 1.
inline StatisticMatrix one_sample_statistics(const SubjectContrasts& contrasts, const PermutationScheme& scheme,
                                             Alternative alternative = Alternative::two_sided, unsigned threads = 0) {
    if (scheme.kind != SchemeKind::sign_flip) throw invalid_input("one-sample statistics need a sign_flip scheme");
    const std::size_t J = contrasts.subjects();
    const std::size_t m = contrasts.voxels();
    if (J < 2) throw invalid_input("one-sample test needs at least 2 subjects");
    scheme.validate(J);
    for (double v : contrasts.data.data())
        if (!std::isfinite(v)) throw invalid_input("contrast data contain non-finite values");

    const auto flips = sign_flips(scheme, J);
    StatisticMatrix out{Matrix<double>(scheme.w, m), scheme, alternative, static_cast<double>(J - 1)};
    const auto& D = contrasts.data;
    const double inv_j = 1.0 / static_cast<double>(J);
    const double scale = 1.0 / static_cast<double>(J);

    parallel_for(scheme.w, threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<double> sum(m), ss(m), lo(m), hi(m);
        for (std::size_t j = begin; j < end; ++j) {
            std::fill(sum.begin(), sum.end(), 0.0);
            std::fill(ss.begin(), ss.end(), 0.0);
            std::fill(lo.begin(), lo.end(), std::numeric_limits<double>::infinity());
            std::fill(hi.begin(), hi.end(), -std::numeric_limits<double>::infinity());
            for (std::size_t k = 0; k < J; ++k) {
                const double e = flips(j, k);
                const auto row = D.row(k);
                for (std::size_t i = 0; i < m; ++i) {
                    const double v = e * row[i];
                    sum[i] += v;
                    lo[i] = std::min(lo[i], v);
                    hi[i] = std::max(hi[i], v);
                }
            }
            for (std::size_t i = 0; i < m; ++i) sum[i] *= inv_j;  // now the mean
            for (std::size_t k = 0; k < J; ++k) {
                const double e = flips(j, k);
                const auto row = D.row(k);
                for (std::size_t i = 0; i < m; ++i) {
                    const double d = e * row[i] - sum[i];
                    ss[i] += d * d;
                }
            }
            auto t = out.values.row(j);
            for (std::size_t i = 0; i < m; ++i)
                t[i] = detail::t_or_sentinel(sum[i], ss[i] / static_cast<double>(J - 1), scale, lo[i] == hi[i]);
        }
    });
    return out;
}

/// Pooled-variance two-sample t statistics (group 1 minus group 2) for every
/// relabelling in the scheme.
inline StatisticMatrix two_sample_statistics(const SubjectContrasts& contrasts, const PermutationScheme& scheme,
                                             Alternative alternative = Alternative::two_sided, unsigned threads = 0) {
    if (scheme.kind != SchemeKind::group_label) throw invalid_input("two-sample statistics need a group_label scheme");
    const std::size_t J = contrasts.subjects();
    const std::size_t m = contrasts.voxels();
    scheme.validate(J);
    for (double v : contrasts.data.data())
        if (!std::isfinite(v)) throw invalid_input("contrast data contain non-finite values");

    std::size_t n1 = 0;
    for (int g : scheme.group_labels) n1 += (g == 1);
    const std::size_t n2 = J - n1;
    const auto labels = label_permutations(scheme);
    StatisticMatrix out{Matrix<double>(scheme.w, m), scheme, alternative, static_cast<double>(J - 2)};
    const auto& D = contrasts.data;
    const double scale = 1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2);
    const double inf = std::numeric_limits<double>::infinity();

    parallel_for(scheme.w, threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<double> s1(m), s2(m), ss(m), lo1(m), hi1(m), lo2(m), hi2(m);
        for (std::size_t j = begin; j < end; ++j) {
            std::fill(s1.begin(), s1.end(), 0.0);
            std::fill(s2.begin(), s2.end(), 0.0);
            std::fill(ss.begin(), ss.end(), 0.0);
            std::fill(lo1.begin(), lo1.end(), inf);
            std::fill(lo2.begin(), lo2.end(), inf);
            std::fill(hi1.begin(), hi1.end(), -inf);
            std::fill(hi2.begin(), hi2.end(), -inf);
            for (std::size_t k = 0; k < J; ++k) {
                const auto row = D.row(k);
                const bool first = labels(j, k) == 1;
                auto& s = first ? s1 : s2;
                auto& lo = first ? lo1 : lo2;
                auto& hi = first ? hi1 : hi2;
                for (std::size_t i = 0; i < m; ++i) {
                    s[i] += row[i];
                    lo[i] = std::min(lo[i], row[i]);
                    hi[i] = std::max(hi[i], row[i]);
                }
            }
            for (std::size_t i = 0; i < m; ++i) {
                s1[i] /= static_cast<double>(n1);
                s2[i] /= static_cast<double>(n2);
            }
            for (std::size_t k = 0; k < J; ++k) {
                const auto row = D.row(k);
                const auto& mean = labels(j, k) == 1 ? s1 : s2;
                for (std::size_t i = 0; i < m; ++i) {
                    const double d = row[i] - mean[i];
                    ss[i] += d * d;
                }
            }
            auto t = out.values.row(j);
            for (std::size_t i = 0; i < m; ++i) {
                const bool constant = lo1[i] == hi1[i] && lo2[i] == hi2[i];
                const double diff = constant ? lo1[i] - lo2[i] : s1[i] - s2[i];
                t[i] = detail::t_or_sentinel(diff, ss[i] / static_cast<double>(J - 2), scale, constant);
            }
        }
    });
    return out;
}

/// Dispatches on the scheme kind.
inline StatisticMatrix compute_statistics(const SubjectContrasts& contrasts, const PermutationScheme& scheme,
                                          Alternative alternative = Alternative::two_sided, unsigned threads = 0) {
    return scheme.kind == SchemeKind::sign_flip ? one_sample_statistics(contrasts, scheme, alternative, threads)
                                                : two_sample_statistics(contrasts, scheme, alternative, threads);
}

/// Per-voxel permutation p-values: p_i^j = #{k : key(T_i^k) >= key(T_i^j)} / w
/// where key is |T| (two-sided), T (greater) or -T (less). Infinite sentinels
/// order above every finite value and tie with each other.
inline PValueMatrix pvalue_matrix(const StatisticMatrix& stats, unsigned threads = 0) {
    const std::size_t w = stats.w();
    const std::size_t m = stats.m();
    if (w < 2) throw invalid_input("need at least 2 transformations (w >= 2)");
    PValueMatrix out{Matrix<double>(w, m), stats.scheme, stats.alternative, PValueMethod::rank};
    const double inv_w = 1.0 / static_cast<double>(w);
    parallel_for(m, threads, [&](std::size_t begin, std::size_t end, unsigned) {
        std::vector<double> key(w), sorted(w);
        for (std::size_t i = begin; i < end; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double t = stats.values(j, i);
                key[j] = stats.alternative == Alternative::two_sided ? std::fabs(t)
                         : stats.alternative == Alternative::greater ? t
                                                                     : -t;
            }
            sorted = key;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t j = 0; j < w; ++j) {
                const auto first_ge = std::lower_bound(sorted.begin(), sorted.end(), key[j]);
                const auto count = static_cast<std::size_t>(sorted.end() - first_ge);
                out.values(j, i) = static_cast<double>(count) * inv_w;
            }
        }
    });
    return out;
}

/// Student-t tail p-values with the statistic's degrees of freedom, applied
/// to every row. Results are floored at the smallest normal double so that
/// every p-value stays strictly positive.
inline PValueMatrix student_t_pvalue_matrix(const StatisticMatrix& stats, unsigned threads = 0) {
    const std::size_t w = stats.w();
    const std::size_t m = stats.m();
    if (w < 1) throw invalid_input("empty statistic matrix");
    PValueMatrix out{Matrix<double>(w, m), stats.scheme, stats.alternative, PValueMethod::student_t};
    const double df = stats.degrees_of_freedom;
    const double floor_p = std::numeric_limits<double>::min();
    parallel_for(w, threads, [&](std::size_t begin, std::size_t end, unsigned) {
        for (std::size_t j = begin; j < end; ++j) {
            for (std::size_t i = 0; i < m; ++i) {
                const double t = stats.values(j, i);
                double p = 1.0;
                switch (stats.alternative) {
                    case Alternative::two_sided: p = special::student_t_two_sided(t, df); break;
                    case Alternative::greater: p = special::student_t_upper(t, df); break;
                    case Alternative::less: p = special::student_t_upper(-t, df); break;
                }
                out.values(j, i) = std::clamp(p, floor_p, 1.0);
            }
        }
    });
    return out;
}

inline PValueMatrix compute_pvalues(const StatisticMatrix& stats, PValueMethod method, unsigned threads = 0) {
    return method == PValueMethod::rank ? pvalue_matrix(stats, threads) : student_t_pvalue_matrix(stats, threads);
}

}  // namespace ptdp
