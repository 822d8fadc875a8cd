#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ptdp/stats.hpp"

using namespace ptdp;

namespace {

SubjectContrasts column(std::vector<double> values) {
    Matrix<double> d(values.size(), 1);
    for (std::size_t k = 0; k < values.size(); ++k) d(k, 0) = values[k];
    return make_contrasts(std::move(d));
}

PermutationScheme flips(std::size_t w, std::uint64_t seed = 1) { return {SchemeKind::sign_flip, w, seed, {}}; }

PermutationScheme labels(std::vector<int> g, std::size_t w, std::uint64_t seed = 1) {
    return {SchemeKind::group_label, w, seed, std::move(g)};
}

StatisticMatrix stats_from(std::vector<std::vector<double>> rows, Alternative alt = Alternative::two_sided) {
    StatisticMatrix s;
    s.values = Matrix<double>(rows.size(), rows.at(0).size());
    for (std::size_t j = 0; j < rows.size(); ++j)
        for (std::size_t i = 0; i < rows[j].size(); ++i) s.values(j, i) = rows[j][i];
    s.scheme = flips(rows.size());
    s.alternative = alt;
    return s;
}

SubjectContrasts random_contrasts(std::size_t J, std::size_t m, std::uint64_t seed, double shift = 0.0) {
    Rng rng(seed);
    Matrix<double> d(J, m);
    for (auto& v : d.data()) v = rng.normal() + shift;
    return make_contrasts(std::move(d));
}

}  // namespace

TEST(OneSample, SymmetricDataGivesZero) {
    auto s = one_sample_statistics(column({1, -1}), flips(2));
    EXPECT_EQ(s.values(0, 0), 0.0);
}

TEST(OneSample, ConstantColumnIsPositiveInfinity) {
    auto s = one_sample_statistics(column({0.1, 0.1, 0.1, 0.1}), flips(4));
    EXPECT_TRUE(std::isinf(s.values(0, 0)));
    EXPECT_GT(s.values(0, 0), 0);
    auto z = one_sample_statistics(column({0, 0, 0}), flips(4));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(z.values(j, 0), 0.0);
}

TEST(OneSample, HandComputedT) {
    // mean 2, variance 1, J = 3 -> t = 2 / sqrt(1/3)
    auto s = one_sample_statistics(column({1, 2, 3}), flips(2));
    EXPECT_NEAR(s.values(0, 0), 2.0 * std::sqrt(3.0), 1e-12);
    EXPECT_DOUBLE_EQ(s.degrees_of_freedom, 2.0);
}

TEST(OneSample, RejectsBadInput) {
    EXPECT_THROW(one_sample_statistics(column({1, 2}), labels({1, 2}, 4)), invalid_input);
    EXPECT_THROW(one_sample_statistics(column({1, 2}), flips(1)), invalid_input);
    SubjectContrasts bad = column({1, 2});
    bad.data(0, 0) = std::numeric_limits<double>::infinity();
    EXPECT_THROW(one_sample_statistics(bad, flips(4)), invalid_input);
}

TEST(OneSample, GlobalSignFlipNegatesStatistics) {
    auto c = random_contrasts(12, 30, 4, 0.3);
    auto neg = c;
    for (auto& v : neg.data.data()) v = -v;
    auto a = one_sample_statistics(c, flips(50, 9));
    auto b = one_sample_statistics(neg, flips(50, 9));
    for (std::size_t j = 0; j < 50; ++j)
        for (std::size_t i = 0; i < 30; ++i) EXPECT_DOUBLE_EQ(a.values(j, i), -b.values(j, i));
    EXPECT_EQ(pvalue_matrix(a).values, pvalue_matrix(b).values);
}

TEST(OneSample, ThreadCountDoesNotChangeResults) {
    auto c = random_contrasts(15, 64, 2);
    auto one = one_sample_statistics(c, flips(100, 3), Alternative::two_sided, 1);
    auto four = one_sample_statistics(c, flips(100, 3), Alternative::two_sided, 4);
    EXPECT_EQ(one.values, four.values);
    EXPECT_EQ(pvalue_matrix(one, 1).values, pvalue_matrix(four, 3).values);
}

TEST(OneSample, IdentityIsFirstTransformation) {
    auto f = sign_flips(flips(20, 5), 7);
    for (std::size_t k = 0; k < 7; ++k) EXPECT_EQ(f(0, k), 1);
}

TEST(TwoSample, EqualMeansGiveZero) {
    Matrix<double> d(4, 1);
    d(0, 0) = 1;
    d(1, 0) = 3;
    d(2, 0) = 3;
    d(3, 0) = 1;
    auto s = two_sample_statistics(make_contrasts(d), labels({1, 1, 2, 2}, 2));
    EXPECT_EQ(s.values(0, 0), 0.0);
}

TEST(TwoSample, ZeroVarianceSentinelFollowsMeanDifference) {
    Matrix<double> d(4, 1);
    d(0, 0) = 0;
    d(1, 0) = 0;
    d(2, 0) = 1;
    d(3, 0) = 1;
    auto s = two_sample_statistics(make_contrasts(d), labels({1, 1, 2, 2}, 2));
    EXPECT_TRUE(std::isinf(s.values(0, 0)));
    EXPECT_LT(s.values(0, 0), 0);
}

TEST(TwoSample, HandComputedT) {
    // (1,2,3 | 4,5,6): pooled variance 1, t = -3 / sqrt(2/3)
    auto s = two_sample_statistics(column({1, 2, 3, 4, 5, 6}), labels({1, 1, 1, 2, 2, 2}, 2));
    EXPECT_NEAR(s.values(0, 0), -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_NEAR(s.values(0, 0), -3.6742, 1e-4);
    EXPECT_DOUBLE_EQ(s.degrees_of_freedom, 4.0);
}

TEST(TwoSample, SmallGroupRejected) {
    EXPECT_THROW(two_sample_statistics(column({1, 2, 3}), labels({1, 2, 2}, 4)), invalid_input);
    EXPECT_THROW(two_sample_statistics(column({1, 2, 3, 4}), labels({1, 2, 3, 2}, 4)), invalid_input);
}

TEST(TwoSample, PermutationsPreserveGroupSizes) {
    auto lab = label_permutations(labels({1, 1, 1, 2, 2, 2, 2}, 30, 4));
    for (std::size_t j = 0; j < 30; ++j) {
        int ones = 0;
        for (std::size_t k = 0; k < 7; ++k) ones += lab(j, k) == 1;
        EXPECT_EQ(ones, 3);
    }
    EXPECT_EQ(lab(0, 0), 1);
    EXPECT_EQ(lab(0, 6), 2);
}

TEST(PValues, TwoValues) {
    auto p = pvalue_matrix(stats_from({{5}, {1}}));
    EXPECT_DOUBLE_EQ(p.values(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(p.values(1, 0), 1.0);
}

TEST(PValues, TotalTie) {
    auto p = pvalue_matrix(stats_from({{2}, {-2}, {2}, {2}}));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(p.values(j, 0), 1.0);
}

TEST(PValues, CountRankWithTies) {
    auto p = pvalue_matrix(stats_from({{3}, {1}, {2}, {-3}}));
    EXPECT_DOUBLE_EQ(p.values(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(p.values(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(p.values(2, 0), 0.75);
    EXPECT_DOUBLE_EQ(p.values(3, 0), 0.5);
}

TEST(PValues, OneSidedAndInfinities) {
    const double inf = std::numeric_limits<double>::infinity();
    auto g = pvalue_matrix(stats_from({{inf}, {3}, {-inf}, {inf}}, Alternative::greater));
    EXPECT_DOUBLE_EQ(g.values(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(g.values(1, 0), 0.75);
    EXPECT_DOUBLE_EQ(g.values(2, 0), 1.0);
    auto l = pvalue_matrix(stats_from({{inf}, {3}, {-inf}, {inf}}, Alternative::less));
    EXPECT_DOUBLE_EQ(l.values(2, 0), 0.25);
    EXPECT_DOUBLE_EQ(l.values(0, 0), 1.0);
    auto t = pvalue_matrix(stats_from({{inf}, {3}, {-inf}, {1}}));
    EXPECT_DOUBLE_EQ(t.values(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(t.values(2, 0), 0.5);
}

TEST(PValues, GridAndRankInvariants) {
    auto c = random_contrasts(10, 40, 21, 0.2);
    const std::size_t w = 64;
    auto p = pvalue_matrix(one_sample_statistics(c, flips(w, 2)));
    for (std::size_t i = 0; i < 40; ++i) {
        std::vector<double> col;
        for (std::size_t j = 0; j < w; ++j) {
            const double v = p.values(j, i);
            const double scaled = v * static_cast<double>(w);
            EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
            EXPECT_GE(v, 1.0 / static_cast<double>(w));
            EXPECT_LE(v, 1.0);
            col.push_back(v);
        }
        std::sort(col.begin(), col.end());
        for (std::size_t r = 0; r < w; ++r) EXPECT_GE(col[r] + 1e-12, static_cast<double>(r + 1) / static_cast<double>(w));
    }
}

TEST(PValues, RowPermutationEquivariance) {
    auto c = random_contrasts(8, 25, 13);
    auto s = one_sample_statistics(c, flips(40, 6));
    auto p = pvalue_matrix(s);
    std::vector<std::size_t> order(40);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(1);
    rng.shuffle(order);
    StatisticMatrix shuffled = s;
    for (std::size_t j = 0; j < 40; ++j)
        for (std::size_t i = 0; i < 25; ++i) shuffled.values(j, i) = s.values(order[j], i);
    auto q = pvalue_matrix(shuffled);
    for (std::size_t j = 0; j < 40; ++j)
        for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(q.values(j, i), p.values(order[j], i));
}

TEST(PValues, NullObservedRowIsSuperUniform) {
    // Null data with symmetric noise: Pr(p^1 <= t) <= t + MC error on the grid.
    const std::size_t w = 20, m = 50, reps = 400;
    std::vector<std::size_t> below(w + 1, 0);
    for (std::size_t r = 0; r < reps; ++r) {
        auto c = random_contrasts(9, m, 1000 + r);
        auto p = pvalue_matrix(one_sample_statistics(c, flips(w, 5000 + r)));
        for (std::size_t i = 0; i < m; ++i) {
            const auto k = static_cast<std::size_t>(std::lround(p.values(0, i) * w));
            for (std::size_t g = k; g <= w; ++g) ++below[g];
        }
    }
    const double n = static_cast<double>(reps * m);
    for (std::size_t g = 1; g <= w; ++g) {
        const double t = static_cast<double>(g) / w;
        // Voxels within a replicate share the flips, so use the replicate count for the SE.
        const double se = std::sqrt(t * (1 - t) / static_cast<double>(reps));
        EXPECT_LE(below[g] / n, t + 3 * se + 1e-12) << "grid point " << t;
    }
}

TEST(PValues, StudentTTransform) {
    auto s = stats_from({{2.0, -1.0}, {0.5, std::numeric_limits<double>::infinity()}});
    s.degrees_of_freedom = 10;
    auto p = student_t_pvalue_matrix(s);
    EXPECT_EQ(p.method, PValueMethod::student_t);
    EXPECT_NEAR(p.values(0, 0), special::student_t_two_sided(2.0, 10), 1e-15);
    EXPECT_NEAR(p.values(0, 1), special::student_t_two_sided(1.0, 10), 1e-15);
    EXPECT_GT(p.values(1, 1), 0.0);
    EXPECT_LT(p.values(1, 1), 1e-300);
}
