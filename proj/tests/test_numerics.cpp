#include <softcal/numerics.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace softcal;

namespace {

// Extended-precision reference for (1/beta) log(1 + e^{beta x}).
long double softplus_ref(long double x, long double beta) {
    const long double z = beta * x;
    if (z > 40.0L) return x + std::log1p(std::exp(-z)) / beta;
    return std::log1p(std::exp(z)) / beta;
}

}  // namespace

TEST(Softplus, AtZeroIsLog2OverBeta) {
    EXPECT_DOUBLE_EQ(softplus_stable(0.0, 50.0), std::log(2.0) / 50.0);
    EXPECT_NEAR(softplus_stable(0.0, 50.0), 0.01386294, 5e-9);
}

TEST(Softplus, LargeArgumentIsIdentityAtDoublePrecision) {
    EXPECT_EQ(softplus_stable(10.0, 50.0), 10.0);
    EXPECT_EQ(static_cast<double>(softplus_ref(10.0L, 50.0L)), 10.0);
}

TEST(Softplus, HandEvaluatedPoint) {
    const double v = softplus_stable(0.0316228, 50.0);
    EXPECT_NEAR(v, 0.03536468, 5e-9);
    EXPECT_NEAR(v, static_cast<double>(softplus_ref(0.0316228L, 50.0L)), 1e-16);
}

TEST(Softplus, MatchesExtendedPrecisionAcrossBranch) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(0.0, 3.0);
    for (double beta : {1e-4, 0.5, 1.0, 10.0, 50.0, 100.0, 1000.0}) {
        for (int i = 0; i < 2000; ++i) {
            const double x = ux(rng);
            const double ref = static_cast<double>(softplus_ref(x, beta));
            EXPECT_NEAR(softplus_stable(x, beta), ref, 4e-16 * std::abs(ref)) << "x=" << x << " beta=" << beta;
        }
    }
}

TEST(Softplus, RejectsBadInput) {
    EXPECT_THROW(softplus_stable(-1e-12, 50.0), InputDomainError);
    EXPECT_THROW(softplus_stable(std::nan(""), 50.0), InputDomainError);
    EXPECT_THROW(softplus_stable(std::numeric_limits<double>::infinity(), 50.0), InputDomainError);
    EXPECT_THROW(softplus_stable(1.0, 0.0), ConfigError);
    EXPECT_THROW(softplus_stable(1.0, -2.0), ConfigError);
}

TEST(SoftplusProperty, NeverBelowInputAndGapShrinks) {
    for (double beta : {1.0, 10.0, 50.0, 100.0, 1000.0}) {
        double prev_gap = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 120; ++k) {
            const double x = 0.5 * k / beta;  // beta x = 0, 0.5, ..., 60
            const double s = softplus_stable(x, beta);
            ASSERT_GE(s, x);
            const double gap = s - x;
            const double ulp = std::nextafter(x, 2 * x + 1) - x;
            EXPECT_LE(gap, prev_gap + 2 * ulp) << "beta=" << beta << " x=" << x;
            prev_gap = gap;
            if (beta * x >= 40.0) EXPECT_LT(gap, 1e-17);
        }
    }
}

TEST(SoftplusProperty, DecreasingInBeta) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ux(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        const double x = ux(rng);
        double prev = softplus_stable(x, 0.1);
        for (double beta : {1.0, 10.0, 50.0, 100.0, 1000.0}) {
            const double s = softplus_stable(x, beta);
            EXPECT_LE(s, prev);
            prev = s;
        }
    }
}

TEST(Percentile, NearestRank) {
    const Vector v{1, 2, 3, 4, 5};
    EXPECT_EQ(percentile_nearest_rank(v, 25), 2);
    EXPECT_EQ(percentile_nearest_rank(v, 50), 3);
    EXPECT_EQ(percentile_nearest_rank(Vector{5, 1}, 100), 5);
    EXPECT_EQ(percentile_nearest_rank(Vector{5, 1}, 0), 1);
    EXPECT_THROW(percentile_nearest_rank(Vector{}, 50), InputDomainError);
}

TEST(PercentileProperty, MonotoneInQAndWithinRange) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int rep = 0; rep < 100; ++rep) {
        Vector v(1 + rep % 17);
        for (double& x : v) x = n01(rng);
        double prev = -std::numeric_limits<double>::infinity();
        for (double q = 0; q <= 100; q += 5) {
            const double p = percentile_nearest_rank(v, q);
            EXPECT_GE(p, prev);
            EXPECT_NE(std::find(v.begin(), v.end(), p), v.end());
            prev = p;
        }
    }
}

TEST(LogLogSlope, ExactPowerLaws) {
    const Vector ts{100, 1000, 10000};
    Vector ys;
    for (double t : ts) ys.push_back(3.7 / std::sqrt(t));
    EXPECT_NEAR(loglog_slope(ts, ys), -0.5, 1e-12);
    EXPECT_NEAR(loglog_slope(Vector{10, 100}, Vector{1, 1}), 0.0, 1e-15);
    EXPECT_NEAR(loglog_slope(Vector{1, 10, 100}, Vector{1, 10, 100}), 1.0, 1e-15);
}

TEST(LogLogSlope, RejectsNonPositive) {
    EXPECT_THROW(loglog_slope(Vector{1, 10}, Vector{1, 0}), InputDomainError);
    EXPECT_THROW(loglog_slope(Vector{0, 10}, Vector{1, 1}), InputDomainError);
}

TEST(MeanStd, SampleStatistics) {
    const MeanStd ms = mean_std(Vector{2, 4, 4, 4, 5, 5, 7, 9});
    EXPECT_DOUBLE_EQ(ms.mean, 5.0);
    EXPECT_NEAR(ms.std, std::sqrt(32.0 / 7.0), 1e-15);
    EXPECT_EQ(mean_std(Vector(6, 0.1)).std, 0.0);
    EXPECT_EQ(mean_std(Vector{3.0}).std, 0.0);
}

TEST(VectorOps, ElementwiseAndMismatch) {
    const Vector a{1, 4, 9}, b{2, 2, 2};
    EXPECT_EQ(hadamard(a, b), (Vector{2, 8, 18}));
    EXPECT_EQ(elementwise_max(a, b), (Vector{2, 4, 9}));
    EXPECT_EQ(elementwise_sqrt(a), (Vector{1, 2, 3}));
    EXPECT_EQ(axpy(a, 2.0, b), (Vector{5, 8, 13}));
    EXPECT_DOUBLE_EQ(dot(a, b), 28.0);
    EXPECT_THROW(dot(a, Vector{1, 2}), InputDomainError);
    EXPECT_THROW(elementwise_sqrt(Vector{-1.0}), InputDomainError);
    EXPECT_FALSE(all_finite(Vector{1.0, std::nan("")}));
}
