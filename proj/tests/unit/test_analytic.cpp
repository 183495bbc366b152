#include "kryloscope/analytic.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace kryloscope;

TEST(ExactP, PoissonValues)
{
    const auto m = ClosedFormModel::poisson(1.0);
    EXPECT_DOUBLE_EQ(m.exact_P(0, 0.0), 1.0);
    EXPECT_EQ(m.exact_P(3, 0.0), 0.0);
    EXPECT_NEAR(m.exact_P(2, 1.0), std::exp(-1.0) / 2, 1e-15);
    EXPECT_NEAR(m.exact_P(2, 1.0), 0.18394, 1e-5);
}

TEST(ExactP, Su11HalfIndex)
{
    const auto m = ClosedFormModel::su11(1.0, 0.5);
    const double expect = std::pow(std::tanh(1.0), 2) / std::pow(std::cosh(1.0), 2);
    EXPECT_NEAR(m.exact_P(1, 1.0), expect, 1e-15);
    EXPECT_NEAR(expect, 0.24363, 5e-5);
    EXPECT_EQ(m.exact_P(-1, 1.0), 0.0);
}

TEST(ExactP, NormalizedWithSmallTail)
{
    // for t >= 1 a window of mean + 40 sigma leaves a tail below 1e-12
    for (const auto& m : {ClosedFormModel::poisson(1.3), ClosedFormModel::su11(1.0, 0.25),
                          ClosedFormModel::su11(0.5, 0.75), ClosedFormModel::su11(1.0, 3.0)}) {
        for (double t : {1.0, 1.7, 2.5}) {
            const double N = m.exact_K(t) + 40 * std::sqrt(m.exact_variance(t));
            double s = 0, sn = 0;
            for (long n = 0; n <= static_cast<long>(N); ++n) {
                const double p = m.exact_P(n, t);
                s += p;
                sn += static_cast<double>(n) * p;
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
            EXPECT_NEAR(sn, m.exact_K(t), 1e-10 * std::max(1.0, m.exact_K(t)));
        }
    }
}

TEST(ExactP, ShortTimeNormalization)
{
    // small mean and 2k < 1: the geometric tail decays like tanh^{2n}, not like a Gaussian
    for (const auto& m : {ClosedFormModel::su11(1.0, 0.25), ClosedFormModel::su11(0.5, 0.75), ClosedFormModel::poisson(1.3)}) {
        const double t = 0.3;
        double s = 0, sn = 0;
        for (long n = 0; n < 200; ++n) {
            const double p = m.exact_P(n, t);
            s += p;
            sn += static_cast<double>(n) * p;
        }
        EXPECT_NEAR(s, 1.0, 1e-14);
        EXPECT_NEAR(sn, m.exact_K(t), 1e-14);
    }
}

TEST(ExactP, LargeIndexStaysFinite)
{
    const auto m = ClosedFormModel::su11(1.0, 0.5);
    const double lp = m.log_P(100000, 8.0);
    EXPECT_TRUE(std::isfinite(lp));
    EXPECT_GT(m.exact_P(100000, 8.0), 0.0);
}

TEST(ExactK, Values)
{
    EXPECT_DOUBLE_EQ(ClosedFormModel::poisson(3.0).exact_K(2.0), 36.0);
    EXPECT_EQ(ClosedFormModel::su11(2.0, 1.0).exact_K(0.0), 0.0);
    EXPECT_NEAR(ClosedFormModel::su11(1.0, 0.5).exact_K(1.0), 1.38109, 1e-5);
}

TEST(ExactK, LateTimeRate)
{
    for (double alpha : {0.5, 1.0, 2.0}) {
        const auto m = ClosedFormModel::su11(alpha, 1.0);
        const double t = 5.0 / alpha;
        const double h = 1e-5;
        const double rate = (std::log(m.exact_K(t + h)) - std::log(m.exact_K(t - h))) / (2 * h);
        EXPECT_NEAR(rate, 2 * alpha, 0.01 * 2 * alpha);
        EXPECT_NEAR(rate, m.growth_rate(t), 1e-7 * rate);
        EXPECT_NEAR(m.exact_K(20.0 / alpha) / m.late_time_K(20.0 / alpha), 1.0, 1e-8);
    }
}

TEST(ExactZ, ZeroFieldIsOne)
{
    EXPECT_EQ(ClosedFormModel::poisson(1.0).exact_Z(0.0, 2.0), std::complex<double>(1.0, 0.0));
    EXPECT_EQ(ClosedFormModel::su11(1.0, 0.3).exact_Z(0.0, 2.0), std::complex<double>(1.0, 0.0));
}

TEST(ExactZ, Su11Example)
{
    const auto m = ClosedFormModel::su11(1.0, 1.0);
    const double th2 = std::pow(std::tanh(1.0), 2);
    const std::complex<double> expect = std::pow((1 - th2) / (1.0 - std::polar(1.0, 0.5) * th2), 2);
    EXPECT_LT(std::abs(m.exact_Z(0.5, 1.0) - expect), 1e-14);
}

TEST(ExactZ, MatchesDistributionSum)
{
    for (const auto& m : {ClosedFormModel::poisson(1.0), ClosedFormModel::su11(1.0, 0.25), ClosedFormModel::su11(0.8, 1.7)}) {
        for (double t : {0.5, 1.5}) {
            for (double chi : {-2.0, 0.3, 3.0}) {
                std::complex<double> z{0, 0};
                for (long n = 0; n < 2000; ++n) z += m.exact_P(n, t) * std::polar(1.0, chi * static_cast<double>(n));
                EXPECT_LT(std::abs(z - m.exact_Z(chi, t)), 1e-12);
            }
        }
    }
}

TEST(ClosedFormModel, RejectsBadParameters)
{
    EXPECT_THROW((void)ClosedFormModel::poisson(0.0), domain_error);
    EXPECT_THROW((void)ClosedFormModel::su11(1.0, 0.0), domain_error);
    EXPECT_THROW((void)ClosedFormModel::su11(0.0, 1.0), domain_error);
    EXPECT_THROW((void)ClosedFormModel::poisson(1.0).late_time_K(1.0), domain_error);
}

TEST(ClosedFormModel, ProfileMatchesFamily)
{
    EXPECT_EQ(ClosedFormModel::su11(1.0, 0.5).profile().describe(), LanczosProfile::su11(1.0, 0.5).describe());
    EXPECT_EQ(ClosedFormModel::poisson(2.0).profile().kind(), ProfileKind::sqrt_hopping);
}
