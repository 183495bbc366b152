#include "kryloscope/analytic.hpp"
#include "kryloscope/chain.hpp"

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace kryloscope;

namespace {

// phi(t) = V exp(-i E t) V^T e0 for the dense tridiagonal Hamiltonian
Amplitudes dense_propagation(const std::vector<double>& b, std::size_t sites, double t)
{
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sites), static_cast<Eigen::Index>(sites));
    for (std::size_t n = 0; n + 1 < sites; ++n) {
        const auto i = static_cast<Eigen::Index>(n);
        h(i, i + 1) = h(i + 1, i) = b[n];
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    const Eigen::MatrixXd& v = es.eigenvectors();
    Amplitudes out(sites);
    for (std::size_t n = 0; n < sites; ++n) {
        cplx s{0, 0};
        for (Eigen::Index k = 0; k < v.cols(); ++k) {
            s += v(static_cast<Eigen::Index>(n), k) * v(0, k) * std::polar(1.0, -es.eigenvalues()(k) * t);
        }
        out[n] = s;
    }
    return out;
}

} // namespace

TEST(EvolveChain, PoissonAtUnitTime)
{
    const auto traj = evolve_chain(LanczosProfile::sqrt_hopping(1.0), uniform_grid(1.0, 4));
    ASSERT_TRUE(traj.valid) << traj.flag;
    EXPECT_NEAR(complexity(traj).back(), 1.0, 1e-6);
    const auto model = ClosedFormModel::poisson(1.0);
    const auto p = distribution(traj, traj.times.size() - 1);
    for (std::size_t n = 0; n < 30; ++n) EXPECT_NEAR(p[n], model.exact_P(static_cast<long>(n), 1.0), 1e-8);
}

TEST(EvolveChain, InitialStateIsLocalized)
{
    for (const auto& prof : {LanczosProfile::sqrt_hopping(1.0), LanczosProfile::su11(1.0, 0.5)}) {
        const auto traj = evolve_chain(prof, uniform_grid(0.5, 2));
        EXPECT_EQ(traj.amplitudes[0][0], cplx(1.0, 0.0));
        for (std::size_t n = 1; n < traj.amplitudes[0].size(); ++n) EXPECT_EQ(traj.amplitudes[0][n], cplx(0.0, 0.0));
        EXPECT_EQ(complexity(traj)[0], 0.0);
        EXPECT_EQ(variance(traj, 0), 0.0);
    }
}

TEST(EvolveChain, TwoSiteRabiOscillation)
{
    const auto prof = LanczosProfile::tabulated({2.0});
    const double tq = std::numbers::pi / 4;
    const auto traj = evolve_chain(prof, {0.0, tq / 3, tq});
    ASSERT_TRUE(traj.valid);
    EXPECT_TRUE(traj.natural_end);
    EXPECT_EQ(traj.truncation_N, 2u);
    EXPECT_NEAR(std::norm(traj.amplitudes.back()[1]), 1.0, 1e-10);
    const auto k = complexity(traj);
    for (std::size_t i = 0; i < k.size(); ++i) EXPECT_NEAR(k[i], std::pow(std::sin(2 * traj.times[i]), 2), 1e-10);
}

TEST(EvolveChain, Su11HalfIndexAtUnitTime)
{
    const auto traj = evolve_chain(LanczosProfile::su11(1.0, 0.5), uniform_grid(1.0, 4));
    ASSERT_TRUE(traj.valid);
    EXPECT_NEAR(complexity(traj).back(), std::pow(std::sinh(1.0), 2), 1e-8);
    EXPECT_NEAR(complexity(traj).back(), 1.38109, 1e-5);
    // k = 1/2: P(n) = tanh^{2n}(1) / cosh^2(1)
    const auto p = distribution(traj, traj.times.size() - 1);
    for (std::size_t n = 0; n < 40; ++n) {
        const double expect = std::pow(std::tanh(1.0), 2.0 * static_cast<double>(n)) / std::pow(std::cosh(1.0), 2);
        EXPECT_NEAR(p[n], expect, 1e-6);
    }
}

TEST(Complexity, QuadraticGrowthAtLargerCoupling)
{
    const auto traj = evolve_chain(LanczosProfile::sqrt_hopping(2.0), uniform_grid(1.5, 6));
    EXPECT_NEAR(complexity(traj).back(), 9.0, 1e-5);
}

TEST(Complexity, UniformAmplitudes)
{
    ChainTrajectory traj;
    traj.times = {0.0};
    traj.amplitudes = {Amplitudes(4, cplx(0.5, 0.0))};
    EXPECT_DOUBLE_EQ(complexity(traj)[0], 1.5);
    EXPECT_DOUBLE_EQ(moment(traj, 0, 2), (0 + 1 + 4 + 9) / 4.0);
    EXPECT_DOUBLE_EQ(variance(traj, 0), 1.25);
}

TEST(Moments, PoissonSecondMoment)
{
    const auto traj = evolve_chain(LanczosProfile::sqrt_hopping(1.0), uniform_grid(1.0, 4));
    const std::size_t last = traj.times.size() - 1;
    EXPECT_NEAR(moment(traj, last, 2), 2.0, 1e-7);
    EXPECT_NEAR(variance(traj, last), 1.0, 1e-7);
    const auto p = distribution(traj, last);
    double s = 0;
    for (std::size_t n = 0; n < p.size(); ++n) s += static_cast<double>(n * n) * p[n];
    EXPECT_NEAR(moment(traj, last, 2), s, 1e-12);
}

TEST(EvolveChain, MatchesDenseEigendecomposition)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.1, 2.5);
    for (std::size_t sites : {3u, 17u, 64u}) {
        std::vector<double> b(sites - 1);
        for (double& x : b) x = u(rng);
        ChainOptions opt;
        opt.sites = sites;
        const auto grid = uniform_grid(4.0, 8);
        const auto traj = evolve_chain(LanczosProfile::tabulated(b), grid, opt);
        ASSERT_TRUE(traj.natural_end);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto ref = dense_propagation(b, sites, grid[i]);
            for (std::size_t n = 0; n < sites; ++n) EXPECT_LT(std::abs(traj.amplitudes[i][n] - ref[n]), 1e-8);
        }
    }
}

TEST(EvolveChain, UnitarityAndPositivity)
{
    for (const auto& prof : {LanczosProfile::sqrt_hopping(1.0), LanczosProfile::su11(1.0, 1.0),
                             LanczosProfile::linear_shift(1.0, 2.0), LanczosProfile::marginal(1.0, 0.3),
                             LanczosProfile::power_law(1.0, 0.5), LanczosProfile::crossover(1.0, 1.0, 10.0)}) {
        const auto traj = evolve_chain(prof, uniform_grid(2.0, 10));
        ASSERT_TRUE(traj.valid) << prof.describe() << ": " << traj.flag;
        for (double d : traj.norm_drift) EXPECT_LT(d, 1e-9);
        for (double k : complexity(traj)) EXPECT_GE(k, 0.0);
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            for (double p : traj.probabilities(i)) EXPECT_GE(p, -1e-14);
            EXPECT_GE(variance(traj, i), 0.0);
        }
    }
}

TEST(EvolveChain, TimeReversalReturnsToOrigin)
{
    const auto prof = LanczosProfile::su11(1.0, 1.0);
    const auto traj = evolve_chain(prof, {0.0, 1.5});
    const Amplitudes back = propagate_amplitudes(prof, traj.amplitudes.back(), 1.5, 0.0);
    EXPECT_NEAR(std::abs(back[0] - cplx(1.0, 0.0)), 0.0, 1e-8);
    for (std::size_t n = 1; n < back.size(); ++n) EXPECT_LT(std::abs(back[n]), 1e-8);
}

TEST(EvolveChain, FixedTruncationLeakageIsFlagged)
{
    ChainOptions opt;
    opt.sites = 40;
    opt.tail_window = 8;
    const auto traj = evolve_chain(LanczosProfile::su11(1.0, 1.0), uniform_grid(3.0, 6), opt);
    EXPECT_FALSE(traj.valid);
    EXPECT_NE(traj.flag.find("leakage"), std::string::npos);
    EXPECT_EQ(traj.truncation_N, 40u);
}

TEST(EvolveChain, AutoTruncationGrowsUntilTailIsSmall)
{
    ChainOptions opt;
    opt.auto_start = 64;
    const auto traj = evolve_chain(LanczosProfile::su11(1.0, 1.0), uniform_grid(3.0, 6), opt);
    ASSERT_TRUE(traj.valid) << traj.flag;
    EXPECT_GT(traj.attempts, 1u);
    EXPECT_GT(traj.truncation_N, 64u);
    EXPECT_LT(traj.boundary_leakage.back(), opt.leakage_tol);
}

TEST(EvolveChain, GridAndCoefficientErrors)
{
    const auto prof = LanczosProfile::sqrt_hopping(1.0);
    EXPECT_THROW((void)evolve_chain(prof, {}), validation_error);
    EXPECT_THROW((void)evolve_chain(prof, {0.1, 0.2}), validation_error);
    EXPECT_THROW((void)evolve_chain(prof, {0.0, 0.2, 0.2}), validation_error);
    ChainOptions bad;
    bad.leakage_tol = 0;
    EXPECT_THROW((void)evolve_chain(prof, {0.0, 1.0}, bad), validation_error);
    EXPECT_THROW((void)evolve_chain(LanczosProfile::linear_shift(1e308, 0.0), {0.0, 1.0}), numerical_error);
}

TEST(EvolveChain, Deterministic)
{
    const auto a = evolve_chain(LanczosProfile::su11(1.0, 0.25), uniform_grid(2.0, 8));
    const auto b = evolve_chain(LanczosProfile::su11(1.0, 0.25), uniform_grid(2.0, 8));
    EXPECT_EQ(a.amplitudes, b.amplitudes);
}
