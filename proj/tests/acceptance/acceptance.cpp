// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "kryloscope/kryloscope.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace kryloscope;

namespace {

constexpr double half_pi = std::numbers::pi / 2;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::string sci(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

std::string fix(double x, int digits = 4)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

// regression trajectories shared by criteria 1-3 and 9
struct Shared {
    std::vector<std::pair<std::string, ChainTrajectory>> trajectories;
};

// ---------------------------------------------------------------------------

void criterion_1(Outcome& o, Shared& shared)
{
    const auto traj = evolve_chain(LanczosProfile::sqrt_hopping(1.0), uniform_grid(3.0, 60));
    const auto model = ClosedFormModel::poisson(1.0);
    const auto K = complexity(traj);
    double ek = std::abs(K[0]), ep = 0;
    for (std::size_t i = 1; i < traj.times.size(); ++i) {
        ek = std::max(ek, rel(K[i], traj.times[i] * traj.times[i]));
        const auto p = traj.probabilities(i);
        for (std::size_t n = 0; n < p.size(); ++n) ep = std::max(ep, std::abs(p[n] - model.exact_P(static_cast<long>(n), traj.times[i])));
    }
    o.require(traj.valid, "trajectory flagged: " + traj.flag);
    o.require(ek < 1e-6, "K relative error");
    o.require(ep < 1e-8, "P absolute error");
    o.detail << "K max rel err " << sci(ek) << " (< 1e-6), P max abs err " << sci(ep) << " (< 1e-8), N=" << traj.truncation_N;
    shared.trajectories.emplace_back("poisson g=1", traj);
}

void criterion_2(Outcome& o, Shared& shared)
{
    const auto chis = chi_grid(64);
    for (double k : {0.25, 0.5, 1.0}) {
        const auto model = ClosedFormModel::su11(1.0, k);
        const auto traj = evolve_chain(model.profile(), uniform_grid(3.0, 300));
        const auto K = complexity(traj);
        double ek = 0, ez = 0;
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            const double t = traj.times[i];
            ek = std::max(ek, i == 0 ? std::abs(K[0]) : rel(K[i], model.exact_K(t)));
            if (i % 10 != 0) continue; // Z on every tenth report time
            const auto p = traj.probabilities(i);
            for (double chi : chis) ez = std::max(ez, std::abs(counting_from_distribution(p, chi) - model.exact_Z(chi, t)));
        }
        o.require(traj.valid, "k=" + fix(k, 2) + " flagged: " + traj.flag);
        o.require(ek < 1e-5, "k=" + fix(k, 2) + " K relative error");
        o.require(ez < 1e-6, "k=" + fix(k, 2) + " Z absolute error");
        o.detail << "k=" << fix(k, 2) << ": K rel " << sci(ek) << ", Z abs " << sci(ez) << ", N=" << traj.truncation_N << "; ";
        shared.trajectories.emplace_back("su11 alpha=1 k=" + fix(k, 2), traj);
    }
    o.detail << "thresholds 1e-5 / 1e-6";
}

void criterion_3(Outcome& o, Shared& shared)
{
    // add two more families to the regression set
    shared.trajectories.emplace_back("linear_shift alpha=1 gamma=2",
                                     evolve_chain(LanczosProfile::linear_shift(1.0, 2.0), uniform_grid(1.5, 15)));
    shared.trajectories.emplace_back("marginal alpha=1 eps=0.3",
                                     evolve_chain(LanczosProfile::marginal(1.0, 0.3), uniform_grid(1.5, 15)));
    shared.trajectories.emplace_back("crossover alpha=1 gamma=1 n*=10",
                                     evolve_chain(LanczosProfile::crossover(1.0, 1.0, 10.0), uniform_grid(2.0, 20)));
    const auto chis = chi_grid(64);
    double worst = 0;
    std::size_t evaluations = 0;
    for (const auto& [name, traj] : shared.trajectories) {
        o.require(traj.valid, name + " flagged");
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            const auto p = traj.probabilities(i);
            for (double chi : chis) {
                worst = std::max(worst, std::abs(counting_from_distribution(p, chi) - counting_from_phase_rotation(traj.amplitudes[i], chi)));
                ++evaluations;
            }
        }
    }
    o.require(worst < 1e-12, "identity error");
    o.detail << shared.trajectories.size() << " trajectories, " << evaluations << " (t, chi) points, max |Z_P - Z_rot| "
             << sci(worst) << " (< 1e-12)";
}

void criterion_4(Outcome& o)
{
    for (double alpha : {0.5, 1.0, 2.0}) {
        const double tmax = 5.0 / alpha;
        const auto tr = integrate_hamilton(LanczosProfile::linear_shift(alpha, 0.0), 1.0, -half_pi, uniform_grid(tmax, 200));
        const double rate = lyapunov_rate(tr).slope;
        const double err = rel(rate, 2.0 * alpha);
        o.require(tr.valid && err < 0.01, "rate at alpha=" + fix(alpha, 1));
        o.detail << "alpha=" << fix(alpha, 1) << " rate " << fix(rate, 6) << " (rel " << sci(err) << "); ";
    }
    double drift = 0;
    for (double alpha : {0.5, 1.0, 2.0}) {
        for (const auto& [n0, p0] : std::vector<std::pair<double, double>>{{1.0, -1.0}, {3.0, -0.3}, {2.0, 0.7}, {5.0, 2.5}, {10.0, -2.0}}) {
            const auto tr = integrate_hamilton(LanczosProfile::linear_shift(alpha, 0.0), n0, p0, uniform_grid(3.0 / alpha, 120));
            o.require(tr.valid, "off-manifold trajectory flagged: " + tr.flag);
            const double c0 = n0 * std::cos(p0);
            for (std::size_t i = 0; i < tr.times.size(); ++i) {
                drift = std::max(drift, std::abs(tr.n_path[i] * std::cos(tr.p_unwrapped[i]) - c0) / std::max(1.0, std::abs(c0)));
            }
        }
    }
    o.require(drift < 1e-8, "n cos p drift");
    o.detail << "n cos p max drift " << sci(drift) << " (< 1e-8) over 15 off-manifold trajectories";
}

void criterion_5(Outcome& o)
{
    for (double eps : {0.2, 0.3}) {
        const auto tr = integrate_hamilton(LanczosProfile::marginal(1.0, eps), 2.0, -half_pi, uniform_grid(15.0, 300));
        const double slope = marginal_power(tr, 1.0, 5.0, 15.0).slope;
        o.require(tr.valid && rel(slope, eps) < 0.10, "marginal eps=" + fix(eps, 1));
        o.detail << "marginal eps=" << fix(eps, 1) << " fitted " << fix(slope) << " (rel " << fix(rel(slope, eps), 4) << " < 0.10); ";
    }
    {
        const auto tr = integrate_hamilton(LanczosProfile::power_law(1.0, 0.5), 1.0, -half_pi, uniform_grid(1000.0, 3000));
        const double expo = power_exponent(tr, 1000.0 * 2.0 / 3.0, 1000.0).slope;
        o.require(tr.valid && rel(expo, 2.0) < 0.02, "power law exponent");
        o.detail << "power_law gamma=1/2 exponent " << fix(expo) << " (rel " << fix(rel(expo, 2.0)) << " < 0.02); ";
    }
    double worst = 0;
    for (double c : {1.0, 5.0}) {
        for (double alpha : {0.5, 1.0}) {
            const double n0 = 2.0;
            // b = alpha (n + c), i.e. offset gamma = alpha c
            const auto tr = integrate_hamilton(LanczosProfile::linear_shift(alpha, alpha * c), n0, -half_pi, uniform_grid(4.0 / alpha, 80));
            o.require(tr.valid, "linear_shift flagged");
            for (std::size_t i = 0; i < tr.times.size(); ++i) {
                worst = std::max(worst, rel(tr.n_path[i], (n0 + c) * std::exp(2.0 * alpha * tr.times[i]) - c));
            }
        }
    }
    o.require(worst < 1e-6, "linear_shift closed form");
    o.detail << "linear_shift c in {1,5}: max rel err " << sci(worst) << " (< 1e-6)";
}

void criterion_6(Outcome& o)
{
    auto A = [](double) { return Mat2{{2.0, 0.0}, {0.0, -2.0}}; };
    const double expect = (std::exp(4.0) - 1.0) / 4.0;
    const auto ode = lyapunov_covariance(A, Mat2::Identity(), {0.0, 1.0});
    const double e = rel(ode.variance_n.back(), expect);
    o.require(e < 1e-8, "Lyapunov ODE");
    MonteCarloOptions opt;
    opt.samples = 100'000;
    opt.seed = 20240601;
    opt.dt = 1e-3;
    const auto mc = monte_carlo_covariance(A, Mat2::Identity(), {0.0, 1.0}, opt);
    const double est = mc.covariance.back()(0, 0), se = mc.standard_error.back()(0, 0);
    const double z = std::abs(est - expect) / se;
    o.require(z < 3.0, "Monte Carlo beyond 3 standard errors");
    o.detail << "ODE Cov_nn(1) rel err " << sci(e) << " (< 1e-8); MC " << fix(est) << " +- " << fix(se) << " vs " << fix(expect)
             << " (" << fix(z, 2) << " SE, < 3; 1e5 samples, dt 1e-3, seed " << opt.seed << ")";
}

void criterion_7(Outcome& o)
{
    SweepConfig cfg;
    cfg.h_grid = {0.1, 0.01, 0.001, 0.0001};
    cfg.run_chain = false;
    const SweepReport rep = susceptibility_sweep(cfg);
    bool increasing = true;
    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        const auto& p = rep.points[i];
        o.require(p.valid, "point n*=" + fix(p.n_star, 0) + " flagged: " + p.flag);
        o.require(std::abs(p.mean_rate - 2.0) < 0.05 * 2.0, "mean rate at n*=" + fix(p.n_star, 0));
        if (i > 0 && !(p.chi_hat > rep.points[i - 1].chi_hat)) increasing = false;
    }
    o.require(increasing, "chi_hat not increasing in ln n*");
    o.require(rep.chi_vs_log_nstar.slope > 0 && rep.chi_vs_log_nstar.r_squared > 0.95, "chi_hat vs ln n* linear fit");

    // quantum chain at n*=10, reported only: its late rate creeps toward 2 too slowly to gate on here
    SweepConfig qc;
    qc.h_grid = {0.1};
    qc.chain_n_target = 600;
    const SweepReport q = susceptibility_sweep(qc);
    const auto& qp = q.points.front();

    o.detail << "t_ref " << fix(rep.t_ref, 2) << "; per n*: ";
    for (const auto& p : rep.points) {
        o.detail << "[n*=" << fix(p.n_star, 0) << " t*_emp " << fix(p.t_star_empirical, 2) << " (formula " << fix(p.t_star_formula, 2)
                 << ") mean rate " << fix(p.mean_rate) << " chi_hat " << sci(p.chi_hat) << " chi_stretch " << fix(p.chi_stretch, 3) << "] ";
    }
    o.detail << "; chi_hat vs ln n*: slope " << sci(rep.chi_vs_log_nstar.slope) << " R2 " << fix(rep.chi_vs_log_nstar.r_squared)
             << " (need increasing, R2 > 0.95); chi_stretch vs ln n*: R2 " << fix(rep.stretch_vs_log_nstar.r_squared)
             << "; chi_stretch vs t*_emp: R2 " << fix(rep.stretch_vs_tstar.r_squared, 5) << "; chain n*=10: K(" << fix(qp.chain_t_end, 2)
             << ")=" << fix(qp.chain_K_end, 1) << " late rate " << fix(qp.chain_rate) << " (diagnostic)";
}

// <K0|exp(conj(z) L-) exp(z L+)|K0> from a dense matrix exponential
double dense_overlap(const std::vector<double>& b, std::complex<double> z)
{
    const auto n = static_cast<Eigen::Index>(b.size() + 1);
    Eigen::MatrixXcd raise = Eigen::MatrixXcd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) raise(i + 1, i) = b[static_cast<std::size_t>(i)];
    const Eigen::MatrixXcd e = (z * raise).exp();
    return e.col(0).squaredNorm();
}

void criterion_8(Outcome& o)
{
    double worst = 0;
    for (double g : {0.5, 1.0, 1.5}) {
        for (int i = 0; i <= 400; ++i) {
            const double w = 0.05 * i;
            worst = std::max(worst, rel(overlap(LanczosProfile::sqrt_hopping(g), w), std::exp(g * g * w)));
        }
    }
    o.require(worst < 1e-10, "sqrt hopping overlap");
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.1, 3.0), ph(-std::numbers::pi, std::numbers::pi);
    double dense = 0;
    for (std::size_t len : {1u, 3u, 8u, 16u, 30u}) {
        std::vector<double> b(len);
        for (double& x : b) x = u(rng);
        for (double r : {0.2, 0.9, 1.6, 2.5}) {
            const double ref = dense_overlap(b, std::polar(r, ph(rng)));
            dense = std::max(dense, rel(overlap(LanczosProfile::tabulated(b), r * r), ref));
        }
    }
    o.require(dense < 1e-12, "finite-chain dense oracle");
    o.detail << "e^{g^2 w} max rel err " << sci(worst) << " (< 1e-10, g in {0.5,1,1.5}, w in [0,20]); dense oracle max rel err "
             << sci(dense) << " (< 1e-12)";
}

void criterion_9(Outcome& o)
{
    double worst = 0;
    for (double alpha : {0.5, 1.0, 2.0}) {
        for (double k : {0.25, 0.5, 1.0}) {
            const auto prof = LanczosProfile::su11(alpha, k);
            const double t0 = 3.0 / alpha, t1 = 3.2 / alpha;
            const auto traj = evolve_chain(prof, uniform_grid(t1, 320));
            const auto K = complexity(traj);
            const auto saddle = integrate_hamilton(prof, 1.0, -half_pi, uniform_grid(6.0 / alpha, 240));
            const double sc = lyapunov_rate(saddle, t0, 6.0 / alpha).slope;
            o.require(traj.valid && saddle.valid, "su11 trajectory flagged");
            // centered differences of ln K on [t0, t1)
            for (std::size_t i = 1; i + 1 < traj.times.size(); ++i) {
                if (traj.times[i] < t0 - 1e-12) continue;
                const double q = (std::log(K[i + 1]) - std::log(K[i - 1])) / (traj.times[i + 1] - traj.times[i - 1]);
                worst = std::max(worst, rel(q, sc));
            }
        }
    }
    o.require(worst < 0.02, "quantum vs semiclassical rate");
    o.detail << "max |dlnK/dt - lambda_sc| / lambda_sc over t in [3/alpha, 3.2/alpha], alpha in {0.5,1,2}, k in {1/4,1/2,1}: "
             << fix(worst, 5) << " (< 0.02)";
}

} // namespace

int main()
{
    using clock = std::chrono::steady_clock;
    Shared shared;
    struct Entry {
        int id;
        const char* title;
        double budget_s; // 0: none
        std::function<void(Outcome&)> run;
    };
    const std::vector<Entry> entries{
        {1, "Poisson model reproduction", 5.0, [&](Outcome& o) { criterion_1(o, shared); }},
        {2, "su(1,1) reproduction", 60.0, [&](Outcome& o) { criterion_2(o, shared); }},
        {3, "FCS identity", 0.0, [&](Outcome& o) { criterion_3(o, shared); }},
        {4, "Semiclassical Lyapunov", 0.0, criterion_4},
        {5, "Growth laws by class", 0.0, criterion_5},
        {6, "Fluctuation oracle", 30.0, criterion_6},
        {7, "Crossover trend", 300.0, criterion_7},
        {8, "Overlap series", 0.0, criterion_8},
        {9, "Cross-pipeline consistency", 0.0, criterion_9},
    };
    int failures = 0;
    for (const auto& e : entries) {
        Outcome o;
        const auto start = clock::now();
        try {
            e.run(o);
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail << " [exception: " << ex.what() << "]";
        }
        const double secs = std::chrono::duration<double>(clock::now() - start).count();
        if (e.budget_s > 0 && secs >= e.budget_s) {
            o.pass = false;
            o.detail << " [failed: runtime budget " << e.budget_s << " s]";
        }
        if (!o.pass) ++failures;
        std::printf("CRITERION %d %s: %s | %s | runtime %.2f s%s\n", e.id, o.pass ? "PASS" : "FAIL", e.title, o.detail.str().c_str(),
                    secs, e.budget_s > 0 ? (" (budget " + fix(e.budget_s, 0) + " s)").c_str() : "");
        std::fflush(stdout);
    }
    std::printf("SUMMARY %d/%zu criteria passed\n", static_cast<int>(entries.size()) - failures, entries.size());
    return failures == 0 ? 0 : 1;
}
