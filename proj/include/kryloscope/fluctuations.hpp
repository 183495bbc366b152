#pragma once

// Linearized (Gaussian) fluctuations around the semiclassical saddle:
//   d eta/dt = A(t) eta + xi,  <xi xi^T> = D delta,
// with covariance from the differential Lyapunov equation
//   dCov/dt = A Cov + Cov A^T + D,  Cov(0) = 0,
// an Euler-Maruyama cross-check, escape times and the crossover sweep.

#include "kryloscope/chain.hpp"
#include "kryloscope/error.hpp"
#include "kryloscope/ode.hpp"
#include "kryloscope/profile.hpp"
#include "kryloscope/semiclassics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <future>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace kryloscope {

using Mat2 = Eigen::Matrix2d;

/// Jacobian of (dn/dt, dp/dt) = (-2b sin p, -2b' cos p).
inline Mat2 stability_matrix(const LanczosProfile& profile, double n, double p)
{
    if (!(n >= 1.0)) throw domain_error("stability_matrix: n must be >= 1");
    const double b = profile.b(n), b1 = profile.b_prime(n), b2 = profile.b_second(n);
    const double s = std::sin(p), c = std::cos(p);
    Mat2 a;
    a << -2.0 * b1 * s, -2.0 * b * c, -2.0 * b2 * c, 2.0 * b1 * s;
    return a;
}

/// Validates a constant noise kernel: symmetric positive semidefinite.
inline void validate_noise(const Mat2& D)
{
    if (!D.allFinite()) throw validation_error("noise kernel has non-finite entries");
    if (std::abs(D(0, 1) - D(1, 0)) > 1e-12 * std::max(1.0, D.cwiseAbs().maxCoeff())) {
        throw validation_error("noise kernel must be symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Mat2> es(D);
    if (es.eigenvalues().minCoeff() < -1e-12) throw validation_error("noise kernel must be positive semidefinite");
}

struct FluctuationReport {
    std::vector<double> times;
    std::vector<double> n_saddle;
    std::vector<double> p_saddle;
    std::vector<Mat2> stability;
    std::vector<Mat2> covariance;
    std::vector<double> variance_n; // kappa_2(t) = Cov_nn
    std::vector<Mat2> propagator;   // G(t, 0): fundamental matrix of d/dt - A
    Mat2 noise = Mat2::Identity();
    std::string noise_kernel = "identity";
    std::size_t psd_projections = 0;
    bool valid = true;
    std::string flag;
};

struct CovarianceOptions {
    OdeOptions ode{.rtol = 1e-11, .atol = 1e-13};
    double overflow_guard = 1e250;
};

namespace detail {

inline Mat2 project_psd(const Mat2& c, std::size_t& projections)
{
    const Mat2 sym = 0.5 * (c + c.transpose());
    const Eigen::SelfAdjointEigenSolver<Mat2> es(sym);
    if (es.eigenvalues().minCoeff() >= -1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())) return sym;
    ++projections;
    const Eigen::Vector2d lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

// state layout: [Cnn, Cnp, Cpp, G00, G01, G10, G11] (+ [n, p] when coupled to a saddle)
inline void lyapunov_rhs(const Mat2& A, const Mat2& D, const double* y, double* dy)
{
    Mat2 C;
    C << y[0], y[1], y[1], y[2];
    Mat2 G;
    G << y[3], y[4], y[5], y[6];
    const Mat2 dC = A * C + C * A.transpose() + D;
    const Mat2 dG = A * G;
    dy[0] = dC(0, 0);
    dy[1] = 0.5 * (dC(0, 1) + dC(1, 0));
    dy[2] = dC(1, 1);
    dy[3] = dG(0, 0);
    dy[4] = dG(0, 1);
    dy[5] = dG(1, 0);
    dy[6] = dG(1, 1);
}

} // namespace detail

/// Covariance for an explicitly time-dependent stability matrix A(t).
inline FluctuationReport lyapunov_covariance(const std::function<Mat2(double)>& A_of_t, const Mat2& D,
                                             const std::vector<double>& times, const CovarianceOptions& opt = {})
{
    validate_noise(D);
    if (times.empty()) throw validation_error("time grid is empty");
    FluctuationReport rep;
    rep.noise = D;
    rep.noise_kernel = "matrix";
    std::vector<double> y{0, 0, 0, 1, 0, 0, 1};
    DormandPrince45<double> stepper(
        [&](double t, const std::vector<double>& s, std::vector<double>& ds) {
            detail::lyapunov_rhs(A_of_t(t), D, s.data(), ds.data());
        },
        opt.ode);
    double t = times.front();
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0) stepper.advance(y, t, times[i]);
        t = times[i];
        Mat2 C;
        C << y[0], y[1], y[1], y[2];
        C = detail::project_psd(C, rep.psd_projections);
        y[0] = C(0, 0);
        y[1] = C(0, 1);
        y[2] = C(1, 1);
        Mat2 G;
        G << y[3], y[4], y[5], y[6];
        rep.times.push_back(t);
        rep.stability.push_back(A_of_t(t));
        rep.covariance.push_back(C);
        rep.variance_n.push_back(C(0, 0));
        rep.propagator.push_back(G);
    }
    return rep;
}

/// Covariance along the saddle through (saddle.n_path[0], saddle.p_path[0]);
/// the saddle is re-integrated jointly with the Lyapunov equation on the
/// saddle's time grid.
inline FluctuationReport covariance_evolution(const LanczosProfile& profile, const PhaseTrajectory& saddle,
                                              const Mat2& D = Mat2::Identity(), const CovarianceOptions& opt = {})
{
    validate_noise(D);
    if (saddle.times.empty()) throw validation_error("saddle trajectory is empty");
    FluctuationReport rep;
    rep.noise = D;
    rep.noise_kernel = D.isIdentity(0.0) ? "identity" : "matrix";
    if (!saddle.valid) {
        rep.valid = false;
        rep.flag = "saddle trajectory flagged: " + saddle.flag;
    }
    // [n, p, Cnn, Cnp, Cpp, G00, G01, G10, G11]
    std::vector<double> y{saddle.n_path.front(), saddle.p_unwrapped.front(), 0, 0, 0, 1, 0, 0, 1};
    DormandPrince45<double> stepper(
        [&](double, const std::vector<double>& s, std::vector<double>& ds) {
            const double n = s[0], p = s[1];
            ds[0] = -2.0 * profile.b(n) * std::sin(p);
            ds[1] = -2.0 * profile.b_prime(n) * std::cos(p);
            detail::lyapunov_rhs(stability_matrix(profile, std::max(n, 1.0), p), D, s.data() + 2, ds.data() + 2);
        },
        opt.ode);
    const double guard = opt.overflow_guard;
    auto monitor = [guard](double, const std::vector<double>& s) {
        for (double v : s) {
            if (!std::isfinite(v) || std::abs(v) > guard) return false;
        }
        return s[0] >= 1.0;
    };
    double t = saddle.times.front();
    for (std::size_t i = 0; i < saddle.times.size(); ++i) {
        if (i > 0) {
            double reached = t;
            if (stepper.advance(y, t, saddle.times[i], &reached, monitor) == OdeStatus::stopped) {
                rep.valid = false;
                rep.flag = y[0] < 1.0 ? "saddle left n >= 1 at t=" + std::to_string(reached)
                                      : "covariance exceeded overflow guard at t=" + std::to_string(reached);
                break;
            }
        }
        t = saddle.times[i];
        Mat2 C;
        C << y[2], y[3], y[3], y[4];
        C = detail::project_psd(C, rep.psd_projections);
        y[2] = C(0, 0);
        y[3] = C(0, 1);
        y[4] = C(1, 1);
        Mat2 G;
        G << y[5], y[6], y[7], y[8];
        rep.times.push_back(t);
        rep.n_saddle.push_back(y[0]);
        rep.p_saddle.push_back(y[1]);
        rep.stability.push_back(stability_matrix(profile, y[0], y[1]));
        rep.covariance.push_back(C);
        rep.variance_n.push_back(C(0, 0));
        rep.propagator.push_back(G);
    }
    return rep;
}

/// Cov(t_end) = int_0^t G(t,s) D G(t,s)^T ds with G(t,s) = Phi(t) Phi(s)^{-1},
/// by composite Simpson on `intervals` (even) sub-intervals.
inline Mat2 covariance_quadrature(const std::function<Mat2(double)>& A_of_t, const Mat2& D, double t_end,
                                  std::size_t intervals = 2000)
{
    if (intervals % 2 != 0) ++intervals;
    std::vector<double> grid(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) grid[i] = t_end * static_cast<double>(i) / static_cast<double>(intervals);
    // fundamental matrix Phi on the grid
    std::vector<Mat2> phi;
    std::vector<double> y{1, 0, 0, 1};
    DormandPrince45<double> stepper(
        [&](double t, const std::vector<double>& s, std::vector<double>& ds) {
            Mat2 G;
            G << s[0], s[1], s[2], s[3];
            const Mat2 dG = A_of_t(t) * G;
            ds = {dG(0, 0), dG(0, 1), dG(1, 0), dG(1, 1)};
        },
        OdeOptions{.rtol = 1e-12, .atol = 1e-14});
    double t = 0;
    for (double g : grid) {
        stepper.advance(y, t, g);
        t = g;
        Mat2 G;
        G << y[0], y[1], y[2], y[3];
        phi.push_back(G);
    }
    const Mat2 end = phi.back();
    Mat2 acc = Mat2::Zero();
    const double h = t_end / static_cast<double>(intervals);
    for (std::size_t i = 0; i <= intervals; ++i) {
        const Mat2 G = end * phi[i].inverse();
        const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * (G * D * G.transpose());
    }
    return acc * h / 3.0;
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct MonteCarloOptions {
    std::size_t samples = 100'000;
    std::uint64_t seed = 0;
    double dt = 1e-3;
    std::size_t batches = 8;
    bool convergence_check = false; // rerun at dt/2 and report the change
};

struct MonteCarloReport {
    std::vector<double> times;
    std::vector<Mat2> covariance;
    std::vector<Mat2> standard_error;
    double dt = 0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    /// max relative change of Cov_nn at the final time between dt and dt/2 (NaN if not run)
    double dt_halving_change = NAN;
};

namespace detail {

struct BatchMoments {
    // per report time: sums of x, x x^T and (x_i x_j)^2 style terms for SE
    std::vector<std::vector<Eigen::Vector2d>> samples; // samples[report][k]
};

inline MonteCarloReport euler_maruyama(const std::vector<Mat2>& A_steps, const Mat2& D, double dt,
                                       const std::vector<std::size_t>& report_steps,
                                       const std::vector<double>& report_times, const MonteCarloOptions& opt)
{
    validate_noise(D);
    if (opt.samples < 2 || opt.batches == 0) throw validation_error("Monte Carlo needs >= 2 samples and >= 1 batch");
    // Cholesky-like factor of D tolerant of singular kernels
    const Eigen::SelfAdjointEigenSolver<Mat2> es(0.5 * (D + D.transpose()));
    const Mat2 L = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    const bool noiseless = D.isZero(0.0);
    const std::size_t total_steps = A_steps.size();
    const std::size_t batches = std::min(opt.batches, opt.samples);

    auto run_batch = [&](std::size_t batch) {
        const std::size_t lo = opt.samples * batch / batches, hi = opt.samples * (batch + 1) / batches;
        const std::size_t m = hi - lo;
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(batch)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<Eigen::Vector2d> eta(m, Eigen::Vector2d::Zero());
        std::vector<std::vector<Eigen::Vector2d>> snaps(report_steps.size());
        const double sq = std::sqrt(dt);
        std::size_t next = 0;
        for (std::size_t step = 0; step <= total_steps; ++step) {
            while (next < report_steps.size() && report_steps[next] == step) snaps[next++] = eta;
            if (step == total_steps) break;
            const Mat2 M = Mat2::Identity() + dt * A_steps[step];
            for (auto& e : eta) {
                Eigen::Vector2d w = M * e;
                if (!noiseless) {
                    const Eigen::Vector2d z(normal(rng), normal(rng));
                    w += sq * (L * z);
                }
                e = w;
            }
        }
        return snaps;
    };

    std::vector<std::future<std::vector<std::vector<Eigen::Vector2d>>>> jobs;
    for (std::size_t b = 0; b < batches; ++b) jobs.push_back(std::async(std::launch::async, run_batch, b));
    std::vector<std::vector<Eigen::Vector2d>> all(report_steps.size());
    for (auto& j : jobs) {
        auto snaps = j.get();
        for (std::size_t r = 0; r < snaps.size(); ++r) all[r].insert(all[r].end(), snaps[r].begin(), snaps[r].end());
    }

    MonteCarloReport rep;
    rep.times = report_times;
    rep.dt = dt;
    rep.samples = opt.samples;
    rep.seed = opt.seed;
    const double N = static_cast<double>(opt.samples);
    for (const auto& xs : all) {
        Eigen::Vector2d mean = Eigen::Vector2d::Zero();
        for (const auto& x : xs) mean += x;
        mean /= N;
        Mat2 cov = Mat2::Zero(), fourth = Mat2::Zero();
        for (const auto& x : xs) {
            const Eigen::Vector2d d = x - mean;
            const Mat2 outer = d * d.transpose();
            cov += outer;
            fourth += outer.cwiseProduct(outer);
        }
        cov /= (N - 1.0);
        fourth /= N;
        Mat2 se;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) se(i, j) = std::sqrt(std::max(0.0, fourth(i, j) - cov(i, j) * cov(i, j)) / N);
        }
        rep.covariance.push_back(cov);
        rep.standard_error.push_back(se);
    }
    return rep;
}

inline double fit_step(double t_end, double dt_target, std::size_t& steps)
{
    steps = static_cast<std::size_t>(std::ceil(t_end / dt_target - 1e-9));
    steps = std::max<std::size_t>(steps, 1);
    return t_end / static_cast<double>(steps);
}

inline std::vector<std::size_t> report_steps_for(const std::vector<double>& times, double t0, double dt)
{
    std::vector<std::size_t> idx;
    for (double t : times) idx.push_back(static_cast<std::size_t>(std::llround((t - t0) / dt)));
    return idx;
}

} // namespace detail

/// Euler-Maruyama ensemble for an explicit A(t); the step is adjusted so the
/// report times (starting at times[0]) fall on the grid.
inline MonteCarloReport monte_carlo_covariance(const std::function<Mat2(double)>& A_of_t, const Mat2& D,
                                               const std::vector<double>& times, const MonteCarloOptions& opt)
{
    if (times.empty()) throw validation_error("time grid is empty");
    auto run = [&](double dt_target) {
        std::size_t steps = 0;
        const double dt = detail::fit_step(times.back() - times.front(), dt_target, steps);
        std::vector<Mat2> A(steps);
        for (std::size_t k = 0; k < steps; ++k) A[k] = A_of_t(times.front() + dt * static_cast<double>(k));
        return detail::euler_maruyama(A, D, dt, detail::report_steps_for(times, times.front(), dt), times, opt);
    };
    MonteCarloReport rep = run(opt.dt);
    if (opt.convergence_check) {
        const MonteCarloReport half = run(opt.dt / 2.0);
        const double a = rep.covariance.back()(0, 0), b = half.covariance.back()(0, 0);
        rep.dt_halving_change = std::abs(a - b) / std::max(std::abs(b), 1e-300);
    }
    return rep;
}

/// Euler-Maruyama ensemble along a profile's saddle (re-integrated on the EM grid).
inline MonteCarloReport monte_carlo_covariance(const LanczosProfile& profile, const PhaseTrajectory& saddle,
                                               const Mat2& D, MonteCarloOptions opt)
{
    if (saddle.times.empty()) throw validation_error("saddle trajectory is empty");
    const double alpha = profile.alpha() > 0 ? profile.alpha() : 1.0;
    if (opt.dt <= 0) opt.dt = 1e-3 / alpha;
    auto run = [&](double dt_target) {
        std::size_t steps = 0;
        const double t0 = saddle.times.front();
        const double dt = detail::fit_step(saddle.times.back() - t0, dt_target, steps);
        std::vector<double> grid(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) grid[k] = t0 + dt * static_cast<double>(k);
        const PhaseTrajectory fine = integrate_hamilton(profile, saddle.n_path.front(), saddle.p_unwrapped.front(), grid);
        if (!fine.valid) throw numerical_error("saddle flagged on the Monte Carlo grid: " + fine.flag);
        std::vector<Mat2> A(steps);
        for (std::size_t k = 0; k < steps; ++k) A[k] = stability_matrix(profile, fine.n_path[k], fine.p_unwrapped[k]);
        return detail::euler_maruyama(A, D, dt, detail::report_steps_for(saddle.times, t0, dt), saddle.times, opt);
    };
    MonteCarloReport rep = run(opt.dt);
    if (opt.convergence_check) {
        const MonteCarloReport half = run(opt.dt / 2.0);
        const double a = rep.covariance.back()(0, 0), b = half.covariance.back()(0, 0);
        rep.dt_halving_change = std::abs(a - b) / std::max(std::abs(b), 1e-300);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Escape time and the crossover sweep

/// (1 / 2 alpha) ln n_star for a crossover profile.
inline double escape_time(const LanczosProfile& profile)
{
    if (profile.kind() != ProfileKind::crossover) throw domain_error("escape_time needs a crossover profile");
    return std::log(profile.param(2)) / (2.0 * profile.param(0));
}

struct EscapeTime {
    std::optional<double> time; // empty when n_star was not reached by t_max
    std::string flag;
};

/// First time the saddle from (n0, p0) reaches n = n_star.
inline EscapeTime escape_time_empirical(const LanczosProfile& profile, double t_max, double n0 = 1.0,
                                        double p0 = -std::numbers::pi / 2)
{
    if (profile.kind() != ProfileKind::crossover) throw domain_error("escape_time needs a crossover profile");
    const double n_star = profile.param(2);
    if (n0 >= n_star) return {0.0, {}};
    using State = std::vector<double>;
    DormandPrince45<double> stepper(
        [&profile](double, const State& y, State& dy) {
            dy[0] = -2.0 * profile.b(y[0]) * std::sin(y[1]);
            dy[1] = -2.0 * profile.b_prime(y[0]) * std::cos(y[1]);
        },
        OdeOptions{.rtol = 1e-12, .atol = 1e-14});
    State y{n0, p0}, prev = y;
    double t_prev = 0;
    double reached = 0;
    auto monitor = [&](double t, const State& s) {
        if (s[0] >= n_star) return false;
        prev = s;
        t_prev = t;
        return true;
    };
    if (stepper.advance(y, 0.0, t_max, &reached, monitor) == OdeStatus::completed) {
        return {std::nullopt, "saddle did not reach n_star within t_max"};
    }
    // refine the crossing inside the last step by bisection on a fresh stepper
    double lo = t_prev, hi = reached;
    for (int it = 0; it < 60 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        State s = prev;
        DormandPrince45<double> fine(
            [&profile](double, const State& x, State& dx) {
                dx[0] = -2.0 * profile.b(x[0]) * std::sin(x[1]);
                dx[1] = -2.0 * profile.b_prime(x[0]) * std::cos(x[1]);
            },
            OdeOptions{.rtol = 1e-12, .atol = 1e-14});
        fine.advance(s, t_prev, mid);
        (s[0] >= n_star ? hi : lo) = mid;
    }
    return {0.5 * (lo + hi), {}};
}

struct SweepConfig {
    std::vector<double> h_grid;
    double c = 1.0;     // n_star(h) = c / h
    double alpha = 1.0;
    double gamma = 1.0; // constant offset of the crossover profile
    Mat2 noise = Mat2::Identity();
    double n0 = 1.0;    // saddle start on the growing manifold p = -pi/2
    double margin = 5.0; // t_ref = max_h t*_emp + margin / alpha
    double rate_window = 2.0; // mean-rate fit over [t_ref - rate_window/alpha, t_ref]
    std::size_t points_per_unit_time = 20;
    double t_search_max = 1e4;
    bool run_chain = true;
    double chain_n_target = 300; // chain horizon: first time the saddle reaches this
    ChainOptions chain;
};

struct SweepPoint {
    double h = 0;
    double n_star = 0;
    double t_star_formula = 0;
    double t_star_empirical = NAN;
    double kappa2_ref = 0;
    double chi_hat = 0;     // kappa_2(t_ref) / t_ref
    double chi_stretch = 0; // kappa_2(t_ref) / (G G^T)_nn(t_ref, 0)
    double mean_rate = 0;        // saddle d ln n / dt late window
    double chain_t_end = NAN;
    double chain_rate = NAN;     // chain d ln K / dt over the last third of its horizon
    double chain_K_end = NAN;
    bool chain_asymptotic = false; // K reached 20 n_star
    bool valid = true;
    std::string flag;
    std::vector<double> chain_times, chain_K;
    std::vector<double> times, kappa2, n_saddle;
};

struct SweepReport {
    SweepConfig config;
    double t_ref = 0;
    std::vector<SweepPoint> points;
    LinearFit chi_vs_log_nstar;
    LinearFit stretch_vs_log_nstar;
    LinearFit stretch_vs_tstar;
    double max_mean_rate_deviation = 0; // max |rate - 2 alpha| / (2 alpha)
    std::string estimator_note;
};

/// Crossover sweep: per h, the semiclassical saddle and its Lyapunov
/// covariance (and optionally the quantum chain), plus the trend fits.
inline SweepReport susceptibility_sweep(const SweepConfig& cfg)
{
    if (cfg.h_grid.empty()) throw validation_error("sweep needs a non-empty h grid");
    for (std::size_t i = 0; i < cfg.h_grid.size(); ++i) {
        if (!(cfg.h_grid[i] > 0)) throw validation_error("h grid must be positive");
        if (i > 0 && !(cfg.h_grid[i] < cfg.h_grid[i - 1])) throw validation_error("h grid must be decreasing");
    }
    validate_noise(cfg.noise);
    SweepReport rep;
    rep.config = cfg;
    rep.estimator_note =
        "chi_hat = kappa_2(t_ref) / t_ref with t_ref = max_h t*_emp + margin/alpha shared by all points "
        "(the literal limit kappa_2/t diverges for exponential growth). chi_stretch = kappa_2(t_ref) / "
        "(G G^T)_nn(t_ref, 0) divides out the deterministic stretching of the saddle and is reported alongside.";
    const double pi_half = std::numbers::pi / 2;

    std::vector<LanczosProfile> profiles;
    double t_star_max = 0;
    for (double h : cfg.h_grid) {
        const double n_star = cfg.c / h;
        profiles.push_back(LanczosProfile::crossover(cfg.alpha, cfg.gamma, n_star));
        SweepPoint pt;
        pt.h = h;
        pt.n_star = n_star;
        pt.t_star_formula = escape_time(profiles.back());
        const EscapeTime et = escape_time_empirical(profiles.back(), cfg.t_search_max, cfg.n0, -pi_half);
        if (et.time) {
            pt.t_star_empirical = *et.time;
            t_star_max = std::max(t_star_max, *et.time);
        } else {
            pt.valid = false;
            pt.flag = et.flag;
        }
        rep.points.push_back(pt);
    }
    rep.t_ref = t_star_max + cfg.margin / cfg.alpha;
    const std::size_t steps =
        std::max<std::size_t>(10, static_cast<std::size_t>(std::ceil(rep.t_ref * cfg.points_per_unit_time)));
    const std::vector<double> grid = uniform_grid(rep.t_ref, steps);

    for (std::size_t i = 0; i < rep.points.size(); ++i) {
        SweepPoint& pt = rep.points[i];
        const LanczosProfile& prof = profiles[i];
        const PhaseTrajectory saddle = integrate_hamilton(prof, cfg.n0, -pi_half, grid);
        if (!saddle.valid) {
            pt.valid = false;
            pt.flag = saddle.flag;
            continue;
        }
        const FluctuationReport fr = covariance_evolution(prof, saddle, cfg.noise);
        if (!fr.valid) {
            pt.valid = false;
            pt.flag = fr.flag;
            continue;
        }
        pt.times = fr.times;
        pt.kappa2 = fr.variance_n;
        pt.n_saddle = fr.n_saddle;
        pt.kappa2_ref = fr.variance_n.back();
        const Mat2& G = fr.propagator.back();
        pt.chi_hat = pt.kappa2_ref / rep.t_ref;
        pt.chi_stretch = pt.kappa2_ref / (G * G.transpose())(0, 0);
        pt.mean_rate = lyapunov_rate(saddle, rep.t_ref - cfg.rate_window / cfg.alpha, rep.t_ref).slope;

        if (cfg.run_chain) {
            // horizon: first report time where the saddle reaches the target
            const double target = cfg.chain_n_target;
            double t_end = rep.t_ref;
            for (std::size_t k = 0; k < saddle.times.size(); ++k) {
                if (saddle.n_path[k] >= target) {
                    t_end = saddle.times[k];
                    break;
                }
            }
            const std::size_t chain_steps = std::max<std::size_t>(
                12, static_cast<std::size_t>(std::ceil(t_end * cfg.points_per_unit_time)));
            const ChainTrajectory ct = evolve_chain(prof, uniform_grid(t_end, chain_steps), cfg.chain);
            if (!ct.valid) {
                pt.valid = false;
                pt.flag = "chain: " + ct.flag;
            }
            pt.chain_t_end = t_end;
            pt.chain_times = ct.times;
            pt.chain_K = complexity(ct);
            pt.chain_K_end = pt.chain_K.back();
            pt.chain_asymptotic = pt.chain_K_end >= 20.0 * pt.n_star;
            std::vector<double> x, y;
            for (std::size_t k = 0; k < ct.times.size(); ++k) {
                if (ct.times[k] >= t_end * 2.0 / 3.0 && pt.chain_K[k] > 0) {
                    x.push_back(ct.times[k]);
                    y.push_back(std::log(pt.chain_K[k]));
                }
            }
            if (x.size() >= 2) pt.chain_rate = linear_fit(x, y).slope;
        }
    }

    std::vector<double> ln_ns, chi, stretch, tstar;
    for (const auto& pt : rep.points) {
        if (!pt.valid && pt.times.empty()) continue;
        ln_ns.push_back(std::log(pt.n_star));
        chi.push_back(pt.chi_hat);
        stretch.push_back(pt.chi_stretch);
        tstar.push_back(pt.t_star_empirical);
        rep.max_mean_rate_deviation =
            std::max(rep.max_mean_rate_deviation, std::abs(pt.mean_rate - 2.0 * cfg.alpha) / (2.0 * cfg.alpha));
    }
    if (ln_ns.size() >= 2) {
        rep.chi_vs_log_nstar = linear_fit(ln_ns, chi);
        rep.stretch_vs_log_nstar = linear_fit(ln_ns, stretch);
        rep.stretch_vs_tstar = linear_fit(tstar, stretch);
    }
    return rep;
}

} // namespace kryloscope
