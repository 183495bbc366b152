#pragma once

// Exact evolution of the Krylov-chain amplitudes
//   i d/dt phi_n = b_{n+1} phi_{n+1} + b_n phi_{n-1} (+ a_n phi_n)
// with a hard wall at n = 0 and a truncation wall at n = N.

#include "kryloscope/error.hpp"
#include "kryloscope/ode.hpp"
#include "kryloscope/profile.hpp"

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace kryloscope {

using cplx = std::complex<double>;
using Amplitudes = std::vector<cplx>;

struct ChainOptions {
    /// Fixed truncation; empty selects auto mode (doubling from auto_start).
    std::optional<std::size_t> sites;
    std::size_t auto_start = 256;
    std::size_t max_sites = std::size_t{1} << 20;
    std::size_t tail_window = 32;
    /// Tail-mass tolerance for the truncation wall.
    double leakage_tol = 1e-10;
    /// Bound on |1 - sum |phi_n|^2| at every report time.
    double norm_tol = 1e-9;
    OdeOptions ode{.rtol = 1e-10, .atol = 1e-13};
};

struct ChainTrajectory {
    std::vector<double> times;
    std::vector<Amplitudes> amplitudes; // amplitudes[i][n] = phi_n(times[i])
    std::size_t truncation_N = 0;
    std::size_t tail_window = 0;
    /// True when the chain ends physically at N (finite tabulated profile).
    bool natural_end = false;
    std::vector<double> boundary_leakage;
    std::vector<double> norm_drift;
    bool valid = true;
    std::string flag; // reason for invalidity, empty when valid
    std::size_t attempts = 1;
    OdeStats stats;

    [[nodiscard]] std::vector<double> probabilities(std::size_t i) const
    {
        const Amplitudes& a = amplitudes.at(i);
        std::vector<double> p(a.size());
        for (std::size_t n = 0; n < a.size(); ++n) p[n] = std::norm(a[n]);
        return p;
    }

    /// Index of the report time closest to t.
    [[nodiscard]] std::size_t index_of(double t) const
    {
        std::size_t best = 0;
        for (std::size_t i = 1; i < times.size(); ++i) {
            if (std::abs(times[i] - t) < std::abs(times[best] - t)) best = i;
        }
        return best;
    }
};

namespace detail {

struct ChainHamiltonian {
    std::vector<double> hop;    // hop[n] = b_{n+1}, couples n and n+1
    std::vector<double> onsite; // a_n
    bool has_onsite = false;

    ChainHamiltonian(const LanczosProfile& profile, std::size_t sites) : hop(sites > 0 ? sites - 1 : 0), onsite(sites)
    {
        for (std::size_t n = 0; n + 1 < sites; ++n) {
            hop[n] = profile.hopping(static_cast<long>(n + 1));
            if (!std::isfinite(hop[n])) throw numerical_error("non-finite Lanczos coefficient b_" + std::to_string(n + 1));
        }
        for (std::size_t n = 0; n < sites; ++n) {
            onsite[n] = profile.onsite(static_cast<long>(n));
            has_onsite = has_onsite || onsite[n] != 0.0;
        }
    }

    // dy = -i H y
    void apply(const Amplitudes& y, Amplitudes& dy) const
    {
        const std::size_t n = y.size();
        if (n == 0) return;
        if (n == 1) {
            dy[0] = cplx(0, -1) * (onsite[0] * y[0]);
            return;
        }
        auto mi = [](cplx z) { return cplx(z.imag(), -z.real()); }; // -i z
        dy[0] = mi(hop[0] * y[1]);
        for (std::size_t k = 1; k + 1 < n; ++k) dy[k] = mi(hop[k] * y[k + 1] + hop[k - 1] * y[k - 1]);
        dy[n - 1] = mi(hop[n - 2] * y[n - 2]);
        if (has_onsite) {
            for (std::size_t k = 0; k < n; ++k) dy[k] += mi(onsite[k] * y[k]);
        }
    }
};

inline std::size_t natural_length(const LanczosProfile& profile)
{
    if (profile.kind() != ProfileKind::tabulated) return 0;
    // chain ends at the first vanishing coefficient
    const auto& v = profile.values();
    std::size_t len = 1;
    while (len - 1 < v.size() && v[len - 1] > 0.0) ++len;
    return len;
}

inline double tail_mass(const Amplitudes& a, std::size_t window)
{
    const std::size_t n = a.size();
    const std::size_t start = n > window ? n - window : 0;
    double s = 0.0;
    for (std::size_t k = start; k < n; ++k) s += std::norm(a[k]);
    return s;
}

inline void validate_grid(const std::vector<double>& t_grid)
{
    if (t_grid.empty()) throw validation_error("time grid is empty");
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > t_grid[i - 1])) throw validation_error("time grid must be strictly increasing");
    }
}

} // namespace detail

/// Propagates an arbitrary initial amplitude vector from t_from to t_to
/// (t_to < t_from runs backwards) on a chain of psi.size() sites.
inline Amplitudes propagate_amplitudes(const LanczosProfile& profile, Amplitudes psi, double t_from, double t_to,
                                       const OdeOptions& ode = ChainOptions{}.ode)
{
    const detail::ChainHamiltonian ham(profile, psi.size());
    DormandPrince45<cplx> stepper([&ham](double, const Amplitudes& y, Amplitudes& dy) { ham.apply(y, dy); }, ode);
    stepper.advance(psi, t_from, t_to);
    return psi;
}

namespace detail {

inline ChainTrajectory evolve_fixed(const LanczosProfile& profile, const std::vector<double>& t_grid,
                                    std::size_t sites, bool natural_end, const ChainOptions& opt)
{
    ChainTrajectory traj;
    traj.times = t_grid;
    traj.truncation_N = sites;
    traj.tail_window = opt.tail_window;
    traj.natural_end = natural_end;
    const ChainHamiltonian ham(profile, sites);
    DormandPrince45<cplx> stepper([&ham](double, const Amplitudes& y, Amplitudes& dy) { ham.apply(y, dy); },
                                  opt.ode);
    Amplitudes psi(sites, cplx{0.0, 0.0});
    psi[0] = 1.0;
    double t = 0.0;
    for (double target : t_grid) {
        stepper.advance(psi, t, target);
        t = target;
        double norm = 0.0;
        for (const cplx& z : psi) norm += std::norm(z);
        traj.amplitudes.push_back(psi);
        traj.norm_drift.push_back(std::abs(1.0 - norm));
        traj.boundary_leakage.push_back(natural_end ? 0.0 : tail_mass(psi, opt.tail_window));
    }
    traj.stats = stepper.stats();
    for (std::size_t i = 0; i < t_grid.size(); ++i) {
        if (traj.boundary_leakage[i] >= opt.leakage_tol) {
            traj.valid = false;
            traj.flag = "boundary leakage " + std::to_string(traj.boundary_leakage[i]) + " at t=" +
                        std::to_string(t_grid[i]) + " exceeds tolerance with N=" + std::to_string(sites);
            break;
        }
        if (traj.norm_drift[i] >= opt.norm_tol) {
            traj.valid = false;
            traj.flag = "norm drift " + std::to_string(traj.norm_drift[i]) + " at t=" + std::to_string(t_grid[i]);
            break;
        }
    }
    return traj;
}

} // namespace detail

/// Evolves the state localized at n = 0 over t_grid (which must start at 0).
/// In auto mode N doubles until the final-time tail mass is below tolerance.
inline ChainTrajectory evolve_chain(const LanczosProfile& profile, const std::vector<double>& t_grid,
                                    const ChainOptions& opt = {})
{
    detail::validate_grid(t_grid);
    if (t_grid.front() != 0.0) throw validation_error("time grid must start at 0");
    if (!(opt.leakage_tol > 0) || !(opt.norm_tol > 0)) throw validation_error("tolerances must be positive");
    const std::size_t natural = detail::natural_length(profile);
    if (opt.sites) {
        if (*opt.sites < 1) throw validation_error("chain needs at least one site");
        std::size_t n = *opt.sites;
        bool end = false;
        if (natural != 0 && n >= natural) {
            n = natural;
            end = true;
        }
        return detail::evolve_fixed(profile, t_grid, n, end, opt);
    }
    std::size_t n = std::max<std::size_t>(opt.auto_start, 2 * opt.tail_window);
    std::size_t attempts = 0;
    while (true) {
        bool end = false;
        if (natural != 0 && n >= natural) {
            n = natural;
            end = true;
        }
        ++attempts;
        ChainTrajectory traj = detail::evolve_fixed(profile, t_grid, n, end, opt);
        traj.attempts = attempts;
        if (end || traj.boundary_leakage.back() < opt.leakage_tol) return traj;
        if (2 * n > opt.max_sites) {
            traj.flag = "auto truncation reached max_sites=" + std::to_string(opt.max_sites) + "; " + traj.flag;
            return traj;
        }
        n *= 2;
    }
}

/// K(t) = sum_n n |phi_n(t)|^2 at every report time.
inline std::vector<double> complexity(const ChainTrajectory& traj)
{
    std::vector<double> k(traj.times.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
        double s = 0.0;
        const Amplitudes& a = traj.amplitudes[i];
        for (std::size_t n = 1; n < a.size(); ++n) s += static_cast<double>(n) * std::norm(a[n]);
        k[i] = s;
    }
    return k;
}

/// P(n, t_i).
inline std::vector<double> distribution(const ChainTrajectory& traj, std::size_t i) { return traj.probabilities(i); }

/// <n^m> at report index i.
inline double moment(const ChainTrajectory& traj, std::size_t i, int m)
{
    const Amplitudes& a = traj.amplitudes.at(i);
    double s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) s += std::pow(static_cast<double>(n), m) * std::norm(a[n]);
    return s;
}

/// Central second moment sum_n (n - K)^2 P(n), with K = sum_n n P(n).
inline double variance(const ChainTrajectory& traj, std::size_t i)
{
    const Amplitudes& a = traj.amplitudes.at(i);
    double mean = 0.0;
    for (std::size_t n = 1; n < a.size(); ++n) mean += static_cast<double>(n) * std::norm(a[n]);
    double v = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        const double d = static_cast<double>(n) - mean;
        v += d * d * std::norm(a[n]);
    }
    return v;
}

} // namespace kryloscope
