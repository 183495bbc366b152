#pragma once

// Full counting statistics of the Krylov position: Z(chi, t) = <e^{i chi n(t)}>,
// cumulants, the finite-time dynamical free energy and the real-tilted
// large-deviation rate function.

#include "kryloscope/chain.hpp"
#include "kryloscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

namespace kryloscope {

struct CountingReport {
    std::vector<double> chi_grid;
    std::vector<double> times;
    std::vector<std::vector<cplx>> Z; // Z[i][j] = Z(chi_j, t_i)
    std::vector<std::vector<double>> cumulants; // cumulants[i][m-1] = kappa_m(t_i)
};

/// Uniform grid of `points` counting-field values in (-pi, pi].
inline std::vector<double> chi_grid(std::size_t points)
{
    if (points == 0) throw validation_error("chi grid needs at least one point");
    std::vector<double> g(points);
    const double pi = std::numbers::pi;
    for (std::size_t j = 0; j < points; ++j) {
        g[j] = -pi + 2.0 * pi * static_cast<double>(j + 1) / static_cast<double>(points);
    }
    return g;
}

/// Z(chi) = sum_n P(n) e^{i chi n} by direct summation.
inline cplx counting_from_distribution(const std::vector<double>& p, double chi)
{
    cplx z{0.0, 0.0};
    for (std::size_t n = 0; n < p.size(); ++n) z += p[n] * std::polar(1.0, chi * static_cast<double>(n));
    return z;
}

/// Z(chi) from the amplitudes with the counting field split symmetrically
/// over the two branches: <e^{-i chi n/2} phi | e^{+i chi n/2} phi>.
inline cplx counting_from_phase_rotation(const Amplitudes& phi, double chi)
{
    cplx z{0.0, 0.0};
    for (std::size_t n = 0; n < phi.size(); ++n) {
        const double half = 0.5 * chi * static_cast<double>(n);
        const cplx fwd = std::polar(1.0, half) * phi[n];
        const cplx bwd = std::polar(1.0, -half) * phi[n];
        z += std::conj(bwd) * fwd;
    }
    return z;
}

/// Heisenberg route <0| e^{iHt} e^{i chi n} e^{-iHt} |0>: the rotated state is
/// propagated back to t=0 and projected on the seed. Accurate to the
/// integrator tolerance only.
inline cplx counting_from_backward_evolution(const LanczosProfile& profile, const Amplitudes& phi_t, double t,
                                             double chi, const OdeOptions& ode = ChainOptions{}.ode)
{
    Amplitudes rotated(phi_t.size());
    for (std::size_t n = 0; n < phi_t.size(); ++n) rotated[n] = std::polar(1.0, chi * static_cast<double>(n)) * phi_t[n];
    const Amplitudes back = propagate_amplitudes(profile, std::move(rotated), t, 0.0, ode);
    return back.at(0);
}

/// Cumulants kappa_1..kappa_M of P via central moments and the
/// moment-cumulant recursion (M <= 6).
inline std::vector<double> cumulants_of(const std::vector<double>& p, int M)
{
    if (M < 1 || M > 6) throw validation_error("cumulant order must be in 1..6");
    double mean = 0.0;
    for (std::size_t n = 1; n < p.size(); ++n) mean += static_cast<double>(n) * p[n];
    // central moments mu_0..mu_M
    std::vector<double> mu(static_cast<std::size_t>(M) + 1, 0.0);
    for (std::size_t n = 0; n < p.size(); ++n) {
        if (p[n] == 0.0) continue;
        const double d = static_cast<double>(n) - mean;
        double pw = p[n];
        for (int m = 0; m <= M; ++m) {
            mu[static_cast<std::size_t>(m)] += pw;
            pw *= d;
        }
    }
    // kappa_m = mu_m - sum_{j=1}^{m-1} C(m-1, j-1) kappa_j mu_{m-j}, with kappa_1 -> 0 about the mean
    std::vector<double> k(static_cast<std::size_t>(M) + 1, 0.0);
    for (int m = 2; m <= M; ++m) {
        double s = mu[static_cast<std::size_t>(m)];
        double binom = 1.0; // C(m-1, j-1)
        for (int j = 1; j <= m - 1; ++j) {
            if (j > 1) binom = binom * (m - j + 1) / (j - 1);
            s -= binom * k[static_cast<std::size_t>(j)] * mu[static_cast<std::size_t>(m - j)];
        }
        k[static_cast<std::size_t>(m)] = s;
    }
    k[1] = mean;
    return {k.begin() + 1, k.end()};
}

/// Builds Z(chi, t) over the trajectory's report times and the cumulants up to M.
inline CountingReport counting_function(const ChainTrajectory& traj, const std::vector<double>& chis, int M = 4)
{
    CountingReport rep;
    rep.chi_grid = chis;
    rep.times = traj.times;
    rep.Z.resize(traj.times.size());
    rep.cumulants.resize(traj.times.size());
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        const std::vector<double> p = traj.probabilities(i);
        rep.Z[i].resize(chis.size());
        for (std::size_t j = 0; j < chis.size(); ++j) {
            rep.Z[i][j] = chis[j] == 0.0 ? cplx{1.0, 0.0} : counting_from_distribution(p, chis[j]);
        }
        rep.cumulants[i] = cumulants_of(p, M);
    }
    return rep;
}

/// kappa_1..kappa_M at report index i of a trajectory.
inline std::vector<double> cumulants(const ChainTrajectory& traj, std::size_t i, int M)
{
    return cumulants_of(traj.probabilities(i), M);
}

// ---------------------------------------------------------------------------
// Finite-time dynamical free energy

struct FreeEnergyEstimate {
    std::vector<double> times;  // report times with t > 0
    std::vector<cplx> psi;      // ln Z(chi, t) / t with the phase continued in t
    std::vector<bool> flagged;  // |Z| below the phase-resolution floor
    cplx window_mean{0.0, 0.0};
    cplx drift{0.0, 0.0};       // least-squares d psi / dt over the window
    double relative_change = 0; // |psi(end) - psi(window start)| / |window mean|
    bool converged = false;
};

/// Psi_t(chi) = ln Z(chi,t)/t for column `chi_index`; the window is the final
/// `window_fraction` of the positive report times (at least 3 points).
inline FreeEnergyEstimate free_energy_estimate(const CountingReport& rep, std::size_t chi_index,
                                               double window_fraction = 1.0 / 3.0, double converge_tol = 0.01,
                                               double zero_floor = 1e-10)
{
    if (chi_index >= rep.chi_grid.size()) throw index_error("chi index out of range");
    FreeEnergyEstimate out;
    double phase = 0.0;
    double prev = 0.0;
    bool started = false;
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        const cplx z = rep.Z[i][chi_index];
        const double t = rep.times[i];
        const double principal = std::arg(z);
        if (!started) {
            phase = principal;
            started = true;
        } else {
            double d = principal - prev;
            d -= 2.0 * std::numbers::pi * std::round(d / (2.0 * std::numbers::pi));
            phase += d;
        }
        prev = principal;
        if (t <= 0.0) continue;
        const double mod = std::abs(z);
        out.times.push_back(t);
        out.flagged.push_back(mod < zero_floor);
        out.psi.push_back(cplx(std::log(mod), phase) / t);
    }
    const std::size_t n = out.times.size();
    const std::size_t w = std::max<std::size_t>(3, static_cast<std::size_t>(std::ceil(window_fraction * n)));
    if (n < 3) throw validation_error("free energy estimate needs at least 3 report times with t > 0");
    const std::size_t start = n - std::min(w, n);
    const double count = static_cast<double>(n - start);
    double tbar = 0.0;
    cplx pbar{0.0, 0.0};
    for (std::size_t i = start; i < n; ++i) {
        tbar += out.times[i];
        pbar += out.psi[i];
    }
    tbar /= count;
    pbar /= count;
    double stt = 0.0;
    cplx stp{0.0, 0.0};
    for (std::size_t i = start; i < n; ++i) {
        const double dt = out.times[i] - tbar;
        stt += dt * dt;
        stp += dt * (out.psi[i] - pbar);
    }
    out.window_mean = pbar;
    out.drift = stt > 0 ? stp / stt : cplx{0.0, 0.0};
    const double scale = std::abs(pbar);
    const double change = std::abs(out.psi[n - 1] - out.psi[start]);
    out.relative_change = scale > 0 ? change / scale : (change > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.converged = out.relative_change < converge_tol;
    return out;
}

// ---------------------------------------------------------------------------
// Large deviations by real tilting

struct RateFunction {
    double t = 0;
    std::vector<double> s_grid;
    std::vector<double> scgf;       // lambda(s) = (1/t) ln sum_n P(n) e^{s n}
    std::vector<double> scgf_slope; // lambda'(s) = tilted mean / t
    std::vector<double> v_grid;
    std::vector<double> phi;        // Phi(v) = max_s [s v - lambda(s)]
    /// false where the maximizing s sits on the grid boundary with v outside
    /// the slope range, i.e. the supremum is not attained on this grid (+inf)
    std::vector<bool> attained;
    double typical_v = 0; // lambda'(0)
};

/// Discrete Legendre-Fenchel transform f*(v) = max_j [s_j v - f(s_j)].
/// `attained[k]` is false when the maximizer is a grid endpoint.
inline std::vector<double> legendre_fenchel(const std::vector<double>& s, const std::vector<double>& f,
                                            const std::vector<double>& v, std::vector<bool>* attained = nullptr)
{
    std::vector<double> out(v.size());
    if (attained) attained->assign(v.size(), true);
    for (std::size_t k = 0; k < v.size(); ++k) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < s.size(); ++j) {
            const double val = s[j] * v[k] - f[j];
            if (val > best) {
                best = val;
                arg = j;
            }
        }
        out[k] = best;
        if (attained && s.size() > 1 && (arg == 0 || arg + 1 == s.size())) (*attained)[k] = false;
    }
    return out;
}

/// Scaled CGF from P(n) at time t via log-sum-exp, and its Legendre-Fenchel
/// transform sampled on v_grid (defaults to the slope range of lambda).
inline RateFunction rate_function_of(const std::vector<double>& p, double t, const std::vector<double>& s_grid,
                                     std::vector<double> v_grid = {}, std::size_t v_points = 0)
{
    if (!(t > 0)) throw validation_error("rate function needs t > 0");
    if (s_grid.size() < 2) throw validation_error("s grid needs at least two points");
    RateFunction rf;
    rf.t = t;
    rf.s_grid = s_grid;
    auto tilted = [&](double s, double& slope) {
        double lmax = -std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < p.size(); ++n) {
            if (p[n] > 0) lmax = std::max(lmax, std::log(p[n]) + s * static_cast<double>(n));
        }
        double sum = 0.0, first = 0.0;
        for (std::size_t n = 0; n < p.size(); ++n) {
            if (p[n] <= 0) continue;
            const double w = std::exp(std::log(p[n]) + s * static_cast<double>(n) - lmax);
            sum += w;
            first += static_cast<double>(n) * w;
        }
        slope = first / sum / t;
        return (lmax + std::log(sum)) / t;
    };
    for (double s : s_grid) {
        double slope = 0;
        rf.scgf.push_back(tilted(s, slope));
        rf.scgf_slope.push_back(slope);
    }
    double typical = 0;
    tilted(0.0, typical);
    rf.typical_v = typical;
    if (v_grid.empty()) {
        const double lo = *std::min_element(rf.scgf_slope.begin(), rf.scgf_slope.end());
        const double hi = *std::max_element(rf.scgf_slope.begin(), rf.scgf_slope.end());
        const std::size_t m = v_points ? v_points : s_grid.size();
        if (hi - lo <= 1e-14 * std::max(1.0, std::abs(hi))) {
            v_grid = {lo};
        } else {
            for (std::size_t k = 0; k < m; ++k) v_grid.push_back(lo + (hi - lo) * static_cast<double>(k) / (m - 1.0));
        }
    }
    rf.v_grid = v_grid;
    rf.phi = legendre_fenchel(rf.s_grid, rf.scgf, rf.v_grid, &rf.attained);
    // a maximizer on the boundary is genuine when v lies inside the slope range
    const double lo = *std::min_element(rf.scgf_slope.begin(), rf.scgf_slope.end());
    const double hi = *std::max_element(rf.scgf_slope.begin(), rf.scgf_slope.end());
    const double eps = 1e-12 * std::max(1.0, std::abs(hi));
    for (std::size_t k = 0; k < rf.v_grid.size(); ++k) {
        if (rf.v_grid[k] >= lo - eps && rf.v_grid[k] <= hi + eps) rf.attained[k] = true;
        if (!rf.attained[k]) rf.phi[k] = std::numeric_limits<double>::infinity();
    }
    return rf;
}

inline RateFunction rate_function(const ChainTrajectory& traj, std::size_t i, const std::vector<double>& s_grid,
                                  std::vector<double> v_grid = {}, std::size_t v_points = 0)
{
    return rate_function_of(traj.probabilities(i), traj.times.at(i), s_grid, std::move(v_grid), v_points);
}

/// Uniform s grid on [lo, hi].
inline std::vector<double> linspace(double lo, double hi, std::size_t points)
{
    if (points < 2) return {lo};
    std::vector<double> g(points);
    for (std::size_t k = 0; k < points; ++k) g[k] = lo + (hi - lo) * static_cast<double>(k) / (points - 1.0);
    return g;
}

/// True when the samples are convex up to `tol` (second differences on a
/// possibly non-uniform grid).
inline bool is_convex(const std::vector<double>& x, const std::vector<double>& y, double tol = 1e-9)
{
    for (std::size_t k = 1; k + 1 < x.size(); ++k) {
        if (!std::isfinite(y[k - 1]) || !std::isfinite(y[k]) || !std::isfinite(y[k + 1])) continue;
        const double left = (y[k] - y[k - 1]) / (x[k] - x[k - 1]);
        const double right = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
        if (right < left - tol * std::max(1.0, std::abs(left))) return false;
    }
    return true;
}

} // namespace kryloscope
