#pragma once

// Semiclassical flow in Krylov phase space generated by H_eff = 2 b(n) cos p,
// growth-law fits, and classification of b(n) asymptotics.

#include "kryloscope/error.hpp"
#include "kryloscope/ode.hpp"
#include "kryloscope/profile.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace kryloscope {

struct HEff {
    double value;
    double d_n; // dH/dn = 2 b'(n) cos p
    double d_p; // dH/dp = -2 b(n) sin p
};

inline HEff h_eff(const LanczosProfile& profile, double n, double p)
{
    const double b = profile.b(n), bp = profile.b_prime(n);
    return {2.0 * b * std::cos(p), 2.0 * bp * std::cos(p), -2.0 * b * std::sin(p)};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double p)
{
    const double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(p + std::numbers::pi, two_pi);
    if (w <= 0.0) w += two_pi;
    return w - std::numbers::pi;
}

struct LinearFit {
    double slope = 0;
    double intercept = 0;
    double slope_error = 0; // standard error of the slope
    double r_squared = 0;
};

/// Ordinary least squares y = slope x + intercept.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y)
{
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw validation_error("linear fit needs at least two matching points");
    double xb = 0, yb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        xb += x[i];
        yb += y[i];
    }
    xb /= static_cast<double>(n);
    yb /= static_cast<double>(n);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - xb) * (x[i] - xb);
        sxy += (x[i] - xb) * (y[i] - yb);
        syy += (y[i] - yb) * (y[i] - yb);
    }
    if (sxx == 0) throw validation_error("linear fit with degenerate abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = yb - f.slope * xb;
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - (f.slope * x[i] + f.intercept);
        sse += r * r;
    }
    f.r_squared = syy > 0 ? 1.0 - sse / syy : 1.0;
    f.slope_error = n > 2 ? std::sqrt(sse / static_cast<double>(n - 2) / sxx) : 0.0;
    return f;
}

struct PhaseTrajectory {
    std::vector<double> times;
    std::vector<double> n_path;
    std::vector<double> p_path;       // wrapped into (-pi, pi]
    std::vector<double> p_unwrapped;  // continuous
    std::vector<double> conserved_H;
    bool valid = true;
    std::string flag;
    LinearFit lyapunov_fit; // ln n vs t over the final third, when growing
    bool has_lyapunov_fit = false;
};

struct HamiltonOptions {
    double n_floor = 0.5;
    OdeOptions ode{.rtol = 1e-12, .atol = 1e-14};
};

/// Integrates dn/dt = -2 b(n) sin p, dp/dt = -2 b'(n) cos p over t_grid
/// (starting at t_grid[0]). Stops and flags if n falls below n_floor.
inline PhaseTrajectory integrate_hamilton(const LanczosProfile& profile, double n0, double p0,
                                          const std::vector<double>& t_grid, const HamiltonOptions& opt = {})
{
    if (!(n0 >= 1.0)) throw domain_error("integrate_hamilton: n0 must be >= 1");
    if (t_grid.empty()) throw validation_error("time grid is empty");
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        if (!(t_grid[i] > t_grid[i - 1])) throw validation_error("time grid must be strictly increasing");
    }
    using State = std::vector<double>;
    DormandPrince45<double> stepper(
        [&profile](double, const State& y, State& dy) {
            dy[0] = -2.0 * profile.b(y[0]) * std::sin(y[1]);
            dy[1] = -2.0 * profile.b_prime(y[0]) * std::cos(y[1]);
        },
        opt.ode);
    PhaseTrajectory tr;
    State y{n0, p0};
    auto record = [&](double t) {
        tr.times.push_back(t);
        tr.n_path.push_back(y[0]);
        tr.p_unwrapped.push_back(y[1]);
        tr.p_path.push_back(wrap_angle(y[1]));
        tr.conserved_H.push_back(2.0 * profile.b(y[0]) * std::cos(y[1]));
    };
    const double floor = opt.n_floor;
    auto monitor = [floor](double, const State& s) { return s[0] >= floor && std::isfinite(s[0]); };
    double t = t_grid.front();
    record(t);
    for (std::size_t i = 1; i < t_grid.size(); ++i) {
        double reached = t;
        const auto status = stepper.advance(y, t, t_grid[i], &reached, monitor);
        if (status == OdeStatus::stopped) {
            tr.valid = false;
            tr.flag = "n fell below n_floor=" + std::to_string(floor) + " at t=" + std::to_string(reached);
            break;
        }
        t = t_grid[i];
        record(t);
    }
    // late-window Lyapunov estimate when n grows monotonically there
    const std::size_t m = tr.times.size();
    if (m >= 6) {
        const std::size_t start = m - std::max<std::size_t>(3, m / 3);
        bool growing = true;
        for (std::size_t i = start + 1; i < m; ++i) growing = growing && tr.n_path[i] > tr.n_path[i - 1];
        if (growing) {
            std::vector<double> x(tr.times.begin() + static_cast<long>(start), tr.times.end()), ly;
            for (std::size_t i = start; i < m; ++i) ly.push_back(std::log(tr.n_path[i]));
            tr.lyapunov_fit = linear_fit(x, ly);
            tr.has_lyapunov_fit = true;
        }
    }
    return tr;
}

/// Indices of report times in [t_lo, t_hi].
inline std::vector<std::size_t> window_indices(const std::vector<double>& times, double t_lo, double t_hi)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] >= t_lo && times[i] <= t_hi) idx.push_back(i);
    }
    return idx;
}

/// Least-squares slope of ln n(t) over [t_lo, t_hi] (default: final third).
/// Throws when n is not monotonically increasing in the window.
inline LinearFit lyapunov_rate(const PhaseTrajectory& traj, double t_lo = NAN, double t_hi = NAN)
{
    if (traj.times.size() < 3) throw validation_error("trajectory too short for a Lyapunov fit");
    if (std::isnan(t_lo) || std::isnan(t_hi)) {
        const double t0 = traj.times.front(), t1 = traj.times.back();
        t_lo = t1 - (t1 - t0) / 3.0;
        t_hi = t1;
    }
    const auto idx = window_indices(traj.times, t_lo, t_hi);
    if (idx.size() < 3) throw validation_error("Lyapunov window holds fewer than 3 samples");
    std::vector<double> x, y;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        const std::size_t i = idx[k];
        if (k > 0 && !(traj.n_path[i] > traj.n_path[idx[k - 1]])) {
            throw numerical_error("n(t) is not monotonically increasing in the Lyapunov window");
        }
        x.push_back(traj.times[i]);
        y.push_back(std::log(traj.n_path[i]));
    }
    return linear_fit(x, y);
}

/// Slope of ln n vs ln t over [t_lo, t_hi]: the polynomial growth exponent.
inline LinearFit power_exponent(const PhaseTrajectory& traj, double t_lo, double t_hi)
{
    std::vector<double> x, y;
    for (std::size_t i : window_indices(traj.times, t_lo, t_hi)) {
        if (traj.times[i] <= 0) continue;
        x.push_back(std::log(traj.times[i]));
        y.push_back(std::log(traj.n_path[i]));
    }
    return linear_fit(x, y);
}

/// Slope of ln(n e^{-2 alpha t}) vs ln t: the power epsilon in n ~ A e^{2 alpha t} t^epsilon.
inline LinearFit marginal_power(const PhaseTrajectory& traj, double alpha, double t_lo, double t_hi)
{
    std::vector<double> x, y;
    for (std::size_t i : window_indices(traj.times, t_lo, t_hi)) {
        if (traj.times[i] <= 0) continue;
        x.push_back(std::log(traj.times[i]));
        y.push_back(std::log(traj.n_path[i]) - 2.0 * alpha * traj.times[i]);
    }
    return linear_fit(x, y);
}

// ---------------------------------------------------------------------------
// Growth classes

enum class GrowthClassKind { irrelevant_linear, irrelevant_log_drift, marginal, relevant_sublinear, undetermined };

inline std::string_view to_string(GrowthClassKind k)
{
    switch (k) {
    case GrowthClassKind::irrelevant_linear: return "irrelevant_linear";
    case GrowthClassKind::irrelevant_log_drift: return "irrelevant_log_drift";
    case GrowthClassKind::marginal: return "marginal";
    case GrowthClassKind::relevant_sublinear: return "relevant_sublinear";
    case GrowthClassKind::undetermined: return "undetermined";
    }
    return "unknown";
}

struct PredictedLaw {
    enum class Form { exponential, exponential_power_log, polynomial, unknown };
    Form form = Form::unknown;
    double rate = 0;     // exponential rate 2 alpha
    double power = 0;    // t^epsilon dressing (marginal)
    double exponent = 0; // polynomial exponent 1/(1 - gamma_exp)
};

struct ModelFit {
    GrowthClassKind model;
    std::vector<double> coefficients; // in the model's basis order
    double residual = 0;              // RMS relative residual
    int parameters = 0;
};

struct GrowthClass {
    GrowthClassKind kind = GrowthClassKind::undetermined;
    double alpha = 0;
    double gamma = 0;     // constant shift (linear)
    double beta = 0;      // log coefficient (log drift)
    double epsilon = 0;   // marginal slope correction
    double amplitude = 0; // power law
    double gamma_exp = 0; // power law
    PredictedLaw law;
    std::vector<ModelFit> fits;
    std::vector<GrowthClassKind> candidates; // populated when undetermined
    std::vector<double> n_probe;
    std::vector<double> lambda_eff; // 2 b'(n)
};

namespace detail {

// Relative-weighted least squares of b against the given basis columns.
inline ModelFit fit_basis(GrowthClassKind model, const std::vector<double>& n, const std::vector<double>& b,
                          const std::vector<double (*)(double)>& basis)
{
    const auto rows = static_cast<Eigen::Index>(n.size());
    const auto cols = static_cast<Eigen::Index>(basis.size());
    Eigen::MatrixXd A(rows, cols);
    Eigen::VectorXd y(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const double w = 1.0 / b[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < cols; ++j) A(i, j) = w * basis[static_cast<std::size_t>(j)](n[static_cast<std::size_t>(i)]);
        y(i) = 1.0;
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    ModelFit f{model, std::vector<double>(c.data(), c.data() + c.size()), 0.0, static_cast<int>(cols)};
    f.residual = std::sqrt((A * c - y).squaredNorm() / static_cast<double>(rows));
    return f;
}

} // namespace detail

/// Classifies b(n) over [n_min, n_max] (at least two decades) by fitting the
/// linear, log-drift, marginal and power-law families with relative weights.
inline GrowthClass classify_growth(const LanczosProfile& profile, double n_min, double n_max,
                                   std::size_t samples = 200, double tie_ratio = 1.10)
{
    if (!(n_min >= 1.0) || !(n_max >= 100.0 * n_min)) {
        throw validation_error("classification probe range must span at least two decades with n_min >= 1");
    }
    std::vector<double> n(samples), b(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        n[i] = n_min * std::pow(n_max / n_min, static_cast<double>(i) / (samples - 1.0));
        b[i] = profile.b(n[i]);
        if (!(b[i] > 0) || !std::isfinite(b[i])) throw numerical_error("classification needs positive finite b(n)");
    }
    GrowthClass gc;
    gc.n_probe = n;
    for (double x : n) gc.lambda_eff.push_back(2.0 * profile.b_prime(x));

    using G = GrowthClassKind;
    const ModelFit lin = detail::fit_basis(G::irrelevant_linear, n, b, {[](double x) { return x; }, [](double) { return 1.0; }});
    const ModelFit logd = detail::fit_basis(G::irrelevant_log_drift, n, b,
                                            {[](double x) { return x; }, [](double x) { return std::log(x); },
                                             [](double) { return 1.0; }});
    const ModelFit marg = detail::fit_basis(G::marginal, n, b,
                                            {[](double x) { return x; }, [](double x) { return x / std::log(x); },
                                             [](double) { return 1.0; }});
    // power law: ordinary least squares in log space
    std::vector<double> ln_n, ln_b;
    for (std::size_t i = 0; i < samples; ++i) {
        ln_n.push_back(std::log(n[i]));
        ln_b.push_back(std::log(b[i]));
    }
    const LinearFit pf = linear_fit(ln_n, ln_b);
    ModelFit pow{G::relevant_sublinear, {std::exp(pf.intercept), pf.slope}, 0.0, 2};
    {
        double s = 0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double r = (pow.coefficients[0] * std::pow(n[i], pf.slope) - b[i]) / b[i];
            s += r * r;
        }
        pow.residual = std::sqrt(s / static_cast<double>(samples));
    }
    gc.fits = {lin, pow, logd, marg};

    constexpr double floor = 1e-9;
    auto eff = [&](const ModelFit& f) { return std::max(f.residual, floor); };
    double best = eff(lin);
    for (const auto& f : gc.fits) best = std::min(best, eff(f));
    std::vector<G> tied;
    for (const auto& f : gc.fits) {
        if (eff(f) <= tie_ratio * best) tied.push_back(f.model);
    }
    auto has = [&](G g) { return std::find(tied.begin(), tied.end(), g) != tied.end(); };
    const bool power_is_linear = std::abs(pf.slope - 1.0) < 1e-3;

    G chosen = G::undetermined;
    if (best > 0.05) {
        chosen = G::undetermined;
        tied = {G::irrelevant_linear, G::relevant_sublinear, G::irrelevant_log_drift, G::marginal};
    } else if (tied.size() == 1) {
        chosen = tied.front();
    } else if (has(G::irrelevant_linear) && (!has(G::relevant_sublinear) || power_is_linear)) {
        // linear is nested in log-drift and marginal, and equals a unit power
        chosen = G::irrelevant_linear;
    }
    if (chosen == G::relevant_sublinear && !(pf.slope < 1.0 - 1e-3)) chosen = G::undetermined;

    gc.kind = chosen;
    const double rate_alpha = [&] {
        switch (chosen) {
        case G::irrelevant_linear: return lin.coefficients[0];
        case G::irrelevant_log_drift: return logd.coefficients[0];
        case G::marginal: return marg.coefficients[0];
        default: return 0.0;
        }
    }();
    gc.alpha = rate_alpha;
    switch (chosen) {
    case G::irrelevant_linear:
        gc.gamma = lin.coefficients[1];
        gc.law = {PredictedLaw::Form::exponential, 2.0 * gc.alpha, 0.0, 0.0};
        break;
    case G::irrelevant_log_drift:
        gc.beta = logd.coefficients[1];
        gc.gamma = logd.coefficients[2];
        gc.law = {PredictedLaw::Form::exponential, 2.0 * gc.alpha, 0.0, 0.0};
        break;
    case G::marginal:
        gc.epsilon = marg.coefficients[1] / marg.coefficients[0];
        gc.gamma = marg.coefficients[2];
        gc.law = {PredictedLaw::Form::exponential_power_log, 2.0 * gc.alpha, gc.epsilon, 0.0};
        break;
    case G::relevant_sublinear:
        gc.amplitude = pow.coefficients[0];
        gc.gamma_exp = pow.coefficients[1];
        gc.law = {PredictedLaw::Form::polynomial, 0.0, 0.0, 1.0 / (1.0 - gc.gamma_exp)};
        break;
    case G::undetermined: gc.candidates = tied; break;
    }
    return gc;
}

} // namespace kryloscope
