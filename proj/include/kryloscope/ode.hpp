#pragma once

// Adaptive embedded Runge-Kutta 5(4) (Dormand-Prince) for real or complex
// state vectors. Steps are clipped so each call lands exactly on t1, which
// is how reporting grids are honoured without interpolation.

#include "kryloscope/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

namespace kryloscope {

struct OdeOptions {
    double rtol = 1e-10;
    double atol = 1e-12;
    double initial_step = 0.0; // 0: pick from the RHS scale
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 100'000'000;
};

struct OdeStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t rhs_calls = 0;
};

enum class OdeStatus { completed, stopped };

namespace detail {

inline double magnitude(double x) { return std::abs(x); }
inline double magnitude(const std::complex<double>& z) { return std::abs(z); }

} // namespace detail

/// Stateful stepper; keeps the last accepted step size between calls so a
/// sequence of report intervals does not restart the step-size search.
template <class T>
class DormandPrince45 {
public:
    using State = std::vector<T>;
    using Rhs = std::function<void(double, const State&, State&)>;
    /// Called after each accepted step; return false to stop.
    using Monitor = std::function<bool(double, const State&)>;

    DormandPrince45(Rhs rhs, OdeOptions opt = {}) : rhs_(std::move(rhs)), opt_(opt) {}

    [[nodiscard]] const OdeStats& stats() const noexcept { return stats_; }

    /// Advances y from t0 to t1 (either direction). On `stopped`, t holds the
    /// time of the last accepted step and y the state there.
    OdeStatus advance(State& y, double t0, double t1, double* t_reached = nullptr, const Monitor& monitor = {})
    {
        const std::size_t n = y.size();
        resize(n);
        double t = t0;
        if (t_reached) *t_reached = t;
        if (t1 == t0) return OdeStatus::completed;
        const double dir = t1 > t0 ? 1.0 : -1.0;
        call(t, y, k1_);
        if (h_ <= 0.0) h_ = opt_.initial_step > 0 ? opt_.initial_step : initial_step(y, std::abs(t1 - t0));
        std::size_t steps = 0;
        while (dir * (t1 - t) > 0.0) {
            if (++steps > opt_.max_steps) throw numerical_error("ODE integration exceeded max_steps");
            double h = std::min({h_, opt_.max_step, std::abs(t1 - t)});
            const bool last = h >= std::abs(t1 - t) * (1.0 - 1e-14);
            if (last) h = std::abs(t1 - t);
            const double err = trial(t, dir * h, y);
            if (!std::isfinite(err)) {
                h_ = h * 0.1;
                ++stats_.rejected;
                if (h_ < 1e-300) throw numerical_error("ODE step size underflow (non-finite RHS)");
                continue;
            }
            if (err <= 1.0) {
                t = last ? t1 : t + dir * h;
                y.swap(ynew_);
                k1_.swap(k7_); // FSAL
                ++stats_.accepted;
                const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                if (!last || fac < 1.0) h_ = h * fac;
                if (t_reached) *t_reached = t;
                if (monitor && !monitor(t, y)) return OdeStatus::stopped;
            } else {
                ++stats_.rejected;
                h_ = h * std::max(0.2, 0.9 * std::pow(err, -0.2));
                if (h_ < 1e-14 * std::max(1.0, std::abs(t))) throw numerical_error("ODE step size underflow");
            }
        }
        return OdeStatus::completed;
    }

private:
    void call(double t, const State& y, State& dy)
    {
        rhs_(t, y, dy);
        ++stats_.rhs_calls;
    }

    void resize(std::size_t n)
    {
        for (State* s : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &tmp_, &ynew_}) s->resize(n);
    }

    double initial_step(const State& y, double span)
    {
        double ymax = 0.0, fmax = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            ymax = std::max(ymax, detail::magnitude(y[i]));
            fmax = std::max(fmax, detail::magnitude(k1_[i]));
        }
        double h = fmax > 0 ? 0.01 * std::max(ymax, opt_.atol) / fmax : span * 1e-3;
        return std::min(h, span);
    }

    // One DP5(4) trial step; returns the scaled error norm and fills ynew_, k7_.
    double trial(double t, double h, const State& y)
    {
        constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
        constexpr double a21 = 1.0 / 5;
        constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
        constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
        constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
        constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                         a65 = -5103.0 / 18656;
        constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
        constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                         e6 = 22.0 / 525, e7 = -1.0 / 40;
        const std::size_t n = y.size();
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a21 * k1_[i]);
        call(t + c2 * h, tmp_, k2_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
        call(t + c3 * h, tmp_, k3_);
        for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h * (a41 * k1_[i] + a42 * k2_[i] + a43 * k3_[i]);
        call(t + c4 * h, tmp_, k4_);
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + h * (a51 * k1_[i] + a52 * k2_[i] + a53 * k3_[i] + a54 * k4_[i]);
        call(t + c5 * h, tmp_, k5_);
        for (std::size_t i = 0; i < n; ++i)
            tmp_[i] = y[i] + h * (a61 * k1_[i] + a62 * k2_[i] + a63 * k3_[i] + a64 * k4_[i] + a65 * k5_[i]);
        call(t + h, tmp_, k6_);
        for (std::size_t i = 0; i < n; ++i)
            ynew_[i] = y[i] + h * (b1 * k1_[i] + b3 * k3_[i] + b4 * k4_[i] + b5 * k5_[i] + b6 * k6_[i]);
        call(t + h, ynew_, k7_);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T e = h * (e1 * k1_[i] + e3 * k3_[i] + e4 * k4_[i] + e5 * k5_[i] + e6 * k6_[i] + e7 * k7_[i]);
            const double scale =
                opt_.atol + opt_.rtol * std::max(detail::magnitude(y[i]), detail::magnitude(ynew_[i]));
            err = std::max(err, detail::magnitude(e) / scale);
        }
        return err;
    }

    Rhs rhs_;
    OdeOptions opt_;
    OdeStats stats_;
    double h_ = 0.0;
    State k1_, k2_, k3_, k4_, k5_, k6_, k7_, tmp_, ynew_;
};

/// Evenly spaced grid 0, tmax/steps, ..., tmax.
inline std::vector<double> uniform_grid(double tmax, std::size_t steps)
{
    if (steps == 0 || !(tmax > 0)) throw validation_error("grid needs tmax > 0 and steps >= 1");
    std::vector<double> t(steps + 1);
    for (std::size_t i = 0; i <= steps; ++i) t[i] = tmax * static_cast<double>(i) / static_cast<double>(steps);
    return t;
}

} // namespace kryloscope
