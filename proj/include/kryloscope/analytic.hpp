#pragma once

// Closed forms for the two exactly solvable chains: square-root hopping
// (Poisson spreading) and the su(1,1) discrete series (negative binomial).

#include "kryloscope/error.hpp"
#include "kryloscope/profile.hpp"

#include <cmath>
#include <complex>

namespace kryloscope {

class ClosedFormModel {
public:
    enum class Kind { poisson, su11 };

    static ClosedFormModel poisson(double g)
    {
        if (!(g > 0)) throw domain_error("poisson model: g must be positive");
        return {Kind::poisson, g, 0.0};
    }
    static ClosedFormModel su11(double alpha, double k)
    {
        if (!(alpha > 0)) throw domain_error("su11 model: alpha must be positive");
        if (!(k > 0)) throw domain_error("su11 model: Bargmann index must be positive");
        return {Kind::su11, alpha, k};
    }

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] double g() const noexcept { return a_; }
    [[nodiscard]] double alpha() const noexcept { return a_; }
    [[nodiscard]] double k() const noexcept { return k_; }

    /// The Lanczos profile whose chain this model solves.
    [[nodiscard]] LanczosProfile profile() const
    {
        return kind_ == Kind::poisson ? LanczosProfile::sqrt_hopping(a_) : LanczosProfile::su11(a_, k_);
    }

    /// tau^2 = tanh^2(alpha t) (su11 only).
    [[nodiscard]] double tau_sq(double t) const
    {
        const double th = std::tanh(a_ * t);
        return th * th;
    }

    /// ln P(n, t); -inf where P vanishes. Extended precision keeps the
    /// lgamma cancellation at large n below double rounding.
    [[nodiscard]] double log_P(long n, double t) const
    {
        if (n < 0) return -INFINITY;
        using ld = long double;
        const ld nd = static_cast<ld>(n);
        if (kind_ == Kind::poisson) {
            const ld mu = static_cast<ld>(a_) * a_ * t * t;
            if (mu == 0.0L) return n == 0 ? 0.0 : -INFINITY;
            return static_cast<double>(-mu + nd * std::log(mu) - std::lgamma(nd + 1.0L));
        }
        const ld x = static_cast<ld>(a_) * t;
        if (x == 0.0L) return n == 0 ? 0.0 : -INFINITY;
        const ld r = 2.0L * k_;
        const ld log_binom = std::lgamma(nd + r) - std::lgamma(nd + 1.0L) - std::lgamma(r);
        const ld ax = std::abs(x);
        const ld log_cosh = ax + std::log1p(std::exp(-2.0L * ax)) - std::log(2.0L);
        return static_cast<double>(log_binom + 2.0L * nd * std::log(std::tanh(ax)) - 2.0L * r * log_cosh);
    }

    [[nodiscard]] double exact_P(long n, double t) const { return std::exp(log_P(n, t)); }

    [[nodiscard]] double exact_K(double t) const
    {
        if (kind_ == Kind::poisson) return a_ * a_ * t * t;
        const double s = std::sinh(a_ * t);
        return 2.0 * k_ * s * s;
    }

    /// Second cumulant: g^2 t^2 (Poisson) or 2k sinh^2 cosh^2 (negative binomial).
    [[nodiscard]] double exact_variance(double t) const
    {
        if (kind_ == Kind::poisson) return a_ * a_ * t * t;
        const double s = std::sinh(a_ * t), c = std::cosh(a_ * t);
        return 2.0 * k_ * s * s * c * c;
    }

    /// ln Z(chi, t) on the branch continuous from ln Z(chi, 0) = 0.
    [[nodiscard]] std::complex<double> log_Z(double chi, double t) const
    {
        const std::complex<double> phase = std::polar(1.0, chi);
        if (kind_ == Kind::poisson) return a_ * a_ * t * t * (phase - 1.0);
        const double x = a_ * t;
        const double tsq = tau_sq(t);
        // ln(1 - tau^2) = -2 ln cosh; 1 - e^{i chi} tau^2 has positive real part
        return 2.0 * k_ * (-2.0 * log_cosh(x) - std::log(1.0 - phase * tsq));
    }

    [[nodiscard]] std::complex<double> exact_Z(double chi, double t) const
    {
        if (chi == 0.0) return {1.0, 0.0};
        return std::exp(log_Z(chi, t));
    }

    /// Leading late-time behaviour (k/2) e^{2 alpha t} of the su11 complexity.
    [[nodiscard]] double late_time_K(double t) const
    {
        if (kind_ != Kind::su11) throw domain_error("late_time_K is defined for the su11 model");
        return 0.5 * k_ * std::exp(2.0 * a_ * t);
    }

    /// d ln K / dt.
    [[nodiscard]] double growth_rate(double t) const
    {
        if (kind_ == Kind::poisson) return 2.0 / t;
        return 2.0 * a_ / std::tanh(a_ * t);
    }

private:
    ClosedFormModel(Kind kind, double a, double k) : kind_(kind), a_(a), k_(k) {}

    static double log_cosh(double x)
    {
        const double ax = std::abs(x);
        return ax + std::log1p(std::exp(-2.0 * ax)) - std::log(2.0);
    }

    Kind kind_;
    double a_;
    double k_;
};

} // namespace kryloscope
