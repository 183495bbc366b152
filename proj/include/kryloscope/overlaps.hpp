#pragma once

// Generating states |z) = exp(z L+)|K0>: the overlap
//   (z|z) = sum_{n>=0} w^n / (n!)^2 prod_{m=1}^n b_m^2,   w = |z|^2,
// and its normalized Krylov moments, summed in the log domain.

#include "kryloscope/error.hpp"
#include "kryloscope/profile.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace kryloscope {

struct OverlapSeries {
    double modulus_sq = 0;
    std::vector<double> log_terms;     // ln of the n-th series term
    std::vector<double> partial_sums;  // running sums, relative to exp(log_scale)
    double log_scale = 0;              // partial_sums are multiplied by exp(log_scale)
    std::size_t truncation_n = 0;      // index of the last term kept
    double tail_estimate = 0;          // bound on the omitted tail relative to the sum
    bool terminated = false;           // chain ended, series is a finite polynomial

    [[nodiscard]] double log_value() const { return log_scale + std::log(partial_sums.back()); }
    [[nodiscard]] double value() const { return std::exp(log_value()); }
};

struct OverlapOptions {
    double tol = 1e-16;             // relative tail tolerance
    std::size_t max_terms = 1'000'000;
};

/// Sums the series until the tail bound term*r/(1-r) falls under tol * sum;
/// r is the current term ratio (below one), widened while it is rising.
inline OverlapSeries overlap_series(const LanczosProfile& profile, double w, const OverlapOptions& opt = {})
{
    if (!(w >= 0) || !std::isfinite(w)) throw domain_error("overlap: w must be finite and non-negative");
    if (!(opt.tol > 0)) throw validation_error("overlap: tolerance must be positive");
    OverlapSeries s;
    s.modulus_sq = w;
    s.log_terms.push_back(0.0);
    if (w == 0.0) {
        s.partial_sums.push_back(1.0);
        s.terminated = true;
        return s;
    }
    const double lw = std::log(w);
    double log_term = 0.0;
    double prev_ratio = INFINITY;
    std::size_t n = 0;
    bool converged = false;
    while (n + 1 < opt.max_terms) {
        const double b = profile.hopping(static_cast<long>(n + 1));
        if (b == 0.0) {
            s.terminated = true;
            converged = true;
            break;
        }
        // ratio of term n+1 to term n
        const double log_ratio = lw + 2.0 * std::log(b) - 2.0 * std::log(static_cast<double>(n + 1));
        log_term += log_ratio;
        ++n;
        s.log_terms.push_back(log_term);
        const double ratio = std::exp(log_ratio);
        if (ratio < 1.0) {
            // a rising ratio may keep rising, so bound it by the midpoint to one
            const double r = ratio <= prev_ratio * (1.0 + 1e-12) ? ratio : 0.5 * (1.0 + ratio);
            // the largest term bounds the sum from below
            const double lmax = *std::max_element(s.log_terms.begin(), s.log_terms.end());
            const double rel = std::exp(log_term - lmax) * r / (1.0 - r);
            if (rel < opt.tol) {
                s.tail_estimate = rel;
                converged = true;
                break;
            }
        }
        prev_ratio = ratio;
    }
    const double lmax = *std::max_element(s.log_terms.begin(), s.log_terms.end());
    s.log_scale = lmax;
    double acc = 0.0;
    for (double lt : s.log_terms) {
        acc += std::exp(lt - lmax);
        s.partial_sums.push_back(acc);
    }
    s.truncation_n = n;
    if (!converged) {
        throw numerical_error("overlap series did not converge within " + std::to_string(opt.max_terms) +
                              " terms; partial sum = " + std::to_string(s.value()));
    }
    return s;
}

inline double overlap(const LanczosProfile& profile, double w, const OverlapOptions& opt = {})
{
    return overlap_series(profile, w, opt).value();
}

/// sum n^m w^n/(n!)^2 prod b^2 divided by the overlap.
inline double overlap_moment(const LanczosProfile& profile, double w, int m, const OverlapOptions& opt = {})
{
    if (m < 0) throw domain_error("overlap_moment: m must be non-negative");
    const OverlapSeries s = overlap_series(profile, w, opt);
    if (m == 0) return 1.0;
    const double lmax = s.log_scale;
    double num = 0.0, den = 0.0;
    for (std::size_t n = 0; n < s.log_terms.size(); ++n) {
        const double t = std::exp(s.log_terms[n] - lmax);
        den += t;
        num += std::pow(static_cast<double>(n), m) * t;
    }
    return num / den;
}

} // namespace kryloscope
