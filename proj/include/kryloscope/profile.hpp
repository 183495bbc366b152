#pragma once

// Lanczos-coefficient profiles: the analytic families used throughout the
// library plus tabulated sequences (from files or from tridiagonalization).

#include "kryloscope/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace kryloscope {

enum class ProfileKind {
    sqrt_hopping, // b_n = g sqrt(n)
    su11,         // b_n = alpha sqrt(n (n - 1 + 2k))
    linear_shift, // b_n = alpha n + gamma
    log_drift,    // b_n = alpha n + beta ln n
    marginal,     // b_n = alpha n (1 + eps / ln n), n >= 2
    power_law,    // b_n = A n^gamma_exp
    crossover,    // b_n = alpha n x/(1+x) + gamma, x = n/n_star
    tabulated,
};

inline std::string_view to_string(ProfileKind k)
{
    switch (k) {
    case ProfileKind::sqrt_hopping: return "sqrt_hopping";
    case ProfileKind::su11: return "su11";
    case ProfileKind::linear_shift: return "linear_shift";
    case ProfileKind::log_drift: return "log_drift";
    case ProfileKind::marginal: return "marginal";
    case ProfileKind::power_law: return "power_law";
    case ProfileKind::crossover: return "crossover";
    case ProfileKind::tabulated: return "tabulated";
    }
    return "unknown";
}

namespace detail {

/// Fritsch-Carlson monotone cubic (PCHIP) slopes on unit-spaced knots.
inline std::vector<double> pchip_slopes(const std::vector<double>& y)
{
    const std::size_t m = y.size();
    std::vector<double> d(m, 0.0);
    if (m < 2) return d;
    std::vector<double> delta(m - 1);
    for (std::size_t i = 0; i + 1 < m; ++i) delta[i] = y[i + 1] - y[i];
    if (m == 2) {
        d[0] = d[1] = delta[0];
        return d;
    }
    for (std::size_t i = 1; i + 1 < m; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d[i] = 0.0;
        } else {
            d[i] = 2.0 / (1.0 / delta[i - 1] + 1.0 / delta[i]);
        }
    }
    auto endpoint = [](double d0, double d1) {
        double s = (3.0 * d0 - d1) / 2.0;
        if (s * d0 <= 0.0) return 0.0;
        if (d0 * d1 <= 0.0 && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
        return s;
    };
    d[0] = endpoint(delta[0], delta[1]);
    d[m - 1] = endpoint(delta[m - 2], delta[m - 3]);
    return d;
}

} // namespace detail

/// A Lanczos-coefficient sequence b_n (n >= 1, b_0 = 0) with optional
/// diagonal a_n (n >= 0). Immutable after construction.
class LanczosProfile {
public:
    static LanczosProfile sqrt_hopping(double g)
    {
        require(g > 0, "sqrt_hopping: g must be positive");
        return {ProfileKind::sqrt_hopping, {g, 0, 0}};
    }
    static LanczosProfile su11(double alpha, double k)
    {
        require(alpha > 0, "su11: alpha must be positive");
        require(k > 0, "su11: Bargmann index k must be positive");
        return {ProfileKind::su11, {alpha, k, 0}};
    }
    static LanczosProfile linear_shift(double alpha, double gamma)
    {
        require(alpha > 0, "linear_shift: alpha must be positive");
        require(alpha + gamma >= 0, "linear_shift: b_1 would be negative");
        return {ProfileKind::linear_shift, {alpha, gamma, 0}};
    }
    static LanczosProfile log_drift(double alpha, double beta)
    {
        require(alpha > 0, "log_drift: alpha must be positive");
        return {ProfileKind::log_drift, {alpha, beta, 0}};
    }
    static LanczosProfile marginal(double alpha, double epsilon)
    {
        require(alpha > 0, "marginal: alpha must be positive");
        require(1.0 + epsilon / std::log(2.0) >= 0, "marginal: b_2 would be negative");
        return {ProfileKind::marginal, {alpha, epsilon, 0}};
    }
    static LanczosProfile power_law(double amplitude, double gamma_exp)
    {
        require(amplitude > 0, "power_law: amplitude must be positive");
        require(gamma_exp > 0, "power_law: exponent must be positive");
        return {ProfileKind::power_law, {amplitude, gamma_exp, 0}};
    }
    static LanczosProfile crossover(double alpha, double gamma, double n_star)
    {
        require(alpha > 0, "crossover: alpha must be positive");
        require(gamma >= 0, "crossover: gamma must be non-negative");
        require(n_star > 0, "crossover: n_star must be positive");
        return {ProfileKind::crossover, {alpha, gamma, n_star}};
    }
    /// values[i] = b_{i+1}; diagonal[i] = a_i (may be empty).
    static LanczosProfile tabulated(std::vector<double> values, std::vector<double> diagonal = {})
    {
        for (double v : values) {
            if (!std::isfinite(v) || v < 0) throw validation_error("tabulated: b_n must be finite and non-negative");
        }
        for (double a : diagonal) {
            if (!std::isfinite(a)) throw validation_error("tabulated: a_n must be finite");
        }
        LanczosProfile p{ProfileKind::tabulated, {0, 0, 0}};
        p.values_ = std::move(values);
        p.diagonal_ = std::move(diagonal);
        std::vector<double> knots(p.values_.size() + 1, 0.0);
        std::copy(p.values_.begin(), p.values_.end(), knots.begin() + 1);
        p.slopes_ = detail::pchip_slopes(knots);
        return p;
    }

    [[nodiscard]] ProfileKind kind() const noexcept { return kind_; }
    [[nodiscard]] bool is_analytic() const noexcept { return kind_ != ProfileKind::tabulated; }
    [[nodiscard]] double param(std::size_t i) const { return par_.at(i); }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& diagonal() const noexcept { return diagonal_; }

    /// Number of tabulated coefficients (0 for analytic families).
    [[nodiscard]] std::size_t n_max() const noexcept { return values_.size(); }

    /// Growth scale alpha for families that have one (0 otherwise).
    [[nodiscard]] double alpha() const noexcept
    {
        switch (kind_) {
        case ProfileKind::su11:
        case ProfileKind::linear_shift:
        case ProfileKind::log_drift:
        case ProfileKind::marginal:
        case ProfileKind::crossover: return par_[0];
        default: return 0.0;
        }
    }

    /// Hopping amplitude b_n used by the chain; b_0 = 0 and tabulated
    /// profiles return 0 past their end (the chain terminates there).
    [[nodiscard]] double hopping(long n) const
    {
        if (n <= 0) return 0.0;
        if (kind_ == ProfileKind::tabulated) {
            return static_cast<std::size_t>(n) <= values_.size() ? values_[static_cast<std::size_t>(n - 1)] : 0.0;
        }
        return b(static_cast<double>(n));
    }

    /// Diagonal a_n (zero unless supplied).
    [[nodiscard]] double onsite(long n) const
    {
        if (n < 0 || static_cast<std::size_t>(n) >= diagonal_.size()) return 0.0;
        return diagonal_[static_cast<std::size_t>(n)];
    }

    /// Continuous-n evaluation. Marginal is extended linearly below n=2;
    /// tabulated profiles use monotone cubic interpolation with b(0)=0.
    [[nodiscard]] double b(double n) const
    {
        const double p0 = par_[0], p1 = par_[1], p2 = par_[2];
        switch (kind_) {
        case ProfileKind::sqrt_hopping: return p0 * std::sqrt(std::max(n, 0.0));
        case ProfileKind::su11: return p0 * std::sqrt(std::max(n * (n - 1.0 + 2.0 * p1), 0.0));
        case ProfileKind::linear_shift: return p0 * n + p1;
        case ProfileKind::log_drift: return p0 * n + p1 * std::log(n);
        case ProfileKind::marginal:
            if (n < 2.0) return marginal_core(2.0) * n / 2.0;
            return marginal_core(n);
        case ProfileKind::power_law: return p0 * std::pow(std::max(n, 0.0), p1);
        case ProfileKind::crossover: return p0 * n * n / (n + p2) + p1;
        case ProfileKind::tabulated: return interpolate(n);
        }
        return 0.0;
    }

    /// db/dn. Tabulated profiles use the central difference of b at n±1
    /// (one-sided at the table ends).
    [[nodiscard]] double b_prime(double n) const
    {
        const double p0 = par_[0], p1 = par_[1], p2 = par_[2];
        switch (kind_) {
        case ProfileKind::sqrt_hopping: return p0 / (2.0 * std::sqrt(n));
        case ProfileKind::su11: {
            const double c = 2.0 * p1 - 1.0;
            const double q = n * (n + c);
            return p0 * (2.0 * n + c) / (2.0 * std::sqrt(q));
        }
        case ProfileKind::linear_shift: return p0;
        case ProfileKind::log_drift: return p0 + p1 / n;
        case ProfileKind::marginal: {
            if (n < 2.0) return marginal_core(2.0) / 2.0;
            const double l = std::log(n);
            return p0 * (1.0 + p1 / l - p1 / (l * l));
        }
        case ProfileKind::power_law: return p0 * p1 * std::pow(n, p1 - 1.0);
        case ProfileKind::crossover: {
            const double s = n + p2;
            return p0 * (n * n + 2.0 * n * p2) / (s * s);
        }
        case ProfileKind::tabulated: return table_difference(n, 1);
        }
        return 0.0;
    }

    /// d^2b/dn^2 (second difference for tabulated profiles).
    [[nodiscard]] double b_second(double n) const
    {
        const double p0 = par_[0], p1 = par_[1], p2 = par_[2];
        switch (kind_) {
        case ProfileKind::sqrt_hopping: return -p0 / (4.0 * n * std::sqrt(n));
        case ProfileKind::su11: {
            const double c = 2.0 * p1 - 1.0;
            const double q = n * (n + c);
            const double dq = 2.0 * n + c;
            return p0 * (1.0 / std::sqrt(q) - dq * dq / (4.0 * q * std::sqrt(q)));
        }
        case ProfileKind::linear_shift: return 0.0;
        case ProfileKind::log_drift: return -p1 / (n * n);
        case ProfileKind::marginal: {
            if (n < 2.0) return 0.0;
            const double l = std::log(n);
            return p0 * p1 * (-1.0 / (n * l * l) + 2.0 / (n * l * l * l));
        }
        case ProfileKind::power_law: return p0 * p1 * (p1 - 1.0) * std::pow(n, p1 - 2.0);
        case ProfileKind::crossover: {
            const double s = n + p2;
            return p0 * 2.0 * p2 * p2 / (s * s * s);
        }
        case ProfileKind::tabulated: return table_difference(n, 2);
        }
        return 0.0;
    }

    /// Canonical spec string, e.g. "su11:alpha=1,k=0.5".
    [[nodiscard]] std::string describe() const
    {
        auto num = [](double x) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", x);
            return std::string(buf);
        };
        switch (kind_) {
        case ProfileKind::sqrt_hopping: return "sqrt_hopping:g=" + num(par_[0]);
        case ProfileKind::su11: return "su11:alpha=" + num(par_[0]) + ",k=" + num(par_[1]);
        case ProfileKind::linear_shift: return "linear_shift:alpha=" + num(par_[0]) + ",gamma=" + num(par_[1]);
        case ProfileKind::log_drift: return "log_drift:alpha=" + num(par_[0]) + ",beta=" + num(par_[1]);
        case ProfileKind::marginal: return "marginal:alpha=" + num(par_[0]) + ",epsilon=" + num(par_[1]);
        case ProfileKind::power_law: return "power_law:amplitude=" + num(par_[0]) + ",gamma_exp=" + num(par_[1]);
        case ProfileKind::crossover:
            return "crossover:alpha=" + num(par_[0]) + ",gamma=" + num(par_[1]) + ",n_star=" + num(par_[2]);
        case ProfileKind::tabulated: return "tabulated:n_max=" + std::to_string(values_.size());
        }
        return "unknown";
    }

private:
    LanczosProfile(ProfileKind k, std::array<double, 3> p) : kind_(k), par_(p) {}

    static void require(bool ok, const char* msg)
    {
        if (!ok) throw domain_error(msg);
    }

    [[nodiscard]] double marginal_core(double n) const { return par_[0] * n * (1.0 + par_[1] / std::log(n)); }

    // Cubic Hermite on knots 0..L with b(0) = 0.
    [[nodiscard]] double interpolate(double n) const
    {
        const double last = static_cast<double>(values_.size());
        if (n < 0.0 || n > last) throw index_error("tabulated profile evaluated outside [0, n_max]");
        auto knot = [this](std::size_t i) { return i == 0 ? 0.0 : values_[i - 1]; };
        std::size_t i = static_cast<std::size_t>(std::floor(n));
        if (i >= values_.size()) i = values_.size() == 0 ? 0 : values_.size() - 1;
        const double s = n - static_cast<double>(i);
        const double y0 = knot(i), y1 = values_.empty() ? 0.0 : knot(i + 1);
        const double d0 = slopes_[i], d1 = slopes_.size() > i + 1 ? slopes_[i + 1] : 0.0;
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        return h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
    }

    [[nodiscard]] double table_difference(double n, int order) const
    {
        const double last = static_cast<double>(values_.size());
        if (n < 1.0 || n > last) throw index_error("tabulated derivative outside [1, n_max]");
        const bool lo = n - 1.0 < 1.0, hi = n + 1.0 > last;
        if (order == 1) {
            if (lo && hi) return 0.0;
            if (lo) return b(n + 1.0) - b(n);
            if (hi) return b(n) - b(n - 1.0);
            return (b(n + 1.0) - b(n - 1.0)) / 2.0;
        }
        if (lo || hi) return 0.0;
        return b(n + 1.0) - 2.0 * b(n) + b(n - 1.0);
    }

    ProfileKind kind_;
    std::array<double, 3> par_;
    std::vector<double> values_;
    std::vector<double> diagonal_;
    std::vector<double> slopes_;
};

/// Strict b_n query: n >= 1; marginal requires n >= 2; tabulated requires n <= n_max.
inline double eval_b(const LanczosProfile& profile, long n)
{
    if (n < 1) throw domain_error("eval_b: n must be >= 1");
    if (profile.kind() == ProfileKind::marginal && n < 2) throw domain_error("eval_b: marginal family is defined for n >= 2");
    if (profile.kind() == ProfileKind::tabulated && static_cast<std::size_t>(n) > profile.n_max()) {
        throw index_error("eval_b: n=" + std::to_string(n) + " beyond tabulated n_max=" + std::to_string(profile.n_max()));
    }
    return profile.hopping(n);
}

inline double eval_b_prime(const LanczosProfile& profile, double n)
{
    if (n < 1.0) throw domain_error("eval_b_prime: n must be >= 1");
    return profile.b_prime(n);
}

// ---------------------------------------------------------------------------
// Profile text formats

inline constexpr std::string_view profile_magic = "# kryloscope-profile v1";

/// Writes the two-column (n, b_n) CSV with the magic header line.
inline void write_profile_csv(std::ostream& out, const LanczosProfile& profile, std::size_t n_max = 0)
{
    const std::size_t count = profile.kind() == ProfileKind::tabulated ? profile.n_max() : n_max;
    out << profile_magic << '\n' << "n,b_n\n";
    char buf[64];
    for (std::size_t n = 1; n <= count; ++n) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", n, profile.hopping(static_cast<long>(n)));
        out << buf;
    }
}

/// Reads a profile CSV. Rows must be consecutive n = 1, 2, ...
inline LanczosProfile read_profile_csv(std::istream& in)
{
    std::string line;
    int lineno = 0;
    bool saw_magic = false;
    std::vector<double> values;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!saw_magic) {
            if (line != profile_magic) throw parse_error("expected header '" + std::string(profile_magic) + "'", lineno);
            saw_magic = true;
            continue;
        }
        if (line[0] == '#') continue;
        if (line.rfind("n,", 0) == 0) continue; // column header
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw parse_error("expected 'n,b_n'", lineno);
        long n = 0;
        double v = 0;
        try {
            std::size_t used = 0;
            n = std::stol(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("n");
            const std::string rest = line.substr(comma + 1);
            v = std::stod(rest, &used);
            if (rest.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument("b");
        } catch (const std::exception&) {
            throw parse_error("malformed row '" + line + "'", lineno);
        }
        if (n != static_cast<long>(values.size()) + 1) {
            throw parse_error("expected n=" + std::to_string(values.size() + 1) + ", got " + std::to_string(n), lineno);
        }
        if (!std::isfinite(v) || v < 0) throw parse_error("b_n must be finite and non-negative", lineno);
        values.push_back(v);
    }
    if (!saw_magic) throw parse_error("empty profile file", lineno);
    if (values.empty()) throw parse_error("profile has no rows", lineno);
    return LanczosProfile::tabulated(std::move(values));
}

/// Parses "family:key=value,..." or a path to a profile CSV.
inline LanczosProfile parse_profile_spec(const std::string& spec)
{
    const auto colon = spec.find(':');
    const std::string family = colon == std::string::npos ? spec : spec.substr(0, colon);
    static const std::map<std::string, std::vector<std::string>> families = {
        {"sqrt_hopping", {"g"}},
        {"su11", {"alpha", "k"}},
        {"linear_shift", {"alpha", "gamma"}},
        {"log_drift", {"alpha", "beta"}},
        {"marginal", {"alpha", "epsilon"}},
        {"power_law", {"amplitude", "gamma_exp"}},
        {"crossover", {"alpha", "gamma", "n_star"}},
    };
    const auto it = families.find(family);
    if (it == families.end()) {
        std::ifstream file(spec);
        if (!file) throw validation_error("unknown profile family or unreadable file: '" + spec + "'");
        return read_profile_csv(file);
    }
    std::map<std::string, double> kv;
    std::stringstream rest(colon == std::string::npos ? std::string{} : spec.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw validation_error("profile parameter '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        if (std::find(it->second.begin(), it->second.end(), key) == it->second.end()) {
            throw validation_error("unknown parameter '" + key + "' for family " + family);
        }
        try {
            kv[key] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            throw validation_error("bad number in '" + item + "'");
        }
    }
    auto get = [&](const std::string& k) {
        const auto f = kv.find(k);
        if (f == kv.end()) throw validation_error("missing parameter '" + k + "' for family " + family);
        return f->second;
    };
    if (family == "sqrt_hopping") return LanczosProfile::sqrt_hopping(get("g"));
    if (family == "su11") return LanczosProfile::su11(get("alpha"), get("k"));
    if (family == "linear_shift") return LanczosProfile::linear_shift(get("alpha"), get("gamma"));
    if (family == "log_drift") return LanczosProfile::log_drift(get("alpha"), get("beta"));
    if (family == "marginal") return LanczosProfile::marginal(get("alpha"), get("epsilon"));
    if (family == "power_law") return LanczosProfile::power_law(get("amplitude"), get("gamma_exp"));
    return LanczosProfile::crossover(get("alpha"), get("gamma"), get("n_star"));
}

} // namespace kryloscope
