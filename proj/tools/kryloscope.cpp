// kryloscope command-line driver.

#include "kryloscope/kryloscope.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace kryloscope;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_flagged = 1;
constexpr int exit_config = 2;

// ---------------------------------------------------------------------------
// shared options and run bookkeeping

struct OutputOptions {
    std::string out_dir;
    std::string out;
    std::string format = "csv";
    bool allow_flagged = false;
    bool quiet = false;
};

struct Run {
    std::string subcommand;
    fs::path primary;
    std::string format;
    json manifest;
    std::vector<std::string> flags;

    void flag(std::string reason) { flags.push_back(std::move(reason)); }

    fs::path path_for(const std::string& suffix) const
    {
        if (suffix.empty()) return primary;
        fs::path p = primary;
        p.replace_filename(primary.stem().string() + "_" + suffix + primary.extension().string());
        return p;
    }

    void write(const Table& t, const std::string& suffix = {})
    {
        const fs::path p = path_for(suffix);
        write_table(p, t, format);
        manifest["artifacts"].push_back(p.string());
    }
};

fs::path resolve_out_dir(const OutputOptions& o)
{
    if (!o.out_dir.empty()) return o.out_dir;
    if (const char* env = std::getenv("KRYLOSCOPE_OUT_DIR"); env && *env) return env;
    return ".";
}

std::string join(const std::vector<std::string>& v, const std::string& sep)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

// effective value of every named option of a subcommand, for the manifest
json echo_options(const CLI::App& sub)
{
    json cfg = json::object();
    for (const CLI::Option* o : sub.get_options()) {
        if (o->get_lnames().empty()) continue;
        const std::string& name = o->get_lnames().front();
        if (name == "help") continue;
        if (o->get_expected_min() == 0) {
            cfg[name] = o->count() > 0;
        } else if (o->count() > 0) {
            cfg[name] = join(o->results(), " ");
        } else {
            cfg[name] = o->get_default_str();
        }
    }
    return cfg;
}

json profile_json(const LanczosProfile& p)
{
    json j{{"describe", p.describe()}, {"family", std::string(to_string(p.kind()))}};
    if (p.kind() == ProfileKind::tabulated) {
        json vals = json::array();
        for (double v : p.values()) vals.push_back(json_number(v));
        j["values"] = vals;
    }
    return j;
}

void require_positive(double v, const std::string& name)
{
    if (!(v > 0) || !std::isfinite(v)) throw validation_error(name + " must be positive and finite");
}

void require_count(std::size_t v, const std::string& name)
{
    if (v == 0) throw validation_error(name + " must be at least 1");
}

Mat2 parse_noise(const std::string& s)
{
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(parse_double(item));
        } catch (const std::exception&) {
            throw validation_error("noise entry '" + item + "' is not a number");
        }
    }
    if (v.size() != 3) throw validation_error("noise must be 'Dnn,Dnp,Dpp'");
    Mat2 d;
    d << v[0], v[1], v[1], v[2];
    validate_noise(d);
    return d;
}

std::vector<double> parse_list(const std::string& s, const std::string& name)
{
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(parse_double(item));
        } catch (const std::exception&) {
            throw validation_error(name + " entry '" + item + "' is not a number");
        }
    }
    if (v.empty()) throw validation_error(name + " must not be empty");
    return v;
}

// ---------------------------------------------------------------------------
// evolve

struct EvolveArgs {
    std::string profile;
    double tmax = 1.0;
    std::size_t steps = 10;
    std::size_t sites = 0;
    double leakage_tol = 1e-10;
    double rtol = 1e-10;
    double atol = 1e-13;
    bool distribution = false;
};

ChainOptions chain_options(std::size_t sites, double leakage_tol, double rtol, double atol)
{
    require_positive(leakage_tol, "leakage-tol");
    require_positive(rtol, "rtol");
    require_positive(atol, "atol");
    ChainOptions opt;
    if (sites > 0) opt.sites = sites;
    opt.leakage_tol = leakage_tol;
    opt.ode.rtol = rtol;
    opt.ode.atol = atol;
    return opt;
}

void run_evolve(const EvolveArgs& a, Run& run)
{
    require_positive(a.tmax, "tmax");
    require_count(a.steps, "steps");
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    const ChainTrajectory traj =
        evolve_chain(prof, uniform_grid(a.tmax, a.steps), chain_options(a.sites, a.leakage_tol, a.rtol, a.atol));
    if (!traj.valid) run.flag(traj.flag);
    const auto K = complexity(traj);
    Table t;
    t.columns = {"t", "K", "variance", "norm_drift", "boundary_leakage"};
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
        t.add_row({traj.times[i], K[i], variance(traj, i), traj.norm_drift[i], traj.boundary_leakage[i]});
    }
    run.write(t);
    if (a.distribution) {
        Table d;
        d.columns = {"t", "n", "P"};
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            const auto p = traj.probabilities(i);
            for (std::size_t n = 0; n < p.size(); ++n) d.add_row({traj.times[i], static_cast<double>(n), p[n]});
        }
        run.write(d, "distribution");
    }
    run.manifest["results"] = {{"truncation_N", traj.truncation_N},
                               {"attempts", traj.attempts},
                               {"natural_end", traj.natural_end},
                               {"K_final", json_number(K.back())},
                               {"ode_accepted", traj.stats.accepted},
                               {"ode_rejected", traj.stats.rejected}};
}

// ---------------------------------------------------------------------------
// fcs

struct FcsArgs {
    std::string profile;
    double tmax = 1.0;
    std::size_t steps = 10;
    std::size_t sites = 0;
    std::size_t chi_points = 64;
    int cumulant_order = 4;
    double s_min = -1.0;
    double s_max = 0.5;
    std::size_t s_points = 61;
    double window_fraction = 1.0 / 3.0;
};

void run_fcs(const FcsArgs& a, Run& run)
{
    require_positive(a.tmax, "tmax");
    require_count(a.steps, "steps");
    require_count(a.chi_points, "chi-points");
    if (a.s_points < 2 || !(a.s_max > a.s_min)) throw validation_error("s grid needs s-max > s-min and at least 2 points");
    if (!(a.window_fraction > 0 && a.window_fraction <= 1)) throw validation_error("window must lie in (0, 1]");
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    const ChainTrajectory traj = evolve_chain(prof, uniform_grid(a.tmax, a.steps), chain_options(a.sites, 1e-10, 1e-10, 1e-13));
    if (!traj.valid) run.flag(traj.flag);
    const CountingReport rep = counting_function(traj, chi_grid(a.chi_points), a.cumulant_order);

    Table z;
    z.columns = {"t", "chi", "re_Z", "im_Z", "re_Z_phase_rotation", "im_Z_phase_rotation"};
    double identity_err = 0;
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        for (std::size_t j = 0; j < rep.chi_grid.size(); ++j) {
            const cplx zr = counting_from_phase_rotation(traj.amplitudes[i], rep.chi_grid[j]);
            identity_err = std::max(identity_err, std::abs(zr - rep.Z[i][j]));
            z.add_row({rep.times[i], rep.chi_grid[j], rep.Z[i][j].real(), rep.Z[i][j].imag(), zr.real(), zr.imag()});
        }
    }
    run.write(z);

    Table k;
    k.columns = {"t"};
    for (int m = 1; m <= a.cumulant_order; ++m) k.columns.push_back("kappa_" + std::to_string(m));
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        std::vector<double> row{rep.times[i]};
        row.insert(row.end(), rep.cumulants[i].begin(), rep.cumulants[i].end());
        k.add_row(row);
    }
    run.write(k, "cumulants");

    Table fe;
    fe.columns = {"chi", "re_psi", "im_psi", "re_drift", "im_drift", "relative_change", "converged"};
    for (std::size_t j = 0; j < rep.chi_grid.size(); ++j) {
        const FreeEnergyEstimate est = free_energy_estimate(rep, j, a.window_fraction);
        fe.add_row({rep.chi_grid[j], est.window_mean.real(), est.window_mean.imag(), est.drift.real(), est.drift.imag(),
                    est.relative_change, est.converged ? 1.0 : 0.0});
    }
    run.write(fe, "free_energy");

    const RateFunction rf = rate_function(traj, traj.times.size() - 1, linspace(a.s_min, a.s_max, a.s_points));
    Table scgf;
    scgf.columns = {"s", "scgf", "scgf_slope"};
    for (std::size_t i = 0; i < rf.s_grid.size(); ++i) scgf.add_row({rf.s_grid[i], rf.scgf[i], rf.scgf_slope[i]});
    run.write(scgf, "scgf");
    Table rate;
    rate.columns = {"v", "phi", "attained"};
    for (std::size_t i = 0; i < rf.v_grid.size(); ++i) rate.add_row({rf.v_grid[i], rf.phi[i], rf.attained[i] ? 1.0 : 0.0});
    run.write(rate, "rate");

    run.manifest["results"] = {{"truncation_N", traj.truncation_N},
                               {"phase_rotation_max_abs_difference", json_number(identity_err)},
                               {"rate_function_time", json_number(rf.t)},
                               {"typical_velocity", json_number(rf.typical_v)}};
}

// ---------------------------------------------------------------------------
// semiclassics

struct SemiArgs {
    std::string profile;
    double n0 = 1.0;
    double p0 = -std::numbers::pi / 2;
    double tmax = 5.0;
    std::size_t steps = 100;
    double rtol = 1e-12;
    double atol = 1e-14;
};

void run_semiclassics(const SemiArgs& a, Run& run)
{
    require_positive(a.tmax, "tmax");
    require_count(a.steps, "steps");
    require_positive(a.rtol, "rtol");
    require_positive(a.atol, "atol");
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    HamiltonOptions opt;
    opt.ode.rtol = a.rtol;
    opt.ode.atol = a.atol;
    const PhaseTrajectory tr = integrate_hamilton(prof, a.n0, a.p0, uniform_grid(a.tmax, a.steps), opt);
    if (!tr.valid) run.flag(tr.flag);
    Table t;
    t.columns = {"t", "n", "p", "p_unwrapped", "H"};
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        t.add_row({tr.times[i], tr.n_path[i], tr.p_path[i], tr.p_unwrapped[i], tr.conserved_H[i]});
    }
    run.write(t);
    double drift = 0;
    for (double h : tr.conserved_H) drift = std::max(drift, std::abs(h - tr.conserved_H.front()));
    json res{{"max_energy_drift", json_number(drift)}};
    if (tr.has_lyapunov_fit) {
        res["lyapunov_rate"] = json_number(tr.lyapunov_fit.slope);
        res["lyapunov_r_squared"] = json_number(tr.lyapunov_fit.r_squared);
    }
    run.manifest["results"] = res;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyArgs {
    std::string profile;
    double n_min = 10;
    double n_max = 1e4;
    std::size_t samples = 200;
    double tie_ratio = 1.1;
};

void run_classify(const ClassifyArgs& a, Run& run)
{
    require_count(a.samples, "samples");
    if (a.samples < 10) throw validation_error("samples must be at least 10");
    require_positive(a.tie_ratio, "tie-ratio");
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    const GrowthClass gc = classify_growth(prof, a.n_min, a.n_max, a.samples, a.tie_ratio);
    Table t;
    t.columns = {"n", "b", "lambda_eff"};
    for (std::size_t i = 0; i < gc.n_probe.size(); ++i) t.add_row({gc.n_probe[i], prof.b(gc.n_probe[i]), gc.lambda_eff[i]});
    run.write(t);
    json fits = json::array();
    for (const ModelFit& f : gc.fits) {
        json c = json::array();
        for (double v : f.coefficients) c.push_back(json_number(v));
        fits.push_back({{"model", std::string(to_string(f.model))}, {"coefficients", c},
                        {"residual", json_number(f.residual)}, {"parameters", f.parameters}});
    }
    json cands = json::array();
    for (auto k : gc.candidates) cands.push_back(std::string(to_string(k)));
    const char* forms[] = {"exponential", "exponential_power_log", "polynomial", "unknown"};
    run.manifest["results"] = {
        {"class", std::string(to_string(gc.kind))},
        {"alpha", json_number(gc.alpha)},
        {"gamma", json_number(gc.gamma)},
        {"beta", json_number(gc.beta)},
        {"epsilon", json_number(gc.epsilon)},
        {"amplitude", json_number(gc.amplitude)},
        {"gamma_exp", json_number(gc.gamma_exp)},
        {"law", {{"form", forms[static_cast<int>(gc.law.form)]}, {"rate", json_number(gc.law.rate)},
                 {"power", json_number(gc.law.power)}, {"exponent", json_number(gc.law.exponent)}}},
        {"fits", fits},
        {"candidates", cands}};
    if (gc.kind == GrowthClassKind::undetermined) run.flag("classification undetermined");
}

// ---------------------------------------------------------------------------
// fluct

struct FluctArgs {
    std::string profile;
    double n0 = 1.0;
    double p0 = -std::numbers::pi / 2;
    double tmax = 1.0;
    std::size_t steps = 10;
    std::string noise = "1,0,1";
    std::size_t mc_samples = 0;
    std::optional<std::uint64_t> seed;
    double mc_dt = 0;
    std::size_t mc_batches = 8;
    bool mc_convergence = false;
};

void run_fluct(const FluctArgs& a, Run& run)
{
    require_positive(a.tmax, "tmax");
    require_count(a.steps, "steps");
    const Mat2 D = parse_noise(a.noise);
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    const PhaseTrajectory saddle = integrate_hamilton(prof, a.n0, a.p0, uniform_grid(a.tmax, a.steps));
    const FluctuationReport fr = covariance_evolution(prof, saddle, D);
    if (!fr.valid) run.flag(fr.flag);

    std::optional<MonteCarloReport> mc;
    if (a.mc_samples > 0) {
        if (!a.seed) throw validation_error("a Monte Carlo run needs --seed");
        if (a.mc_dt < 0) throw validation_error("mc-dt must be non-negative (0 selects 1e-3/alpha)");
        require_count(a.mc_batches, "mc-batches");
        if (!fr.valid) throw numerical_error("Monte Carlo skipped: " + fr.flag);
        MonteCarloOptions opt;
        opt.samples = a.mc_samples;
        opt.seed = *a.seed;
        opt.dt = a.mc_dt;
        opt.batches = a.mc_batches;
        opt.convergence_check = a.mc_convergence;
        mc = monte_carlo_covariance(prof, saddle, D, opt);
    }

    Table t;
    t.columns = {"t", "n", "p", "cov_nn", "cov_np", "cov_pp", "G_nn", "G_np", "G_pn", "G_pp"};
    if (mc) {
        for (const char* c : {"mc_cov_nn", "mc_cov_np", "mc_cov_pp", "mc_se_nn", "mc_se_np", "mc_se_pp"}) t.columns.push_back(c);
    }
    for (std::size_t i = 0; i < fr.times.size(); ++i) {
        const Mat2& c = fr.covariance[i];
        const Mat2& g = fr.propagator[i];
        std::vector<double> row{fr.times[i], fr.n_saddle[i], fr.p_saddle[i], c(0, 0), c(0, 1), c(1, 1), g(0, 0), g(0, 1), g(1, 0), g(1, 1)};
        if (mc) {
            const Mat2& m = mc->covariance[i];
            const Mat2& s = mc->standard_error[i];
            row.insert(row.end(), {m(0, 0), m(0, 1), m(1, 1), s(0, 0), s(0, 1), s(1, 1)});
        }
        t.add_row(row);
    }
    run.write(t);
    json res{{"noise", {{"nn", D(0, 0)}, {"np", D(0, 1)}, {"pp", D(1, 1)}}}, {"psd_projections", fr.psd_projections}};
    if (mc) {
        res["mc_dt"] = json_number(mc->dt);
        res["mc_samples"] = mc->samples;
        res["mc_seed"] = mc->seed;
        res["mc_dt_halving_change"] = json_number(mc->dt_halving_change);
    }
    run.manifest["results"] = res;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepArgs {
    std::string h_grid = "0.1,0.01,0.001,0.0001";
    double c = 1.0;
    double alpha = 1.0;
    double gamma = 1.0;
    std::string noise = "1,0,1";
    double n0 = 1.0;
    double margin = 5.0;
    double rate_window = 2.0;
    std::size_t points_per_unit_time = 20;
    bool chain = false;
    double chain_n_target = 200;
};

void run_sweep(const SweepArgs& a, Run& run)
{
    SweepConfig cfg;
    cfg.h_grid = parse_list(a.h_grid, "h-grid");
    require_positive(a.c, "c");
    require_positive(a.alpha, "alpha");
    require_positive(a.margin, "margin");
    require_positive(a.rate_window, "rate-window");
    require_count(a.points_per_unit_time, "points-per-unit-time");
    cfg.c = a.c;
    cfg.alpha = a.alpha;
    cfg.gamma = a.gamma;
    cfg.noise = parse_noise(a.noise);
    cfg.n0 = a.n0;
    cfg.margin = a.margin;
    cfg.rate_window = a.rate_window;
    cfg.points_per_unit_time = a.points_per_unit_time;
    cfg.run_chain = a.chain;
    cfg.chain_n_target = a.chain_n_target;
    const SweepReport rep = susceptibility_sweep(cfg);
    Table t;
    t.columns = {"h", "n_star", "t_star_formula", "t_star_empirical", "kappa2_ref", "chi_hat", "chi_stretch",
                 "mean_rate", "chain_t_end", "chain_rate", "chain_K_end", "chain_asymptotic", "valid"};
    for (const auto& p : rep.points) {
        if (!p.valid) run.flag("h=" + format_double(p.h) + ": " + p.flag);
        t.add_row({p.h, p.n_star, p.t_star_formula, p.t_star_empirical, p.kappa2_ref, p.chi_hat, p.chi_stretch, p.mean_rate,
                   p.chain_t_end, p.chain_rate, p.chain_K_end, p.chain_asymptotic ? 1.0 : 0.0, p.valid ? 1.0 : 0.0});
    }
    run.write(t);
    Table traj;
    traj.columns = {"h", "t", "n_saddle", "kappa2"};
    for (const auto& p : rep.points) {
        for (std::size_t i = 0; i < p.times.size(); ++i) traj.add_row({p.h, p.times[i], p.n_saddle[i], p.kappa2[i]});
    }
    run.write(traj, "trajectories");
    auto fit = [](const LinearFit& f) {
        return json{{"slope", json_number(f.slope)}, {"intercept", json_number(f.intercept)}, {"r_squared", json_number(f.r_squared)}};
    };
    json tstars = json::array();
    for (const auto& p : rep.points) tstars.push_back(json_number(p.t_star_empirical));
    run.manifest["results"] = {{"t_ref", json_number(rep.t_ref)},
                               {"t_star_empirical", tstars},
                               {"chi_vs_log_nstar", fit(rep.chi_vs_log_nstar)},
                               {"stretch_vs_log_nstar", fit(rep.stretch_vs_log_nstar)},
                               {"stretch_vs_tstar", fit(rep.stretch_vs_tstar)},
                               {"max_mean_rate_deviation", json_number(rep.max_mean_rate_deviation)},
                               {"estimator_note", rep.estimator_note}};
}

// ---------------------------------------------------------------------------
// overlap

struct OverlapArgs {
    std::string profile;
    double w_min = 0.0;
    double w_max = 1.0;
    std::size_t w_points = 11;
    int moments = 2;
    double tol = 1e-16;
};

void run_overlap(const OverlapArgs& a, Run& run)
{
    if (!(a.w_min >= 0) || !(a.w_max >= a.w_min)) throw validation_error("w range must satisfy 0 <= w-min <= w-max");
    require_count(a.w_points, "w-points");
    if (a.moments < 0 || a.moments > 8) throw validation_error("moments must be in 0..8");
    require_positive(a.tol, "tol");
    const LanczosProfile prof = parse_profile_spec(a.profile);
    run.manifest["profile"] = profile_json(prof);
    OverlapOptions opt;
    opt.tol = a.tol;
    Table t;
    t.columns = {"w", "log_overlap"};
    for (int m = 1; m <= a.moments; ++m) t.columns.push_back("moment_" + std::to_string(m));
    t.columns.insert(t.columns.end(), {"truncation_n", "tail_estimate"});
    const std::vector<double> ws = a.w_points == 1 ? std::vector<double>{a.w_min} : linspace(a.w_min, a.w_max, a.w_points);
    for (double w : ws) {
        const OverlapSeries s = overlap_series(prof, w, opt);
        std::vector<double> row{w, s.log_value()};
        for (int m = 1; m <= a.moments; ++m) row.push_back(overlap_moment(prof, w, m, opt));
        row.insert(row.end(), {static_cast<double>(s.truncation_n), s.tail_estimate});
        t.add_row(row);
    }
    run.write(t);
}

// ---------------------------------------------------------------------------
// validate: closed forms against the numerical pipelines

struct Check {
    std::string name;
    double error;
    double threshold;
    bool pass() const { return std::isfinite(error) && error < threshold; }
};

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::vector<Check> validation_checks()
{
    std::vector<Check> out;
    {
        const auto traj = evolve_chain(LanczosProfile::sqrt_hopping(1.0), uniform_grid(3.0, 30));
        const auto K = complexity(traj);
        const auto model = ClosedFormModel::poisson(1.0);
        double ek = 0, ep = 0;
        for (std::size_t i = 1; i < traj.times.size(); ++i) {
            ek = std::max(ek, rel(K[i], traj.times[i] * traj.times[i]));
            const auto p = traj.probabilities(i);
            for (std::size_t n = 0; n < p.size(); ++n) ep = std::max(ep, std::abs(p[n] - model.exact_P(static_cast<long>(n), traj.times[i])));
        }
        out.push_back({"poisson_K_relative", traj.valid ? ek : NAN, 1e-6});
        out.push_back({"poisson_P_absolute", traj.valid ? ep : NAN, 1e-8});
    }
    {
        const auto model = ClosedFormModel::su11(1.0, 0.5);
        const auto traj = evolve_chain(model.profile(), uniform_grid(3.0, 30));
        const auto K = complexity(traj);
        double ek = 0, ez = 0, eid = 0;
        const auto chis = chi_grid(64);
        for (std::size_t i = 1; i < traj.times.size(); ++i) {
            ek = std::max(ek, rel(K[i], model.exact_K(traj.times[i])));
            const auto p = traj.probabilities(i);
            for (double chi : chis) {
                const cplx z = counting_from_distribution(p, chi);
                ez = std::max(ez, std::abs(z - model.exact_Z(chi, traj.times[i])));
                eid = std::max(eid, std::abs(z - counting_from_phase_rotation(traj.amplitudes[i], chi)));
            }
        }
        out.push_back({"su11_K_relative", traj.valid ? ek : NAN, 1e-5});
        out.push_back({"su11_Z_absolute", traj.valid ? ez : NAN, 1e-6});
        out.push_back({"phase_rotation_identity", eid, 1e-12});
        // quantum growth rate against the semiclassical one at t = 3
        const std::size_t last = traj.times.size() - 1;
        const double q_rate = (std::log(K[last]) - std::log(K[last - 1])) / (traj.times[last] - traj.times[last - 1]);
        const auto saddle = integrate_hamilton(model.profile(), 1.0, -std::numbers::pi / 2, uniform_grid(6.0, 120));
        out.push_back({"su11_quantum_vs_semiclassical_rate", rel(q_rate, lyapunov_rate(saddle, 3.0, 6.0).slope), 0.02});
    }
    {
        const auto tr = integrate_hamilton(LanczosProfile::linear_shift(1.0, 0.0), 1.0, -std::numbers::pi / 2, uniform_grid(5.0, 100));
        out.push_back({"lyapunov_rate_relative", rel(lyapunov_rate(tr).slope, 2.0), 0.01});
        const auto off = integrate_hamilton(LanczosProfile::linear_shift(1.0, 0.0), 3.0, -1.0, uniform_grid(3.0, 60));
        double drift = 0;
        for (std::size_t i = 0; i < off.times.size(); ++i) {
            drift = std::max(drift, rel(off.n_path[i] * std::cos(off.p_unwrapped[i]), 3.0 * std::cos(-1.0)));
        }
        out.push_back({"n_cos_p_conservation", drift, 1e-8});
        const double c = 5.0;
        const auto sh = integrate_hamilton(LanczosProfile::linear_shift(1.0, c), 2.0, -std::numbers::pi / 2, uniform_grid(3.0, 30));
        double e = 0;
        for (std::size_t i = 0; i < sh.times.size(); ++i) e = std::max(e, rel(sh.n_path[i], (2.0 + c) * std::exp(2.0 * sh.times[i]) - c));
        out.push_back({"linear_shift_exact_trajectory", e, 1e-6});
    }
    {
        const auto rep = lyapunov_covariance([](double) { return Mat2{{2.0, 0.0}, {0.0, -2.0}}; }, Mat2::Identity(), {0.0, 1.0});
        out.push_back({"constant_growth_covariance", rel(rep.variance_n.back(), (std::exp(4.0) - 1.0) / 4.0), 1e-8});
    }
    {
        double e = 0;
        for (int i = 0; i <= 80; ++i) {
            const double w = 0.25 * i;
            e = std::max(e, rel(overlap(LanczosProfile::sqrt_hopping(1.0), w), std::exp(w)));
        }
        out.push_back({"overlap_exponential", e, 1e-10});
        // finite chain: sum over n of w^n prod b^2 / (n!)^2 by direct products
        const std::vector<double> b{0.7, 1.9, 0.4, 2.6, 1.1, 0.9, 1.5};
        const double w = 1.7;
        double term = 1, ref = 1;
        for (std::size_t n = 1; n <= b.size(); ++n) {
            term *= w * b[n - 1] * b[n - 1] / static_cast<double>(n * n);
            ref += term;
        }
        out.push_back({"overlap_finite_chain", rel(overlap(LanczosProfile::tabulated(b), w), ref), 1e-12});
    }
    {
        const auto prof = LanczosProfile::su11(1.0, 0.75);
        const CMatrix T = tridiagonal_matrix(prof, 40);
        CVector seed = CVector::Zero(40);
        seed(0) = 1.0;
        const auto res = lanczos_tridiagonalize(T, seed, 39);
        double e = 0;
        for (std::size_t n = 0; n < res.b.size(); ++n) e = std::max(e, rel(res.b[n], prof.hopping(static_cast<long>(n + 1))));
        out.push_back({"lanczos_recovers_profile", e, 1e-10});
    }
    return out;
}

void run_validate(Run& run, bool quiet)
{
    const auto checks = validation_checks();
    Table t;
    t.columns = {"check", "error", "threshold", "pass"};
    json res = json::array();
    std::size_t width = 0;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    if (!quiet) std::cout << std::left << std::setw(static_cast<int>(width)) << "check" << "  " << std::setw(14) << "error" << std::setw(11) << "threshold" << "status\n";
    for (std::size_t i = 0; i < checks.size(); ++i) {
        const Check& c = checks[i];
        t.add_row({static_cast<double>(i), c.error, c.threshold, c.pass() ? 1.0 : 0.0});
        res.push_back({{"check", c.name}, {"error", json_number(c.error)}, {"threshold", c.threshold}, {"pass", c.pass()}});
        if (!c.pass()) run.flag(c.name + " above threshold");
        if (!quiet) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%-12.3e  %-9.0e  %s", c.error, c.threshold, c.pass() ? "ok" : "FAIL");
            std::cout << std::setw(static_cast<int>(width)) << c.name << "  " << buf << "\n";
        }
    }
    run.write(t);
    run.manifest["results"] = {{"checks", res}};
}

// ---------------------------------------------------------------------------

void error_report(const std::string& kind, const std::string& message, const std::string& sub, std::optional<std::size_t> line)
{
    json j{{"schema_version", schema_version}, {"status", kind}, {"error", message}};
    if (!sub.empty()) j["subcommand"] = sub;
    if (line) j["line"] = *line;
    std::cerr << j.dump() << "\n";
}

void add_profile(CLI::App* sub, std::string& target)
{
    sub->add_option("--profile", target, "profile spec 'family:key=value,...' or a profile CSV path")->required();
}

void add_output(CLI::App* sub, OutputOptions& o)
{
    sub->add_option("--out", o.out, "primary output file (default <out-dir>/<subcommand>.<format>)");
    sub->add_option("--out-dir", o.out_dir, "output directory (default $KRYLOSCOPE_OUT_DIR or .)");
    sub->add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    sub->add_flag("--allow-flagged", o.allow_flagged, "exit 0 even when a result is flagged");
    sub->add_flag("--quiet", o.quiet, "suppress the stdout summary");
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"kryloscope: Krylov-chain operator growth toolkit"};
    app.set_version_flag("--version", std::string(library_version));
    app.set_config("--config", "", "INI/TOML config file; [subcommand] sections, command-line flags win");
    app.require_subcommand(1);

    OutputOptions out;
    EvolveArgs ev;
    FcsArgs fc;
    SemiArgs se;
    ClassifyArgs cl;
    FluctArgs fl;
    SweepArgs sw;
    OverlapArgs ov;

    auto* evolve = app.add_subcommand("evolve", "exact Krylov-chain evolution: K(t), variance, optional P(n,t)");
    add_profile(evolve, ev.profile);
    evolve->add_option("--tmax", ev.tmax)->capture_default_str();
    evolve->add_option("--steps", ev.steps, "report intervals on [0, tmax]")->capture_default_str();
    evolve->add_option("--sites", ev.sites, "fixed truncation (0: automatic)")->capture_default_str();
    evolve->add_option("--leakage-tol", ev.leakage_tol)->capture_default_str();
    evolve->add_option("--rtol", ev.rtol)->capture_default_str();
    evolve->add_option("--atol", ev.atol)->capture_default_str();
    evolve->add_flag("--distribution", ev.distribution, "also write P(n,t)");
    add_output(evolve, out);

    auto* fcs = app.add_subcommand("fcs", "full counting statistics, cumulants, free energy and rate function");
    add_profile(fcs, fc.profile);
    fcs->add_option("--tmax", fc.tmax)->capture_default_str();
    fcs->add_option("--steps", fc.steps)->capture_default_str();
    fcs->add_option("--sites", fc.sites, "fixed truncation (0: automatic)")->capture_default_str();
    fcs->add_option("--chi-points", fc.chi_points)->capture_default_str();
    fcs->add_option("--cumulants", fc.cumulant_order, "highest cumulant order (1..6)")->capture_default_str();
    fcs->add_option("--s-min", fc.s_min)->capture_default_str();
    fcs->add_option("--s-max", fc.s_max)->capture_default_str();
    fcs->add_option("--s-points", fc.s_points)->capture_default_str();
    fcs->add_option("--window", fc.window_fraction, "late-time fraction for the free-energy estimate")->capture_default_str();
    add_output(fcs, out);

    auto* semi = app.add_subcommand("semiclassics", "phase-space trajectory of the effective Hamiltonian");
    add_profile(semi, se.profile);
    semi->add_option("--n0", se.n0)->capture_default_str();
    semi->add_option("--p0", se.p0)->capture_default_str();
    semi->add_option("--tmax", se.tmax)->capture_default_str();
    semi->add_option("--steps", se.steps)->capture_default_str();
    semi->add_option("--rtol", se.rtol)->capture_default_str();
    semi->add_option("--atol", se.atol)->capture_default_str();
    add_output(semi, out);

    auto* classify = app.add_subcommand("classify", "growth class of b(n) and its predicted K(t) law");
    add_profile(classify, cl.profile);
    classify->add_option("--n-min", cl.n_min)->capture_default_str();
    classify->add_option("--n-max", cl.n_max)->capture_default_str();
    classify->add_option("--samples", cl.samples)->capture_default_str();
    classify->add_option("--tie-ratio", cl.tie_ratio)->capture_default_str();
    add_output(classify, out);

    auto* fluct = app.add_subcommand("fluct", "Gaussian fluctuations around the saddle, optional Monte Carlo");
    add_profile(fluct, fl.profile);
    fluct->add_option("--n0", fl.n0)->capture_default_str();
    fluct->add_option("--p0", fl.p0)->capture_default_str();
    fluct->add_option("--tmax", fl.tmax)->capture_default_str();
    fluct->add_option("--steps", fl.steps)->capture_default_str();
    fluct->add_option("--noise", fl.noise, "noise kernel 'Dnn,Dnp,Dpp'")->capture_default_str();
    fluct->add_option("--mc-samples", fl.mc_samples, "Euler-Maruyama samples (0: off)")->capture_default_str();
    fluct->add_option("--seed", fl.seed, "random seed (required with --mc-samples)");
    fluct->add_option("--mc-dt", fl.mc_dt, "time step (0: 1e-3/alpha)")->capture_default_str();
    fluct->add_option("--mc-batches", fl.mc_batches)->capture_default_str();
    fluct->add_flag("--mc-convergence", fl.mc_convergence, "rerun at dt/2 and report the change");
    add_output(fluct, out);

    auto* sweep = app.add_subcommand("sweep", "crossover sweep over h with n_star = c/h");
    sweep->add_option("--h-grid", sw.h_grid, "comma-separated, strictly decreasing")->capture_default_str();
    sweep->add_option("--c", sw.c)->capture_default_str();
    sweep->add_option("--alpha", sw.alpha)->capture_default_str();
    sweep->add_option("--gamma", sw.gamma)->capture_default_str();
    sweep->add_option("--noise", sw.noise)->capture_default_str();
    sweep->add_option("--n0", sw.n0)->capture_default_str();
    sweep->add_option("--margin", sw.margin)->capture_default_str();
    sweep->add_option("--rate-window", sw.rate_window)->capture_default_str();
    sweep->add_option("--points-per-unit-time", sw.points_per_unit_time)->capture_default_str();
    sweep->add_flag("--chain", sw.chain, "also run the quantum chain per point (costly for n_star >= 100)");
    sweep->add_option("--chain-n-target", sw.chain_n_target)->capture_default_str();
    add_output(sweep, out);

    auto* ovl = app.add_subcommand("overlap", "generating-state overlap and its Krylov moments");
    add_profile(ovl, ov.profile);
    ovl->add_option("--w-min", ov.w_min)->capture_default_str();
    ovl->add_option("--w-max", ov.w_max)->capture_default_str();
    ovl->add_option("--w-points", ov.w_points)->capture_default_str();
    ovl->add_option("--moments", ov.moments)->capture_default_str();
    ovl->add_option("--tol", ov.tol)->capture_default_str();
    add_output(ovl, out);

    auto* validate = app.add_subcommand("validate", "closed-form oracles against the numerical pipelines");
    add_output(validate, out);

    std::string sub_name;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        error_report("config_error", e.what(), app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), {});
        return exit_config;
    }

    const CLI::App* sub = app.get_subcommands().front();
    sub_name = sub->get_name();
    Run run;
    run.subcommand = sub_name;
    run.format = out.format;
    try {
        const fs::path dir = resolve_out_dir(out);
        run.primary = out.out.empty() ? dir / (sub_name + "." + out.format) : fs::path(out.out);
        std::vector<std::string> args(argv, argv + argc);
        run.manifest = {{"schema_version", schema_version},
                        {"library_version", library_version},
                        {"subcommand", sub_name},
                        {"command_line", args},
                        {"config_file", app.get_config_ptr()->count() ? app.get_config_ptr()->as<std::string>() : ""},
                        {"config", echo_options(*sub)},
                        {"format", out.format},
                        {"versions",
                         {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                        std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) +
                                                "." + std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"cli11", CLI11_VERSION},
                          {"compiler", __VERSION__}}},
                        {"artifacts", json::array()}};

        if (sub == evolve) run_evolve(ev, run);
        else if (sub == fcs) run_fcs(fc, run);
        else if (sub == semi) run_semiclassics(se, run);
        else if (sub == classify) run_classify(cl, run);
        else if (sub == fluct) run_fluct(fl, run);
        else if (sub == sweep) run_sweep(sw, run);
        else if (sub == ovl) run_overlap(ov, run);
        else run_validate(run, out.quiet);
    } catch (const parse_error& e) {
        error_report("config_error", e.what(), sub_name, e.line());
        return exit_config;
    } catch (const validation_error& e) {
        error_report("config_error", e.what(), sub_name, {});
        return exit_config;
    } catch (const domain_error& e) {
        error_report("config_error", e.what(), sub_name, {});
        return exit_config;
    } catch (const index_error& e) {
        error_report("config_error", e.what(), sub_name, {});
        return exit_config;
    } catch (const numerical_error& e) {
        error_report("numerical_error", e.what(), sub_name, {});
        return exit_flagged;
    } catch (const std::exception& e) {
        error_report("error", e.what(), sub_name, {});
        return exit_flagged;
    }

    json flags = json::array();
    for (const auto& f : run.flags) flags.push_back(f);
    run.manifest["flags"] = flags;
    const bool flagged = !run.flags.empty();
    run.manifest["status"] = flagged ? "flagged" : "ok";
    const fs::path manifest_path = run.path_for("manifest").replace_extension(".json");
    try {
        write_atomic(manifest_path, run.manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        error_report("error", e.what(), sub_name, {});
        return exit_flagged;
    }
    if (!out.quiet) {
        for (const auto& a : run.manifest["artifacts"]) std::cout << "wrote " << a.get<std::string>() << "\n";
        std::cout << "wrote " << manifest_path.string() << "\n";
        for (const auto& f : run.flags) std::cout << "flag: " << f << "\n";
    }
    if (flagged && !out.allow_flagged) return exit_flagged;
    return exit_ok;
}
