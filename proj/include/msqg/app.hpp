#pragma once
/**
 * @file app.hpp
 * @brief Command implementations behind the CLI subcommands, kept in the
 *        library so they can be driven in-process by tests.
 *
 * Exit-code contract:
 *   0 ok (reached T), 1 config error, 2 stopped at delta_stop,
 *   3 singularity, 4 degenerate geometry, 5 selftest failure.
 */

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "msqg/collapse.hpp"
#include "msqg/config.hpp"
#include "msqg/diagnostics.hpp"
#include "msqg/ensemble.hpp"
#include "msqg/integrator.hpp"

namespace msqg {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int stopped_at_delta = 2;
inline constexpr int singularity = 3;
inline constexpr int degenerate_geometry = 4;
inline constexpr int selftest = 5;
}  // namespace exit_code

namespace app_detail {

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    out << text;
}

inline std::string stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::ReachedT: return "reached_T";
        case StopReason::HitDeltaStop: return "hit_delta_stop";
        default: return "singularity";
    }
}

}  // namespace app_detail

/// Trajectory CSV: header t, x1_1, x1_2, ..., xN_1, xN_2, min_dist, then the
/// enabled diagnostics (S, S_eps, A for N = 3; g_delta when regularized; h1,
/// h2 always). Numbers carry 17 significant digits.
inline std::string trajectory_csv(const Trajectory& tr, const KernelSpec& kspec,
                                  const DiagnosticsSpec& dspec) {
    using app_detail::fmt17;
    const std::size_t n = tr.intensities.size();
    const bool three = n == 3;
    const bool with_g = kspec.delta.has_value();
    std::string out = "t";
    for (std::size_t i = 1; i <= n; ++i)
        out += ",x" + std::to_string(i) + "_1,x" + std::to_string(i) + "_2";
    out += ",min_dist";
    if (three) out += ",S,S_eps,A";
    if (with_g) out += ",g_delta";
    out += ",h1,h2\n";
    for (std::size_t s = 0; s < tr.times.size(); ++s) {
        const DiagnosticsRecord rec = diagnostics_at(tr, s, kspec, dspec);
        out += fmt17(tr.times[s]);
        for (const Point2& p : tr.states[s]) out += "," + fmt17(p.x) + "," + fmt17(p.y);
        out += "," + fmt17(rec.min_dist);
        if (three) out += "," + fmt17(*rec.S) + "," + fmt17(*rec.S_eps) + "," + fmt17(*rec.area_A);
        if (with_g) out += "," + fmt17(*rec.g_delta);
        out += "," + fmt17(rec.h1) + "," + fmt17(rec.h2) + "\n";
    }
    return out;
}

/// simulate: integrate the configured vortex system, write trajectory.csv and
/// run_meta.json under output.dir.
inline int cmd_simulate(const RunConfig& rc, std::ostream& log = std::cerr) {
    try {
        if (!rc.vortex_positions || !rc.vortex_intensities)
            throw ConfigError("config error at vortices: positions and intensities are required");
        VortexState s0;
        s0.domain = rc.domain;
        s0.positions = *rc.vortex_positions;
        for (auto& p : s0.positions) p = wrap(p, s0.domain);
        s0.intensities = *rc.vortex_intensities;
        try {
            validate_state(s0);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at vortices: ") + e.what());
        }

        Trajectory tr;
        if (rc.stochastic_scheme()) {
            if (!rc.noise_enabled)
                throw ConfigError("config error at noise: stochastic scheme requires noise.enabled");
            if (!rc.kernel.delta)
                throw ConfigError("config error at kernel.delta: stochastic runs require a "
                                  "regularization radius");
            tr = integrate_stochastic(s0, rc.kernel, rc.noise, rc.integrator, rc.stopping,
                                      rc.noise_seed, rc.output_cadence);
        } else {
            tr = integrate_deterministic(s0, rc.kernel, rc.integrator, rc.stopping, rc.output_cadence);
        }

        DiagnosticsSpec dspec;
        if (rc.kernel.delta) dspec = make_diagnostics_spec(rc.kernel, rc.domain, rc.output_cadence);

        std::filesystem::create_directories(rc.output_dir);
        app_detail::write_text_file(rc.output_dir + "/trajectory.csv", trajectory_csv(tr, rc.kernel, dspec));

        json meta;
        meta["stop_reason"] = app_detail::stop_reason_name(tr.stop_reason);
        meta["stop_time"] = tr.stop_time;
        meta["inf_min_dist"] = tr.inf_min_dist;
        meta["samples"] = tr.times.size();
        if (!tr.detail.empty()) meta["detail"] = tr.detail;
        app_detail::write_text_file(rc.output_dir + "/run_meta.json", meta.dump(2) + "\n");

        switch (tr.stop_reason) {
            case StopReason::ReachedT: return exit_code::ok;
            case StopReason::HitDeltaStop: return exit_code::stopped_at_delta;
            default:
                log << "singularity: " << tr.detail << "\n";
                return exit_code::singularity;
        }
    } catch (const ConfigError& e) {
        log << e.what() << "\n";
        return exit_code::config;
    } catch (const SingularityError& e) {
        log << "singularity: " << e.what() << "\n";
        return exit_code::singularity;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::config;
    }
}

/// collapse: solve the three-vortex construction, report intensities, rate
/// coefficients, t*, and the lambda-scaled torus configuration; optionally
/// simulate the plane trajectory and append the measured stopping time.
inline int cmd_collapse(const RunConfig& rc, bool simulate_flag,
                        std::optional<double> lambda_override, std::ostream& log = std::cerr) {
    try {
        if (!rc.has_collapse) throw ConfigError("config error at collapse: missing required section");
        CollapseConfig cfg;
        if (rc.collapse_positions) {
            cfg = make_collapse_config_from_positions(*rc.collapse_positions, rc.kernel.epsilon,
                                                      rc.collapse_xi2, rc.kernel.c_eps);
        } else {
            const auto& d = *rc.collapse_distances;
            cfg = make_collapse_config_from_distances(d[0], d[1], d[2], rc.kernel.epsilon,
                                                      rc.collapse_xi2, rc.kernel.c_eps);
        }
        const double lambda = lambda_override.value_or(rc.collapse_lambda);
        const double t_star = collapse_time(cfg);  // throws for expanding configurations
        const CollapseConfig scaled = scale_config(cfg, lambda);

        json rep;
        rep["epsilon"] = cfg.eps;
        rep["c_eps"] = cfg.c_eps;
        rep["xi1"] = cfg.xi[0];
        rep["xi2"] = cfg.xi[1];
        rep["xi3"] = cfg.xi[2];
        rep["distances"] = {cfg.l0[0], cfg.l0[1], cfg.l0[2]};
        rep["positions"] = json::array();
        for (const auto& p : cfg.positions0) rep["positions"].push_back({p.x, p.y});
        rep["area_A0"] = cfg.area0;
        rep["c_coeffs"] = {cfg.c_coeffs[0], cfg.c_coeffs[1], cfg.c_coeffs[2]};
        rep["t_star"] = t_star;
        rep["scaling"] = {{"lambda", lambda},
                          {"alpha", ScalingMap::make(lambda, cfg.eps).alpha},
                          {"t_star_scaled", collapse_time(scaled)}};
        rep["scaled_positions"] = json::array();
        for (const auto& p : scaled.positions0) rep["scaled_positions"].push_back({p.x, p.y});

        std::filesystem::create_directories(rc.output_dir);
        if (simulate_flag) {
            StoppingRule stop = rc.stopping;
            stop.enabled = true;
            IntegratorSpec is = rc.integrator;
            is.t_end = 2.0 * t_star;
            Trajectory tr = integrate_deterministic(cfg.state(), rc.kernel, is, stop, rc.output_cadence);
            rep["simulation"] = {{"stop_reason", app_detail::stop_reason_name(tr.stop_reason)},
                                 {"measured_stop_time", tr.stop_time},
                                 {"delta_stop", stop.delta_stop}};
            DiagnosticsSpec dspec;
            if (rc.kernel.delta) dspec = make_diagnostics_spec(rc.kernel, DomainSpec::plane());
            app_detail::write_text_file(rc.output_dir + "/trajectory.csv",
                                        trajectory_csv(tr, rc.kernel, dspec));
        }
        app_detail::write_text_file(rc.output_dir + "/collapse_report.json", rep.dump(2) + "\n");
        return exit_code::ok;
    } catch (const ConfigError& e) {
        log << e.what() << "\n";
        return exit_code::config;
    } catch (const DegenerateGeometryError& e) {
        log << e.what() << "\n";
        return exit_code::degenerate_geometry;
    } catch (const std::domain_error& e) {
        log << e.what() << "\n";
        return exit_code::degenerate_geometry;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::config;
    }
}

/// ensemble: run the Monte Carlo harness and write ensemble_report.json
/// (per-delta hit statistics, scaling fit, runtime metadata).
inline int cmd_ensemble(const RunConfig& rc, std::ostream& log = std::cerr) {
    try {
        if (!rc.has_ensemble) throw ConfigError("config error at ensemble: missing required section");
        EnsembleSpec es = rc.ensemble;
        if (es.init == EnsembleInit::UniformOffDiagonal && es.intensities.empty()) {
            if (rc.vortex_intensities) es.intensities = *rc.vortex_intensities;
            if (es.intensities.empty())
                throw ConfigError("config error at ensemble.intensities: missing (or provide "
                                  "vortices.intensities)");
            es.n_vortices = static_cast<int>(es.intensities.size());
        }
        if (es.init == EnsembleInit::Fixed) {
            if (!rc.vortex_positions || !rc.vortex_intensities)
                throw ConfigError("config error at vortices: fixed-init ensemble requires positions "
                                  "and intensities");
            es.fixed_init.domain = DomainSpec::torus();
            es.fixed_init.positions = *rc.vortex_positions;
            for (auto& p : es.fixed_init.positions) p = wrap(p, es.fixed_init.domain);
            es.fixed_init.intensities = *rc.vortex_intensities;
        }
        try {
            es.validate();
        } catch (const std::exception& e) {
            throw ConfigError(std::string("config error at ensemble: ") + e.what());
        }

        const EnsembleStats stats = run_ensemble(es, rc.kernel, rc.noise, rc.integrator);

        json rep;
        rep["n_samples"] = stats.n_samples;
        rep["seed"] = es.master_seed;
        rep["horizon"] = es.horizon_T;
        rep["note"] = "one regularization radius (kernel.delta) is used for the whole threshold sweep";
        rep["per_delta"] = json::array();
        for (const auto& d : stats.per_delta)
            rep["per_delta"].push_back({{"delta", d.delta},
                                        {"hits", d.hits},
                                        {"p_hat", d.ci.p_hat},
                                        {"wilson_lo", d.ci.lo},
                                        {"wilson_hi", d.ci.hi}});
        try {
            const ScalingFit fit = delta_scaling_fit(stats, rc.kernel.epsilon);
            rep["fit"] = {{"slope", fit.slope},
                          {"stderr", fit.stderr_slope},
                          {"bound_exponent", 1.0 - rc.kernel.epsilon},
                          {"consistent", fit.consistent}};
        } catch (const std::exception& e) {
            rep["fit"] = {{"error", e.what()}};
        }
        rep["runtime"] = {{"wall_seconds", stats.wall_seconds}, {"workers", stats.workers_used}};

        std::filesystem::create_directories(rc.output_dir);
        app_detail::write_text_file(rc.output_dir + "/ensemble_report.json", rep.dump(2) + "\n");
        return exit_code::ok;
    } catch (const ConfigError& e) {
        log << e.what() << "\n";
        return exit_code::config;
    } catch (const std::exception& e) {
        log << "error: " << e.what() << "\n";
        return exit_code::config;
    }
}

/// selftest: fast invariant battery; prints one line per check.
inline int cmd_selftest(std::ostream& out = std::cout) {
    struct Check {
        std::string name;
        bool ok;
    };
    std::vector<Check> checks;
    auto add = [&](const std::string& name, bool ok) { checks.push_back({name, ok}); };

    KernelSpec ks;
    ks.epsilon = 0.5;
    ks.lattice_truncation = 8;

    {  // kernel antisymmetry and orthogonality on the plane
        bool anti = true, orth = true;
        const Vec2 pts[] = {{0.3, 0.4}, {-0.2, 0.11}, {0.05, -0.33}, {0.41, 0.07}};
        for (const Vec2& x : pts) {
            const Vec2 a = k_plane(x, ks), b = k_plane(-x, ks);
            anti = anti && std::hypot(a.x + b.x, a.y + b.y) <= 1e-12 * std::hypot(a.x, a.y);
            orth = orth && std::fabs(a.dot(x)) <= 1e-12 * a.norm() * x.norm();
        }
        add("kernel antisymmetry (plane)", anti);
        add("kernel orthogonality K(x).x = 0", orth);
        const Vec2 xt{0.2, 0.1};
        const Vec2 t1 = k_torus_direct(xt, ks), t2 = k_torus_direct(xt + Vec2{1.0, 0.0}, ks),
                   t3 = k_torus_direct(-xt, ks);
        add("kernel periodicity (torus, exact)", t1.x == t2.x && t1.y == t2.y);
        add("kernel antisymmetry (torus)",
            std::hypot(t1.x + t3.x, t1.y + t3.y) <= 1e-12 * std::hypot(t1.x, t1.y));
    }

    {  // blend C1/C2 seam by one-sided finite differences
        KernelSpec kd = ks;
        kd.delta = 0.05;
        const double d = *kd.delta, h = 1e-7;
        auto g = [&](double r) { return green_regularized({r, 0.0}, kd); };
        const double g_in = (g(d) - g(d - h)) / h, g_out = (g(d + h) - g(d)) / h;
        add("regularized Green C1 seam", std::fabs(g_in - g_out) <= 1e-4 * std::fabs(g_out));
        const double s_in = (g(d) - 2 * g(d - h) + g(d - 2 * h)) / (h * h);
        const double s_out = (g(d + 2 * h) - 2 * g(d + h) + g(d)) / (h * h);
        add("regularized Green C2 seam", std::fabs(s_in - s_out) <= 2e-2 * std::fabs(s_out));
        const Vec2 k0 = k_regularized({0.0, 0.0}, kd);
        add("regularized kernel vanishes at 0", k0.x == 0.0 && k0.y == 0.0);
    }

    NoiseSpec ns;  // defaults: gamma 4, k_max 8
    {
        bool div_ok = true;
        const double h = 1e-5;
        const ModeIndex k{2, 1};
        const Vec2 x{0.13, 0.27};
        auto sx = [&](Vec2 p) { return sigma(k, p, ns); };
        const double div = (sx({x.x + h, x.y}).x - sx({x.x - h, x.y}).x) / (2 * h) +
                           (sx({x.x, x.y + h}).y - sx({x.x, x.y - h}).y) / (2 * h);
        div_ok = std::fabs(div) < 1e-7;
        add("noise divergence-free (finite differences)", div_ok);
        // dyadic point: the +1 shift is lossless, so bitwise equality is fair
        const Point2 xd{0.125, 0.28125};
        const Vec2 p1 = sigma(k, xd, ns), p2 = sigma(k, {xd.x + 1.0, xd.y}, ns);
        add("noise periodicity (exact)", p1.x == p2.x && p1.y == p2.y);

        NoiseSpec n1 = ns;
        n1.k_max = 1;
        const SymMat2 q1 = covariance_Q({0.21, -0.37}, n1);
        add("Q = 2I at k_max = 1",
            std::fabs(q1.xx - 2.0) < 1e-12 && std::fabs(q1.yy - 2.0) < 1e-12 && std::fabs(q1.xy) < 1e-12);

        const SymMat2 qa = covariance_Q({0.0, 0.0}, ns), qb = covariance_Q({0.31, -0.12}, ns);
        add("Q homogeneous in x",
            std::fabs(qa.xx - qb.xx) < 1e-12 && std::fabs(qa.yy - qb.yy) < 1e-12 &&
                std::fabs(qa.xy - qb.xy) < 1e-12);

        const Vec2 corr = strat_ito_correction({0.31, -0.12}, ns);
        add("Stratonovich-Ito correction = 0", std::fabs(corr.x) < 1e-12 && std::fabs(corr.y) < 1e-12);
    }

    {  // ellipticity at a reference off-diagonal state and on the diagonal
        VortexState s;
        s.domain = DomainSpec::torus();
        s.positions = {{-0.1, 0.0}, {0.1, 0.0}, {0.1, 0.1414}};
        s.intensities = {1.0, 1.0, -0.5};
        add("ellipticity > 0 off the diagonal", ellipticity_min_eig(s, ns) > 0.0);
        VortexState dup;
        dup.domain = DomainSpec::torus();
        dup.positions = {{0.1, 0.2}, {0.1, 0.2}};
        dup.intensities = {1.0, 1.0};
        add("ellipticity = 0 on the diagonal", ellipticity_min_eig(dup, ns) <= 1e-10);
    }

    bool all_ok = true;
    for (const auto& c : checks) {
        out << (c.ok ? "[pass] " : "[FAIL] ") << c.name << "\n";
        all_ok = all_ok && c.ok;
    }
    out << (all_ok ? "selftest: all checks passed\n" : "selftest: FAILURES present\n");
    return all_ok ? exit_code::ok : exit_code::selftest;
}

}  // namespace msqg
