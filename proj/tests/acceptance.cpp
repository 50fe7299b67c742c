// Acceptance suite: one criterion per numbered check, each printed as a
// single pass/fail line with its measured quantities. Every tolerance is
// pinned in this file. Run without arguments for the full battery, or pass
// criterion numbers to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "msqg/app.hpp"
#include "msqg/collapse.hpp"
#include "msqg/diagnostics.hpp"
#include "msqg/ensemble.hpp"
#include "msqg/integrator.hpp"

using namespace msqg;

namespace {

struct Criterion {
    int id;
    std::string title;
    std::function<bool(std::string&)> run;
};

bool approx_rel(double a, double b, double tol) {
    return std::fabs(a - b) <= tol * std::max(std::fabs(a), std::fabs(b));
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

// --- shared fixtures ---------------------------------------------------

const double kTStar = 3.482262367518539;  // collapse time of the reference configuration
// Torus scaling for criteria 5 and 9. The scaled triangle only needs to fit
// in [-1/4, 1/4]^2, but lambda must also be large enough that the periodic
// image fields (which perturb S = S_eps = 0) cannot stall the collapse above
// delta_stop: the stall scale shrinks like (initial scale)^2.2, and
// lambda = 5000 brings it safely below 1e-3.
const double kLambda = 5000.0;
const std::vector<double> kReferenceXi{1.1556160804937574, 1.0, -0.51741900240180905};

VortexState random_torus_triple(std::uint64_t seed, std::uint64_t index, double min_sep,
                                const std::vector<double>& xi) {
    const CounterRng rng(seed, index);
    VortexState s;
    s.domain = DomainSpec::torus();
    s.intensities = xi;
    s.positions.resize(3);
    for (std::uint64_t attempt = 0;; ++attempt) {
        for (int i = 0; i < 3; ++i) {
            double u0, u1;
            rng.uniform_pair(attempt * 8 + i, 0, u0, u1);
            s.positions[i] = {u0 - 0.5, u1 - 0.5};
        }
        if (min_pairwise_distance(s) > min_sep) return s;
    }
}

// --- criteria ----------------------------------------------------------

bool criterion_1(std::string& note) {
    const auto [xi1, xi3] = solve_intensities(2.0, std::sqrt(2.0), std::sqrt(6.0), 0.5, 1.0);
    const bool ok = std::fabs(xi1 - 1.155616) < 1e-5 && std::fabs(xi3 + 0.517419) < 1e-5;
    note = "xi1 = " + fmt("%.7f", xi1) + ", xi3 = " + fmt("%.7f", xi3) + " (target 1.155616, -0.517419, tol 1e-5)";
    return ok;
}

struct CollapseRun {
    CollapseConfig cfg;
    Trajectory traj;
};

CollapseRun run_reference_collapse() {
    CollapseRun out{reference_collapse_config(), {}};
    KernelSpec k;
    k.epsilon = 0.5;
    IntegratorSpec is;
    is.adaptive_tol = 1e-10;
    is.t_end = 2.0 * out.cfg.t_star;
    StoppingRule stop{1e-3, true};
    out.traj = integrate_deterministic(out.cfg.state(), k, is, stop, 1);
    return out;
}

bool criterion_2(std::string& note) {
    const CollapseRun run = run_reference_collapse();
    if (run.traj.stop_reason != StopReason::HitDeltaStop) {
        note = "collapse run did not hit delta_stop";
        return false;
    }
    double worst = 0.0;
    const int pairs[3][2] = {{0, 1}, {1, 2}, {2, 0}};
    for (std::size_t s = 0; s < run.traj.times.size(); ++s) {
        const double t = run.traj.times[s];
        if (t > 0.9 * run.cfg.t_star) break;
        for (int p = 0; p < 3; ++p) {
            const double sim =
                (run.traj.raw_positions[s][pairs[p][0]] - run.traj.raw_positions[s][pairs[p][1]]).norm();
            const double ana = analytic_distance(t, run.cfg.l0[p], run.cfg.c_coeffs[p], run.cfg.eps);
            worst = std::max(worst, std::fabs(sim - ana) / ana);
        }
    }
    const double stop_rel = std::fabs(run.traj.stop_time - run.cfg.t_star) / run.cfg.t_star;
    note = "max |l_sim/l_closed - 1| = " + fmt("%.2e", worst) + " (tol 1e-4), stop time " +
           fmt("%.6f", run.traj.stop_time) + " vs t* = " + fmt("%.6f", run.cfg.t_star) +
           " (rel " + fmt("%.2e", stop_rel) + ", tol 1e-2)";
    return worst < 1e-4 && stop_rel < 1e-2;
}

bool criterion_3(std::string& note) {
    const CollapseRun run = run_reference_collapse();
    const double r0 = run.cfg.l0[0] / run.cfg.l0[1];
    const double q0 = run.cfg.l0[1] / run.cfg.l0[2];
    double worst = 0.0;
    for (std::size_t s = 0; s < run.traj.times.size(); ++s) {
        const auto& p = run.traj.raw_positions[s];
        const double l12 = (p[0] - p[1]).norm(), l23 = (p[1] - p[2]).norm(), l31 = (p[2] - p[0]).norm();
        if (run.traj.times[s] > 0.9 * run.cfg.t_star) break;
        worst = std::max(worst, std::fabs(l12 * l12 / (l23 * l23) - r0 * r0) / (r0 * r0));
        worst = std::max(worst, std::fabs(l23 * l23 / (l31 * l31) - q0 * q0) / (q0 * q0));
    }
    note = "max ratio drift = " + fmt("%.2e", worst) + " (tol 1e-4)";
    return worst < 1e-4;
}

bool criterion_4(std::string& note) {
    KernelSpec k;
    k.epsilon = 0.5;
    IntegratorSpec is;
    is.adaptive_tol = 1e-10;
    is.t_end = 1.0;
    std::vector<double> worst_per_state(20, 1.0);
    detail::run_parallel(20, 0, [&](long i) {
        const CounterRng rng(2024, std::uint64_t(i));
        for (std::uint64_t attempt = 0;; ++attempt) {
            VortexState s;
            s.domain = DomainSpec::plane();
            for (int v = 0; v < 3; ++v) {
                double u0, u1, u2, u3;
                rng.uniform_pair(attempt * 16 + v, 0, u0, u1);
                rng.uniform_pair(attempt * 16 + v, 1, u2, u3);
                s.positions.push_back({2 * u0 - 1, 2 * u1 - 1});
                s.intensities.push_back((u2 < 0.5 ? -1.0 : 1.0) * (0.4 + 1.2 * u3));
            }
            if (min_pairwise_distance(s) < 0.5) continue;
            StoppingRule stop{0.05, true};
            const Trajectory tr = integrate_deterministic(s, k, is, stop, 1);
            if (tr.stop_reason != StopReason::ReachedT) continue;  // non-collapsing states only
            const double S0 = invariant_S(tr.raw_state_at(0));
            const double Se0 = invariant_S_eps(tr.raw_state_at(0), k.epsilon);
            double worst = 0.0;
            for (std::size_t idx = 0; idx < tr.times.size(); ++idx) {
                const VortexState rs = tr.raw_state_at(idx);
                worst = std::max(worst,
                                 std::fabs(invariant_S(rs) - S0) / std::max(1.0, std::fabs(S0)));
                worst = std::max(worst, std::fabs(invariant_S_eps(rs, k.epsilon) - Se0) /
                                            std::max(1.0, std::fabs(Se0)));
            }
            worst_per_state[i] = worst;
            return;
        }
    });
    double worst = 0.0;
    for (double w : worst_per_state) worst = std::max(worst, w);
    note = "max |S(t)-S(0)| and |S_eps(t)-S_eps(0)| over 20 random triangles = " +
           fmt("%.2e", worst) + " (tol 1e-6, relative to initial scale)";
    return worst < 1e-6;
}

bool criterion_5(std::string& note) {
    const CollapseConfig cfg = reference_collapse_config();
    const CollapseConfig sc = scale_config(cfg, kLambda);
    for (const auto& p : sc.positions0)
        if (std::fabs(p.x) >= 0.25 || std::fabs(p.y) >= 0.25) {
            note = "scaled triangle does not fit in [-1/4, 1/4]^2";
            return false;
        }
    KernelSpec k;
    k.epsilon = 0.5;
    k.lattice_truncation = 20;
    IntegratorSpec is;
    is.adaptive_tol = 1e-10;
    is.t_end = 2.0 * sc.t_star;
    StoppingRule stop{1e-3, true};
    const Trajectory tr = integrate_deterministic(torus_state(sc), k, is, stop, 0);
    if (tr.stop_reason != StopReason::HitDeltaStop) {
        note = "torus run did not hit delta_stop";
        return false;
    }
    const double rel = std::fabs(tr.stop_time - sc.t_star) / sc.t_star;
    note = "lambda = " + fmt("%.0f", kLambda) + ", torus stop time " + fmt("%.8f", tr.stop_time) +
           " vs t*/lambda = " + fmt("%.8f", sc.t_star) + " (rel " + fmt("%.2e", rel) +
           ", tol 2e-2, M = 20)";
    return rel < 2e-2;
}

bool criterion_6(std::string& note) {
    NoiseSpec ns;  // gamma 4, k_max 8
    bool ok = true;
    std::ostringstream msg;

    // divergence: analytic exactly zero, finite differences below 1e-7
    double worst_div = 0.0;
    const CounterRng rng(31337, 0);
    for (int i = 0; i < 25; ++i) {
        double u0, u1, u2, u3;
        rng.uniform_pair(i, 0, u0, u1);
        rng.uniform_pair(i, 1, u2, u3);
        const ModeIndex k{1 + int(u2 * 7.99) , int(u3 * 16.0) - 8};
        const Point2 x{u0 - 0.5, u1 - 0.5};
        if (sigma_jacobian(k, x, ns).trace() != 0.0) ok = false;
        const double h = 1e-5;
        auto sx = [&](Point2 p) { return sigma(k, p, ns); };
        const double div = (sx({x.x + h, x.y}).x - sx({x.x - h, x.y}).x) / (2 * h) +
                           (sx({x.x, x.y + h}).y - sx({x.x, x.y - h}).y) / (2 * h);
        worst_div = std::max(worst_div, std::fabs(div));
    }
    ok = ok && worst_div < 1e-7;
    msg << "max |fd div sigma| = " << fmt("%.1e", worst_div);

    // covariance: constant in x to 1e-12 and equal to 2I at k_max = 1
    NoiseSpec n1;
    n1.k_max = 1;
    const SymMat2 q1 = covariance_Q({0.123, -0.321}, n1);
    ok = ok && std::fabs(q1.xx - 2.0) < 1e-12 && std::fabs(q1.yy - 2.0) < 1e-12 &&
         std::fabs(q1.xy) < 1e-12;
    const SymMat2 q0 = covariance_Q({0, 0}, ns);
    double worst_q = 0.0;
    for (int i = 0; i < 20; ++i) {
        double u0, u1;
        rng.uniform_pair(100 + i, 0, u0, u1);
        const SymMat2 q = covariance_Q({u0 - 0.5, u1 - 0.5}, ns);
        worst_q = std::max({worst_q, std::fabs(q.xx - q0.xx), std::fabs(q.yy - q0.yy),
                            std::fabs(q.xy - q0.xy)});
    }
    ok = ok && worst_q < 1e-12;
    msg << ", Q spread = " << fmt("%.1e", worst_q) << ", Q(kmax=1) = 2I ok";

    // Stratonovich correction
    double worst_c = 0.0;
    for (int i = 0; i < 10; ++i) {
        double u0, u1;
        rng.uniform_pair(200 + i, 0, u0, u1);
        const Vec2 c = strat_ito_correction({u0 - 0.5, u1 - 0.5}, ns);
        worst_c = std::max({worst_c, std::fabs(c.x), std::fabs(c.y)});
    }
    ok = ok && worst_c < 1e-12;
    msg << ", |strat correction| = " << fmt("%.1e", worst_c);

    // ellipticity: positive at 50 random off-diagonal states, zero at a duplicate
    double min_eig = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 50; ++i) {
        const VortexState s = random_torus_triple(555, std::uint64_t(i), 0.05, kReferenceXi);
        min_eig = std::min(min_eig, ellipticity_min_eig(s, ns));
    }
    ok = ok && min_eig > 0.0;
    VortexState dup;
    dup.domain = DomainSpec::torus();
    dup.positions = {{0.1, 0.2}, {0.1, 0.2}, {-0.3, 0.0}};
    dup.intensities = {1.0, 1.0, -1.0};
    const double dup_eig = ellipticity_min_eig(dup, ns);
    ok = ok && dup_eig <= 1e-10;
    msg << ", min ellipticity over 50 states = " << fmt("%.2e", min_eig)
        << ", duplicated-state eig = " << fmt("%.1e", dup_eig);

    note = msg.str();
    return ok;
}

bool criterion_7(std::string& note) {
    KernelSpec k;
    k.epsilon = 0.5;
    k.delta = 0.05;
    k.lattice_truncation = 6;  // keeps the 130 flow integrations inside the runtime budget
    IntegratorSpec is;
    is.adaptive_tol = 1e-10;
    is.dt = 1e-2;

    // (a) measure preservation on 10 random flows at t = 1. Chaotic states
    // whose sensitivity matrix exceeds ~1e4 are re-drawn: past that the
    // log-determinant of ANY numerically computed Jacobian is dominated by
    // conditioning (double precision cannot certify 1e-6), not by the flow.
    std::vector<double> lds(10, 1.0);
    detail::run_parallel(10, 0, [&](long i) {
        for (std::uint64_t sub = 0;; ++sub) {
            const VortexState s =
                random_torus_triple(777, std::uint64_t(i) * 1000 + sub, 0.2, kReferenceXi);
            {
                // cheap pre-screen: close approaches imply huge sensitivities
                IntegratorSpec it = is;
                it.t_end = 1.0;
                StoppingRule no;
                if (integrate_deterministic(s, k, it, no, 0).inf_min_dist < 0.15) continue;
            }
            const DenseMatrix Y = flow_jacobian_matrix(s, k, 1.0, is);
            double ymax = 0.0;
            for (std::size_t r = 0; r < 6; ++r)
                for (std::size_t c = 0; c < 6; ++c) ymax = std::max(ymax, std::fabs(Y(r, c)));
            if (ymax > 1e4) continue;
            lds[i] = log_abs_det(Y);
            return;
        }
    });
    double worst_ld = 0.0;
    for (double v : lds) worst_ld = std::max(worst_ld, std::fabs(v));

    // (b) finite-difference oracle on 10 random tame flows. The FD
    // determinant at step 1e-6 is only answerable when the flow sensitivity
    // is modest (h^2 nonlinearity errors get amplified by the condition
    // number on chaotic states), so states are drawn with weak intensities
    // and a max |Y| filter; the perturbed flows share one fixed-step RK4
    // grid so their integration errors cancel in the central difference.
    // Trajectories whose pair displacements cross the wrap seam are also
    // re-drawn: the truncated lattice sum retains a ~1e-3 residual jump
    // there (down from O(1) thanks to the analytic tail), which the flow
    // smooths over but finite differences straddle.
    std::vector<double> fd_diff(10, 1.0);
    detail::run_parallel(10, 0, [&](long i) {
        const CounterRng rng(54321, std::uint64_t(i));
        for (std::uint64_t attempt = 0;; ++attempt) {
            VortexState s;
            s.domain = DomainSpec::torus();
            s.positions.resize(3);
            s.intensities.resize(3);
            for (int v = 0; v < 3; ++v) {
                double u0, u1, u2, u3;
                rng.uniform_pair(attempt * 8 + v, 0, u0, u1);
                rng.uniform_pair(attempt * 8 + v, 1, u2, u3);
                s.positions[v] = {u0 - 0.5, u1 - 0.5};
                s.intensities[v] = (u2 < 0.5 ? -1.0 : 1.0) * (0.15 + 0.2 * u3);
            }
            if (min_pairwise_distance(s) < 0.35) continue;
            {
                IntegratorSpec it = is;
                it.t_end = 1.0;
                StoppingRule no;
                double worst_coord = 0.0;
                auto obs = [&](double, const std::vector<Point2>& raw, double) {
                    for (int a = 0; a < 3; ++a)
                        for (int b = a + 1; b < 3; ++b) {
                            const Vec2 d = displacement(raw[a], raw[b], DomainSpec::torus());
                            worst_coord = std::max({worst_coord, std::fabs(d.x), std::fabs(d.y)});
                        }
                };
                integrate_deterministic(s, k, it, no, 0, obs);
                if (worst_coord > 0.47) continue;  // seam crossing: re-draw
            }
            const DenseMatrix Y = flow_jacobian_matrix(s, k, 1.0, is);
            double ymax = 0.0;
            for (std::size_t r = 0; r < 6; ++r)
                for (std::size_t c = 0; c < 6; ++c) ymax = std::max(ymax, std::fabs(Y(r, c)));
            if (ymax > 5.0) continue;
            IntegratorSpec fd_is;
            fd_is.scheme_det = DetScheme::RK4;
            fd_is.dt = 1e-3;
            const double h = 1e-6;
            DenseMatrix J(6, 6);
            for (int c = 0; c < 6; ++c) {
                VortexState sp = s, sm = s;
                (c % 2 == 0 ? sp.positions[c / 2].x : sp.positions[c / 2].y) += h;
                (c % 2 == 0 ? sm.positions[c / 2].x : sm.positions[c / 2].y) -= h;
                const auto fp = flow_map(sp, k, 1.0, fd_is);
                const auto fm = flow_map(sm, k, 1.0, fd_is);
                for (int r = 0; r < 6; ++r) {
                    const double vp = (r % 2 == 0 ? fp[r / 2].x : fp[r / 2].y);
                    const double vm = (r % 2 == 0 ? fm[r / 2].x : fm[r / 2].y);
                    J(r, c) = (vp - vm) / (2 * h);
                }
            }
            fd_diff[i] = std::fabs(log_abs_det(J) - log_abs_det(Y));
            return;
        }
    });
    double worst_fd = 0.0;
    for (double v : fd_diff) worst_fd = std::max(worst_fd, v);

    note = "max |logdet| over 10 random torus flows at t = 1: " + fmt("%.2e", worst_ld) +
           " (tol 1e-6); max |variational - finite-difference| over 10 tame flows = " +
           fmt("%.2e", worst_fd) + " (tol 1e-4, step 1e-6)";
    return worst_ld < 1e-6 && worst_fd < 1e-4;
}

bool criterion_8(std::string& note) {
    // Near-collision Monte Carlo sweep, plus the synthetic-data oracle
    // checks of the fitting routine.
    EnsembleSpec es;
    es.n_samples = 2000;
    es.master_seed = 20260808;
    es.horizon_T = 1.0;
    es.delta_grid = {0.1, 0.05, 0.02, 0.01};
    es.n_vortices = 3;
    es.intensities = kReferenceXi;
    es.workers = 0;
    KernelSpec k;
    k.epsilon = 0.5;
    k.delta = 0.01;
    k.lattice_truncation = 8;
    NoiseSpec ns;  // gamma 4, k_max 8, scale 1
    IntegratorSpec is;
    is.dt = 4e-4;
    // Resolve close co-rotation: without substepping, fixed-dt paths carry an
    // artificial hard core near the scale where omega dt ~ 1 (~0.06 here),
    // starving the 0.02 and 0.01 cells entirely.
    is.substep_threshold = 0.2;

    const EnsembleStats stats = run_ensemble(es, k, ns, is);
    std::ostringstream msg;
    msg << "hits:";
    for (const auto& d : stats.per_delta) msg << " " << d.hits << "@" << d.delta;
    bool ok = true;
    double slope = 0.0, se = 0.0;
    try {
        const ScalingFit fit = delta_scaling_fit(stats, k.epsilon);
        slope = fit.slope;
        se = fit.stderr_slope;
        ok = fit.consistent;
        msg << "; slope = " << fmt("%.3f", slope) << " +- " << fmt("%.3f", se)
            << ", one-sided 95% test vs 0.5: " << (fit.consistent ? "consistent" : "REJECTED");
    } catch (const std::exception& e) {
        msg << "; fit failed: " << e.what();
        ok = false;
    }

    // synthetic-data oracle: planted 0.5 recovered and consistent, planted 0.1 flagged
    auto synthetic = [&](double q, std::uint64_t seed) {
        EnsembleStats st;
        st.n_samples = 4000;
        const CounterRng rng(seed, 0);
        int g = 0;
        for (double d : {0.1, 0.05, 0.02, 0.01}) {
            const double p = std::pow(d, q);
            DeltaStat ds;
            ds.delta = d;
            for (long i = 0; i < st.n_samples; ++i)
                if (rng.uniform(std::uint64_t(g) * 1000003 + std::uint64_t(i)) < p) ds.hits++;
            ds.ci = wilson_interval(ds.hits, st.n_samples);
            st.per_delta.push_back(ds);
            ++g;
        }
        return st;
    };
    const ScalingFit planted = delta_scaling_fit(synthetic(0.5, 9001), 0.5);
    const bool oracle_ok = std::fabs(planted.slope - 0.5) < 2.0 * planted.stderr_slope &&
                           planted.consistent &&
                           !delta_scaling_fit(synthetic(0.1, 9002), 0.5).consistent;
    msg << "; synthetic oracle (0.5 recovered, 0.1 rejected): " << (oracle_ok ? "ok" : "FAILED");
    note = msg.str();
    return ok && oracle_ok;
}

bool criterion_9(std::string& note) {
    const CollapseConfig cfg = reference_collapse_config();
    KernelSpec k;
    k.epsilon = 0.5;
    k.delta = 1e-3;
    k.lattice_truncation = 8;
    NoiseSpec ns;  // default noise
    IntegratorSpec is;
    is.dt = 1e-6;  // ~1000 base Euler-Maruyama steps over the 1.5 t*/lambda horizon
    is.substep_threshold = 0.2;
    is.adaptive_tol = 1e-10;
    const RegularizationDemoReport rep =
        regularization_demo(cfg, kLambda, k, ns, is, 1e-3, 200, 424242, 0);
    const double control_rel = std::fabs(rep.control_stop_time - rep.t_star_scaled) / rep.t_star_scaled;
    const bool ok = control_rel < 2e-2 && rep.surviving > 0;
    note = "control stop " + fmt("%.8f", rep.control_stop_time) + " vs t*/lambda " +
           fmt("%.8f", rep.t_star_scaled) + " (rel " + fmt("%.2e", control_rel) +
           ", tol 2e-2); surviving fraction " + fmt("%.3f", rep.surviving_ci.p_hat) + " [" +
           fmt("%.3f", rep.surviving_ci.lo) + ", " + fmt("%.3f", rep.surviving_ci.hi) +
           "] of 200 at horizon 1.5 t*/lambda (must be > 0; recorded as regression baseline)";
    return ok;
}

bool criterion_10(std::string& note) {
    std::ostringstream msg;
    bool ok = true;

    VortexState pair;
    pair.domain = DomainSpec::plane();
    pair.positions = {{0.5, 0}, {-0.5, 0}};
    pair.intensities = {1, 1};
    KernelSpec k;
    k.epsilon = 0.5;

    // RK4 order on the orbit
    const double period = std::numbers::pi;  // pi d^{3-eps} / c_eps at d = 1, xi = (1,1)
    {
        std::vector<double> lx, ly, w;
        for (int p = 6; p <= 10; ++p) {
            IntegratorSpec is;
            is.scheme_det = DetScheme::RK4;
            is.t_end = period;
            is.dt = period / std::pow(2.0, p);
            StoppingRule no;
            const Trajectory tr = integrate_deterministic(pair, k, is, no, 0);
            const auto fin = tr.raw_positions.back();
            const double err = std::hypot(fin[0].x - 0.5, fin[0].y);
            lx.push_back(std::log(is.dt));
            ly.push_back(std::log(err));
            w.push_back(1.0);
        }
        const LineFit fit = weighted_line_fit(lx, ly, w);
        ok = ok && std::fabs(fit.slope - 4.0) < 0.2;
        msg << "RK4 order = " << fmt("%.3f", fit.slope) << " (target 4 +- 0.2)";
    }

    // measured period against the analytic value
    {
        IntegratorSpec is;
        is.adaptive_tol = 1e-12;
        is.t_end = 1.2 * period;
        StoppingRule no;
        const Trajectory tr = integrate_deterministic(pair, k, is, no, 1);
        double measured = 0.0;
        const Vec2 r0 = tr.raw_positions[0][0] - tr.raw_positions[0][1];
        double prev_angle = std::atan2(r0.y, r0.x);
        double unwound = 0.0;
        for (std::size_t i = 1; i < tr.times.size(); ++i) {
            const Vec2 r = tr.raw_positions[i][0] - tr.raw_positions[i][1];
            const double ang = std::atan2(r.y, r.x);
            double d = ang - prev_angle;
            while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
            while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
            const double next_unwound = unwound + d;
            if (next_unwound <= -2 * std::numbers::pi) {
                // linear interpolation of the crossing time
                const double frac = (-2 * std::numbers::pi - unwound) / d;
                measured = tr.times[i - 1] + frac * (tr.times[i] - tr.times[i - 1]);
                break;
            }
            unwound = next_unwound;
            prev_angle = ang;
        }
        ok = ok && std::fabs(measured - period) < 1e-6;
        msg << "; measured period " << fmt("%.9f", measured) << " vs pi (tol 1e-6)";
    }

    // Euler-Maruyama: single-vortex increments match Q dt within 3 SE
    {
        VortexState one;
        one.domain = DomainSpec::torus();
        one.positions = {{0, 0}};
        one.intensities = {1.0};
        KernelSpec kr = k;
        kr.delta = 0.05;
        NoiseSpec ns;
        IntegratorSpec is;
        is.dt = 1e-3;
        const long nsteps = 100000;
        is.t_end = nsteps * is.dt;
        StoppingRule no;
        double sxx = 0, syy = 0, sxy = 0;
        Point2 prev{0, 0};
        long count = 0;
        auto obs = [&](double, const std::vector<Point2>& raw, double) {
            const double dx = raw[0].x - prev.x, dy = raw[0].y - prev.y;
            prev = raw[0];
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
            ++count;
        };
        integrate_stochastic(one, kr, ns, is, no, 777, 0, obs);
        const SymMat2 q = covariance_Q({0, 0}, ns);
        const double target = q.xx * is.dt;
        const double se_var = target * std::sqrt(2.0 / double(count));
        const double se_cov = target / std::sqrt(double(count));
        const bool cov_ok = std::fabs(sxx / count - target) < 3 * se_var &&
                            std::fabs(syy / count - q.yy * is.dt) < 3 * se_var &&
                            std::fabs(sxy / count - q.xy * is.dt) < 3 * se_cov;
        ok = ok && cov_ok;
        msg << "; EM covariance vs Q dt over 1e5 steps: " << (cov_ok ? "within 3 SE" : "OUT OF RANGE");
    }

    note = msg.str();
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    std::vector<Criterion> criteria = {
        {1, "reference intensities solved from S = 0 = S_eps", criterion_1},
        {2, "collapse closed form l(t) and stopping time", criterion_2},
        {3, "self-similarity: distance ratios constant", criterion_3},
        {4, "invariant conservation on random triangles", criterion_4},
        {5, "torus scaling reproduces the collapse time", criterion_5},
        {6, "noise hypotheses battery (H1)/(H2)", criterion_6},
        {7, "measure preservation: flow jacobian log-determinant", criterion_7},
        {8, "near-collision probability scaling exponent", criterion_8},
        {9, "regularization by noise: surviving fraction > 0", criterion_9},
        {10, "numerical-method sanity: RK4 order, period, EM covariance", criterion_10},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        if (!wanted.empty() && !wanted.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        std::string note;
        bool ok = false;
        try {
            ok = c.run(note);
        } catch (const std::exception& e) {
            note = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %s - %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.title.c_str(), note.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    if (failures == 0) std::printf("acceptance: all criteria passed\n");
    else std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures;
}
