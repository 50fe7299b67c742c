#pragma once
/**
 * @file integrator.hpp
 * @brief Time stepping for the deterministic and stochastic vortex systems,
 *        near-collision stopping, and the variational flow-Jacobian probe.
 *
 * Positions are integrated in raw (unwrapped) coordinates; the kernel reduces
 * displacements to minimal images itself, so the torus dynamics are identical
 * while winding-sensitive diagnostics keep the raw path. Recorded states are
 * wrapped into the fundamental domain, raw positions are stored alongside.
 *
 * Stochastic runs use fixed-step Euler-Maruyama (or Stratonovich Heun; the
 * correction term vanishes for this noise family, so both target the same
 * law at order dt). Brownian increments are drawn per (trajectory, step,
 * mode) from a counter-based stream, so results are bit-reproducible for a
 * given (seed, dt) regardless of threading.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "msqg/geometry.hpp"
#include "msqg/kernel.hpp"
#include "msqg/linalg.hpp"
#include "msqg/noise.hpp"
#include "msqg/rng.hpp"

namespace msqg {

enum class DetScheme { RK4, AdaptiveRK45 };
enum class StoScheme { EulerMaruyama, StratHeun };

struct IntegratorSpec {
    DetScheme scheme_det = DetScheme::AdaptiveRK45;
    StoScheme scheme_sto = StoScheme::EulerMaruyama;
    double dt = 1e-3;          ///< fixed step (RK4, stochastic schemes)
    double adaptive_tol = 1e-10;
    double t_end = 1.0;
    /// Euler-Maruyama drift substepping: when > 0, a (sub)step of length h is
    /// halved while max_i |drift_i| h exceeds this fraction of the current
    /// minimum pairwise distance. Without it, fixed-dt paths cannot resolve
    /// the fast co-rotation of close pairs (an artificial hard core appears
    /// near the scale where omega dt ~ 1, starving near-collision counts).
    /// Substep Brownian increments are drawn from per-node counters, so a
    /// run that never splits is bitwise identical to plain fixed-dt EM.
    double substep_threshold = 0.0;

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("integrator: dt must be positive");
        if (!(adaptive_tol > 0.0)) throw std::invalid_argument("integrator: adaptive_tol must be positive");
        if (!(t_end > 0.0)) throw std::invalid_argument("integrator: t_end must be positive");
        if (!(substep_threshold >= 0.0))
            throw std::invalid_argument("integrator: substep threshold must be >= 0");
    }
};

struct StoppingRule {
    double delta_stop = 1e-3;
    bool enabled = false;

    void validate() const {
        if (enabled && !(delta_stop > 0.0 && delta_stop < 1.0))
            throw std::invalid_argument("stopping: delta_stop must be in (0, 1)");
    }
};

enum class StopReason { ReachedT, HitDeltaStop, SingularityError };

/// Minimum adaptive step; reaching it aborts with a diagnostic instead of
/// stalling (reported as SingularityError since it only happens when the
/// exact-kernel flow approaches the diagonal with stopping disabled).
inline constexpr double kMinStep = 1e-12;

struct Trajectory {
    DomainSpec domain;
    std::vector<double> intensities;
    std::vector<double> times;
    std::vector<std::vector<Point2>> states;         ///< wrapped positions per sample
    std::vector<std::vector<Point2>> raw_positions;  ///< unwrapped positions per sample
    StopReason stop_reason = StopReason::ReachedT;
    double stop_time = 0.0;
    double inf_min_dist = 0.0;  ///< running infimum of the min pairwise distance over all steps
    std::string detail;

    VortexState state_at(std::size_t i) const { return {domain, states.at(i), intensities}; }
    VortexState raw_state_at(std::size_t i) const { return {domain, raw_positions.at(i), intensities}; }
    VortexState final_state() const { return state_at(states.size() - 1); }
};

namespace detail {

using Positions = std::vector<Point2>;

inline Positions wrap_all(const Positions& p, const DomainSpec& d) {
    Positions out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = wrap(p[i], d);
    return out;
}

inline double min_dist(const Positions& p, const DomainSpec& d) {
    return min_pairwise_distance(p, d);
}

/// Minimum pairwise distance along one step under linear interpolation of
/// the motion. Catches fly-throughs that fixed-step schemes would otherwise
/// jump across. The relative motion is interpolated in the image chosen for
/// the pre-step displacement, which is the continuous choice.
inline double min_dist_over_step(const Positions& pre, const Positions& post, const DomainSpec& d) {
    const std::size_t n = pre.size();
    double best2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            Vec2 r0 = pre[i] - pre[j];
            const Vec2 r1 = post[i] - post[j];
            const Vec2 dlt = r1 - r0;
            if (d.is_torus()) r0 = {wrap_coord(r0.x), wrap_coord(r0.y)};
            const double dd = dlt.norm2();
            double s = 0.0;
            if (dd > 0.0) s = std::clamp(-r0.dot(dlt) / dd, 0.0, 1.0);
            const Vec2 rm = r0 + dlt * s;
            best2 = std::min({best2, rm.norm2(), r0.norm2(), (r0 + dlt).norm2()});
            if (d.is_torus()) {
                const Vec2 r1w{wrap_coord(r1.x), wrap_coord(r1.y)};
                best2 = std::min(best2, r1w.norm2());
            }
        }
    return std::sqrt(best2);
}

struct Recorder {
    Trajectory* traj;
    int cadence;  // 0: record initial and final only
    long step_count = 0;

    void record(double t, const Positions& raw, const DomainSpec& d, bool force) {
        if (!force && (cadence <= 0 || (step_count % cadence) != 0)) return;
        traj->times.push_back(t);
        traj->raw_positions.push_back(raw);
        traj->states.push_back(wrap_all(raw, d));
    }
};

/// One classical RK4 step of dy/dt = f(y).
template <typename Rhs>
Positions rk4_step(const Rhs& f, const Positions& y, double h) {
    const std::size_t n = y.size();
    Positions k1 = f(y), y2(n), k2, y3(n), k3, y4(n), k4, out(n);
    for (std::size_t i = 0; i < n; ++i) y2[i] = y[i] + k1[i] * (0.5 * h);
    k2 = f(y2);
    for (std::size_t i = 0; i < n; ++i) y3[i] = y[i] + k2[i] * (0.5 * h);
    k3 = f(y3);
    for (std::size_t i = 0; i < n; ++i) y4[i] = y[i] + k3[i] * h;
    k4 = f(y4);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = y[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
    return out;
}

/// Dormand-Prince 5(4) pair on a flat vector of doubles.
struct Dopri5 {
    // Stage coefficients.
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                            b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

template <typename Rhs>
struct Dopri5Stepper {
    const Rhs& f;
    std::vector<double> k1, k2, k3, k4, k5, k6, k7, tmp;

    explicit Dopri5Stepper(const Rhs& rhs, std::size_t dim) : f(rhs) {
        k1.resize(dim);
        k2.resize(dim);
        k3.resize(dim);
        k4.resize(dim);
        k5.resize(dim);
        k6.resize(dim);
        k7.resize(dim);
        tmp.resize(dim);
    }

    /// Attempts a step; fills ynew and the scaled error norm. k1 must hold
    /// f(y) on entry (FSAL); on acceptance caller moves k7 into k1.
    void attempt(const std::vector<double>& y, double h, std::vector<double>& ynew, double tol,
                 double& err_norm) {
        using D = Dopri5;
        const std::size_t n = y.size();
        auto axpy = [&](auto&&... terms) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                ((acc += terms.first * terms.second[i]), ...);
                tmp[i] = y[i] + h * acc;
            }
        };
        axpy(std::pair{D::a21, std::cref(k1).get()});
        f(tmp, k2);
        axpy(std::pair{D::a31, std::cref(k1).get()}, std::pair{D::a32, std::cref(k2).get()});
        f(tmp, k3);
        axpy(std::pair{D::a41, std::cref(k1).get()}, std::pair{D::a42, std::cref(k2).get()},
             std::pair{D::a43, std::cref(k3).get()});
        f(tmp, k4);
        axpy(std::pair{D::a51, std::cref(k1).get()}, std::pair{D::a52, std::cref(k2).get()},
             std::pair{D::a53, std::cref(k3).get()}, std::pair{D::a54, std::cref(k4).get()});
        f(tmp, k5);
        axpy(std::pair{D::a61, std::cref(k1).get()}, std::pair{D::a62, std::cref(k2).get()},
             std::pair{D::a63, std::cref(k3).get()}, std::pair{D::a64, std::cref(k4).get()},
             std::pair{D::a65, std::cref(k5).get()});
        f(tmp, k6);
        for (std::size_t i = 0; i < n; ++i)
            ynew[i] = y[i] + h * (D::b1 * k1[i] + D::b3 * k3[i] + D::b4 * k4[i] + D::b5 * k5[i] +
                                  D::b6 * k6[i]);
        f(ynew, k7);
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = h * (D::e1 * k1[i] + D::e3 * k3[i] + D::e4 * k4[i] + D::e5 * k5[i] +
                                  D::e6 * k6[i] + D::e7 * k7[i]);
            const double scale = tol + tol * std::max(std::fabs(y[i]), std::fabs(ynew[i]));
            acc += (e / scale) * (e / scale);
        }
        err_norm = std::sqrt(acc / double(n));
    }
};

inline std::vector<double> flatten(const Positions& p) {
    std::vector<double> v(2 * p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[2 * i] = p[i].x;
        v[2 * i + 1] = p[i].y;
    }
    return v;
}

inline Positions unflatten(const std::vector<double>& v) {
    Positions p(v.size() / 2);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = {v[2 * i], v[2 * i + 1]};
    return p;
}

}  // namespace detail

/// Observer invoked after every accepted step with (t, raw positions, and
/// the minimum pairwise distance seen along the step).
using StepObserver = std::function<void(double, const std::vector<Point2>&, double)>;

/// Deterministic trajectory of dx_i/dt = sum_{j!=i} xi_j K(x_i - x_j).
/// Halts at t_end, at the stopping threshold (time refined by bisection to
/// relative 1e-3), or on a kernel singularity.
inline Trajectory integrate_deterministic(const VortexState& s0, const KernelSpec& kspec,
                                          const IntegratorSpec& ispec, const StoppingRule& stop,
                                          int record_cadence = 1, const StepObserver& observer = {}) {
    validate_state(s0);
    kspec.validate();
    ispec.validate();
    stop.validate();

    Trajectory traj;
    traj.domain = s0.domain;
    traj.intensities = s0.intensities;
    detail::Recorder rec{&traj, record_cadence};

    detail::Positions y = s0.positions;
    const std::size_t n = y.size();
    double t = 0.0;
    rec.record(t, y, s0.domain, true);

    auto drift_of = [&](const detail::Positions& p) {
        VortexState st{s0.domain, p, s0.intensities};
        return drift(st, kspec);
    };
    auto current_min = [&](const detail::Positions& p) {
        return n >= 2 ? detail::min_dist(p, s0.domain) : std::numeric_limits<double>::infinity();
    };

    traj.inf_min_dist = current_min(y);
    if (stop.enabled && n >= 2 && traj.inf_min_dist <= stop.delta_stop) {
        traj.stop_reason = StopReason::HitDeltaStop;
        traj.stop_time = 0.0;
        rec.record(0.0, y, s0.domain, true);
        return traj;
    }

    // Bisection refinement of the crossing time inside the step [t, t+h].
    auto refine_and_finish = [&](const detail::Positions& y_pre, double t_pre, double h) {
        double lo = 0.0, hi = 1.0;
        detail::Positions y_hi = detail::rk4_step(drift_of, y_pre, h);
        for (int it = 0; it < 40 && (hi - lo) > 1e-3 * hi; ++it) {
            const double mid = 0.5 * (lo + hi);
            detail::Positions y_mid = detail::rk4_step(drift_of, y_pre, mid * h);
            if (current_min(y_mid) <= stop.delta_stop) {
                hi = mid;
                y_hi = std::move(y_mid);
            } else {
                lo = mid;
            }
        }
        t = t_pre + hi * h;
        y = std::move(y_hi);
        traj.inf_min_dist = std::min(traj.inf_min_dist, current_min(y));
        traj.stop_reason = StopReason::HitDeltaStop;
        traj.stop_time = t;
        rec.record(t, y, s0.domain, true);
    };

    auto after_step = [&](const detail::Positions& y_pre, double t_pre, double h) -> bool {
        // Returns true when integration should halt.
        const double step_min =
            n >= 2 ? detail::min_dist_over_step(y_pre, y, s0.domain) : std::numeric_limits<double>::infinity();
        traj.inf_min_dist = std::min(traj.inf_min_dist, step_min);
        if (observer) observer(t, y, step_min);
        if (stop.enabled && current_min(y) <= stop.delta_stop) {
            refine_and_finish(y_pre, t_pre, h);
            return true;
        }
        return false;
    };

    try {
        if (ispec.scheme_det == DetScheme::RK4) {
            const long nsteps = std::max<long>(1, std::lround(std::ceil(ispec.t_end / ispec.dt - 1e-12)));
            const double h = ispec.t_end / double(nsteps);
            for (long s = 0; s < nsteps; ++s) {
                const detail::Positions y_pre = y;
                const double t_pre = t;
                y = detail::rk4_step(drift_of, y, h);
                t = (s + 1 == nsteps) ? ispec.t_end : t + h;
                rec.step_count++;
                if (after_step(y_pre, t_pre, h)) return traj;
                rec.record(t, y, s0.domain, s + 1 == nsteps);
            }
        } else {
            auto rhs = [&](const std::vector<double>& v, std::vector<double>& out) {
                const auto d = drift_of(detail::unflatten(v));
                out = detail::flatten(d);
            };
            std::vector<double> yf = detail::flatten(y), ynew(2 * n);
            detail::Dopri5Stepper<decltype(rhs)> stepper(rhs, 2 * n);
            rhs(yf, stepper.k1);
            double h = std::min(ispec.dt, ispec.t_end);
            const double t_done = ispec.t_end * (1.0 - 1e-14);
            while (t < t_done) {
                h = std::min(h, ispec.t_end - t);
                if (h < kMinStep) {
                    traj.stop_reason = StopReason::SingularityError;
                    traj.stop_time = t;
                    traj.detail = "step size underflow (approaching the singular set?)";
                    rec.record(t, y, s0.domain, true);
                    return traj;
                }
                double err = 0.0;
                stepper.attempt(yf, h, ynew, ispec.adaptive_tol, err);
                if (!std::isfinite(err) || err > 1.0) {
                    const double shrink = std::isfinite(err) && err > 0.0
                                              ? std::max(0.2, 0.9 * std::pow(err, -0.2))
                                              : 0.2;
                    h *= shrink;
                    continue;
                }
                const detail::Positions y_pre = y;
                const double t_pre = t;
                yf.swap(ynew);
                stepper.k1.swap(stepper.k7);
                y = detail::unflatten(yf);
                t = t_pre + h;
                rec.step_count++;
                if (after_step(y_pre, t_pre, h)) return traj;
                if (t < t_done) rec.record(t, y, s0.domain, false);
                if (err > 0.0) h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
                else h *= 5.0;
            }
            t = ispec.t_end;
            rec.record(t, y, s0.domain, true);
        }
    } catch (const SingularityError& e) {
        traj.stop_reason = StopReason::SingularityError;
        traj.stop_time = t;
        traj.detail = e.what();
        rec.record(t, y, s0.domain, true);
        return traj;
    }
    traj.stop_reason = StopReason::ReachedT;
    traj.stop_time = ispec.t_end;
    return traj;
}

/// Stochastic trajectory of the regularized system (delta required):
/// X_{n+1} = X_n + drift(X_n) dt + sum_k A_k(X_n) dW_k, with the same
/// Brownian channels driving every vortex. Reproducible given (seed, dt).
inline Trajectory integrate_stochastic(const VortexState& s0, const KernelSpec& kspec,
                                       const NoiseSpec& nspec, const IntegratorSpec& ispec,
                                       const StoppingRule& stop, std::uint64_t seed,
                                       int record_cadence = 1, const StepObserver& observer = {}) {
    validate_state(s0);
    kspec.validate();
    nspec.validate();
    ispec.validate();
    stop.validate();
    if (!kspec.delta)
        throw std::invalid_argument("integrate_stochastic: the stochastic path requires a regularized kernel "
                                    "(delta present), mirroring the construction of the flow");

    Trajectory traj;
    traj.domain = s0.domain;
    traj.intensities = s0.intensities;
    detail::Recorder rec{&traj, record_cadence};

    const NoiseModeTable modes(nspec);
    const CounterRng rng(seed, 0);

    detail::Positions y = s0.positions;
    const std::size_t n = y.size();
    double t = 0.0;
    rec.record(t, y, s0.domain, true);
    traj.inf_min_dist = n >= 2 ? detail::min_dist(y, s0.domain) : std::numeric_limits<double>::infinity();

    if (stop.enabled && n >= 2 && traj.inf_min_dist <= stop.delta_stop) {
        traj.stop_reason = StopReason::HitDeltaStop;
        traj.stop_time = 0.0;
        rec.record(0.0, y, s0.domain, true);
        return traj;
    }

    auto drift_of = [&](const detail::Positions& p) {
        VortexState st{s0.domain, p, s0.intensities};
        return drift(st, kspec);
    };
    // Brownian channels are addressed by (step, mode + node * 2^20), where
    // `node` walks the substep binary tree (root 0, children 2n+1, 2n+2).
    auto add_noise = [&](detail::Positions& dst, const detail::Positions& at, double sqrth,
                         std::uint64_t step_index, double weight, std::uint64_t node = 0) {
        const std::uint64_t base = node << 20;
        for (std::size_t m = 0; m < modes.size(); ++m) {
            if (modes.scales[m] == 0.0) continue;
            const double dw = sqrth * rng.normal_at(step_index, base + m);
            const double w = weight * dw;
            for (std::size_t i = 0; i < n; ++i)
                dst[i] += sigma(modes.modes[m], at[i], nspec, modes.scales[m]) * w;
        }
    };

    // One Euler-Maruyama step over [t, t+h], recursively halved while the
    // drift displacement is large against the current minimum separation.
    // An unsplit step is the plain scheme, bitwise.
    struct Frame {
        double h;
        std::uint64_t node;
        int depth;
    };
    std::vector<Frame> stack;
    auto em_step_over = [&](double h_macro, std::uint64_t step_index, double& step_min) {
        stack.clear();
        stack.push_back({h_macro, 0, 0});
        while (!stack.empty()) {
            const Frame f = stack.back();
            stack.pop_back();
            const auto a0 = drift_of(y);
            if (ispec.substep_threshold > 0.0 && n >= 2 && f.depth < 26) {
                double amax = 0.0;
                for (const Vec2& a : a0) amax = std::max(amax, a.norm());
                if (amax * f.h > ispec.substep_threshold * detail::min_dist(y, s0.domain)) {
                    stack.push_back({0.5 * f.h, 2 * f.node + 2, f.depth + 1});
                    stack.push_back({0.5 * f.h, 2 * f.node + 1, f.depth + 1});
                    continue;
                }
            }
            detail::Positions ynext = y;
            for (std::size_t i = 0; i < n; ++i) ynext[i] += a0[i] * f.h;
            add_noise(ynext, y, std::sqrt(f.h), step_index, 1.0, f.node);
            if (n >= 2)
                step_min = std::min(step_min, detail::min_dist_over_step(y, ynext, s0.domain));
            y = std::move(ynext);
        }
    };

    const long nfull = static_cast<long>(std::floor(ispec.t_end / ispec.dt + 1e-9));
    const double tail = ispec.t_end - double(nfull) * ispec.dt;
    const long nsteps = nfull + (tail > ispec.dt * 1e-9 ? 1 : 0);

    for (long s = 0; s < nsteps; ++s) {
        const double h = (s < nfull) ? ispec.dt : tail;
        double step_min = std::numeric_limits<double>::infinity();
        if (ispec.scheme_sto == StoScheme::EulerMaruyama) {
            em_step_over(h, std::uint64_t(s), step_min);
        } else {  // Stratonovich Heun (predictor-corrector with shared increments)
            const double sqrth = std::sqrt(h);
            detail::Positions ynext = y;
            const auto a0 = drift_of(y);
            detail::Positions pred = y;
            for (std::size_t i = 0; i < n; ++i) pred[i] += a0[i] * h;
            add_noise(pred, y, sqrth, std::uint64_t(s), 1.0);
            const auto a1 = drift_of(pred);
            for (std::size_t i = 0; i < n; ++i) ynext[i] += (a0[i] + a1[i]) * (0.5 * h);
            add_noise(ynext, y, sqrth, std::uint64_t(s), 0.5);
            add_noise(ynext, pred, sqrth, std::uint64_t(s), 0.5);
            if (n >= 2) step_min = detail::min_dist_over_step(y, ynext, s0.domain);
            y = std::move(ynext);
        }
        t = (s + 1 == nsteps) ? ispec.t_end : t + h;
        rec.step_count++;
        traj.inf_min_dist = std::min(traj.inf_min_dist, step_min);
        if (observer) observer(t, y, step_min);
        if (stop.enabled && step_min <= stop.delta_stop) {
            traj.stop_reason = StopReason::HitDeltaStop;
            traj.stop_time = t;
            rec.record(t, y, s0.domain, true);
            return traj;
        }
        rec.record(t, y, s0.domain, s + 1 == nsteps);
    }
    traj.stop_reason = StopReason::ReachedT;
    traj.stop_time = ispec.t_end;
    return traj;
}

/// Jacobian matrix of the regularized deterministic flow map X0 -> X_t(X0),
/// by integrating the variational equation dY = J(X) Y dt alongside the flow.
inline DenseMatrix flow_jacobian_matrix(const VortexState& s0, const KernelSpec& kspec, double t_end,
                                        const IntegratorSpec& ispec) {
    validate_state(s0);
    kspec.validate();
    if (!kspec.delta) throw std::invalid_argument("flow_jacobian requires a regularized kernel");
    if (t_end < 0.0) throw std::invalid_argument("flow_jacobian: t must be >= 0");

    const std::size_t n = s0.positions.size();
    const std::size_t d = 2 * n;
    const std::size_t dim = d + d * d;

    auto rhs = [&](const std::vector<double>& v, std::vector<double>& out) {
        out.assign(dim, 0.0);
        detail::Positions p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = {v[2 * i], v[2 * i + 1]};
        VortexState st{s0.domain, p, s0.intensities};
        const auto a = drift(st, kspec);
        for (std::size_t i = 0; i < n; ++i) {
            out[2 * i] = a[i].x;
            out[2 * i + 1] = a[i].y;
        }
        const DenseMatrix jac = drift_jacobian(st, kspec);
        // dY/dt = J * Y, Y stored row-major after the state block.
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) acc += jac(r, k) * v[d + k * d + c];
                out[d + r * d + c] = acc;
            }
    };

    std::vector<double> y(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[2 * i] = s0.positions[i].x;
        y[2 * i + 1] = s0.positions[i].y;
    }
    for (std::size_t r = 0; r < d; ++r) y[d + r * d + r] = 1.0;

    detail::Dopri5Stepper<decltype(rhs)> stepper(rhs, dim);
    std::vector<double> ynew(dim);
    rhs(y, stepper.k1);
    double t = 0.0;
    double h = std::min(ispec.dt, t_end > 0.0 ? t_end : ispec.dt);
    const double t_done = t_end * (1.0 - 1e-14);
    while (t < t_done) {
        h = std::min(h, t_end - t);
        if (h < kMinStep) throw std::runtime_error("flow_jacobian: step size underflow");
        double err = 0.0;
        stepper.attempt(y, h, ynew, ispec.adaptive_tol, err);
        if (!std::isfinite(err) || err > 1.0) {
            h *= std::isfinite(err) && err > 0.0 ? std::max(0.2, 0.9 * std::pow(err, -0.2)) : 0.2;
            continue;
        }
        y.swap(ynew);
        stepper.k1.swap(stepper.k7);
        t += h;
        if (err > 0.0) h *= std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        else h *= 5.0;
    }

    DenseMatrix Y(d, d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) Y(r, c) = y[d + r * d + c];
    return Y;
}

/// log |det| of the flow-map Jacobian; identically zero in exact arithmetic
/// because the drift is divergence-free (measure preservation).
inline double flow_jacobian_logdet(const VortexState& s0, const KernelSpec& kspec, double t_end,
                                   const IntegratorSpec& ispec) {
    if (t_end == 0.0) return 0.0;
    return log_abs_det(flow_jacobian_matrix(s0, kspec, t_end, ispec));
}

/// Integrates the regularized deterministic flow and returns the final raw
/// positions (helper for finite-difference Jacobian oracles and scaling tests).
inline std::vector<Point2> flow_map(const VortexState& s0, const KernelSpec& kspec, double t_end,
                                    const IntegratorSpec& ispec) {
    IntegratorSpec is = ispec;
    is.t_end = t_end;
    StoppingRule no_stop;
    Trajectory tr = integrate_deterministic(s0, kspec, is, no_stop, 0);
    if (tr.stop_reason != StopReason::ReachedT)
        throw std::runtime_error("flow_map: integration did not reach t_end");
    return tr.raw_positions.back();
}

}  // namespace msqg
