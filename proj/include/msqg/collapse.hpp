#pragma once
/**
 * @file collapse.hpp
 * @brief The explicit three-vortex collapse construction: intensities solved
 *        from S = 0 = S_eps, the per-pair rate coefficients c_{i,j}, the
 *        closed-form distance law, the collapse time, and the torus scaling.
 *
 * Vertex-role convention: pair (i,j) with opposite vertex k follows the
 * cyclic labeling (1,2|3), (2,3|1), (3,1|2), and A(0) is twice the signed
 * area of (x1, x2, x3); sin(phi_{i,j}) is recovered from A(0) rather than
 * from explicit angles, so orientation is handled by the sign of A alone.
 *
 * Rate law (derived from d l_ij^2/dt = 2 c_eps xi_k A (l_ik^{eps-3} -
 * l_kj^{eps-3}) plus shape preservation, and verified against direct drift
 * evaluation):
 *     d l_ij(t)^2 / dt = c_ij / l_ij(t)^{1-eps},
 *     c_ij = 2 c_eps xi_k A(0) l_ij(0)^{1-eps} (l_ik(0)^{eps-3} - l_kj(0)^{eps-3}),
 * whose solution is l(t) = (l0^{3-eps} + (1/2) c (3-eps) t)^{1/(3-eps)}.
 * A collapse (all l -> 0 at finite t*) needs S = 0 = S_eps and c_ij < 0;
 * then t* = -2 l0^{3-eps} / (c (3-eps)), identical for the three pairs.
 */

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "msqg/diagnostics.hpp"
#include "msqg/geometry.hpp"

namespace msqg {

struct DegenerateGeometryError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The torus-scaling map x -> lambda^alpha x(lambda t) with alpha = -1/(3-eps).
struct ScalingMap {
    double lambda{1.0};
    double alpha{0.0};

    static ScalingMap make(double lambda, double eps) {
        if (!(lambda > 0.0)) throw std::invalid_argument("scaling: lambda must be positive");
        return {lambda, -1.0 / (3.0 - eps)};
    }
    double contraction() const { return std::pow(lambda, alpha); }
};

/// Solve S = 0 = S_eps for (xi1, xi3) given the three distances and xi2.
/// The system is linear in (1/xi1, 1/xi3):
///   l23^2    /xi1 + l12^2    /xi3 = -l31^2    /xi2
///   l23^{e-1}/xi1 + l12^{e-1}/xi3 = -l31^{e-1}/xi2.
inline std::pair<double, double> solve_intensities(double l12, double l23, double l31, double eps,
                                                   double xi2) {
    if (!(l12 > 0.0 && l23 > 0.0 && l31 > 0.0))
        throw std::invalid_argument("solve_intensities: distances must be positive");
    if (!(l12 < l23 + l31 && l23 < l12 + l31 && l31 < l12 + l23))
        throw DegenerateGeometryError("degenerate geometry: triangle inequality not strict");
    if (xi2 == 0.0) throw std::invalid_argument("solve_intensities: xi2 must be nonzero");

    const double e = eps - 1.0;
    const double m11 = l23 * l23, m12 = l12 * l12;
    const double m21 = std::pow(l23, e), m22 = std::pow(l12, e);
    const double r1 = -l31 * l31 / xi2, r2 = -std::pow(l31, e) / xi2;
    const double det = m11 * m22 - m12 * m21;
    const double scale = std::max(std::fabs(m11 * m22), std::fabs(m12 * m21));
    if (!(std::fabs(det) > 1e-12 * scale))
        throw DegenerateGeometryError("degenerate geometry: intensities underdetermined");
    const double a = (r1 * m22 - r2 * m12) / det;  // 1/xi1
    const double b = (m11 * r2 - m21 * r1) / det;  // 1/xi3
    if (a == 0.0 || b == 0.0 || !std::isfinite(a) || !std::isfinite(b))
        throw DegenerateGeometryError("degenerate geometry: zero intensity solution");
    return {1.0 / a, 1.0 / b};
}

/// Three-vortex collapse data: oriented plane geometry, solved intensities,
/// rate coefficients and the predicted collapse time (NaN when the
/// configuration expands rather than collapses).
struct CollapseConfig {
    double eps{0.5};
    double c_eps{1.0};
    std::array<Point2, 3> positions0{};
    std::array<double, 3> xi{};       ///< xi1, xi2, xi3
    std::array<double, 3> l0{};       ///< l12, l23, l31
    std::array<double, 3> c_coeffs{}; ///< c12, c23, c31
    double area0{0.0};                ///< A(0), twice the signed area
    double t_star{std::numeric_limits<double>::quiet_NaN()};

    VortexState state() const {
        return {DomainSpec::plane(), {positions0[0], positions0[1], positions0[2]},
                {xi[0], xi[1], xi[2]}};
    }
    bool collapsing() const { return c_coeffs[0] < 0.0 && c_coeffs[1] < 0.0 && c_coeffs[2] < 0.0; }
};

/// c_{i,j} for the cyclic pairs (1,2|3), (2,3|1), (3,1|2).
inline std::array<double, 3> c_coefficients(const std::array<Point2, 3>& pos,
                                            const std::array<double, 3>& xi, double eps,
                                            double c_eps) {
    const double A0 = cross(pos[1] - pos[0], pos[2] - pos[0]);
    if (A0 == 0.0) throw DegenerateGeometryError("degenerate geometry: collinear triangle");
    auto lij = [&](int i, int j) { return (pos[i] - pos[j]).norm(); };
    auto c_of = [&](int i, int j, int k) {
        const double lik = lij(i, k), lkj = lij(k, j);
        return 2.0 * c_eps * xi[k] * A0 * std::pow(lij(i, j), 1.0 - eps) *
               (std::pow(lik, eps - 3.0) - std::pow(lkj, eps - 3.0));
    };
    return {c_of(0, 1, 2), c_of(1, 2, 0), c_of(2, 0, 1)};
}

inline std::array<double, 3> c_coefficients(const CollapseConfig& cfg) {
    return c_coefficients(cfg.positions0, cfg.xi, cfg.eps, cfg.c_eps);
}

/// Closed-form pair distance l(t) = (l0^{3-eps} + (1/2) c (3-eps) t)^{1/(3-eps)}.
/// Throws once the base turns nonpositive (past the collapse time).
inline double analytic_distance(double t, double l0, double c, double eps) {
    const double p = 3.0 - eps;
    const double base = std::pow(l0, p) + 0.5 * c * p * t;
    if (!(base > 0.0)) {
        if (base == 0.0) return 0.0;  // exactly at t*
        throw std::domain_error("past collapse time");
    }
    return std::pow(base, 1.0 / p);
}

/// Collapse time t* = -2 l0^{3-eps} / (c (3-eps)); requires every c_{i,j} < 0
/// and (shape preservation) agreement of the three per-pair values.
inline double collapse_time(const CollapseConfig& cfg) {
    for (double c : cfg.c_coeffs)
        if (!(c < 0.0)) throw std::domain_error("no collapse for this configuration");
    const double p = 3.0 - cfg.eps;
    std::array<double, 3> ts{};
    for (int i = 0; i < 3; ++i) ts[i] = -2.0 * std::pow(cfg.l0[i], p) / (cfg.c_coeffs[i] * p);
    const double t0 = ts[0];
    for (double t : ts)
        if (std::fabs(t - t0) > 1e-10 * std::fabs(t0))
            throw std::runtime_error("collapse_time: per-pair times disagree (shape preservation violated)");
    return (ts[0] + ts[1] + ts[2]) / 3.0;
}

/// Builds the full config from oriented positions; intensities are solved
/// from the distances (xi2 given). The orientation of the input decides
/// collapse versus expansion; t_star is NaN for an expanding configuration.
inline CollapseConfig make_collapse_config_from_positions(const std::array<Point2, 3>& pos, double eps,
                                                          double xi2, double c_eps) {
    CollapseConfig cfg;
    cfg.eps = eps;
    cfg.c_eps = c_eps;
    cfg.positions0 = pos;
    const double l12 = (pos[0] - pos[1]).norm();
    const double l23 = (pos[1] - pos[2]).norm();
    const double l31 = (pos[2] - pos[0]).norm();
    cfg.l0 = {l12, l23, l31};
    const auto [xi1, xi3] = solve_intensities(l12, l23, l31, eps, xi2);
    cfg.xi = {xi1, xi2, xi3};
    cfg.area0 = cross(pos[1] - pos[0], pos[2] - pos[0]);
    cfg.c_coeffs = c_coefficients(cfg);
    if (cfg.collapsing()) cfg.t_star = collapse_time(cfg);
    return cfg;
}

namespace detail {

/// Canonical triangle with the given side lengths, clockwise orientation,
/// re-centered on the (conserved) center of vorticity so the collapse point
/// sits at the origin.
inline std::array<Point2, 3> place_triangle(double l12, double l23, double l31,
                                            const std::array<double, 3>& xi) {
    const double px = (l12 * l12 + l31 * l31 - l23 * l23) / (2.0 * l12);
    const double h2 = l31 * l31 - px * px;
    if (!(h2 > 0.0)) throw DegenerateGeometryError("degenerate geometry: collinear triangle");
    std::array<Point2, 3> pos{Point2{0.0, 0.0}, Point2{l12, 0.0}, Point2{px, -std::sqrt(h2)}};
    const double xs = xi[0] + xi[1] + xi[2];
    if (xs != 0.0) {
        Vec2 cov{0.0, 0.0};
        for (int i = 0; i < 3; ++i) cov += pos[i] * xi[i];
        cov *= 1.0 / xs;
        for (auto& p : pos) p -= cov;
    }
    return pos;
}

}  // namespace detail

/// Builds a genuinely collapsing config from distances alone: the triangle is
/// placed with whichever orientation makes every c_{i,j} negative (the mirror
/// image flips all three signs together).
inline CollapseConfig make_collapse_config_from_distances(double l12, double l23, double l31,
                                                          double eps, double xi2 = 1.0,
                                                          double c_eps = 1.0) {
    const auto [xi1, xi3] = solve_intensities(l12, l23, l31, eps, xi2);
    auto pos = detail::place_triangle(l12, l23, l31, {xi1, xi2, xi3});
    CollapseConfig cfg = make_collapse_config_from_positions(pos, eps, xi2, c_eps);
    if (!cfg.collapsing()) {
        for (auto& p : pos) p.y = -p.y;  // mirror: flips A(0), hence every c_{i,j}
        cfg = make_collapse_config_from_positions(pos, eps, xi2, c_eps);
    }
    return cfg;
}

/// The explicit example: distances (2, sqrt 2, sqrt 6), xi2 = 1, solved
/// xi1 = 1.155616, xi3 = -0.517419 (at eps = 1/2), taken in the collapsing
/// orientation and centered on the collapse point.
inline CollapseConfig reference_collapse_config(double eps = 0.5, double c_eps = 1.0) {
    return make_collapse_config_from_distances(2.0, std::sqrt(2.0), std::sqrt(6.0), eps, 1.0, c_eps);
}

/// Scale positions by lambda^alpha, alpha = -1/(3-eps); intensities are
/// unchanged, the trajectory maps as x^lambda(t) = lambda^alpha x(lambda t),
/// and the collapse time scales to t*/lambda.
inline CollapseConfig scale_config(const CollapseConfig& cfg, double lambda) {
    const ScalingMap map = ScalingMap::make(lambda, cfg.eps);
    const double s = map.contraction();
    std::array<Point2, 3> pos = cfg.positions0;
    for (auto& p : pos) p *= s;
    CollapseConfig out = make_collapse_config_from_positions(pos, cfg.eps, cfg.xi[1], cfg.c_eps);
    return out;
}

/// The scaled configuration as a torus state (positions wrapped; for the
/// intended lambda ranges they already sit inside the fundamental domain).
inline VortexState torus_state(const CollapseConfig& cfg) {
    VortexState s = cfg.state();
    s.domain = DomainSpec::torus();
    for (auto& p : s.positions) p = wrap(p, s.domain);
    validate_state(s);
    return s;
}

}  // namespace msqg
