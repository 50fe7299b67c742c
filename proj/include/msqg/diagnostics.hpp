#pragma once
/**
 * @file diagnostics.hpp
 * @brief Monitored functionals: the three-vortex invariants S and S_eps, the
 *        signed area, the Lyapunov functional g_delta, the majorants h1/h2,
 *        and per-sample diagnostic records.
 *
 * Index-set bookkeeping follows the source sums literally: sums over i != j
 * count both orders (factor 2 versus unordered pairs), and the h1 triple sum
 * runs over ordered triples of pairwise-distinct indices. Off-by-two factors
 * are the classic bug here, so the tests pin h1/h2 against brute-force
 * reimplementations.
 *
 * S, S_eps and the signed area use the coordinates exactly as given (no
 * torus wrapping): for torus trajectories pass raw positions, which keeps
 * the diagnostics winding-sensitive. g_delta, h1, h2 and min_dist use
 * minimal-image distances on the torus.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msqg/geometry.hpp"
#include "msqg/integrator.hpp"
#include "msqg/kernel.hpp"

namespace msqg {

/// S = l12^2/xi3 + l23^2/xi1 + l31^2/xi2, conserved by the three-vortex flow.
inline double invariant_S(const VortexState& s) {
    if (s.size() != 3) throw std::invalid_argument("S defined for three vortices");
    for (double xi : s.intensities)
        if (xi == 0.0) throw std::invalid_argument("S requires nonzero intensities");
    const double l12 = (s.positions[0] - s.positions[1]).norm();
    const double l23 = (s.positions[1] - s.positions[2]).norm();
    const double l31 = (s.positions[2] - s.positions[0]).norm();
    return l12 * l12 / s.intensities[2] + l23 * l23 / s.intensities[0] + l31 * l31 / s.intensities[1];
}

/// S_eps = l12^(eps-1)/xi3 + l23^(eps-1)/xi1 + l31^(eps-1)/xi2.
/// At eps = 1 this is distance-free: 1/xi3 + 1/xi1 + 1/xi2.
inline double invariant_S_eps(const VortexState& s, double eps) {
    if (s.size() != 3) throw std::invalid_argument("S_eps defined for three vortices");
    const double l12 = (s.positions[0] - s.positions[1]).norm();
    const double l23 = (s.positions[1] - s.positions[2]).norm();
    const double l31 = (s.positions[2] - s.positions[0]).norm();
    if (l12 == 0.0 || l23 == 0.0 || l31 == 0.0) throw SingularityError("S_eps: coincident points");
    const double e = eps - 1.0;
    return std::pow(l12, e) / s.intensities[2] + std::pow(l23, e) / s.intensities[0] +
           std::pow(l31, e) / s.intensities[1];
}

/// Twice the signed area of the triangle (x1, x2, x3); positive for the
/// counter-clockwise orientation of (x1, x2, x3), |A| = 2 * shoelace area.
inline double signed_area_A(const VortexState& s) {
    if (s.size() != 3) throw std::invalid_argument("A defined for three vortices");
    return cross(s.positions[1] - s.positions[0], s.positions[2] - s.positions[0]);
}

/// Diagnostics configuration: the upper bound c0 >= sup_x G_delta(x)
/// (computed once per kernel spec) and the sampling cadence.
struct DiagnosticsSpec {
    double c0 = 0.0;
    int cadence = 1;

    void validate() const {
        if (!std::isfinite(c0)) throw std::invalid_argument("diagnostics: c0 must be finite");
        if (cadence < 1) throw std::invalid_argument("diagnostics: cadence must be >= 1");
    }
};

/// Upper bound for the regularized Green function. On the plane G_delta < 0
/// with supremum 0 (approached at infinity). On the torus the supremum of
/// the lattice-renormalized G_delta is located by a grid scan; a 1% margin
/// of the scanned range is added on top.
inline double compute_c0(const KernelSpec& kspec, const DomainSpec& domain) {
    if (!kspec.delta) throw std::invalid_argument("compute_c0 requires a regularized kernel");
    if (!domain.is_torus()) return 0.0;
    const int ng = 101;
    double hi = -std::numeric_limits<double>::infinity();
    double lo = std::numeric_limits<double>::infinity();
    for (int i = 0; i < ng; ++i)
        for (int j = 0; j < ng; ++j) {
            const Vec2 x{-0.5 + (i + 0.5) / ng, -0.5 + (j + 0.5) / ng};
            const double g = green_torus_regularized(x, kspec);
            hi = std::max(hi, g);
            lo = std::min(lo, g);
        }
    const double margin = 0.01 * std::max(hi - lo, 1.0);
    return std::max(hi + margin, 0.0);
}

inline DiagnosticsSpec make_diagnostics_spec(const KernelSpec& kspec, const DomainSpec& domain,
                                             int cadence = 1) {
    DiagnosticsSpec d;
    d.c0 = compute_c0(kspec, domain);
    d.cadence = cadence;
    return d;
}

/// Lyapunov functional g_delta(X) = -sum_{i != j} (G_delta(x_i - x_j) - c0);
/// each unordered pair counts twice. Nonnegative when c0 >= sup G_delta, and
/// blowing up like delta^(eps-1) when a pair sits inside the blend radius.
inline double lyapunov_g_delta(const VortexState& s, const KernelSpec& kspec,
                               const DiagnosticsSpec& dspec) {
    if (!kspec.delta) throw std::invalid_argument("g_delta requires a regularized kernel");
    const std::size_t n = s.size();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 r = displacement(s.positions[i], s.positions[j], s.domain);
            const double g = s.domain.is_torus() ? green_torus_regularized(r, kspec)
                                                 : green_regularized(r, kspec);
            acc += 2.0 * (dspec.c0 - g);
        }
    return acc;
}

namespace detail {

inline std::vector<double> pair_distances(const VortexState& s) {
    const std::size_t n = s.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dij = displacement(s.positions[i], s.positions[j], s.domain).norm();
            if (dij == 0.0) throw SingularityError("majorant: coincident points");
            d[i * n + j] = d[j * n + i] = dij;
        }
    return d;
}

}  // namespace detail

/// h1(X) = sum over ordered triples (i,j,k), pairwise distinct, of
/// |x_i-x_j|^(eps-2) |x_i-x_k|^(eps-2), plus sum over ordered pairs i != j
/// of |x_i-x_j|^(eps-1).
inline double majorant_h1(const VortexState& s, double eps) {
    const std::size_t n = s.size();
    const auto d = detail::pair_distances(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == i || k == j) continue;
                acc += std::pow(d[i * n + j], eps - 2.0) * std::pow(d[i * n + k], eps - 2.0);
            }
            acc += std::pow(d[i * n + j], eps - 1.0);
        }
    return acc;
}

/// h2(X) = sum over ordered pairs i != j of |x_i-x_j|^(2 eps - 2).
inline double majorant_h2(const VortexState& s, double eps) {
    const std::size_t n = s.size();
    const auto d = detail::pair_distances(s);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) acc += std::pow(d[i * n + j], 2.0 * eps - 2.0);
    return acc;
}

/// One sampled row of the monitored quantities. Optional entries are absent
/// when not defined for the run (N != 3, or no regularization).
struct DiagnosticsRecord {
    double t{0.0};
    std::optional<double> S;
    std::optional<double> S_eps;
    std::optional<double> area_A;
    std::optional<double> g_delta;
    double h1{0.0};
    double h2{0.0};
    double min_dist{0.0};
};

/// Diagnostics for sample index `i` of a trajectory. S, S_eps and A use the
/// raw (unwrapped) positions; distance-based quantities use minimal images.
/// Unlike the individual operations (which throw on the diagonal), record
/// assembly reports +inf for the functionals that diverge there, so writers
/// can emit the terminal row of a run that ended in a collision.
inline DiagnosticsRecord diagnostics_at(const Trajectory& tr, std::size_t i, const KernelSpec& kspec,
                                        const DiagnosticsSpec& dspec) {
    DiagnosticsRecord rec;
    rec.t = tr.times.at(i);
    const VortexState wrapped = tr.state_at(i);
    const VortexState raw{DomainSpec::plane(), tr.raw_positions.at(i), tr.intensities};
    rec.min_dist = wrapped.size() >= 2 ? min_pairwise_distance(wrapped)
                                       : std::numeric_limits<double>::infinity();
    const bool on_diagonal = rec.min_dist == 0.0;
    const double inf = std::numeric_limits<double>::infinity();
    if (tr.intensities.size() == 3) {
        rec.S = invariant_S(raw);
        const bool raw_diag = min_pairwise_distance(raw) == 0.0;
        rec.S_eps = raw_diag ? inf : invariant_S_eps(raw, kspec.epsilon);
        rec.area_A = signed_area_A(raw);
    }
    if (kspec.delta) rec.g_delta = lyapunov_g_delta(wrapped, kspec, dspec);
    rec.h1 = on_diagonal ? inf : majorant_h1(wrapped, kspec.epsilon);
    rec.h2 = on_diagonal ? inf : majorant_h2(wrapped, kspec.epsilon);
    return rec;
}

}  // namespace msqg
