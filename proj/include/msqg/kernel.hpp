#pragma once
/**
 * @file kernel.hpp
 * @brief The singular interaction kernel K_eps and Green function G_eps on
 *        plane and torus, their delta-regularizations, and the full 2N-dim
 *        drift of the point-vortex system.
 *
 * Conventions
 * -----------
 * The plane kernel is K(x) = c_eps * perp(x) / |x|^(3-eps) and the plane
 * Green function is G(x) = -c_eps * |x|^(eps-1); with one stored constant
 * these satisfy grad_perp(G) = (1-eps) * K. The regularized kernel is
 * defined as grad_perp(G_delta) / (1-eps) so that it equals the exact kernel
 * for |x| >= delta; it is still an exact perp-gradient of a radial C^2
 * function, hence divergence-free, and vanishes at the origin.
 *
 * Torus sums
 * ----------
 * The raw lattice sums converge only conditionally (K) or diverge (G). The
 * torus kernel is therefore summed in symmetric +-n pairs over |n|_inf <= M,
 * and the torus Green function is the minimal-image plane Green function plus
 * the paired remainder sum of (G(x+n) - G(n)) terms. Both truncations leave a
 * smooth residual whose leading part is known in closed form: for K it is a
 * rigid-rotation field beta * perp(x), for G the matching radial term; both
 * are added analytically (see lattice_tail_sum), which improves the M=16 vs
 * M=32 self-consistency from ~1e-2 to below 1e-4 relative. A sharply
 * truncated Fourier series is available as an independent cross-check
 * evaluator for the exact torus kernel.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "msqg/geometry.hpp"
#include "msqg/linalg.hpp"

namespace msqg {

struct SingularityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class TorusMethod { DirectLattice, FourierSeries };

/// Parameters of the interaction kernel. Immutable after construction; the
/// heavy per-(eps, M) lattice tables are shared read-only behind the scenes.
struct KernelSpec {
    double epsilon = 0.5;            ///< eps in (0,1]; eps = 1 is the Euler endpoint, kept for regression
    double c_eps = 1.0;              ///< multiplicative kernel constant, > 0
    std::optional<double> delta;     ///< regularization radius in (0,1), absent = exact kernel
    int lattice_truncation = 20;     ///< torus sum over |n|_inf <= M, in symmetric +-n pairs
    TorusMethod method = TorusMethod::DirectLattice;
    int fourier_cutoff = 64;         ///< |k| cutoff of the Fourier cross-check evaluator

    void validate() const {
        if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("kernel: epsilon must be in (0, 1]");
        if (!(c_eps > 0.0)) throw std::invalid_argument("kernel: c_eps must be positive");
        if (delta && !(*delta > 0.0 && *delta < 1.0))
            throw std::invalid_argument("kernel: delta must be in (0, 1)");
        if (lattice_truncation < 1) throw std::invalid_argument("kernel: lattice truncation must be >= 1");
        if (fourier_cutoff < 1) throw std::invalid_argument("kernel: fourier cutoff must be >= 1");
    }
};

/// Coefficients of the even blend polynomial a + b r^2 + c r^4 replacing the
/// Green function inside |x| < delta. Matches G, G' and G'' at r = delta.
struct GreenBlend {
    double delta{0.0};
    double a{0.0};
    double b{0.0};
    double c{0.0};
};

namespace detail {

inline void require_green_range(double eps) {
    if (!(eps > 0.0 && eps < 1.0))
        throw std::invalid_argument("green/regularized kernel requires epsilon in (0, 1)");
}

}  // namespace detail

/// Blend of G(r) = -c_eps r^(eps-1) at radius delta.
inline GreenBlend make_green_blend(const KernelSpec& spec) {
    detail::require_green_range(spec.epsilon);
    if (!spec.delta) throw std::invalid_argument("green blend requires a regularization radius delta");
    const double eps = spec.epsilon, d = *spec.delta, c = spec.c_eps;
    const double g = -c * std::pow(d, eps - 1.0);
    const double g1 = c * (1.0 - eps) * std::pow(d, eps - 2.0);
    const double g2 = -c * (1.0 - eps) * (2.0 - eps) * std::pow(d, eps - 3.0);
    GreenBlend bl;
    bl.delta = d;
    bl.b = (3.0 * g1 / d - g2) / 4.0;
    bl.c = (g2 - 2.0 * bl.b) / (12.0 * d * d);
    bl.a = g - bl.b * d * d - bl.c * d * d * d * d;
    return bl;
}

// ---------------------------------------------------------------------------
// Plane evaluators
// ---------------------------------------------------------------------------

/// K_eps(x) = c_eps * perp(x) / |x|^(3-eps) on the plane. Throws at x = 0.
inline Vec2 k_plane(const Vec2& x, const KernelSpec& spec) {
    const double r2 = x.norm2();
    if (r2 == 0.0) throw SingularityError("kernel singularity");
    const double w = spec.c_eps * std::pow(r2, 0.5 * (spec.epsilon - 3.0));
    return perp(x) * w;
}

/// G_eps(x) = -c_eps |x|^(eps-1) on the plane; grad_perp(G) = (1-eps) K.
inline double green_plane(const Vec2& x, const KernelSpec& spec) {
    detail::require_green_range(spec.epsilon);
    const double r2 = x.norm2();
    if (r2 == 0.0) throw SingularityError("Green singularity");
    return -spec.c_eps * std::pow(r2, 0.5 * (spec.epsilon - 1.0));
}

/// C^2 regularization of the plane Green function: exact for |x| >= delta,
/// even quartic blend inside. Defined everywhere including x = 0.
inline double green_regularized(const Vec2& x, const KernelSpec& spec) {
    if (!spec.delta) throw std::invalid_argument("green_regularized requires delta");
    const GreenBlend bl = make_green_blend(spec);
    const double r2 = x.norm2();
    if (r2 >= bl.delta * bl.delta) return green_plane(x, spec);
    return bl.a + bl.b * r2 + bl.c * r2 * r2;
}

/// Regularized kernel: equals k_plane exactly for |x| >= delta, vanishes at
/// the origin, and is globally divergence-free (perp-gradient of a radial
/// function). Inside the blend it equals grad_perp(G_delta)/(1-eps).
inline Vec2 k_regularized(const Vec2& x, const KernelSpec& spec) {
    if (!spec.delta) throw std::invalid_argument("k_regularized requires delta");
    const GreenBlend bl = make_green_blend(spec);
    const double r2 = x.norm2();
    if (r2 >= bl.delta * bl.delta) return k_plane(x, spec);
    const double g = (2.0 * bl.b + 4.0 * bl.c * r2) / (1.0 - spec.epsilon);
    return perp(x) * g;
}

// ---------------------------------------------------------------------------
// Torus lattice tables
// ---------------------------------------------------------------------------

namespace detail {

/// J(eps) = integral_0^1 (1+u^2)^((eps-3)/2) du, by composite Simpson.
inline double wedge_integral(double eps) {
    const int n = 256;  // even
    const double h = 1.0 / n;
    double acc = std::pow(1.0, 0.5 * (eps - 3.0)) + std::pow(2.0, 0.5 * (eps - 3.0));
    for (int i = 1; i < n; ++i) {
        const double u = i * h;
        acc += (i % 2 ? 4.0 : 2.0) * std::pow(1.0 + u * u, 0.5 * (eps - 3.0));
    }
    return acc * h / 3.0;
}

/// S(M) = sum over |n|_inf > M of |n|^(eps-3): partial sum out to a large box
/// plus the integral approximation of the remainder.
inline double lattice_tail_sum(double eps, int M) {
    const int big = std::max(8 * M, 512);
    double s = 0.0;
    for (int shell = M + 1; shell <= big; ++shell) {
        const double s2 = double(shell) * shell;
        for (int t = -shell; t <= shell; ++t)  // left + right edges of the box
            s += 2.0 * std::pow(s2 + double(t) * t, 0.5 * (eps - 3.0));
        for (int t = -shell + 1; t <= shell - 1; ++t)  // top + bottom, corners excluded
            s += 2.0 * std::pow(s2 + double(t) * t, 0.5 * (eps - 3.0));
    }
    s += 8.0 * wedge_integral(eps) * std::pow(double(big), eps - 1.0) / (1.0 - eps);
    return s;
}

/// Shared per-(eps, M) torus summation table: half-lattice offsets (positive
/// representatives of +-n pairs) and the analytic tail coefficient.
struct TorusTable {
    double epsilon{0.5};
    int M{20};
    std::vector<Vec2> half_offsets;   // n with |n|_inf <= M, n in Z^2_+
    double tail_S{0.0};               // sum_{|n|_inf > M} |n|^(eps-3)

    TorusTable(double eps, int m) : epsilon(eps), M(m) {
        half_offsets.reserve(static_cast<std::size_t>(2 * m) * (m + 1));
        for (int nx = -m; nx <= m; ++nx)
            for (int ny = -m; ny <= m; ++ny) {
                if (nx == 0 && ny == 0) continue;
                if (nx > 0 || (nx == 0 && ny > 0)) half_offsets.push_back({double(nx), double(ny)});
            }
        tail_S = (eps < 1.0) ? lattice_tail_sum(eps, m) : 0.0;
    }
};

inline std::shared_ptr<const TorusTable> torus_table(double eps, int M) {
    static std::mutex mtx;
    static std::map<std::pair<double, int>, std::shared_ptr<const TorusTable>> cache;
    std::lock_guard<std::mutex> lock(mtx);
    auto key = std::make_pair(eps, M);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto table = std::make_shared<const TorusTable>(eps, M);
    cache.emplace(key, table);
    return table;
}

inline Vec2 raw_k(const Vec2& y, double expo) {  // perp(y) * |y|^(2*expo), expo = (eps-3)/2
    return perp(y) * std::pow(y.norm2(), expo);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Torus evaluators
// ---------------------------------------------------------------------------

/// Direct paired lattice sum for the exact torus kernel, with the analytic
/// rotation tail. Periodic by construction (the argument is wrapped first)
/// and antisymmetric. Throws when the wrapped argument is zero.
inline Vec2 k_torus_direct(const Vec2& x, const KernelSpec& spec) {
    const Vec2 xw = wrap(x, DomainSpec::torus());
    if (xw.x == 0.0 && xw.y == 0.0) throw SingularityError("kernel singularity");
    const auto table = detail::torus_table(spec.epsilon, spec.lattice_truncation);
    const double expo = 0.5 * (spec.epsilon - 3.0);
    Vec2 acc = detail::raw_k(xw, expo);
    for (const Vec2& n : table->half_offsets) {
        acc += detail::raw_k(xw + n, expo);
        acc += detail::raw_k(xw - n, expo);
    }
    acc += perp(xw) * (0.5 * (spec.epsilon - 1.0) * table->tail_S);
    return acc * spec.c_eps;
}

/// Fourier-series cross-check evaluator for the periodized kernel,
///   K(x) = A_eps * sum_{k in Z^2_+, |k| <= cutoff} perp(k) |k|^(-1-eps) sin(2 pi k.x),
/// summed with a Riesz factor (1 - |k|^2/cutoff^2)^2. The coefficients decay
/// only like |k|^(-1-eps), so sharp partial sums oscillate without settling;
/// the Riesz means converge away from the singularity (below 5e-3 relative
/// for |x| >= 0.1 at cutoff 64, eps = 1/2, against the direct lattice sum).
inline Vec2 k_torus_fourier(const Vec2& x, const KernelSpec& spec) {
    const Vec2 xw = wrap(x, DomainSpec::torus());
    if (xw.x == 0.0 && xw.y == 0.0) throw SingularityError("kernel singularity");
    const double eps = spec.epsilon;
    const double two_pi = 2.0 * std::numbers::pi;
    double amp;
    if (eps < 1.0) {
        const double C = std::numbers::pi * std::pow(2.0, 1.0 + eps) * std::tgamma(0.5 * (1.0 + eps)) /
                         std::tgamma(0.5 * (1.0 - eps));
        amp = 2.0 * (spec.c_eps / (1.0 - eps)) * C * std::pow(two_pi, -eps);
    } else {
        amp = 2.0 * spec.c_eps;  // limit of the coefficient as eps -> 1
    }
    const int kc = spec.fourier_cutoff;
    const double kc2 = double(kc) * kc;
    Vec2 acc{0.0, 0.0};
    for (int kx = 0; kx <= kc; ++kx) {
        for (int ky = (kx == 0 ? 1 : -kc); ky <= kc; ++ky) {
            const double k2 = double(kx) * kx + double(ky) * ky;
            if (k2 > kc2) continue;
            const double taper = (1.0 - k2 / kc2) * (1.0 - k2 / kc2);
            const double coef = taper * std::pow(k2, -0.5 * (1.0 + eps));
            const double phase = two_pi * (kx * xw.x + ky * xw.y);
            acc += Vec2{double(ky), double(-kx)} * (coef * std::sin(phase));
        }
    }
    return acc * amp;
}

/// Exact torus kernel through the configured evaluation method.
inline Vec2 k_torus(const Vec2& x, const KernelSpec& spec) {
    return spec.method == TorusMethod::FourierSeries ? k_torus_fourier(x, spec) : k_torus_direct(x, spec);
}

/// Torus Green function: minimal-image plane Green plus the paired remainder
/// sum of (G(x+n) - G(n)) terms and its analytic radial tail. Bounded above;
/// diagnostics only need the singular part and a global upper bound c0.
inline double green_torus(const Vec2& x, const KernelSpec& spec) {
    detail::require_green_range(spec.epsilon);
    const Vec2 xw = wrap(x, DomainSpec::torus());
    if (xw.x == 0.0 && xw.y == 0.0) throw SingularityError("Green singularity");
    return green_plane(xw, spec) + [&] {
        const auto table = detail::torus_table(spec.epsilon, spec.lattice_truncation);
        const double expo = 0.5 * (spec.epsilon - 1.0);
        double acc = 0.0;
        for (const Vec2& n : table->half_offsets) {
            const double gn = std::pow(n.norm2(), expo);
            acc += (std::pow((xw + n).norm2(), expo) - gn) + (std::pow((xw - n).norm2(), expo) - gn);
        }
        acc = -spec.c_eps * acc;
        const double om = 1.0 - spec.epsilon;
        acc += -spec.c_eps * om * om * table->tail_S * xw.norm2() / 4.0;
        return acc;
    }();
}

/// Regularized torus Green function: blend applied to the minimal-image part.
inline double green_torus_regularized(const Vec2& x, const KernelSpec& spec) {
    if (!spec.delta) throw std::invalid_argument("green_torus_regularized requires delta");
    const Vec2 xw = wrap(x, DomainSpec::torus());
    const double r2 = xw.norm2();
    const GreenBlend bl = make_green_blend(spec);
    if (r2 >= bl.delta * bl.delta) {
        if (r2 == 0.0) throw SingularityError("Green singularity");  // unreachable: delta > 0
        return green_torus(xw, spec);
    }
    KernelSpec exact = spec;
    exact.delta.reset();
    const double smooth_part = (r2 == 0.0) ? 0.0 : green_torus(xw, exact) - green_plane(xw, exact);
    return green_regularized(xw, spec) + smooth_part;
}

/// Regularized torus kernel: blend inside |x| < delta on the minimal image,
/// exact paired images and tail outside; equals k_torus_direct for
/// |x_wrapped| >= delta.
inline Vec2 k_torus_regularized(const Vec2& x, const KernelSpec& spec) {
    if (!spec.delta) throw std::invalid_argument("k_torus_regularized requires delta");
    const Vec2 xw = wrap(x, DomainSpec::torus());
    const double r2 = xw.norm2();
    const GreenBlend bl = make_green_blend(spec);
    if (r2 >= bl.delta * bl.delta) return k_torus_direct(xw, spec);
    const auto table = detail::torus_table(spec.epsilon, spec.lattice_truncation);
    const double expo = 0.5 * (spec.epsilon - 3.0);
    Vec2 acc{0.0, 0.0};
    for (const Vec2& n : table->half_offsets) {
        acc += detail::raw_k(xw + n, expo);
        acc += detail::raw_k(xw - n, expo);
    }
    acc += perp(xw) * (0.5 * (spec.epsilon - 1.0) * table->tail_S);
    acc *= spec.c_eps;
    const double g = (2.0 * bl.b + 4.0 * bl.c * r2) / (1.0 - spec.epsilon);  // blend coeffs carry c_eps
    return acc + perp(xw) * g;
}

// ---------------------------------------------------------------------------
// Unified evaluator and drift
// ---------------------------------------------------------------------------

/// Kernel value for a displacement already reduced to the right domain
/// representative (callers use displacement()).
inline Vec2 kernel_velocity(const Vec2& r, const KernelSpec& spec, const DomainSpec& domain) {
    if (domain.is_torus()) return spec.delta ? k_torus_regularized(r, spec) : k_torus(r, spec);
    return spec.delta ? k_regularized(r, spec) : k_plane(r, spec);
}

/// Right-hand side of the vortex system: component i is
/// sum_{j != i} xi_j K(x_i - x_j), with K exact or regularized per spec.delta
/// and plane/torus per the state's domain. One kernel evaluation per pair.
inline std::vector<Vec2> drift(const VortexState& s, const KernelSpec& spec) {
    const std::size_t n = s.positions.size();
    std::vector<Vec2> out(n, Vec2{0.0, 0.0});
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 r = displacement(s.positions[i], s.positions[j], s.domain);
            const Vec2 k = kernel_velocity(r, spec, s.domain);
            out[i] += k * s.intensities[j];
            out[j] -= k * s.intensities[i];  // K(-r) = -K(r)
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kernel Jacobians (for the variational flow probe)
// ---------------------------------------------------------------------------

namespace detail {

// d/dx of g(|x|^2) * perp(x) = 2 g' perp(x) (x)^T + g R, R = [[0,1],[-1,0]].
inline Mat2 radial_perp_jacobian(const Vec2& x, double g, double gprime) {
    const Vec2 p = perp(x);
    Mat2 m{2.0 * gprime * p.x * x.x, 2.0 * gprime * p.x * x.y + g,
           2.0 * gprime * p.y * x.x - g, 2.0 * gprime * p.y * x.y};
    return m;
}

inline Mat2 raw_k_jacobian(const Vec2& y, double expo) {
    const double r2 = y.norm2();
    const double g = std::pow(r2, expo);
    const double gp = expo * std::pow(r2, expo - 1.0);
    return radial_perp_jacobian(y, g, gp);
}

}  // namespace detail

/// Spatial Jacobian of the (possibly regularized) kernel at displacement r.
inline Mat2 kernel_jacobian(const Vec2& r, const KernelSpec& spec, const DomainSpec& domain) {
    const double expo = 0.5 * (spec.epsilon - 3.0);
    const GreenBlend bl = spec.delta ? make_green_blend(spec) : GreenBlend{};
    auto plane_jac = [&](const Vec2& x) -> Mat2 {
        const double r2 = x.norm2();
        if (spec.delta && r2 < bl.delta * bl.delta) {
            const double om = 1.0 - spec.epsilon;
            return detail::radial_perp_jacobian(x, (2.0 * bl.b + 4.0 * bl.c * r2) / om, 4.0 * bl.c / om);
        }
        if (r2 == 0.0) throw SingularityError("kernel singularity");
        Mat2 m = detail::raw_k_jacobian(x, expo);
        return m * spec.c_eps;
    };
    if (!domain.is_torus()) return plane_jac(r);
    const Vec2 xw = wrap(r, DomainSpec::torus());
    Mat2 acc = plane_jac(xw);
    const auto table = detail::torus_table(spec.epsilon, spec.lattice_truncation);
    for (const Vec2& n : table->half_offsets) {
        Mat2 a = detail::raw_k_jacobian(xw + n, expo);
        Mat2 b = detail::raw_k_jacobian(xw - n, expo);
        acc += (a * spec.c_eps);
        acc += (b * spec.c_eps);
    }
    const double beta = spec.c_eps * 0.5 * (spec.epsilon - 1.0) * table->tail_S;
    acc += Mat2{0.0, beta, -beta, 0.0};
    return acc;
}

/// 2N x 2N Jacobian of the drift with respect to the stacked positions.
inline DenseMatrix drift_jacobian(const VortexState& s, const KernelSpec& spec) {
    const std::size_t n = s.positions.size();
    DenseMatrix jac(2 * n, 2 * n);
    auto add_block = [&](std::size_t bi, std::size_t bj, const Mat2& m, double sign) {
        jac(2 * bi, 2 * bj) += sign * m.a;
        jac(2 * bi, 2 * bj + 1) += sign * m.b;
        jac(2 * bi + 1, 2 * bj) += sign * m.c;
        jac(2 * bi + 1, 2 * bj + 1) += sign * m.d;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const Vec2 r = displacement(s.positions[i], s.positions[j], s.domain);
            const Mat2 dk = kernel_jacobian(r, spec, s.domain);
            add_block(i, i, dk, s.intensities[j]);
            add_block(i, j, dk, -s.intensities[j]);
        }
    }
    return jac;
}

/// Documented constant C for the derivative bounds
/// |grad^i G_delta(x)| <= C / |x|^(i+1-eps), i = 0,1,2, valid on the plane
/// part; the torus variant adds the bounded remainder, absorbed by the same
/// constant with the slack factor below.
inline double regularized_green_bound_constant(const KernelSpec& spec) {
    detail::require_green_range(spec.epsilon);
    const double eps = spec.epsilon, c = spec.c_eps;
    const double blend0 = 1.0 + (1.0 - eps) * (7.0 - eps) / 8.0;       // |a| / (c delta^(eps-1))
    const double grad_in = (1.0 - eps) * (5.0 - eps) / 2.0;            // sup |p'| scale
    const double hess = std::max((1.0 - eps) * (5.0 - eps) / 2.0, (1.0 - eps) * (2.0 - eps));
    double C = c * std::max({1.0, blend0, grad_in, hess});
    return 2.0 * C;  // slack for the smooth periodic remainder on the torus
}

}  // namespace msqg
