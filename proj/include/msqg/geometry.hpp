#pragma once
/**
 * @file geometry.hpp
 * @brief Points, the periodic domain, minimal-image displacements and the
 *        vortex configuration type shared by every other module.
 *
 * The torus is the unit square [-1/2, 1/2)^2 with periodic identification.
 * The fundamental domain is half-open so that `wrap` is a function; the tie
 * at exactly +-1/2 resolves to -1/2.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace msqg {

/// 2D vector / point, double precision.
struct Vec2 {
    double x{0.0};
    double y{0.0};

    constexpr Vec2() = default;
    constexpr Vec2(double X, double Y) : x(X), y(Y) {}

    constexpr Vec2 operator+(const Vec2& r) const { return {x + r.x, y + r.y}; }
    constexpr Vec2 operator-(const Vec2& r) const { return {x - r.x, y - r.y}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    friend constexpr Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }
    Vec2& operator+=(const Vec2& r) { x += r.x; y += r.y; return *this; }
    Vec2& operator-=(const Vec2& r) { x -= r.x; y -= r.y; return *this; }
    Vec2& operator*=(double s) { x *= s; y *= s; return *this; }

    constexpr double dot(const Vec2& r) const { return x * r.x + y * r.y; }
    constexpr double norm2() const { return x * x + y * y; }
    double norm() const { return std::sqrt(norm2()); }
    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

using Point2 = Vec2;

/// Rotate by -90 degrees: v_perp = (v_y, -v_x). Matches the operator
/// grad_perp = (d/dx2, -d/dx1), so perp(perp(v)) = -v.
constexpr Vec2 perp(const Vec2& v) { return {v.y, -v.x}; }

/// z-component of the 2D cross product a x b = a . perp-inverse...
/// concretely a.x*b.y - a.y*b.x; note a.dot(perp(b)) == cross(a, b).
constexpr double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

enum class DomainKind { Plane, Torus };

/// The simulation domain. The torus period is fixed to 1.
struct DomainSpec {
    DomainKind kind = DomainKind::Plane;
    double period = 1.0;

    static constexpr DomainSpec plane() { return {DomainKind::Plane, 1.0}; }
    static constexpr DomainSpec torus() { return {DomainKind::Torus, 1.0}; }
    constexpr bool is_torus() const { return kind == DomainKind::Torus; }
};

/// Map a coordinate into [-1/2, 1/2). The tie at +-1/2 goes to -1/2.
inline double wrap_coord(double v) {
    const double u = v + 0.5;
    double w = u - std::floor(u) - 0.5;
    // Guard against rounding pushing the result to +0.5 exactly.
    if (w >= 0.5) w = -0.5;
    return w;
}

/// Torus representative of a point; identity on the plane.
inline Point2 wrap(const Point2& p, const DomainSpec& d) {
    if (!d.is_torus()) return p;
    return {wrap_coord(p.x), wrap_coord(p.y)};
}

/// Minimal-image displacement a - b. On the torus both coordinates lie in
/// [-1/2, 1/2), so |displacement| is the minimum over lattice images.
inline Vec2 displacement(const Point2& a, const Point2& b, const DomainSpec& d) {
    Vec2 r = a - b;
    if (!d.is_torus()) return r;
    return {wrap_coord(r.x), wrap_coord(r.y)};
}

/// N vortices: positions plus nonzero intensities, living on `domain`.
struct VortexState {
    DomainSpec domain;
    std::vector<Point2> positions;
    std::vector<double> intensities;

    std::size_t size() const { return positions.size(); }
};

/// Throws std::invalid_argument unless the state satisfies its invariants
/// (N >= 1, matching lengths, finite wrapped positions, nonzero intensities).
inline void validate_state(const VortexState& s) {
    if (s.positions.empty()) throw std::invalid_argument("vortex state: need at least one vortex");
    if (s.positions.size() != s.intensities.size())
        throw std::invalid_argument("vortex state: positions/intensities length mismatch");
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
        if (!s.positions[i].finite())
            throw std::invalid_argument("vortex state: non-finite position at index " + std::to_string(i));
        if (!std::isfinite(s.intensities[i]) || s.intensities[i] == 0.0)
            throw std::invalid_argument("vortex state: intensity must be finite and nonzero at index " +
                                        std::to_string(i));
        if (s.domain.is_torus()) {
            const Point2& p = s.positions[i];
            if (p.x < -0.5 || p.x >= 0.5 || p.y < -0.5 || p.y >= 0.5)
                throw std::invalid_argument("vortex state: torus position outside fundamental domain at index " +
                                            std::to_string(i));
        }
    }
}

/// Returns a copy with positions wrapped into the fundamental domain.
inline VortexState wrapped_state(const VortexState& s) {
    VortexState out = s;
    for (auto& p : out.positions) p = wrap(p, s.domain);
    return out;
}

/// Smallest pairwise distance (minimal-image on the torus). Zero iff the
/// configuration lies on the generalized diagonal.
inline double min_pairwise_distance(const VortexState& s) {
    const std::size_t n = s.positions.size();
    if (n < 2) throw std::invalid_argument("need at least two vortices");
    double best2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d2 = displacement(s.positions[i], s.positions[j], s.domain).norm2();
            if (d2 < best2) best2 = d2;
        }
    return std::sqrt(best2);
}

/// Same, for a bare position list.
inline double min_pairwise_distance(const std::vector<Point2>& pos, const DomainSpec& d) {
    VortexState tmp;
    tmp.domain = d;
    tmp.positions = pos;
    tmp.intensities.assign(pos.size(), 1.0);
    return min_pairwise_distance(tmp);
}

}  // namespace msqg
