#include <doctest.h>

#include <cmath>

#include "msqg/geometry.hpp"
#include "msqg/rng.hpp"

using namespace msqg;

TEST_CASE("perp rotates by -90 degrees") {
    CHECK(perp({1, 0}).x == 0.0);
    CHECK(perp({1, 0}).y == -1.0);
    CHECK(perp({0, 1}).x == 1.0);
    CHECK(perp({0, 1}).y == 0.0);
    const Vec2 v{3, 4};
    const Vec2 p = perp(v);
    CHECK(p.x == 4.0);
    CHECK(p.y == -3.0);
    CHECK(p.dot(v) == 0.0);
    const Vec2 pp = perp(p);
    CHECK(pp.x == -v.x);
    CHECK(pp.y == -v.y);
}

TEST_CASE("wrap maps into [-1/2, 1/2) with the tie at -1/2") {
    const DomainSpec torus = DomainSpec::torus();
    CHECK(wrap({0.7, 0.0}, torus).x == doctest::Approx(-0.3).epsilon(1e-15));
    CHECK(wrap({0.0, 0.0}, torus).x == 0.0);
    CHECK(wrap({-0.5, 1.25}, torus).x == -0.5);
    CHECK(wrap({-0.5, 1.25}, torus).y == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(wrap({0.5, -0.5}, torus).x == -0.5);  // tie resolves to -1/2
    CHECK(wrap({0.5, -0.5}, torus).y == -0.5);
    // plane: identity
    CHECK(wrap({3.7, -2.1}, DomainSpec::plane()).x == 3.7);
}

TEST_CASE("wrap is idempotent and lands in the fundamental domain") {
    const DomainSpec torus = DomainSpec::torus();
    const CounterRng rng(7, 0);
    for (int i = 0; i < 200; ++i) {
        double u0, u1;
        rng.uniform_pair(i, 0, u0, u1);
        const Point2 p{(u0 - 0.5) * 20.0, (u1 - 0.5) * 20.0};
        const Point2 w = wrap(p, torus);
        CHECK(w.x >= -0.5);
        CHECK(w.x < 0.5);
        CHECK(w.y >= -0.5);
        CHECK(w.y < 0.5);
        const Point2 ww = wrap(w, torus);
        CHECK(ww.x == w.x);
        CHECK(ww.y == w.y);
    }
}

TEST_CASE("displacement: plane difference and torus minimal image") {
    const DomainSpec torus = DomainSpec::torus();
    const Vec2 d1 = displacement({0.4, 0}, {-0.4, 0}, torus);
    CHECK(d1.x == doctest::Approx(-0.2).epsilon(1e-15));
    CHECK(d1.y == 0.0);
    const Vec2 d2 = displacement({0.3, 0.1}, {0.3, 0.1}, torus);
    CHECK(d2.x == 0.0);
    CHECK(d2.y == 0.0);
    const Vec2 d3 = displacement({0.4, 0}, {-0.4, 0}, DomainSpec::plane());
    CHECK(d3.x == doctest::Approx(0.8).epsilon(1e-15));

    // antisymmetry up to the wrapping representative, and bounded norm
    const CounterRng rng(11, 0);
    for (int i = 0; i < 200; ++i) {
        double u0, u1, u2, u3;
        rng.uniform_pair(i, 0, u0, u1);
        rng.uniform_pair(i, 1, u2, u3);
        const Point2 a{u0 - 0.5, u1 - 0.5}, b{u2 - 0.5, u3 - 0.5};
        const Vec2 ab = displacement(a, b, torus), ba = displacement(b, a, torus);
        CHECK(ab.norm() == doctest::Approx(ba.norm()).epsilon(1e-12));
        CHECK(ab.norm() <= std::sqrt(2.0) / 2.0 + 1e-15);
        const Vec2 abp = displacement(a, b, DomainSpec::plane());
        const Vec2 bap = displacement(b, a, DomainSpec::plane());
        CHECK(abp.x == -bap.x);
        CHECK(abp.y == -bap.y);
    }
}

TEST_CASE("min_pairwise_distance") {
    VortexState s;
    s.domain = DomainSpec::plane();
    s.positions = {{-1, 0}, {1, 0}, {1, std::sqrt(2.0)}};
    s.intensities = {1, 1, 1};
    CHECK(min_pairwise_distance(s) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

    VortexState dup;
    dup.domain = DomainSpec::plane();
    dup.positions = {{0.2, 0.3}, {0.2, 0.3}};
    dup.intensities = {1, 1};
    CHECK(min_pairwise_distance(dup) == 0.0);

    VortexState t;
    t.domain = DomainSpec::torus();
    t.positions = {{0.45, 0}, {-0.45, 0}};
    t.intensities = {1, 1};
    CHECK(min_pairwise_distance(t) == doctest::Approx(0.1).epsilon(1e-12));

    VortexState one;
    one.domain = DomainSpec::plane();
    one.positions = {{0, 0}};
    one.intensities = {1};
    CHECK_THROWS_WITH_AS(min_pairwise_distance(one), "need at least two vortices",
                         std::invalid_argument);
}

TEST_CASE("state validation") {
    VortexState s;
    s.domain = DomainSpec::torus();
    s.positions = {{0.1, 0.2}};
    s.intensities = {1.0};
    CHECK_NOTHROW(validate_state(s));
    s.intensities = {0.0};
    CHECK_THROWS_AS(validate_state(s), std::invalid_argument);
    s.intensities = {1.0};
    s.positions = {{0.7, 0.2}};  // outside the fundamental domain
    CHECK_THROWS_AS(validate_state(s), std::invalid_argument);
    CHECK_NOTHROW(validate_state(wrapped_state(s)));
}
