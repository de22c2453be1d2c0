#include "doctest.h"
#include "oracles.hpp"

#include <cmath>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"

using namespace rfio;

TEST_CASE("log_mgf") {
    CHECK(log_mgf({0.0, 0.0}) == 0.0);
    CHECK(log_mgf({3.0, 0.0}) == doctest::Approx(log_mgf({0.0, 3.0})).epsilon(1e-12));
    CHECK(std::abs(log_mgf({2.0, 0.0}) - std::log(2.2796)) < 1e-3);
    for (double x : {1e-3, 0.5, 2.0, 10.0, 29.0, 31.0, 80.0})
        CHECK(std::abs(log_mgf_radial(x) - oracle::log_mgf(x)) < 1e-10 * (1.0 + x));
    // no overflow far out
    CHECK(std::isfinite(log_mgf({2000.0, 0.0})));
    CHECK(log_mgf_radial(2000.0) == doctest::Approx(2000.0 - 0.5 * std::log(2.0 * std::numbers::pi * 2000.0)).epsilon(1e-6));
}

TEST_CASE("bessel_ratio") {
    CHECK(bessel_ratio(0.0) == 0.0);
    CHECK(std::abs(bessel_ratio(2.0) - 0.6978) < 1e-3);
    CHECK(std::abs(bessel_ratio(500.0) - 1.0) < 1e-2);
    CHECK_THROWS_AS(bessel_ratio(-1.0), DomainError);
    for (double x : {1e-6, 1e-3, 0.1, 1.0, 2.0, 5.0, 29.9, 30.1, 100.0, 600.0})
        CHECK(std::abs(bessel_ratio(x) - oracle::bessel_ratio(x)) < 1e-12);
}

TEST_CASE("bessel_ratio derivative") {
    for (double x : {1e-4, 0.3, 2.0, 15.0, 60.0}) {
        const double fd = oracle::central_diff([](double t) { return bessel_ratio(t); }, x,
                                               std::min(1e-5, x / 2));
        CHECK(std::abs(bessel_ratio_derivative(x) - fd) < 1e-7);
    }
}

TEST_CASE("magnetization") {
    const Vec2 z = magnetization({0.0, 0.0});
    CHECK(z.x == 0.0);
    CHECK(z.y == 0.0);
    const Vec2 m = magnetization({1.0, 1.0});
    CHECK(std::abs(cross(m, Vec2{1.0, 1.0})) < 1e-12);
    CHECK(dot(m, Vec2{1.0, 1.0}) > 0.0);
    CHECK(std::abs(norm(magnetization({2.0, 0.0})) - 0.6978) < 1e-3);
    CHECK(norm(magnetization({0.0, 300.0})) < 1.0);
}

TEST_CASE("inverse_magnetization") {
    const Vec2 z = inverse_magnetization({0.0, 0.0}, 1e-12);
    CHECK(norm(z) == 0.0);
    const Vec2 m{0.5, 0.2};
    CHECK(dist(magnetization(inverse_magnetization(m, 1e-12)), m) <= 1e-10);
    CHECK_THROWS_AS(inverse_magnetization({1.0, 0.0}), DomainError);
    CHECK_THROWS_AS(inverse_magnetization({0.6, 0.8}), DomainError);

    // h(rho) / -log(1 - rho) stays in a fixed bracket on these points, but
    // the true growth is 1/(2(1 - rho)).
    for (double rho : {0.9, 0.99, 0.999}) {
        const double ratio = inverse_bessel_ratio(rho) / -std::log1p(-rho);
        CHECK(ratio > 1.0);
        CHECK(ratio < 100.0);
    }
    CHECK(2.0 * (1.0 - 0.999) * inverse_bessel_ratio(0.999) == doctest::Approx(1.0).epsilon(2e-3));
    const double deep = 1.0 - 1e-9;
    CHECK(std::abs(bessel_ratio(inverse_bessel_ratio(deep)) - deep) <= 1e-12);
}

TEST_CASE("entropy") {
    CHECK(entropy({0.0, 0.0}) == 0.0);
    CHECK(std::abs(entropy({0.4, 0.0}) - entropy({0.0, 0.4})) < 1e-10);
    CHECK(std::abs(entropy({0.3, 0.0}) - oracle::entropy(0.3)) < 1e-6);
    CHECK(std::abs(entropy({0.7, 0.0}) - oracle::entropy(0.7)) < 1e-6);
    CHECK_THROWS_AS(entropy({1.0, 0.0}), DomainError);
    // small-radius behavior S ~ -rho^2
    CHECK(entropy_radial(1e-3) == doctest::Approx(-1e-6).epsilon(1e-4));
}

TEST_CASE("grad_entropy") {
    CHECK(norm(grad_entropy({0.0, 0.0})) == 0.0);
    const Vec2 m{0.5, 0.1};
    const Vec2 g = grad_entropy(m);
    const double gx = oracle::central_diff([&](double t) { return entropy({t, m.y}); }, m.x);
    const double gy = oracle::central_diff([&](double t) { return entropy({m.x, t}); }, m.y);
    CHECK(std::abs(g.x - gx) <= 1e-6);
    CHECK(std::abs(g.y - gy) <= 1e-6);
    const Vec2 gm = grad_entropy(-m);
    CHECK(std::abs(gm.x + g.x) < 1e-12);
    CHECK(std::abs(gm.y + g.y) < 1e-12);
}

TEST_CASE("property: rotation invariance of G and S") {
    oracle::Gen gen(11);
    for (int i = 0; i < 50; ++i) {
        const double r = gen.uniform(0.0, 0.95);
        const Vec2 u = gen.direction();
        CHECK(std::abs(entropy(r * u) - entropy_radial(r)) < 1e-10);
        const double x = gen.uniform(0.0, 60.0);
        CHECK(std::abs(log_mgf(x * gen.direction()) - log_mgf_radial(x)) < 1e-10);
    }
}

TEST_CASE("property: inverse pair on the disk of radius 0.999") {
    oracle::Gen gen(12);
    for (int i = 0; i < 100; ++i) {
        const Vec2 m = gen.in_disk(0.999);
        CHECK(dist(magnetization(inverse_magnetization(m, 1e-12)), m) <= 1e-11);
    }
}

TEST_CASE("property: bessel_ratio increasing and below 1") {
    double prev = 0.0;
    for (int i = 1; i <= 4000; ++i) {
        const double x = 1e-3 * i * (1.0 + i / 100.0);
        const double r = bessel_ratio(x);
        CHECK(r > prev);
        CHECK(r < 1.0);
        prev = r;
    }
}

TEST_CASE("property: slope at the origin") {
    CHECK(std::abs(bessel_ratio(1e-4) / 1e-4 - 0.5) < 1e-4);
    CHECK(std::abs(bessel_ratio(1e-8) / 1e-8 - 0.5) < 1e-10);
}

TEST_CASE("property: entropy is concave and nonpositive") {
    oracle::Gen gen(13);
    for (int i = 0; i < 200; ++i) {
        const Vec2 a = gen.in_disk(0.9), b = gen.in_disk(0.9);
        CHECK(entropy(0.5 * (a + b)) >= 0.5 * (entropy(a) + entropy(b)) - 1e-9);
        CHECK(entropy(a) <= 0.0);
    }
}
