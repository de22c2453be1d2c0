#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <sstream>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"
#include "rfio/kac_flow.hpp"
#include "rfio/mean_field.hpp"

using namespace rfio;

namespace {

struct Setup {
    MFParams params;
    PairMagnetization minimizer;
    Vec2 center;
    KacKernel kernel;
};

Setup setup(double beta, double eps, double L = 16.0, int cell = 4) {
    Setup s;
    s.params = {beta, eps, 0.5};
    s.minimizer = minimizers(s.params).first.pair;
    s.center = s.minimizer.bar();
    s.kernel = KacKernel::make(1, L, cell);
    return s;
}

double max_dev(const ProfileGrid& a, const ProfileGrid& b) {
    double d = 0.0;
    for (std::size_t k = 0; k < a.plus.size(); ++k)
        d = std::max({d, dist(a.plus[k], b.plus[k]), dist(a.minus[k], b.minus[k])});
    return d;
}

}  // namespace

TEST_CASE("kernel normalization and support") {
    for (int dim : {1, 2})
        for (int cell : {1, 3, 4, 8}) {
            const auto k = KacKernel::make(dim, 12.0, cell);
            CHECK(std::abs(k.total_weight() - 1.0) < 1e-14);
            for (const auto& o : k.offsets) CHECK(o.w > 0.0);
            CHECK(k.weight(1, 0) == doctest::Approx(k.weight(-1, 0)).epsilon(1e-14));
        }
    const auto site = KacKernel::make(2, 6.0, 1);
    for (const auto& o : site.offsets) CHECK(std::hypot(o.dx, o.dy) < 6.0);
    CHECK(site.weight(0, 0) > site.weight(3, 0));
    CHECK(site.reach == 5);
    CHECK_THROWS_AS(KacKernel::make(3, 6.0, 1), DomainError);
}

TEST_CASE("strip kernel is the marginal of the planar kernel") {
    const auto plane = KacKernel::make(2, 10.0, 2);
    const auto strip = KacKernel::make(1, 10.0, 2);
    for (int dx = -strip.reach; dx <= strip.reach; ++dx) {
        double m = 0.0;
        for (int dy = -plane.reach; dy <= plane.reach; ++dy) m += plane.weight(dx, dy);
        CHECK(strip.weight(dx) == doctest::Approx(m).epsilon(1e-13));
    }
}

TEST_CASE("convolve") {
    const auto k = KacKernel::make(1, 12.0, 3);
    auto g = ProfileGrid::make(1, 20, 1, k.reach, 3.0);
    g.fill_interior({{0.3, 0.1}, {0.3, 0.1}});
    g.fill_collar({{0.3, 0.1}, {0.3, 0.1}});
    for (const Vec2& v : convolve(k, g)) {
        CHECK(std::abs(v.x - 0.3) < 1e-14);
        CHECK(std::abs(v.y - 0.1) < 1e-14);
    }

    oracle::Gen gen(41);
    auto f = g, h = g;
    for (std::size_t i = 0; i < f.plus.size(); ++i) {
        f.plus[i] = gen.in_disk(0.9); f.minus[i] = gen.in_disk(0.9);
        h.plus[i] = gen.in_disk(0.9); h.minus[i] = gen.in_disk(0.9);
    }
    auto lin = f;
    for (std::size_t i = 0; i < f.plus.size(); ++i) {
        lin.plus[i] = 0.3 * f.plus[i] - 0.7 * h.plus[i];
        lin.minus[i] = 0.3 * f.minus[i] - 0.7 * h.minus[i];
    }
    const auto cf = convolve(k, f), ch = convolve(k, h), cl = convolve(k, lin);
    for (std::size_t i = 0; i < cl.size(); ++i) CHECK(dist(cl[i], 0.3 * cf[i] - 0.7 * ch[i]) < 1e-12);

    SUBCASE("spike against a site-level double loop") {
        // One interior cell carries e1, everything else is zero.
        auto s = ProfileGrid::make(1, 20, 1, k.reach, 3.0);
        const int spike = 7;
        s.plus[s.idx(spike)] = e1;
        s.minus[s.idx(spike)] = e1;
        const auto conv = convolve(k, s);
        const double L = 12.0;
        double norm_c = 0.0;
        for (int dx = -12; dx <= 12; ++dx)
            for (int dy = -12; dy <= 12; ++dy) norm_c += kac_profile(std::hypot(dx, dy) / L);
        for (int i = 0; i < 20; ++i) {
            double ref = 0.0;
            for (int x = 3 * i; x < 3 * i + 3; ++x)
                for (int xp = 3 * spike; xp < 3 * spike + 3; ++xp)
                    for (int dy = -12; dy <= 12; ++dy)
                        ref += kac_profile(std::hypot(xp - x, dy) / L);
            ref /= 3.0 * norm_c;
            CHECK(std::abs(conv[static_cast<std::size_t>(i)].x - ref) < 1e-12);
        }
    }

    auto narrow = ProfileGrid::make(1, 20, 1, k.reach - 1, 3.0);
    CHECK_THROWS_AS(convolve(k, narrow), DomainError);
}

TEST_CASE("free energy and continuum energy") {
    auto s = setup(10.0, 0.1);
    auto g = make_strip(s.kernel, 40, s.minimizer, s.center);
    const double F = free_energy(g, s.kernel, s.params);
    CHECK(std::abs(F - g.volume() * phi(s.minimizer, s.params)) < 1e-10);

    double ent = 0.0;
    for (int i = 0; i < g.nx; ++i) ent += entropy(g.plus[g.idx(i)]) + entropy(g.minus[g.idx(i)]);
    const double U = continuum_energy(g, s.kernel, s.params);
    CHECK(std::abs(F - (U - g.cell_measure * ent / (2.0 * s.params.beta))) < 1e-12);

    SUBCASE("closed form for a constant profile with a different boundary") {
        auto c = make_strip(s.kernel, 40, {{0.5, 0.2}, {0.5, 0.2}}, {0.1, -0.3});
        const Vec2 m{0.5, 0.2}, b{0.1, -0.3};
        double ref = 0.0;
        for (int i = 0; i < c.nx; ++i) {
            double out = 0.0;
            for (const auto& o : s.kernel.offsets)
                if (!c.interior(i + o.dx)) out += o.w;
            ref += -0.5 * (1.0 - out) * norm2(m) - out * (dot(m, b) - 0.5 * norm2(b));
        }
        ref *= c.cell_measure;
        CHECK(std::abs(continuum_energy(c, s.kernel, s.params) - ref) < 1e-12);
        // the field term cancels for m+ == m-
        MFParams nofield = s.params;
        nofield.eps = 0.0;
        CHECK(std::abs(continuum_energy(c, s.kernel, s.params) - continuum_energy(c, s.kernel, nofield)) < 1e-14);
    }

    SUBCASE("field term sign") {
        auto up = g;
        up.plus[up.idx(5)].y += 0.01;
        // with mbar held fixed the only change is the field term
        up.minus[up.idx(5)].y += 0.0;
        auto ref = g;
        MFParams nofield = s.params;
        nofield.eps = 0.0;
        const double field_up = continuum_energy(up, s.kernel, s.params) - continuum_energy(up, s.kernel, nofield);
        const double field_ref = continuum_energy(ref, s.kernel, s.params) - continuum_energy(ref, s.kernel, nofield);
        CHECK(field_up < field_ref);
    }

    SUBCASE("moving a cell from the aligned pair to the minimizer lowers F") {
        auto a = g;
        const auto aligned = aligned_reference(s.params);
        a.plus[a.idx(10)] = aligned.m_plus;
        a.minus[a.idx(10)] = aligned.m_minus;
        CHECK(free_energy(g, s.kernel, s.params) < free_energy(a, s.kernel, s.params));
    }
}

TEST_CASE("flow_step") {
    auto s = setup(10.0, 0.2);
    auto g = make_strip(s.kernel, 40, s.minimizer, s.center);
    const auto next = flow_step(g, s.kernel, s.params, 0.5);
    CHECK(max_dev(next, g) <= 1e-12);
    CHECK_THROWS_AS(flow_step(g, s.kernel, s.params, 0.0), DomainError);
    CHECK_THROWS_AS(flow_step(g, s.kernel, s.params, 1.5), DomainError);

    oracle::Gen gen(42);
    auto noisy = g;
    for (int i = 0; i < g.nx; ++i) {
        noisy.plus[noisy.idx(i)] += gen.in_disk(0.05);
        noisy.minus[noisy.idx(i)] += gen.in_disk(0.05);
    }
    const auto full = flow_step(noisy, s.kernel, s.params, 1.0);
    CHECK(flow_residual(full, s.kernel, s.params) >= 0.0);
    const auto conv = convolve(s.kernel, noisy);
    for (int i = 0; i < g.nx; ++i) {
        const Vec2 tp = magnetization(s.params.beta * (conv[i] + s.params.eps * e2));
        CHECK(dist(full.plus[full.idx(i)], tp) == 0.0);
    }

    // Two half steps against one full step: the gap shrinks like dt^2.
    auto gap = [&](double dt) {
        const auto one = flow_step(noisy, s.kernel, s.params, dt);
        const auto two = flow_step(flow_step(noisy, s.kernel, s.params, dt / 2), s.kernel, s.params, dt / 2);
        return max_dev(one, two);
    };
    const double ratio = gap(0.1) / gap(0.05);
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.0);

    const auto coarse = KacKernel::make(1, 12.0, 4);
    auto cg = make_strip(coarse, 20, s.minimizer, s.center);
    CHECK_THROWS_AS(flow_step(cg, coarse, s.params, 0.5), DomainError);
}

TEST_CASE("evolve to stationary") {
    auto s = setup(10.0, 0.2);
    const double xi = 0.05;
    auto g = make_strip(s.kernel, 48, s.minimizer, s.center);
    oracle::Gen gen(43);
    for (int i = 0; i < g.nx; ++i) {
        g.plus[g.idx(i)] += gen.in_disk(xi / 4);
        g.minus[g.idx(i)] += gen.in_disk(xi / 4);
    }
    FlowOptions opt;
    opt.xi = xi;
    opt.center = s.center;
    const auto res = evolve_to_stationary(g, s.kernel, s.params, opt);
    const auto& d = res.diagnostics;
    CHECK(d.stationarity_residual <= opt.tol);
    for (std::size_t t = 1; t < d.free_energy_trace.size(); ++t)
        CHECK(d.free_energy_trace[t] <= d.free_energy_trace[t - 1] + 1e-12);
    for (int i = 0; i < res.profile.nx; ++i) {
        const auto k = res.profile.idx(i);
        CHECK(pair_distance({res.profile.plus[k], res.profile.minus[k]}, s.minimizer) < xi);
    }

    // restarting from the stationary profile does not move it
    const auto again = evolve_to_stationary(res.profile, s.kernel, s.params, opt);
    CHECK(max_dev(again.profile, res.profile) <= 2 * opt.tol);
    CHECK(again.diagnostics.wall_steps == 0);

    SUBCASE("reflection equivariance") {
        auto r = g;
        for (std::size_t k = 0; k < r.plus.size(); ++k) {
            r.plus[k] = reflect_y(r.plus[k]);
            r.minus[k] = reflect_y(r.minus[k]);
        }
        auto a = g, b = r;
        for (int t = 0; t < 50; ++t) {
            a = flow_step(a, s.kernel, s.params, 0.5);
            b = flow_step(b, s.kernel, s.params, 0.5);
        }
        for (std::size_t k = 0; k < a.plus.size(); ++k) {
            CHECK(std::abs(a.plus[k].x + b.plus[k].x) <= 1e-14);
            CHECK(std::abs(a.plus[k].y - b.plus[k].y) <= 1e-14);
            CHECK(std::abs(a.minus[k].x + b.minus[k].x) <= 1e-14);
        }
    }

    SUBCASE("leaving the admissible set is reported") {
        // Boundary outside the set pulls the interior out of it.
        FlowOptions tight = opt;
        tight.xi = 0.02;
        auto far = make_strip(s.kernel, 48, s.minimizer, s.center + 0.029 * e2);
        CHECK_THROWS_AS(evolve_to_stationary(far, s.kernel, s.params, tight), InvariantViolation);
        auto outside = g;
        outside.plus[outside.idx(3)] = s.minimizer.m_plus + 0.1 * e2;
        outside.minus[outside.idx(3)] = s.minimizer.m_minus + 0.1 * e2;
        CHECK_THROWS_AS(evolve_to_stationary(outside, s.kernel, s.params, tight), DomainError);
    }

    SUBCASE("step budget") {
        FlowOptions few = opt;
        few.max_steps = 3;
        CHECK_THROWS_AS(evolve_to_stationary(g, s.kernel, s.params, few), ConvergenceError);
    }
}

TEST_CASE("decay profile") {
    SUBCASE("boundary at the minimizer") {
        auto s = setup(10.0, 0.2);
        auto g = make_strip(s.kernel, 40, s.minimizer, s.center);
        for (const auto& b : decay_profile(g, s.kernel, s.params, s.center)) CHECK(b.sup_deviation <= 1e-8);
    }
    SUBCASE("tilted boundary decays faster for larger eps") {
        double mean_ratio[2];
        int n = 0;
        for (double eps : {0.1, 0.2}) {
            auto s = setup(10.0, eps);
            auto g = make_strip(s.kernel, 64, s.minimizer, s.center + 0.045 * e2);
            FlowOptions opt;
            opt.xi = 0.05;
            opt.center = s.center;
            const auto res = evolve_to_stationary(g, s.kernel, s.params, opt);
            const auto bands = decay_profile(res.profile, s.kernel, s.params, s.center);
            CHECK(bands.size() >= 6);
            const auto sum = summarize_decay(bands, 1e-6);
            REQUIRE(sum.ratios.size() >= 3);
            for (double r : sum.ratios) CHECK(r < 1.0);
            mean_ratio[n++] = sum.mean_ratio;
        }
        CHECK(mean_ratio[1] < mean_ratio[0]);
    }
    auto s = setup(10.0, 0.2);
    auto g = make_strip(s.kernel, 40, s.minimizer, s.center + 0.04 * e2);
    CHECK_THROWS_AS(decay_profile(g, s.kernel, s.params, s.center), DomainError);
}

TEST_CASE("profile csv") {
    auto s = setup(10.0, 0.2);
    auto g = make_strip(s.kernel, 5, s.minimizer, s.center);
    std::ostringstream os;
    write_profile_csv(os, g);
    const std::string out = os.str();
    CHECK(out.rfind("cell,m_plus_x,m_plus_y,m_minus_x,m_minus_y\n", 0) == 0);
    CHECK(std::count(out.begin(), out.end(), '\n') == 6);
}
