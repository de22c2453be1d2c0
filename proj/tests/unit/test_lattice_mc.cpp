#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"
#include "rfio/lattice_mc.hpp"

using namespace rfio;

namespace {

DisorderField random_field(int N, std::uint64_t seed) { return sample_disorder(N, 0.5, seed); }

// Brute-force Hamiltonian: kernel recomputed from the bump profile, double
// loop over every interior site against every site of the extended grid.
double brute_energy(const SpinLattice& l, const DisorderField& f, double L, double eps) {
    const int r = int(std::ceil(L));
    double norm_c = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) norm_c += kac_profile(std::hypot(dx, dy) / L);
    auto J = [&](int dx, int dy) { return kac_profile(std::hypot(dx, dy) / L) / norm_c; };
    double inner = 0.0, outer = 0.0, field = 0.0;
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) {
            for (int v = -l.collar; v < l.N + l.collar; ++v)
                for (int u = -l.collar; u < l.N + l.collar; ++u) {
                    const double w = J(u - x, v - y);
                    if (w == 0.0) continue;
                    const Vec2 s = l.at(x, y), t = l.at(u, v);
                    if (l.inside(u, v)) inner += w * dot(s, t);
                    else outer += w * (dot(s, t) - 0.5 * norm2(t));
                }
            field += f(x, y) * l.at(x, y).y;
        }
    return -0.5 * inner - outer - eps * field;
}

void randomize(SpinLattice& l, oracle::Gen& gen) {
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) l.set_angle(x, y, gen.uniform(0.0, 2.0 * std::numbers::pi));
}

// Kolmogorov-Smirnov distance of samples from Uniform[0, 2 pi).
double ks_uniform(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = double(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = xs[i] / (2.0 * std::numbers::pi);
        d = std::max({d, F - i / n, (i + 1) / n - F});
    }
    return d;
}

PairMagnetization minimizer_for(double beta, double eps) {
    MFParams p;
    p.beta = beta;
    p.eps = eps;
    return minimizers(p).first.pair;
}

// Block observables filled with the exact minimizer values.
BlockObservables exact_blocks(int nsmall_interior, int ring, const PairMagnetization& mz) {
    BlockObservables obs;
    obs.small_side = 2;
    obs.big_side = 2 * ring;
    obs.ring_small = ring;
    const int n = nsmall_interior + 2 * ring;
    obs.small = BlockGrid<BlockAverage>(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            auto& b = obs.small(i, j);
            if (obs.small_interior(i, j)) {
                b.plus = mz.m_plus;
                b.minus = mz.m_minus;
                b.n_plus = b.n_minus = 2;
            }
            b.plain = mz.bar();
        }
    return obs;
}

PhaseMaps theta_map(const std::vector<std::string>& rows) {
    PhaseMaps m;
    const int n = int(rows.size());
    m.small_per_big = 1;
    m.ring_small = 1;
    m.theta = BlockGrid<std::int8_t>(n, n, 1);
    m.eta = m.theta;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const char c = rows[std::size_t(j)][std::size_t(i)];
            m.theta(i, j) = c == '+' ? 1 : c == '-' ? -1 : 0;
        }
    m.eta = m.theta;
    m.Theta = m.theta;
    return m;
}

}  // namespace

TEST_CASE("energy: field term, reflection symmetry and brute-force agreement") {
    MFParams p;
    p.beta = 5.0;
    p.eps = 0.3;
    const double L = 2.5;
    const auto k = KacKernel::make(2, L, 1);
    const Vec2 mbar{0.7, 0.1};

    SUBCASE("all spins e1 give a zero field term") {
        const auto f = random_field(6, 1);
        auto l = SpinLattice::make(6, k.reach, BoundaryCondition::horizontal(e1), 0.0);
        CHECK(energy_parts(l, f, k, p).field == 0.0);
    }
    SUBCASE("reflection about the Y axis") {
        oracle::Gen gen(2);
        for (int t = 0; t < 10; ++t) {
            const auto f = random_field(7, 10 + t);
            auto l = SpinLattice::make(7, k.reach, BoundaryCondition::horizontal(mbar), 0.0);
            randomize(l, gen);
            const double e = energy(l, f, k, p);
            l.reflect_all();
            CHECK(std::abs(energy(l, f, k, p) - e) < 1e-10);
        }
    }
    SUBCASE("3x3 toy lattice") {
        oracle::Gen gen(3);
        for (int t = 0; t < 5; ++t) {
            const auto f = random_field(3, 20 + t);
            auto l = SpinLattice::make(3, k.reach, BoundaryCondition::staggered(0.6), 0.0);
            randomize(l, gen);
            CHECK(energy(l, f, k, p) == doctest::Approx(brute_energy(l, f, L, p.eps)).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(energy(SpinLattice::make(3, 1, BoundaryCondition::horizontal(mbar), 0.0),
                           random_field(3, 1), k, p),
                    DomainError);
}

TEST_CASE("von Mises sampler reproduces the Bessel ratio") {
    Rng rng = make_rng(4, "vm");
    for (double kappa : {0.01, 0.7, 4.0, 30.0}) {
        const int n = 100000;
        double s = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = std::cos(sample_von_mises(rng, kappa));
            s += c;
            s2 += c * c;
        }
        const double mean = s / n;
        const double se = std::sqrt((s2 / n - mean * mean) / n);
        CHECK(std::abs(mean - oracle::bessel_ratio(kappa)) < 3.5 * se);
    }
}

TEST_CASE("heat bath: infinite temperature, single spin, determinism") {
    const auto k = KacKernel::make(2, 2.0, 1);
    SUBCASE("beta = 0 gives uniform angles") {
        MFParams p;
        p.beta = 0.0;
        p.eps = 0.5;
        const auto f = random_field(16, 5);
        auto l = SpinLattice::make(16, k.reach, BoundaryCondition::horizontal(e1), 0.0);
        Rng rng = make_rng(6, "chain");
        std::vector<double> angles;
        for (int s = 0; s < 400; ++s) {
            heat_bath_sweep(l, f, k, p, rng);
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) angles.push_back(l.angle(x, y));
        }
        REQUIRE(angles.size() >= 100000);
        CHECK(ks_uniform(angles) < 1.628 / std::sqrt(double(angles.size())));
    }
    SUBCASE("single site in the field only") {
        MFParams p;
        p.beta = 2.0;
        p.eps = 0.7;
        for (int sign : {1, -1}) {
            DisorderField f = random_field(1, 1);
            f(0, 0) = std::int8_t(sign);
            auto l = SpinLattice::make(1, k.reach, BoundaryCondition::horizontal(Vec2{}), 0.0);
            Rng rng = make_rng(7, "chain", std::uint64_t(sign + 1));
            const int n = 100000;
            double s = 0.0, s2 = 0.0;
            for (int i = 0; i < n; ++i) {
                heat_bath_sweep(l, f, k, p, rng);
                s += l.at(0, 0).y;
                s2 += l.at(0, 0).y * l.at(0, 0).y;
            }
            const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
            CHECK(std::abs(mean - sign * bessel_ratio(p.beta * p.eps)) < 3 * se);
        }
    }
    SUBCASE("same stream, same sweeps") {
        MFParams p;
        p.beta = 4.0;
        p.eps = 0.2;
        const auto f = random_field(8, 9);
        auto a = SpinLattice::make(8, k.reach, BoundaryCondition::horizontal(e1), 0.0);
        auto b = a;
        Rng ra = make_rng(11, "chain"), rb = make_rng(11, "chain");
        for (int s = 0; s < 2; ++s) {
            heat_bath_sweep(a, f, k, p, ra);
            heat_bath_sweep(b, f, k, p, rb);
        }
        CHECK(a.spin == b.spin);
    }
}

TEST_CASE("block observables") {
    const auto s = Scales::realize(32, 4, 0.2);
    const int collar = collar_width(s);
    SUBCASE("constant spins") {
        const auto f = random_field(32, 1);
        const Vec2 u = unit_at(0.4);
        auto l = SpinLattice::make(32, collar, BoundaryCondition::horizontal(u), 0.4);
        const auto obs = block_observables(l, f, s);
        for (const auto& b : obs.big.data) {
            CHECK(dist(b.plain, u) < 1e-13);
            if (b.n_plus) CHECK(dist(b.plus, u) < 1e-13);
            if (b.n_minus) CHECK(dist(b.minus, u) < 1e-13);
        }
    }
    SUBCASE("alternating field with aligned spins") {
        const auto f = alternating_field(32);
        auto l = SpinLattice::make(32, collar, BoundaryCondition::horizontal(e1), 0.0);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) l.set_angle(x, y, f(x, y) > 0 ? std::numbers::pi / 2 : -std::numbers::pi / 2);
        const auto obs = block_observables(l, f, s);
        for (const auto& b : obs.big.data) {
            CHECK(norm(b.plain) < 1e-12);
            CHECK(dist(b.plus, e2) < 1e-12);
            CHECK(dist(b.minus, -1.0 * e2) < 1e-12);
        }
    }
    SUBCASE("counts-weighted identity") {
        oracle::Gen gen(12);
        for (int t = 0; t < 10; ++t) {
            const auto f = random_field(32, 100 + t);
            auto l = SpinLattice::make(32, collar, BoundaryCondition::horizontal(e1), 0.0);
            randomize(l, gen);
            const auto obs = block_observables(l, f, s);
            for (const auto* grid : {&obs.big, &obs.small})
                for (int j = 0; j < grid->ny; ++j)
                    for (int i = 0; i < grid->nx; ++i) {
                        const auto& b = (*grid)(i, j);
                        if (grid == &obs.small && !obs.small_interior(i, j)) continue;
                        const double n = b.n_plus + b.n_minus;
                        CHECK(dist(b.plain, (b.n_plus / n) * b.plus + (b.n_minus / n) * b.minus) < 1e-12);
                    }
        }
    }
}

TEST_CASE("phase fields") {
    const auto mz = minimizer_for(10.0, 0.2);
    SUBCASE("exact minimizer values") {
        const auto maps = phase_fields(exact_blocks(6, 2, mz), mz, 0.05);
        for (auto v : maps.eta.data) CHECK(v == 1);
        for (auto v : maps.theta.data) CHECK(v == 1);
        for (int j = 1; j < maps.Theta.ny - 1; ++j)
            for (int i = 1; i < maps.Theta.nx - 1; ++i) CHECK(maps.Theta(i, j) == 1);
    }
    SUBCASE("one perturbed small block") {
        auto obs = exact_blocks(8, 2, mz);
        obs.small(6, 6).plus += Vec2{0.0, 0.1};  // inside big block (3, 3) of the ringed grid
        const auto maps = phase_fields(obs, mz, 0.05);
        CHECK(maps.eta(6, 6) == 0);
        for (int J = 0; J < maps.theta.ny; ++J)
            for (int I = 0; I < maps.theta.nx; ++I) {
                CHECK(maps.theta(I, J) == (I == 3 && J == 3 ? 0 : 1));
                const bool near = std::abs(I - 3) <= 1 && std::abs(J - 3) <= 1;
                CHECK(maps.Theta(I, J) == (near ? 0 : 1));
            }
    }
    SUBCASE("overlapping tests follow the tie rule") {
        const double xi = 2.5;
        CHECK(classify_pair({Vec2{}, Vec2{}}, mz, xi) == 1);
        CHECK(classify_pair({Vec2{-0.1, 0.0}, Vec2{-0.1, 0.0}}, mz, xi) == -1);
        CHECK(classify_pair({Vec2{0.1, 0.0}, Vec2{0.1, 0.0}}, mz, xi) == 1);
        CHECK(classify_single(Vec2{}, mz.bar(), xi) == 1);
        CHECK(classify_single(Vec2{-0.01, 0.3}, mz.bar(), xi) == -1);
        // Disjoint for xi below the separation.
        CHECK(classify_pair(reflect_y(mz), mz, 0.05) == -1);
        CHECK(classify_pair({Vec2{0.0, 0.5}, Vec2{0.0, -0.5}}, mz, 0.05) == 0);
    }
}

TEST_CASE("contour extraction") {
    SUBCASE("no zeros") {
        const auto m = theta_map({"+++++", "+++++", "+++++", "+++++", "+++++"});
        CHECK(extract_contours(m).empty());
    }
    SUBCASE("single island") {
        const auto m = theta_map({"++++++", "++++++", "++0+++", "++++++", "++++++", "++++++"});
        const auto cs = extract_contours(m);
        REQUIRE(cs.size() == 1);
        CHECK(cs[0].support.size() == 1);
        CHECK(cs[0].support[0] == std::pair<int, int>{1, 1});
        CHECK(cs[0].N_Gamma == 9);
        CHECK(cs[0].type == 1);
        CHECK(cs[0].interior_components == 0);
    }
    SUBCASE("annulus around a minus core") {
        const auto m = theta_map({"+++++++++", "+++++++++", "++00000++", "++0---0++", "++0---0++",
                                  "++0---0++", "++00000++", "+++++++++", "+++++++++"});
        const auto cs = extract_contours(m);
        REQUIRE(cs.size() == 1);
        const auto& c = cs[0];
        CHECK(c.support.size() == 16);
        CHECK(c.interior_components == 1);
        CHECK(c.type == 1);
        // Reference flood fill from the grid frame through non-support cells.
        const int n = 9;
        std::vector<int> reach(n * n, 0);
        std::vector<std::pair<int, int>> st;
        for (int k = 0; k < n; ++k)
            for (auto [i, j] : {std::pair{k, 0}, std::pair{k, n - 1}, std::pair{0, k}, std::pair{n - 1, k}})
                if (m.Theta(i, j) != 0 && !reach[j * n + i]) { reach[j * n + i] = 1; st.emplace_back(i, j); }
        while (!st.empty()) {
            auto [i, j] = st.back();
            st.pop_back();
            for (auto [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
                const int u = i + di, v = j + dj;
                if (u < 0 || v < 0 || u >= n || v >= n || reach[v * n + u] || m.Theta(u, v) == 0) continue;
                reach[v * n + u] = 1;
                st.emplace_back(u, v);
            }
        }
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                CHECK(int(c.interior(i, j)) == int(m.Theta(i, j) != 0 && !reach[j * n + i]));
        for (int j = 3; j <= 5; ++j)
            for (int i = 3; i <= 5; ++i) CHECK(c.interior(i, j) == 1);
    }
    SUBCASE("property: contours partition the zero set") {
        oracle::Gen gen(21);
        for (int t = 0; t < 50; ++t) {
            const int n = gen.integer(4, 12);
            std::vector<std::string> rows(std::size_t(n), std::string(std::size_t(n), '+'));
            for (int j = 1; j < n - 1; ++j)
                for (int i = 1; i < n - 1; ++i) {
                    const double u = gen.uniform(0.0, 1.0);
                    rows[std::size_t(j)][std::size_t(i)] = u < 0.3 ? '0' : u < 0.5 ? '-' : '+';
                }
            const auto m = theta_map(rows);
            const auto cs = extract_contours(m);
            std::vector<int> owner(std::size_t(n * n), -1);
            for (std::size_t k = 0; k < cs.size(); ++k)
                for (auto [i, j] : cs[k].support) {
                    CHECK(owner[std::size_t((j + 1) * n + i + 1)] == -1);
                    owner[std::size_t((j + 1) * n + i + 1)] = int(k);
                }
            for (int j = 1; j < n - 1; ++j)
                for (int i = 1; i < n - 1; ++i) {
                    CHECK((owner[std::size_t(j * n + i)] >= 0) == (m.Theta(i, j) == 0));
                    for (int dj = -1; dj <= 1; ++dj)
                        for (int di = -1; di <= 1; ++di) {
                            const int a = owner[std::size_t(j * n + i)];
                            const int b = owner[std::size_t((j + dj) * n + i + di)];
                            if (a >= 0 && b >= 0) CHECK(a == b);
                        }
                }
        }
    }
    SUBCASE("cleanliness flag") {
        const auto m = theta_map({"++++++", "++++++", "++0+++", "++++++", "++++++", "++++++"});
        CleanMap cm;
        cm.xi_big = Mask(4, 4, 1);
        cm.dirty = Mask(4, 4, 0);
        CHECK(extract_contours(m, &cm, 0.3)[0].clean);
        cm.dirty = Mask(4, 4, 1);
        CHECK_FALSE(extract_contours(m, &cm, 0.3)[0].clean);
        cm.dirty = Mask(4, 4, 0);
        cm.xi_big = Mask(4, 4, 0);
        CHECK_FALSE(extract_contours(m, &cm, 0.3)[0].clean);
    }
}

TEST_CASE("batch means") {
    std::vector<double> xs(400);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = i % 2 ? 1.0 : -1.0;
    const auto r = batch_mean(xs);
    CHECK(r.mean == doctest::Approx(0.0));
    CHECK(r.stderr_ == doctest::Approx(0.0));
    CHECK(batch_mean({2.0}).mean == 2.0);
}

TEST_CASE("chains: determinism, reflection and staggered boundaries") {
    const auto s = Scales::realize(32, 4, 0.2);
    const auto mz = minimizer_for(6.0, 0.3);
    const auto f = random_field(32, 77);
    ChainConfig c;
    c.scales = s;
    c.params.beta = 6.0;
    c.params.eps = 0.3;
    c.boundary = BoundaryCondition::horizontal(mz.bar());
    c.sweeps = 3000;
    c.burn_in = 300;
    c.thin = 5;
    c.xi = 0.3;
    c.seed = 5;
    const auto h = run_chain(c, f);
    const auto cm = xi_and_dirty(f, s);
    const auto rh = measure_order(h, cm);
    CHECK(rh.equilibrated);
    CHECK(rh.bulk_plain_x.mean > 0.5);

    auto c2 = c;
    c2.sweeps = 400;
    c2.burn_in = 100;
    const auto a = run_chain(c2, f), b = run_chain(c2, f);
    CHECK(a.final_state.spin == b.final_state.spin);

    auto cr = c;
    cr.boundary = BoundaryCondition::reflected(mz.bar());
    cr.initial_angle = std::numbers::pi;
    cr.seed = 6;
    const auto rr = measure_order(run_chain(cr, f), cm);
    CHECK(std::abs(rh.bulk_plain_x.mean + rr.bulk_plain_x.mean) <
          3 * std::hypot(rh.bulk_plain_x.stderr_, rr.bulk_plain_x.stderr_));
    CHECK(std::abs(rh.bulk_plus_x.mean + rr.bulk_plus_x.mean) <
          3 * std::hypot(rh.bulk_plus_x.stderr_, rr.bulk_plus_x.stderr_));

    auto cs = c;
    cs.boundary = BoundaryCondition::staggered(norm(mz.bar()));
    cs.seed = 7;
    const auto rs = measure_order(run_chain(cs, f), cm);
    CHECK(std::abs(rh.bulk_plain_x.mean - rs.bulk_plain_x.mean) <
          3 * std::hypot(rh.bulk_plain_x.stderr_, rs.bulk_plain_x.stderr_) + 0.01);

    auto bad = c;
    bad.burn_in = bad.sweeps;
    CHECK_THROWS_AS(run_chain(bad, f), ConfigError);
    CHECK_THROWS_AS(Scales::realize(31, 4, 0.2), ConfigError);

    std::ostringstream os;
    write_blocks_csv(os, h, rh);
    CHECK(os.str().rfind("# scales: N=32", 0) == 0);
}

TEST_CASE("energy approximation") {
    MFParams p;
    p.beta = 8.0;
    p.eps = 0.3;
    const auto mz = minimizer_for(8.0, 0.3);
    SUBCASE("constant spins: only kernel block averaging remains") {
        for (auto [N, L] : {std::pair{60, 6}, std::pair{120, 12}}) {
            const auto s = Scales::realize(N, L, 0.2);
            const auto f = random_field(N, 3);
            auto l = SpinLattice::make(N, collar_width(s), BoundaryCondition::horizontal(e1), 0.0);
            const auto r = energy_approximation_check(l, f, s, KacKernel::make(2, L, 1), p);
            CHECK(r.per_site_total <= std::pow(double(L), s.lambda - 1.0));
            CHECK(r.per_site_field == 0.0);
        }
    }
    SUBCASE("eps = 0: independent of the field") {
        MFParams p0 = p;
        p0.eps = 0.0;
        const auto s = Scales::realize(60, 6, 0.2);
        auto l = SpinLattice::make(60, collar_width(s), BoundaryCondition::horizontal(mz.bar()), 0.0);
        Rng rng = make_rng(1, "state");
        fill_product_state(l, random_field(60, 1), mz, rng);
        const auto k = KacKernel::make(2, 6, 1);
        const auto r1 = energy_approximation_check(l, random_field(60, 1), s, k, p0);
        const auto r2 = energy_approximation_check(l, random_field(60, 2), s, k, p0);
        CHECK(r1.per_site_total == doctest::Approx(r2.per_site_total).epsilon(1e-12));
        CHECK(r1.per_site_field == 0.0);
    }
    SUBCASE("alternating field: field discrepancy within the imbalance bound") {
        for (auto [N, L] : {std::pair{60, 6}, std::pair{64, 8}}) {
            const auto s = Scales::realize(N, L, 0.2);
            const auto f = alternating_field(N);
            auto l = SpinLattice::make(N, collar_width(s), BoundaryCondition::horizontal(mz.bar()), 0.0);
            Rng rng = make_rng(2, "state");
            fill_product_state(l, f, mz, rng);
            const auto r = energy_approximation_check(l, f, s, KacKernel::make(2, L, 1), p);
            const double B = double(s.side_small) * s.side_small;
            // At most one site per block differs from the equal splitting.
            CHECK(r.per_site_field <= p.eps * 2.0 * 1.0 / B + 1e-15);
            CHECK(r.clean);
        }
    }
}
