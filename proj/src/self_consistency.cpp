#include "rfio/self_consistency.hpp"

#include <cmath>
#include <numbers>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"
#include "rfio/parallel.hpp"
#include "rfio/rng.hpp"

namespace rfio {

Vec2 m_star(const Vec2& h, const MFParams& params) {
    const Vec2 up = magnetization(params.beta * (h + params.eps * e2));
    const Vec2 down = magnetization(params.beta * (h - params.eps * e2));
    return 0.5 * (up + down);
}

ContractionReport contraction_factor(const MFParams& params, double radius, int n_samples,
                                     std::uint64_t seed, unsigned threads) {
    params.validate();
    if (!(radius > 0.0)) throw DomainError("contraction_factor: radius must be positive");
    if (n_samples < 1) throw DomainError("contraction_factor: n_samples must be >= 1");
    const auto [a, b] = minimizers(params);
    (void)b;
    const Vec2 c = a.pair.bar();
    const Vec2 fc = m_star(c, params);

    auto ratio = [&](const Vec2& h) {
        const double d = dist(h, c);
        return d > 0.0 ? dist(m_star(h, params), fc) / d : 0.0;
    };
    auto clamp_ball = [&](Vec2 h) {
        const double d = dist(h, c);
        return d > radius ? c + (h - c) * (radius / d) : h;
    };

    std::vector<double> ratios(static_cast<std::size_t>(n_samples));
    std::vector<Vec2> points(ratios.size());
    parallel_for(ratios.size(), threads, [&](std::size_t i) {
        Rng rng = make_rng(seed, "contraction", i);
        const double r = radius * std::sqrt(uniform01(rng));
        const Vec2 h = c + r * unit_at(2.0 * std::numbers::pi * uniform01(rng));
        points[i] = h;
        ratios[i] = ratio(h);
    });

    std::size_t best = 0;
    for (std::size_t i = 1; i < ratios.size(); ++i)
        if (ratios[i] > ratios[best]) best = i;

    // Coordinate-search polish of the best sample, kept inside the ball.
    Vec2 x = points[best];
    double fx = ratios[best];
    for (double step = 0.25 * radius; step > 1e-6 * radius; step *= 0.5) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (const Vec2 dir : {e1, -e1, e2, -e2}) {
                const Vec2 y = clamp_ball(x + step * dir);
                const double fy = ratio(y);
                if (fy > fx) { x = y; fx = fy; improved = true; }
            }
        }
    }

    ContractionReport rep;
    rep.radius = radius;
    rep.factor = fx;
    rep.samples = n_samples;
    rep.params = params;
    rep.center = c;
    rep.argmax = x;
    return rep;
}

double loglog_slope(const std::vector<double>& eps, const std::vector<double>& one_minus) {
    if (eps.size() != one_minus.size() || eps.size() < 2)
        throw DomainError("loglog_slope: need at least two matching points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0 && one_minus[i] > 0.0))
            throw DomainError("loglog_slope: values must be positive");
        const double lx = std::log(eps[i]), ly = std::log(one_minus[i]);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

PicardResult picard_fixed_points(const MFParams& params, const std::vector<Vec2>& seeds,
                                 double tol, int max_iter) {
    params.validate();
    PicardResult out;
    const double merge = std::max(1e-6, 1e3 * tol);
    for (const Vec2& seed : seeds) {
        Vec2 h = seed;
        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            const Vec2 next = m_star(h, params);
            const double step = dist(next, h);
            h = next;
            if (step <= tol) { converged = true; break; }
        }
        if (!converged) {
            out.non_converged.push_back(seed);
            continue;
        }
        bool seen = false;
        for (const Vec2& f : out.fixed_points)
            if (dist(f, h) < merge) { seen = true; break; }
        if (!seen) out.fixed_points.push_back(h);
    }
    return out;
}

}  // namespace rfio
