#include "rfio/mean_field.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"
#include "rfio/parallel.hpp"
#include "rfio/rng.hpp"

namespace rfio {
namespace {

constexpr double kDiskMargin = 1e-9;

// bessel_ratio extended as an odd function.
double ratio_odd(double t) { return t < 0.0 ? -bessel_ratio(-t) : bessel_ratio(t); }

template <class F>
double bracket_root(F f, double lo, double hi, double tol) {
    std::uintmax_t max_iter = 300;
    auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol; };
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, stop, max_iter);
    return 0.5 * (a + b);
}

MFSolution make_solution(const PairMagnetization& pair, SolutionKind kind,
                         const MFParams& params) {
    MFSolution s;
    s.pair = pair;
    s.rho = norm(pair.m_plus);
    s.theta = std::atan2(pair.m_plus.y, std::abs(pair.m_plus.x));
    s.phi_value = phi(pair, params);
    s.kind = kind;
    s.residual = stationarity_residual(pair, params);
    return s;
}

using Point4 = std::array<double, 4>;

Point4 to_point(const PairMagnetization& p) {
    return {p.m_plus.x, p.m_plus.y, p.m_minus.x, p.m_minus.y};
}
PairMagnetization to_pair(const Point4& x) { return {{x[0], x[1]}, {x[2], x[3]}}; }

bool inside(const Point4& x) {
    const double r = 1.0 - kDiskMargin;
    return x[0] * x[0] + x[1] * x[1] < r * r && x[2] * x[2] + x[3] * x[3] < r * r;
}

Point4 gradient(const Point4& x, const MFParams& params) {
    const auto [gp, gm] = grad_phi(to_pair(x), params);
    return {gp.x, gp.y, gm.x, gm.y};
}

double dot4(const Point4& a, const Point4& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
}

Vec2 random_in_disk(Rng& rng, double radius) {
    const double r = radius * std::sqrt(uniform01(rng));
    const double a = 2.0 * std::numbers::pi * uniform01(rng);
    return r * unit_at(a);
}

}  // namespace

void MFParams::validate() const {
    std::ostringstream os;
    if (!(beta > 0.0)) os << "beta must be > 0; ";
    if (!(eps >= 0.0 && eps < 1.0)) os << "eps must lie in [0,1); ";
    if (!(p > 0.0 && p < 1.0)) os << "p must lie in (0,1); ";
    if (!os.str().empty()) throw DomainError("MFParams: " + os.str());
}

double pair_distance(const PairMagnetization& a, const PairMagnetization& b) {
    return std::max(dist(a.m_plus, b.m_plus), dist(a.m_minus, b.m_minus));
}

PairMagnetization reflect_y(const PairMagnetization& pair) {
    return {reflect_y(pair.m_plus), reflect_y(pair.m_minus)};
}

std::string to_string(SolutionKind kind) {
    switch (kind) {
        case SolutionKind::minimizer: return "minimizer";
        case SolutionKind::saddle: return "saddle";
        case SolutionKind::trivial: return "trivial";
    }
    return "unknown";
}

double phi(const PairMagnetization& pair, const MFParams& params) {
    const Vec2 mbar = pair.bar();
    return -0.5 * norm2(mbar) - 0.5 * params.eps * dot(e2, pair.m_plus - pair.m_minus) -
           (entropy(pair.m_plus) + entropy(pair.m_minus)) / (2.0 * params.beta);
}

std::pair<Vec2, Vec2> grad_phi(const PairMagnetization& pair, const MFParams& params) {
    const Vec2 mbar = pair.bar();
    const double c = 1.0 / (2.0 * params.beta);
    const Vec2 hp = inverse_magnetization(pair.m_plus, 1e-15);
    const Vec2 hm = inverse_magnetization(pair.m_minus, 1e-15);
    return {-0.5 * mbar - 0.5 * params.eps * e2 + c * hp,
            -0.5 * mbar + 0.5 * params.eps * e2 + c * hm};
}

double stationarity_residual(const PairMagnetization& pair, const MFParams& params) {
    const Vec2 mbar = pair.bar();
    const Vec2 tp = magnetization(params.beta * (mbar + params.eps * e2));
    const Vec2 tm = magnetization(params.beta * (mbar - params.eps * e2));
    return std::max(dist(pair.m_plus, tp), dist(pair.m_minus, tm));
}

double rho_beta(double beta, double tol) {
    if (!(beta > 0.0)) throw DomainError("rho_beta: beta must be positive");
    if (beta <= 2.0) return 0.0;
    auto g = [beta](double r) { return r - bessel_ratio(beta * r); };
    // Small-radius expansion puts the root near sqrt(8 (beta-2) / beta^3).
    double lo = std::min(0.5, 0.5 * std::sqrt(8.0 * (beta - 2.0) / (beta * beta * beta)));
    while (g(lo) >= 0.0) {
        lo *= 0.5;
        if (lo < 1e-300) return 0.0;
    }
    const double hi = 1.0 - 1e-15;
    return bracket_root(g, lo, hi, tol);
}

std::pair<MFSolution, MFSolution> minimizers(const MFParams& params, double tol) {
    params.validate();
    const double rho = rho_beta(params.beta, tol);
    if (!(params.eps < rho)) {
        std::ostringstream os;
        os << "no transverse minimizer: eps = " << params.eps << " >= rho_beta = " << rho
           << " (beta = " << params.beta << ")";
        throw InfeasibleError(os.str());
    }
    const double s = params.eps / rho;
    const double c = std::sqrt((1.0 - s) * (1.0 + s));
    PairMagnetization pair{{rho * c, params.eps}, {rho * c, -params.eps}};
    MFSolution first = make_solution(pair, SolutionKind::minimizer, params);
    first.rho = rho;
    first.theta = std::asin(s);
    MFSolution second = first;
    second.pair = reflect_y(pair);
    second.phi_value = phi(second.pair, params);
    second.residual = stationarity_residual(second.pair, params);
    return {first, second};
}

std::vector<MFSolution> stationary_points(const MFParams& params, double tol) {
    params.validate();
    const auto [a, b] = minimizers(params);
    std::vector<MFSolution> out{a, b};

    // Points with both components on the e2 axis: mbar = y e2 with
    // y = (R(beta (y+eps)) + R(beta (y-eps))) / 2.
    const double beta = params.beta;
    const double eps = params.eps;
    auto g = [&](double y) { return y - 0.5 * (ratio_odd(beta * (y + eps)) + ratio_odd(beta * (y - eps))); };
    auto axis_pair = [&](double y) {
        return PairMagnetization{ratio_odd(beta * (y + eps)) * e2, ratio_odd(beta * (y - eps)) * e2};
    };

    out.push_back(make_solution(axis_pair(0.0), SolutionKind::trivial, params));

    constexpr int kGrid = 2000;
    double prev_y = 1e-9;
    double prev_g = g(prev_y);
    for (int i = 1; i <= kGrid; ++i) {
        const double y = 1e-9 + (1.0 - 2e-9) * i / kGrid;
        const double gy = g(y);
        if ((prev_g < 0.0) != (gy < 0.0)) {
            const double root = bracket_root(g, prev_y, y, 1e-15);
            const PairMagnetization up = axis_pair(root);
            const PairMagnetization down{-up.m_minus, -up.m_plus};
            out.push_back(make_solution(up, SolutionKind::saddle, params));
            out.push_back(make_solution(down, SolutionKind::saddle, params));
        }
        prev_y = y;
        prev_g = gy;
    }

    for (const auto& s : out) {
        const auto [gp, gm] = grad_phi(s.pair, params);
        const double gn = std::max(norm(gp), norm(gm));
        if (gn > tol) {
            std::ostringstream os;
            os << "stationary_points: " << to_string(s.kind) << " has gradient " << gn;
            throw ConvergenceError(os.str());
        }
    }
    return out;
}

PairMagnetization aligned_reference(const MFParams& params) {
    const double rho = rho_beta(params.beta);
    return {rho * e2, rho * e2};
}

double barrier(const MFParams& params) {
    const auto [m, unused] = minimizers(params);
    (void)unused;
    return phi(aligned_reference(params), params) - m.phi_value;
}

double reduced_chi(double rho, double theta, const MFParams& params) {
    if (!(rho >= 0.0 && rho < kSaturation)) throw DomainError("reduced_chi: rho outside [0,1)");
    const double s = std::sin(theta);
    return -0.5 * rho * rho - entropy_radial(rho) / params.beta + 0.5 * rho * rho * s * s -
           params.eps * rho * s;
}

DescentResult local_descent(const PairMagnetization& start, const MFParams& params,
                            double grad_tol, int max_iter) {
    Point4 x = to_point(start);
    if (!inside(x)) throw DomainError("local_descent: start outside the unit disks");
    double f = phi(start, params);
    Point4 g = gradient(x, params);
    // Inverse Hessian approximation, row-major 4x4.
    std::array<double, 16> H{};
    for (int i = 0; i < 4; ++i) H[i * 5] = 1.0;

    DescentResult res;
    int it = 0;
    int stalled = 0;
    for (; it < max_iter; ++it) {
        if (std::sqrt(dot4(g, g)) <= grad_tol) break;
        Point4 d{};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) d[i] -= H[i * 4 + j] * g[j];
        double slope = dot4(d, g);
        if (slope >= 0.0) {
            for (int i = 0; i < 4; ++i) d[i] = -g[i];
            H.fill(0.0);
            for (int i = 0; i < 4; ++i) H[i * 5] = 1.0;
            slope = dot4(d, g);
        }
        double step = 1.0;
        Point4 xn{};
        double fn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
            for (int i = 0; i < 4; ++i) xn[i] = x[i] + step * d[i];
            if (!inside(xn)) continue;
            fn = phi(to_pair(xn), params);
            if (fn <= f + 1e-4 * step * slope) { accepted = true; break; }
        }
        if (!accepted) break;
        // Near the minimum the gradient is limited by the accuracy of the
        // inverse magnetization; stop once phi no longer moves.
        stalled = (f - fn <= 1e-16 * (1.0 + std::abs(f))) ? stalled + 1 : 0;
        if (stalled >= 5) { x = xn; f = fn; g = gradient(xn, params); break; }
        const Point4 gn = gradient(xn, params);
        Point4 s{}, y{};
        for (int i = 0; i < 4; ++i) { s[i] = xn[i] - x[i]; y[i] = gn[i] - g[i]; }
        const double sy = dot4(s, y);
        if (sy > 1e-300) {
            // BFGS update of the inverse Hessian.
            Point4 Hy{};
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) Hy[i] += H[i * 4 + j] * y[j];
            const double yHy = dot4(y, Hy);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                    H[i * 4 + j] += ((sy + yHy) * s[i] * s[j]) / (sy * sy) -
                                    (Hy[i] * s[j] + s[i] * Hy[j]) / sy;
        }
        x = xn;
        f = fn;
        g = gn;
    }
    res.pair = to_pair(x);
    res.phi_value = f;
    res.grad_norm = std::sqrt(dot4(g, g));
    res.iterations = it;
    res.converged = res.grad_norm <= std::max(grad_tol, 1e-8);
    return res;
}

StabilityReport stability_scan(const MFParams& params, double xi, int n_samples,
                               std::uint64_t seed, unsigned threads) {
    params.validate();
    if (!(params.eps > 0.0)) throw InfeasibleError("stability_scan: needs eps > 0");
    if (n_samples < 1) throw DomainError("stability_scan: n_samples must be >= 1");
    const auto [a, b] = minimizers(params);
    if (!(2.0 * xi < pair_distance(a.pair, b.pair)))
        throw DomainError("stability_scan: xi-neighborhoods of the minimizers overlap");

    const double fmin = a.phi_value;
    const double eps2 = params.eps * params.eps;
    constexpr double kRadius = 0.995;

    struct Sample {
        PairMagnetization pair;
        double gap = 0.0;
        double ratio = 0.0;
        bool on_sphere = false;
    };
    std::vector<Sample> samples(static_cast<std::size_t>(n_samples));

    parallel_for(samples.size(), threads, [&](std::size_t i) {
        Rng rng = make_rng(seed, "stability", i);
        Sample s;
        s.on_sphere = (i % 2 == 1);
        for (int tries = 0;; ++tries) {
            if (tries > 10000) throw InfeasibleError("stability_scan: cannot place samples");
            PairMagnetization cand;
            if (s.on_sphere) {
                const PairMagnetization& c = uniform01(rng) < 0.5 ? a.pair : b.pair;
                const Vec2 ring = xi * unit_at(2.0 * std::numbers::pi * uniform01(rng));
                const Vec2 inner = random_in_disk(rng, xi);
                const bool plus_on_ring = uniform01(rng) < 0.5;
                cand.m_plus = c.m_plus + (plus_on_ring ? ring : inner);
                cand.m_minus = c.m_minus + (plus_on_ring ? inner : ring);
            } else {
                cand.m_plus = random_in_disk(rng, kRadius);
                cand.m_minus = random_in_disk(rng, kRadius);
            }
            if (norm(cand.m_plus) >= kRadius || norm(cand.m_minus) >= kRadius) continue;
            const double da = pair_distance(cand, a.pair);
            const double db = pair_distance(cand, b.pair);
            if (!s.on_sphere && std::min(da, db) < xi) continue;
            s.pair = cand;
            s.gap = phi(cand, params) - fmin;
            s.ratio = s.gap / std::min({da, db, eps2});
            break;
        }
        samples[i] = s;
    });

    StabilityReport rep;
    rep.xi = xi;
    rep.samples = n_samples;
    rep.min_ratio = std::numeric_limits<double>::infinity();
    rep.min_boundary_gap = std::numeric_limits<double>::infinity();
    for (const auto& s : samples) {
        if (s.ratio < rep.min_ratio) {
            rep.min_ratio = s.ratio;
            rep.worst = s.pair;
        }
        if (s.on_sphere) rep.min_boundary_gap = std::min(rep.min_boundary_gap, s.gap);
    }
    rep.aligned_gap = phi(aligned_reference(params), params) - fmin;
    return rep;
}

BiasedFixedPoint biased_fixed_point(const MFParams& params, double tol, int max_iter) {
    params.validate();
    const double rho = rho_beta(params.beta);
    if (rho == 0.0) throw InfeasibleError("biased_fixed_point: needs beta > 2");
    const double p = params.p;
    const double q = params.q();
    auto targets = [&](const Vec2& mbar) {
        return PairMagnetization{magnetization(params.beta * (mbar + params.eps * e2)),
                                 magnetization(params.beta * (mbar - params.eps * e2))};
    };

    Vec2 mbar{rho, 0.0};
    std::vector<double> trace;
    double residual = std::numeric_limits<double>::infinity();
    int it = 0;
    for (; it < max_iter; ++it) {
        const PairMagnetization t = targets(mbar);
        const Vec2 next = p * t.m_plus + q * t.m_minus;
        residual = dist(next, mbar);
        mbar = next;
        if (it % 1000 == 0) trace.push_back(residual);
        if (residual <= tol) break;
    }
    if (!(residual <= tol)) {
        std::ostringstream os;
        os << "biased_fixed_point: residual " << residual << " after " << max_iter
           << " iterations; trace every 1000 steps:";
        for (double r : trace) os << ' ' << r;
        throw ConvergenceError(os.str());
    }
    BiasedFixedPoint out;
    out.pair = targets(mbar);
    out.mbar = out.pair.bar(p);
    out.residual = residual;
    out.iterations = it + 1;
    out.relation_e1 = p * out.pair.m_plus.x - q * out.pair.m_minus.x;
    out.relation_e2 = p * out.pair.m_plus.y - q * out.pair.m_minus.y - params.eps;
    return out;
}

}  // namespace rfio
