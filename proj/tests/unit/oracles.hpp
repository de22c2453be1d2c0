#pragma once

// Reference computations used only by the tests. They deliberately avoid the
// library's own numerics (different quadrature, series, or brute force).

#include <cmath>
#include <functional>
#include <numbers>
#include <random>

#include "rfio/vec2.hpp"

namespace oracle {

inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 20000) {
    if (n % 2) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

// log of the circle average of exp(x cos t), full-circle Simpson.
inline double log_mgf(double x) {
    const double avg = simpson([x](double t) { return std::exp(x * std::cos(t)); }, 0.0,
                               2.0 * std::numbers::pi) /
                       (2.0 * std::numbers::pi);
    return std::log(avg);
}

inline double bessel_ratio(double x) {
    return std::cyl_bessel_i(1.0, x) / std::cyl_bessel_i(0.0, x);
}

inline double golden_min(const std::function<double(double)>& f, double a, double b,
                         double tol = 1e-12) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) { b = d; d = c; fd = fc; c = b - g * (b - a); fc = f(c); }
        else { a = c; c = d; fc = fd; d = a + g * (b - a); fd = f(d); }
    }
    return 0.5 * (a + b);
}

// inf_h (G(h) - rho h) by a coarse grid followed by golden-section refinement.
inline double entropy(double rho) {
    auto f = [rho](double h) { return log_mgf(h) - rho * h; };
    double best = 0.0, fbest = f(0.0);
    for (int i = 1; i <= 200; ++i) {
        const double h = 10.0 * i / 200;
        if (f(h) < fbest) { fbest = f(h); best = h; }
    }
    const double h = golden_min(f, std::max(0.0, best - 0.05), best + 0.05, 1e-10);
    return f(h);
}

template <class F>
auto central_diff(F f, double x, double step = 1e-5) {
    return (f(x + step) - f(x - step)) / (2.0 * step);
}

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(std::uint64_t seed) : rng(seed) {}
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
    int integer(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); }
    rfio::Vec2 in_disk(double r) {
        const double rr = r * std::sqrt(uniform(0.0, 1.0));
        const double t = uniform(0.0, 2.0 * std::numbers::pi);
        return {rr * std::cos(t), rr * std::sin(t)};
    }
    rfio::Vec2 direction() { return rfio::unit_at(uniform(0.0, 2.0 * std::numbers::pi)); }
};

}  // namespace oracle
