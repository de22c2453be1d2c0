#include "rfio/circle_calculus.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>
#include <sstream>

#include "rfio/errors.hpp"

namespace rfio {
namespace {

constexpr double kPi = std::numbers::pi;
// Above this tilt the integrands are rescaled by exp(-x).
constexpr double kScaleSwitch = 30.0;
constexpr double kQuadTol = 1e-13;

template <class F>
double integrate(F f, double a, double b) {
    using boost::math::quadrature::gauss_kronrod;
    return gauss_kronrod<double, 31>::integrate(f, a, b, 15, kQuadTol);
}

// Integrals of w(t) exp(x (cos t - 1)) over [0, pi] for large x, in the
// variable u = t sqrt(x). The range is cut where the exponent drops below -50.
struct Scaled {
    double x, sx, umax;
    explicit Scaled(double x_) : x(x_), sx(std::sqrt(x_)) {
        umax = std::min(kPi * sx, 2.0 * sx * std::asin(std::min(1.0, std::sqrt(25.0 / x))));
    }
    double weight(double u) const {
        const double q = std::sin(0.5 * u / sx);
        return std::exp(-2.0 * x * q * q);
    }
    // integral of exp(x (cos t - 1)) dt, times sqrt(x)
    double den() const {
        return integrate([this](double u) { return weight(u); }, 0.0, umax);
    }
    double num() const {
        return integrate([this](double u) { return std::cos(u / sx) * weight(u); }, 0.0, umax);
    }
};

void check_disk(double rho, const char* what) {
    if (!(rho < kSaturation)) {
        std::ostringstream os;
        os << what << ": |m| = " << rho << " is outside the open unit disk";
        throw DomainError(os.str());
    }
}

}  // namespace

double log_mgf_radial(double x) {
    x = std::abs(x);
    if (x == 0.0) return 0.0;
    if (x <= kScaleSwitch) {
        // log1p of the mean of expm1 keeps full relative accuracy near 0.
        const double excess =
            integrate([x](double t) { return std::expm1(x * std::cos(t)); }, 0.0, kPi);
        return std::log1p(excess / kPi);
    }
    const Scaled sc(x);
    return x + std::log(sc.den() / (sc.sx * kPi));
}

double log_mgf(const Vec2& h) { return log_mgf_radial(norm(h)); }

double bessel_ratio(double x) {
    if (x < 0.0) throw DomainError("bessel_ratio: negative argument");
    if (x == 0.0) return 0.0;
    if (x <= kScaleSwitch) {
        const double num = integrate(
            [x](double t) { const double c = std::cos(t); return c * std::sinh(x * c); }, 0.0, kPi);
        const double den = integrate([x](double t) { return std::exp(x * std::cos(t)); }, 0.0, kPi);
        return num / den;
    }
    const Scaled sc(x);
    return sc.num() / sc.den();
}

namespace {

// Derivative from a known value of R at x.
double ratio_derivative_at(double x, double r) {
    if (x < 1e-3) {
        const double x2 = x * x;
        return 0.5 - 3.0 * x2 / 16.0 + 5.0 * x2 * x2 / 96.0;
    }
    if (x > 1e4) {
        // 1 - R/x - R^2 cancels catastrophically here; use the large-x series.
        const double y = 1.0 / x;
        return y * y * (0.5 + y * (0.25 + 0.375 * y));
    }
    return 1.0 - r / x - r * r;
}

}  // namespace

double bessel_ratio_derivative(double x) {
    if (x < 0.0) throw DomainError("bessel_ratio_derivative: negative argument");
    if (x < 1e-3 || x > 1e4) return ratio_derivative_at(x, 0.0);
    return ratio_derivative_at(x, bessel_ratio(x));
}

Vec2 magnetization(const Vec2& h) {
    const double r = norm(h);
    if (r == 0.0) return {0.0, 0.0};
    return h * (bessel_ratio(r) / r);
}

double inverse_bessel_ratio(double rho, double tol) {
    if (rho < 0.0) throw DomainError("inverse_bessel_ratio: negative radius");
    check_disk(rho, "inverse_bessel_ratio");
    if (rho == 0.0) return 0.0;

    double lo = 0.0;
    // h(rho) grows like 1/(2(1-rho)), so the logarithmic bracket alone is too
    // small close to the unit circle.
    double hi = std::max(10.0 - 20.0 * std::log1p(-rho), 1.0 / (1.0 - rho));
    double x = 2.0 * rho / (1.0 - rho * rho);
    if (!(x < hi)) x = 0.5 * hi;
    for (int it = 0; it < 300; ++it) {
        const double r = bessel_ratio(x);
        const double f = r - rho;
        if (std::abs(f) <= tol) return x;
        if (f < 0.0) lo = x; else hi = x;
        if (hi - lo <= 1e-15 * hi) return x;
        const double d = ratio_derivative_at(x, r);
        double next = d > 0.0 ? x - f / d : lo - 1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        x = next;
    }
    throw ConvergenceError("inverse_bessel_ratio: no convergence");
}

Vec2 inverse_magnetization(const Vec2& m, double tol) {
    const double rho = norm(m);
    check_disk(rho, "inverse_magnetization");
    if (rho == 0.0) return {0.0, 0.0};
    return m * (inverse_bessel_ratio(rho, tol) / rho);
}

double entropy_radial(double rho) {
    rho = std::abs(rho);
    check_disk(rho, "entropy");
    if (rho == 0.0) return 0.0;
    const double x = inverse_bessel_ratio(rho);
    return log_mgf_radial(x) - rho * x;
}

double entropy(const Vec2& m) { return entropy_radial(norm(m)); }

Vec2 grad_entropy(const Vec2& m) { return -inverse_magnetization(m); }

}  // namespace rfio
