#pragma once

#include "rfio/vec2.hpp"

namespace rfio {

// Norm beyond which a magnetization is treated as saturated.
inline constexpr double kSaturation = 1.0 - 1e-12;

// log of the Laplace transform of the uniform measure on the unit circle.
double log_mgf(const Vec2& h);
double log_mgf_radial(double x);

// I1(x)/I0(x) for x >= 0, the response of a single spin to a tilt x.
double bessel_ratio(double x);
// d/dx bessel_ratio.
double bessel_ratio_derivative(double x);

// Gradient of log_mgf.
Vec2 magnetization(const Vec2& h);

// Radial inverse: the tilt x >= 0 with bessel_ratio(x) = rho.
double inverse_bessel_ratio(double rho, double tol = 1e-12);
Vec2 inverse_magnetization(const Vec2& m, double tol = 1e-12);

// Legendre transform inf_h (G(h) - m.h); nonpositive and concave.
double entropy(const Vec2& m);
double entropy_radial(double rho);
Vec2 grad_entropy(const Vec2& m);

}  // namespace rfio
