#pragma once

#include <cstdint>
#include <vector>

#include "rfio/mean_field.hpp"
#include "rfio/vec2.hpp"

namespace rfio {

// h -> (M(beta (h + eps e2)) + M(beta (h - eps e2))) / 2
Vec2 m_star(const Vec2& h, const MFParams& params);

struct ContractionReport {
    double radius = 0.0;
    double factor = 0.0;  // sup of |m_star(h) - m_star(c)| / |h - c| over the ball
    int samples = 0;
    MFParams params;
    Vec2 center;
    Vec2 argmax;
};

ContractionReport contraction_factor(const MFParams& params, double radius, int n_samples,
                                     std::uint64_t seed, unsigned threads = 1);

// Slope of log(1 - factor) against log(eps) by least squares.
double loglog_slope(const std::vector<double>& eps, const std::vector<double>& one_minus_factor);

struct PicardResult {
    std::vector<Vec2> fixed_points;   // deduplicated
    std::vector<Vec2> non_converged;  // seeds that ran out of iterations
};

PicardResult picard_fixed_points(const MFParams& params, const std::vector<Vec2>& seeds,
                                 double tol = 1e-12, int max_iter = 200000);

}  // namespace rfio
