#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rfio/vec2.hpp"

namespace rfio {

struct MFParams {
    double beta = 10.0;
    double eps = 0.1;
    double p = 0.5;  // probability of a + field

    double q() const { return 1.0 - p; }
    void validate() const;
};

struct PairMagnetization {
    Vec2 m_plus;
    Vec2 m_minus;

    Vec2 bar() const { return 0.5 * (m_plus + m_minus); }
    Vec2 bar(double p) const { return p * m_plus + (1.0 - p) * m_minus; }
};

// Max of the componentwise Euclidean distances.
double pair_distance(const PairMagnetization& a, const PairMagnetization& b);
PairMagnetization reflect_y(const PairMagnetization& pair);

enum class SolutionKind { minimizer, saddle, trivial };
std::string to_string(SolutionKind kind);

struct MFSolution {
    PairMagnetization pair;
    double rho = 0.0;
    double theta = 0.0;
    double phi_value = 0.0;
    SolutionKind kind = SolutionKind::minimizer;
    // max over +/- of |m - M(beta (mbar +- eps e2))|
    double residual = 0.0;
};

double phi(const PairMagnetization& pair, const MFParams& params);
// Gradient with respect to (m_plus, m_minus).
std::pair<Vec2, Vec2> grad_phi(const PairMagnetization& pair, const MFParams& params);
// Residual of the fixed-point form of stationarity.
double stationarity_residual(const PairMagnetization& pair, const MFParams& params);

// Largest root of rho = bessel_ratio(beta rho); zero for beta <= 2.
double rho_beta(double beta, double tol = 1e-12);

std::pair<MFSolution, MFSolution> minimizers(const MFParams& params, double tol = 1e-12);
std::vector<MFSolution> stationary_points(const MFParams& params, double tol = 1e-9);

// Both components along e2 with the ordered radius.
PairMagnetization aligned_reference(const MFParams& params);
// phi(aligned_reference) - phi(minimizer).
double barrier(const MFParams& params);

// phi restricted to m_minus = reflect_x(m_plus), in polar coordinates.
double reduced_chi(double rho, double theta, const MFParams& params);

struct DescentResult {
    PairMagnetization pair;
    double phi_value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Quasi-Newton descent of phi with backtracking, kept inside the unit disks.
DescentResult local_descent(const PairMagnetization& start, const MFParams& params,
                            double grad_tol = 1e-11, int max_iter = 2000);

struct StabilityReport {
    double xi = 0.0;
    int samples = 0;
    double min_ratio = 0.0;          // min of gap / min(dist+, dist-, eps^2)
    double min_boundary_gap = 0.0;   // min gap over samples on the xi-sphere
    double aligned_gap = 0.0;        // gap at the aligned reference pair
    PairMagnetization worst;
};

StabilityReport stability_scan(const MFParams& params, double xi, int n_samples,
                               std::uint64_t seed, unsigned threads = 1);

struct BiasedFixedPoint {
    PairMagnetization pair;
    Vec2 mbar;
    double residual = 0.0;
    int iterations = 0;
    // p m+.e1 - q m-.e1 and p m+.e2 - q m-.e2 - eps at the fixed point
    double relation_e1 = 0.0;
    double relation_e2 = 0.0;
};

BiasedFixedPoint biased_fixed_point(const MFParams& params, double tol = 1e-12,
                                    int max_iter = 2'000'000);

}  // namespace rfio
