#pragma once

#include <iosfwd>
#include <vector>

#include "rfio/mean_field.hpp"
#include "rfio/vec2.hpp"

namespace rfio {

// Bump profile exp(-1/(1-r^2)) on r < 1.
double kac_profile(double r);

// Kac interaction of range L seen between cells of `cell` lattice sites per
// side. Weights are the site kernel averaged over cell pairs, so they sum to 1
// and reduce to the site kernel for cell == 1. With dim == 1 the weights are
// marginalized along the second axis (profiles constant along a strip).
struct KacKernel {
    struct Offset {
        int dx = 0;
        int dy = 0;
        double w = 0.0;
    };

    double range_L = 0.0;
    int cell = 1;
    int dim = 2;
    int reach = 0;  // largest |dx| or |dy| with nonzero weight
    std::vector<Offset> offsets;

    static KacKernel make(int dim, double range_L, int cell);
    double total_weight() const;
    double weight(int dx, int dy = 0) const;
};

// Cell-discretized (m+, m-) profile on nx by ny interior cells, surrounded by
// a collar of frozen cells. Strips (dim 1) have ny == 1 and a collar at both
// ends only.
struct ProfileGrid {
    int dim = 1;
    int nx = 0;
    int ny = 1;
    int collar = 0;
    double cell_measure = 1.0;  // lattice volume of one cell
    std::vector<Vec2> plus;
    std::vector<Vec2> minus;

    static ProfileGrid make(int dim, int nx, int ny, int collar, double cell_measure);

    int ext_x() const { return nx + 2 * collar; }
    int ext_y() const { return dim == 2 ? ny + 2 * collar : 1; }
    // Cell index, interior cells are 0 <= i < nx, 0 <= j < ny.
    std::size_t idx(int i, int j = 0) const;
    bool interior(int i, int j = 0) const { return i >= 0 && i < nx && j >= 0 && j < ny; }
    Vec2 bar(int i, int j = 0) const { const auto k = idx(i, j); return 0.5 * (plus[k] + minus[k]); }
    int interior_cells() const { return nx * ny; }
    double volume() const { return cell_measure * interior_cells(); }

    void fill_interior(const PairMagnetization& pair);
    void fill_collar(const PairMagnetization& pair);
};

// Kernel-averaged mbar at every interior cell (row-major over (j, i)).
std::vector<Vec2> convolve(const KacKernel& kernel, const ProfileGrid& grid);

// Energy part of the free energy: kernel terms with the collar plus the
// transverse field terms.
double continuum_energy(const ProfileGrid& grid, const KacKernel& kernel, const MFParams& params);
double free_energy(const ProfileGrid& grid, const KacKernel& kernel, const MFParams& params);

// max over interior cells of |m+- - M(beta (J*mbar +- eps e2))|
double flow_residual(const ProfileGrid& grid, const KacKernel& kernel, const MFParams& params);

ProfileGrid flow_step(const ProfileGrid& grid, const KacKernel& kernel, const MFParams& params,
                      double dt);

struct FlowOptions {
    double dt = 0.5;
    double tol = 1e-8;
    int max_steps = 200000;
    // Admissible set: |mbar - center| < xi on every interior cell, |m+-| < 1,
    // positive e1 components. Checked after every step when xi > 0.
    double xi = 0.0;
    Vec2 center;
};

struct FlowDiagnostics {
    std::vector<double> free_energy_trace;
    double stationarity_residual = 0.0;
    int wall_steps = 0;
    double max_energy_increase = 0.0;  // largest F(t+1) - F(t), <= 0 for descent
};

struct FlowResult {
    ProfileGrid profile;
    FlowDiagnostics diagnostics;
};

// Throws ConvergenceError past max_steps and InvariantViolation if the
// admissible set is left.
FlowResult evolve_to_stationary(const ProfileGrid& start, const KacKernel& kernel,
                                const MFParams& params, const FlowOptions& options);

bool admissible(const ProfileGrid& grid, const Vec2& center, double xi);

struct DecayBand {
    double distance = 0.0;  // inner edge of the band, lattice units
    double sup_deviation = 0.0;
};

// Sup of |mbar - center| over bands of width L by distance to the collar.
// Rejects profiles whose residual exceeds tol.
std::vector<DecayBand> decay_profile(const ProfileGrid& stationary, const KacKernel& kernel,
                                     const MFParams& params, const Vec2& center,
                                     double tol = 1e-8);

// Successive band ratios while the deviation stays above `floor`, and their
// geometric mean.
struct DecaySummary {
    std::vector<double> ratios;
    double mean_ratio = 0.0;
};
DecaySummary summarize_decay(const std::vector<DecayBand>& bands, double floor);

// Strip of n_cells with cell size `cell`, interior seeded at `interior`,
// collar at mbar `boundary` on both ends.
ProfileGrid make_strip(const KacKernel& kernel, int n_cells, const PairMagnetization& interior,
                       const Vec2& boundary);

void write_profile_csv(std::ostream& os, const ProfileGrid& grid);

}  // namespace rfio
