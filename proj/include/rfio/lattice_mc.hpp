#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "rfio/block_grid.hpp"
#include "rfio/disorder_field.hpp"
#include "rfio/kac_flow.hpp"
#include "rfio/mean_field.hpp"
#include "rfio/rng.hpp"
#include "rfio/vec2.hpp"

namespace rfio {

enum class BoundaryKind { horizontal, reflected, staggered, custom };

const char* to_string(BoundaryKind kind);
BoundaryKind boundary_kind_from_string(const std::string& name);

// Spins frozen outside the sampled square. Coordinates passed to at() are
// lattice coordinates relative to the first interior site.
struct BoundaryCondition {
    BoundaryKind kind = BoundaryKind::horizontal;
    // horizontal: every boundary spin equals value (|value| <= 1);
    // reflected: every boundary spin equals reflect_y(value);
    // staggered: unit spins a e1 +- sqrt(1 - a^2) e2 by site parity, a = value.x.
    Vec2 value;
    std::function<Vec2(int, int)> custom;

    static BoundaryCondition horizontal(Vec2 v);
    static BoundaryCondition reflected(Vec2 v);
    static BoundaryCondition staggered(double a);
    static BoundaryCondition from(std::function<Vec2(int, int)> fn);

    Vec2 at(int x, int y) const;
    void validate() const;
};

// Collar width used for a geometry: the smallest multiple of the big block
// side that is at least L + side_small, so one ring of boundary boxes exists
// at both block scales and the coarse kernel fits.
int collar_width(const Scales& scales);

// Square of N x N spins plus a frozen collar. Spins are stored on the
// extended grid; interior spins are unit vectors.
struct SpinLattice {
    int N = 0;
    int collar = 0;
    std::vector<Vec2> spin;
    BoundaryCondition boundary;

    static SpinLattice make(int N, int collar, const BoundaryCondition& bc, double initial_angle);

    int side() const { return N + 2 * collar; }
    std::size_t idx(int x, int y) const { return std::size_t(y + collar) * side() + (x + collar); }
    bool inside(int x, int y) const { return x >= 0 && x < N && y >= 0 && y < N; }
    const Vec2& at(int x, int y) const { return spin[idx(x, y)]; }
    double angle(int x, int y) const;  // in [0, 2 pi)
    void set_angle(int x, int y, double a);
    // Reflects every spin, boundary included, about the Y axis.
    void reflect_all();
};

struct EnergyParts {
    double coupling = 0.0;  // -1/2 sum over interior pairs, self pairs included
    double field = 0.0;     // -eps sum alpha e2 . sigma
    double boundary = 0.0;  // -sum over interior x collar pairs of J (sigma . s - |s|^2/2)

    double total() const { return coupling + field + boundary; }
};

// Lattice Hamiltonian with the site kernel (cell == 1, dim == 2).
EnergyParts energy_parts(const SpinLattice& lattice, const DisorderField& field,
                         const KacKernel& kernel, const MFParams& params);
double energy(const SpinLattice& lattice, const DisorderField& field, const KacKernel& kernel,
              const MFParams& params);

// Angle offset from the mean direction of a von Mises law with concentration
// kappa >= 0, in (-pi, pi].
double sample_von_mises(Rng& rng, double kappa);

// sum_{z' != z} J(z, z') sigma_z' + eps alpha_z e2.
Vec2 local_field(const SpinLattice& lattice, const DisorderField& field, const KacKernel& kernel,
                 double eps, int x, int y);

// One row-major pass; each interior spin is drawn from its exact conditional.
void heat_bath_sweep(SpinLattice& lattice, const DisorderField& field, const KacKernel& kernel,
                     const MFParams& params, Rng& rng);

struct BlockAverage {
    Vec2 plus;   // zero when the block has no alpha = +1 site
    Vec2 minus;  // zero when the block has no alpha = -1 site
    Vec2 plain;
    int n_plus = 0;
    int n_minus = 0;

    bool split() const { return n_plus > 0 && n_minus > 0; }
};

// Small-block averages on the interior plus one ring of big boundary boxes,
// and big-block averages on the interior.
struct BlockObservables {
    int small_side = 0;
    int big_side = 0;
    int ring_small = 0;  // small blocks per axis in the ring
    BlockGrid<BlockAverage> small;
    BlockGrid<BlockAverage> big;

    bool small_interior(int i, int j) const;
};

BlockObservables block_observables(const SpinLattice& lattice, const DisorderField& field,
                                   const Scales& scales);

// eta per small block, theta and Theta per big block, all on grids that
// include one ring of boundary boxes (offset by the ring width).
struct PhaseMaps {
    int ring_small = 0;
    int small_per_big = 0;
    BlockGrid<std::int8_t> eta;
    BlockGrid<std::int8_t> theta;
    BlockGrid<std::int8_t> Theta;

    int big_interior() const { return theta.nx - 2; }
};

// Interior blocks are compared with the minimizer pair and its Y reflection
// by pair_distance; boundary boxes compare the plain average with mbar and its
// reflection. When both tests pass the nearer one wins, exact ties give +1.
std::int8_t classify_pair(const PairMagnetization& block, const PairMagnetization& minimizer,
                          double xi);
std::int8_t classify_single(const Vec2& block, const Vec2& mbar, double xi);

PhaseMaps phase_fields(const BlockObservables& obs, const PairMagnetization& minimizer, double xi);
// Theta from theta alone; exposed for handcrafted maps.
BlockGrid<std::int8_t> neighborhood_unanimity(const BlockGrid<std::int8_t>& theta);

struct Contour {
    std::vector<std::pair<int, int>> support;  // interior big-block indices
    std::vector<std::int8_t> theta_on_support; // eta of the small blocks, per support block
    Mask delta;                                // on the ringed big-block grid
    Mask interior;                             // Int(support) on the ringed grid
    int interior_components = 0;
    int N_Gamma = 0;                           // |delta| in big blocks
    int type = 0;                              // Theta on the exterior part of delta
    bool clean = false;
};

// Maximal 8-connected components of {Theta == 0} inside the square. With a
// clean map, `clean` is set when delta is (kappa, p)-clean and the closure is
// not strictly inside the dirty set; boundary boxes count as clean.
std::vector<Contour> extract_contours(const PhaseMaps& maps, const CleanMap* clean = nullptr,
                                      double p_dirty = 0.0);

struct MeanError {
    double mean = 0.0;
    double stderr_ = 0.0;
};

// Mean with a batch-means standard error (at most `batches` batches).
MeanError batch_mean(const std::vector<double>& xs, int batches = 20);

struct BulkAverages {
    Vec2 plain;
    Vec2 plus;
    Vec2 minus;
};

struct SampleRecord {
    int sweep = 0;
    double energy = 0.0;
    BulkAverages bulk;
    std::vector<BlockAverage> blocks;  // interior big blocks, row-major
    int contours = 0;
    int contour_volume = 0;            // sum of N_Gamma
};

struct ChainConfig {
    Scales scales;
    MFParams params;
    BoundaryCondition boundary;
    int sweeps = 1000;
    int burn_in = 200;
    int thin = 10;
    int bulk_margin = -1;   // sites kept away from the collar; -1 means L
    double xi = 0.1;
    std::uint64_t seed = 0; // chain stream root
    double initial_angle = 0.0;

    void validate() const;
};

struct ChainResult {
    ChainConfig config;
    PairMagnetization minimizer;
    std::vector<SampleRecord> samples;
    SpinLattice final_state;
};

// Samples from the start after burn_in, every `thin` sweeps.
ChainResult run_chain(const ChainConfig& config, const DisorderField& field);

struct BlockOrder {
    MeanError plus_x, plus_y, minus_x, minus_y, plain_x, plain_y;
    bool away_from_dirty = false;
    bool close_pair = false;   // |<M+-> - m+-| <= xi for both signs
    bool close_mean = false;   // |<M> - mbar| <= xi
};

struct OrderReport {
    std::vector<BlockOrder> blocks;  // interior big blocks, row-major
    int flagged = 0;                 // blocks whose neighborhood misses the dirty set
    double flagged_close_pair = 0.0;
    double flagged_close_mean = 0.0;
    MeanError bulk_plain_x, bulk_plain_y, bulk_plus_x, bulk_plus_y, bulk_minus_x, bulk_minus_y;
    MeanError contour_count, contour_volume;
    std::vector<int> volume_histogram;  // index = total N_Gamma of a sample
    bool equilibrated = false;          // two-half energy means within 2 pooled errors
};

OrderReport measure_order(const ChainResult& chain, const CleanMap& clean);

// Equal splitting of a small block: the minority sign keeps all its sites and
// is topped up in row-major order to floor(|B|/2) sites.
struct EnergyApproxReport {
    double per_site_total = 0.0;
    double per_site_coupling = 0.0;
    double per_site_field = 0.0;
    double clean_fraction = 0.0;  // fraction of big blocks with Xi = 1
    bool clean = false;           // clean_fraction > 1 - p_dirty
    int sites = 0;
};

EnergyApproxReport energy_approximation_check(const SpinLattice& lattice, const DisorderField& field,
                                              const Scales& scales, const KacKernel& site_kernel,
                                              const MFParams& params);

// Smooth planar texture: angle base + amplitude sin(2 pi x / wavelength) sin(2 pi y / wavelength).
void fill_texture(SpinLattice& lattice, double base, double amplitude, double wavelength);
// Independent spins with mean m+ on alpha = +1 sites and m- elsewhere, each
// drawn from the single-site law whose magnetization is that mean.
void fill_product_state(SpinLattice& lattice, const DisorderField& field, const PairMagnetization& pair,
                        Rng& rng);

void write_blocks_csv(std::ostream& os, const ChainResult& chain, const OrderReport& report);
void write_contours_json(std::ostream& os, const std::vector<Contour>& contours);

}  // namespace rfio
