#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rfio/block_grid.hpp"

namespace rfio {

// Two-scale block structure on a square domain of side N (d = 2).
// Requested half-widths follow ell_small = floor(L^(1-lambda)) and
// ell_big = ceil(L^(1+lambda)); the realized block sides are divisors of N
// chosen as described in realize().
struct Scales {
    int N = 0;
    int L = 0;
    double lambda = 0.0;
    int ell_small = 0;
    int ell_big = 0;
    int side_small = 0;
    int side_big = 0;
    double kappa = 0.2;
    double p_dirty = 0.0;

    static constexpr int dim = 2;

    // side_big: smallest divisor of N that is >= 2 ell_big + 1, at most N/2,
    // and has a divisor in [2, 2 ell_small + 1]; side_small: the largest such
    // divisor. Throws ConfigError with a nearby workable N otherwise.
    static Scales realize(int N, int L, double lambda, double kappa = 0.2,
                          std::optional<double> p_dirty = std::nullopt);

    int small_per_axis() const { return N / side_small; }
    int big_per_axis() const { return N / side_big; }
    int small_per_big() const { return side_big / side_small; }
    std::string describe() const;
};

// Nearest N' to N for which realize() succeeds, or 0.
int suggest_domain(int N, int L, double lambda);

struct DisorderField {
    int N = 0;
    std::vector<std::int8_t> alpha;  // row-major, alpha[y * N + x]
    double bias_p = 0.5;
    std::uint64_t seed = 0;

    std::int8_t operator()(int x, int y) const { return alpha[std::size_t(y) * N + x]; }
    std::int8_t& operator()(int x, int y) { return alpha[std::size_t(y) * N + x]; }
};

DisorderField sample_disorder(int N, double bias_p, std::uint64_t seed);
DisorderField alternating_field(int N);

// 1 on blocks where |N+ - |B|/2| < |B|^(1/2 + kappa) and both signs occur.
Mask block_balance(const DisorderField& field, const Scales& scales);

struct CleanMap {
    Mask phi_small;   // per small block
    Mask xi_big;      // per big block: all sub-blocks balanced
    Mask dirty;       // per big block: union of closures of dirty connected sets
    int dirty_components = 0;

    double dirty_fraction() const;
};

CleanMap xi_and_dirty(const DisorderField& field, const Scales& scales);
// Same, starting from a given Xi map (used for handcrafted cases).
CleanMap dirty_from_xi(const Mask& xi_big, double p_dirty);

struct DirtyStatsRow {
    int size_index = 0;
    int trial = 0;
    double fraction = 0.0;
};

struct DirtyStats {
    std::vector<Scales> scales;
    std::vector<DirtyStatsRow> rows;
    std::vector<double> mean;
    std::vector<double> variance;
};

DirtyStats dirty_fraction_stats(const std::vector<Scales>& sizes, int trials, std::uint64_t seed,
                                unsigned threads = 1);

struct HoeffdingRow {
    int n = 0;
    double A = 0.0;
    double threshold = 0.0;  // A sqrt(n/2)
    double bound = 0.0;      // 2 exp(-A^2/4)
    double exact = 0.0;
    double empirical = 0.0;
    double stderr_ = 0.0;
    std::int64_t trials = 0;
};

// P(|N+ - n/2| >= t) for N+ ~ Binomial(n, 1/2).
double binomial_two_sided_tail(int n, double t);

std::vector<HoeffdingRow> hoeffding_check(const std::vector<int>& block_sizes,
                                          const std::vector<double>& A_values, std::int64_t trials,
                                          std::uint64_t seed, unsigned threads = 1);

void write_dirty_csv(std::ostream& os, const DirtyStats& stats);
void write_hoeffding_csv(std::ostream& os, const std::vector<HoeffdingRow>& rows);

}  // namespace rfio
