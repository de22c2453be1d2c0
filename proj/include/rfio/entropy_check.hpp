#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace rfio {

// Finite-volume entropy (1/N) log nu_N(||mean spin - rho e1||_2 < delta) of N
// independent uniform circle spins, against the Legendre entropy S(rho).
struct EntropyEstimate {
    double rho = 0.0;
    double delta = 0.0;
    int n_spins = 0;
    int n_samples = 0;
    int accepted = 0;
    double estimate = 0.0;
    double stderr_ = 0.0;       // bootstrap
    double reference_S = 0.0;
    double tilt = 0.0;          // h(rho)

    // max(delta |h|, delta^-2 N^-2)
    double bound_scale() const;
    double deviation() const;   // |estimate - reference_S|
};

struct EntropyOptions {
    int batches = 16;
    int bootstrap = 200;
    unsigned threads = 1;
};

// Samples N spins from the single-spin law tilted by h(rho) e1 and reweights:
// nu_N(A) = exp(N G(h)) E_h[1_A exp(-h sum sigma . e1)]. Throws InfeasibleError
// when no sample lands in the target set.
EntropyEstimate finite_volume_entropy(double rho, double delta, int n_spins, int n_samples,
                                      std::uint64_t seed, const EntropyOptions& options = {});

void write_entropy_csv(std::ostream& os, const std::vector<EntropyEstimate>& rows, double bound_constant);

}  // namespace rfio
