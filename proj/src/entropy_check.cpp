#include "rfio/entropy_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"
#include "rfio/lattice_mc.hpp"
#include "rfio/parallel.hpp"
#include "rfio/rng.hpp"

namespace rfio {
namespace {

double log_sum_exp(const std::vector<double>& xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    const double top = *std::max_element(xs.begin(), xs.end());
    double s = 0.0;
    for (double x : xs) s += std::exp(x - top);
    return top + std::log(s);
}

}  // namespace

double EntropyEstimate::bound_scale() const {
    return std::max(delta * std::abs(tilt), 1.0 / (delta * delta * double(n_spins) * n_spins));
}

double EntropyEstimate::deviation() const { return std::abs(estimate - reference_S); }

EntropyEstimate finite_volume_entropy(double rho, double delta, int n_spins, int n_samples,
                                      std::uint64_t seed, const EntropyOptions& options) {
    if (!(rho >= 0.0 && rho < 1.0)) throw DomainError("finite_volume_entropy: rho must lie in [0, 1)");
    if (!(delta > 0.0)) throw DomainError("finite_volume_entropy: delta must be positive");
    if (n_spins < 2) throw DomainError("finite_volume_entropy: need at least two spins");
    if (n_samples < 1 || options.batches < 1 || options.bootstrap < 2)
        throw DomainError("finite_volume_entropy: sample, batch and bootstrap counts must be positive");

    EntropyEstimate out;
    out.rho = rho;
    out.delta = delta;
    out.n_spins = n_spins;
    out.n_samples = n_samples;
    out.tilt = rho > 0.0 ? inverse_bessel_ratio(rho) : 0.0;
    out.reference_S = entropy_radial(rho);
    const double h = out.tilt;
    const double G = log_mgf_radial(h);

    // log weight -h sum sigma.e1 per sample; NaN marks a miss.
    std::vector<double> logw(std::size_t(n_samples), std::numeric_limits<double>::quiet_NaN());
    const int B = std::min(options.batches, n_samples);
    parallel_for(std::size_t(B), options.threads, [&](std::size_t b) {
        const std::size_t lo = std::size_t(n_samples) * b / B, hi = std::size_t(n_samples) * (b + 1) / B;
        Rng rng = make_rng(seed, "entropy", b);
        for (std::size_t s = lo; s < hi; ++s) {
            double sx = 0.0, sy = 0.0;
            for (int i = 0; i < n_spins; ++i) {
                const double a = sample_von_mises(rng, h);
                sx += std::cos(a);
                sy += std::sin(a);
            }
            if (std::hypot(sx / n_spins - rho, sy / n_spins) < delta) logw[s] = -h * sx;
        }
    });

    std::vector<double> hits;
    for (double w : logw)
        if (!std::isnan(w)) hits.push_back(w);
    out.accepted = int(hits.size());
    if (hits.empty())
        throw InfeasibleError("finite_volume_entropy: no sample reached the target set; increase n_samples or delta (rho=" +
                              std::to_string(rho) + ", delta=" + std::to_string(delta) +
                              ", N=" + std::to_string(n_spins) + ")");

    const double logn = std::log(double(n_samples));
    auto estimator = [&](const std::vector<double>& w) { return G + (log_sum_exp(w) - logn) / n_spins; };
    out.estimate = estimator(hits);

    Rng rng = make_rng(seed, "estimator");
    std::uniform_int_distribution<std::size_t> pick(0, logw.size() - 1);
    std::vector<double> reps;
    std::vector<double> draw;
    for (int r = 0; r < options.bootstrap; ++r) {
        draw.clear();
        for (std::size_t s = 0; s < logw.size(); ++s) {
            const double w = logw[pick(rng)];
            if (!std::isnan(w)) draw.push_back(w);
        }
        if (!draw.empty()) reps.push_back(estimator(draw));
    }
    double mean = 0.0;
    for (double v : reps) mean += v;
    mean /= double(reps.size());
    double var = 0.0;
    for (double v : reps) var += (v - mean) * (v - mean);
    out.stderr_ = reps.size() > 1 ? std::sqrt(var / double(reps.size() - 1)) : 0.0;
    // A single hit has no resampling spread; fall back to the binomial scale.
    if (!(out.stderr_ > 0.0)) out.stderr_ = 1.0 / (n_spins * std::sqrt(double(out.accepted)));
    return out;
}

void write_entropy_csv(std::ostream& os, const std::vector<EntropyEstimate>& rows, double bound_constant) {
    os << "rho,delta,N,estimate,stderr,S_ref,bound,accepted,samples\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.rho, r.delta,
                      r.n_spins, r.estimate, r.stderr_, r.reference_S, bound_constant * r.bound_scale(),
                      r.accepted, r.n_samples);
        os << buf;
    }
}

}  // namespace rfio
