#include "rfio/disorder_field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <ostream>
#include <sstream>

#include "rfio/errors.hpp"
#include "rfio/parallel.hpp"
#include "rfio/rng.hpp"

namespace rfio {
namespace {

struct Sides {
    int small = 0;
    int big = 0;
};

std::optional<Sides> fit_sides(int N, int want_small, int want_big) {
    for (int b = want_big; 2 * b <= N; ++b) {
        if (N % b) continue;
        for (int s = std::min(want_small, b); s >= 2; --s)
            if (b % s == 0) return Sides{s, b};
    }
    return std::nullopt;
}

int requested_small(int L, double lambda) {
    return static_cast<int>(std::floor(std::pow(double(L), 1.0 - lambda) + 1e-12));
}
int requested_big(int L, double lambda) {
    return static_cast<int>(std::ceil(std::pow(double(L), 1.0 + lambda) - 1e-12));
}

}  // namespace

Scales Scales::realize(int N, int L, double lambda, double kappa, std::optional<double> p_dirty) {
    std::ostringstream err;
    if (N < 4) err << "N must be >= 4; ";
    if (L < 2) err << "L must be >= 2; ";
    if (!(lambda > 0.0 && lambda < 1.0 / 3.0)) err << "lambda must lie in (0, 1/3); ";
    if (!(kappa > 0.0 && kappa < 0.5)) err << "kappa must lie in (0, 1/2); ";
    if (p_dirty && !(*p_dirty > 0.0 && *p_dirty < 1.0)) err << "p_dirty must lie in (0, 1); ";
    if (!err.str().empty()) throw ConfigError("scales: " + err.str());

    Scales s;
    s.N = N;
    s.L = L;
    s.lambda = lambda;
    s.kappa = kappa;
    s.ell_small = requested_small(L, lambda);
    s.ell_big = requested_big(L, lambda);
    s.p_dirty = p_dirty ? *p_dirty : std::pow(double(L), -dim * (1.0 - lambda) / 3.0);
    if (s.ell_small < 1) throw ConfigError("scales: L^(1-lambda) < 1");
    const auto sides = fit_sides(N, 2 * s.ell_small + 1, 2 * s.ell_big + 1);
    if (!sides) {
        std::ostringstream os;
        os << "scales: no block sides tile N = " << N << " (requested small side <= "
           << 2 * s.ell_small + 1 << ", big side >= " << 2 * s.ell_big + 1 << ", big side <= N/2)";
        const int alt = suggest_domain(N, L, lambda);
        if (alt) os << "; nearest workable N is " << alt;
        throw ConfigError(os.str());
    }
    s.side_small = sides->small;
    s.side_big = sides->big;
    return s;
}

int suggest_domain(int N, int L, double lambda) {
    const int ws = 2 * requested_small(L, lambda) + 1;
    const int wb = 2 * requested_big(L, lambda) + 1;
    for (int d = 1; d <= 4 * N + 8 * wb; ++d) {
        if (N - d >= 4 && fit_sides(N - d, ws, wb)) return N - d;
        if (fit_sides(N + d, ws, wb)) return N + d;
    }
    return 0;
}

std::string Scales::describe() const {
    std::ostringstream os;
    os.precision(10);
    os << "N=" << N << " L=" << L << " lambda=" << lambda << " ell_small=" << ell_small
       << " ell_big=" << ell_big << " side_small=" << side_small << " side_big=" << side_big
       << " kappa=" << kappa << " p_dirty=" << p_dirty;
    return os.str();
}

DisorderField sample_disorder(int N, double bias_p, std::uint64_t seed) {
    if (N < 1) throw DomainError("sample_disorder: N must be positive");
    if (!(bias_p >= 0.0 && bias_p <= 1.0)) throw DomainError("sample_disorder: bias outside [0,1]");
    DisorderField f;
    f.N = N;
    f.bias_p = bias_p;
    f.seed = seed;
    f.alpha.resize(std::size_t(N) * N);
    Rng rng = make_rng(seed, "disorder");
    for (auto& a : f.alpha) a = uniform01(rng) < bias_p ? 1 : -1;
    return f;
}

DisorderField alternating_field(int N) {
    DisorderField f;
    f.N = N;
    f.alpha.resize(std::size_t(N) * N);
    for (int y = 0; y < N; ++y)
        for (int x = 0; x < N; ++x) f(x, y) = (x + y) % 2 ? -1 : 1;
    return f;
}

Mask block_balance(const DisorderField& field, const Scales& s) {
    if (field.N != s.N) throw DomainError("block_balance: field and scales disagree on N");
    const int nb = s.small_per_axis(), b = s.side_small;
    const double volume = double(b) * b;
    const double limit = std::pow(volume, 0.5 + s.kappa);
    Mask phi(nb, nb, 0);
    for (int J = 0; J < nb; ++J)
        for (int I = 0; I < nb; ++I) {
            int plus = 0;
            for (int y = J * b; y < (J + 1) * b; ++y)
                for (int x = I * b; x < (I + 1) * b; ++x) plus += field(x, y) > 0;
            const int minus = b * b - plus;
            phi(I, J) = plus > 0 && minus > 0 && std::abs(plus - 0.5 * volume) < limit;
        }
    return phi;
}

double CleanMap::dirty_fraction() const {
    return dirty.size() ? double(count(dirty)) / double(dirty.size()) : 0.0;
}

CleanMap dirty_from_xi(const Mask& xi, double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("dirty_from_xi: p must lie in (0,1)");
    const int nx = xi.nx, ny = xi.ny;

    Mask badmask(nx, ny, 0);
    for (std::size_t k = 0; k < xi.size(); ++k) badmask.data[k] = !xi.data[k];
    int ncomp = 0;
    const auto labels = label_components(badmask, &ncomp);
    std::vector<std::vector<std::pair<int, int>>> comps(static_cast<std::size_t>(ncomp));
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (int l = labels(i, j)) comps[l - 1].emplace_back(i, j);

    // Every piece below only grows as p decreases, so the result is monotone:
    // pairs of components joined by a shortest clean path whose union is dirty
    // are linked, and each component adds the clean blocks it can afford.
    std::vector<int> root(comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c) root[c] = int(c);
    auto find = [&](int c) {
        while (root[c] != c) c = root[c] = root[root[c]];
        return c;
    };
    std::vector<Mask> region(comps.size(), Mask(nx, ny, 0));

    for (std::size_t c = 0; c < comps.size(); ++c) {
        BlockGrid<int> dist(nx, ny, -1), parent(nx, ny, -1);
        std::deque<std::pair<int, int>> q;
        for (auto [i, j] : comps[c]) {
            dist(i, j) = 0;
            region[c](i, j) = 1;
            q.emplace_back(i, j);
        }
        const double bad_c = double(comps[c].size());
        const int budget = static_cast<int>(std::floor(bad_c / p - bad_c + 1e-9));
        std::vector<int> contact(comps.size(), -1);
        while (!q.empty()) {
            const auto [x, y] = q.front();
            q.pop_front();
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int u = x + dx, v = y + dy;
                    if (!dist.contains(u, v) || dist(u, v) >= 0) continue;
                    if (const int o = labels(u, v)) {
                        if (o - 1 != int(c) && contact[o - 1] < 0) contact[o - 1] = y * nx + x;
                        continue;
                    }
                    dist(u, v) = dist(x, y) + 1;
                    parent(u, v) = y * nx + x;
                    if (dist(u, v) <= budget) region[c](u, v) = 1;
                    q.emplace_back(u, v);
                }
        }
        for (std::size_t o = c + 1; o < comps.size(); ++o) {
            if (contact[o] < 0) continue;
            const int cx = contact[o] % nx, cy = contact[o] / nx;
            const int gap = dist(cx, cy);
            const double bad = bad_c + double(comps[o].size());
            if (bad < p * (bad + gap) - 1e-12) continue;
            root[find(int(o))] = find(int(c));
            for (int at = contact[o]; at >= 0 && dist(at % nx, at / nx) > 0; at = parent(at % nx, at / nx))
                region[c](at % nx, at / nx) = 1;
        }
    }

    CleanMap out;
    out.xi_big = xi;
    out.dirty = Mask(nx, ny, 0);
    std::vector<Mask> cluster(comps.size());
    for (std::size_t c = 0; c < comps.size(); ++c) {
        auto& m = cluster[std::size_t(find(int(c)))];
        if (m.data.empty()) {
            m = region[c];
            ++out.dirty_components;
        } else {
            for (std::size_t k = 0; k < m.size(); ++k) m.data[k] |= region[c].data[k];
        }
    }
    for (const auto& m : cluster) {
        if (m.data.empty()) continue;
        const Mask grown = dilate(m);
        const Mask inner = holes(grown);
        for (std::size_t k = 0; k < grown.size(); ++k) out.dirty.data[k] |= grown.data[k] | inner.data[k];
    }
    return out;
}

CleanMap xi_and_dirty(const DisorderField& field, const Scales& s) {
    const Mask phi = block_balance(field, s);
    const int nb = s.big_per_axis(), r = s.small_per_big();
    Mask xi(nb, nb, 1);
    for (int J = 0; J < nb; ++J)
        for (int I = 0; I < nb; ++I)
            for (int j = J * r; j < (J + 1) * r; ++j)
                for (int i = I * r; i < (I + 1) * r; ++i) xi(I, J) &= phi(i, j);
    CleanMap out = dirty_from_xi(xi, s.p_dirty);
    out.phi_small = phi;
    return out;
}

DirtyStats dirty_fraction_stats(const std::vector<Scales>& sizes, int trials, std::uint64_t seed,
                                unsigned threads) {
    if (trials < 1) throw DomainError("dirty_fraction_stats: trials must be >= 1");
    DirtyStats st;
    st.scales = sizes;
    for (std::size_t s = 0; s < sizes.size(); ++s) {
        std::vector<double> frac(static_cast<std::size_t>(trials));
        parallel_for(frac.size(), threads, [&](std::size_t t) {
            const auto field = sample_disorder(sizes[s].N, 0.5,
                                               derive_seed(seed, "dirty-trial/" + std::to_string(s), t));
            frac[t] = xi_and_dirty(field, sizes[s]).dirty_fraction();
        });
        double mean = 0.0;
        for (std::size_t t = 0; t < frac.size(); ++t) {
            st.rows.push_back({int(s), int(t), frac[t]});
            mean += frac[t];
        }
        mean /= trials;
        double var = 0.0;
        for (double f : frac) var += (f - mean) * (f - mean);
        st.mean.push_back(mean);
        st.variance.push_back(trials > 1 ? var / (trials - 1) : 0.0);
    }
    return st;
}

double binomial_two_sided_tail(int n, double t) {
    if (n < 1) throw DomainError("binomial_two_sided_tail: n must be positive");
    long double total = 0.0L;
    const long double log2n = n * std::log(2.0L);
    for (int k = 0; k <= n; ++k) {
        if (std::abs(k - 0.5 * n) < t - 1e-9) continue;
        const long double lp = std::lgamma(n + 1.0L) - std::lgamma(k + 1.0L) - std::lgamma(n - k + 1.0L) - log2n;
        total += std::exp(lp);
    }
    return static_cast<double>(std::min(total, 1.0L));
}

std::vector<HoeffdingRow> hoeffding_check(const std::vector<int>& block_sizes,
                                          const std::vector<double>& A_values, std::int64_t trials,
                                          std::uint64_t seed, unsigned threads) {
    if (trials < 1) throw DomainError("hoeffding_check: trials must be >= 1");
    constexpr std::int64_t kChunk = 1 << 15;
    std::vector<HoeffdingRow> rows;
    std::size_t q = 0;
    for (int n : block_sizes) {
        if (n < 1) throw DomainError("hoeffding_check: block sizes must be positive");
        for (double A : A_values) {
            HoeffdingRow r;
            r.n = n;
            r.A = A;
            r.threshold = A * std::sqrt(0.5 * n);
            r.bound = 2.0 * std::exp(-A * A / 4.0);
            r.exact = binomial_two_sided_tail(n, r.threshold);
            r.trials = trials;

            const std::size_t chunks = std::size_t((trials + kChunk - 1) / kChunk);
            std::vector<std::int64_t> hits(chunks, 0);
            const int words = (n + 63) / 64;
            const int tail_bits = n % 64;
            parallel_for(chunks, threads, [&](std::size_t c) {
                Rng rng = make_rng(seed, "hoeffding", q * 1'000'000 + c);
                const std::int64_t m = std::min<std::int64_t>(kChunk, trials - std::int64_t(c) * kChunk);
                std::int64_t h = 0;
                for (std::int64_t t = 0; t < m; ++t) {
                    int plus = 0;
                    for (int w = 0; w < words; ++w) {
                        std::uint64_t bits = rng();
                        if (w == words - 1 && tail_bits) bits &= (std::uint64_t{1} << tail_bits) - 1;
                        plus += std::popcount(bits);
                    }
                    h += std::abs(plus - 0.5 * n) >= r.threshold - 1e-9;
                }
                hits[c] = h;
            });
            std::int64_t total = 0;
            for (auto h : hits) total += h;
            r.empirical = double(total) / double(trials);
            r.stderr_ = std::sqrt(r.empirical * (1.0 - r.empirical) / double(trials));
            rows.push_back(r);
            ++q;
        }
    }
    return rows;
}

void write_dirty_csv(std::ostream& os, const DirtyStats& st) {
    const auto old = os.precision(17);
    for (std::size_t s = 0; s < st.scales.size(); ++s)
        os << "# scales[" << s << "]: " << st.scales[s].describe() << '\n';
    os << "size_index,side_small,side_big,trial,dirty_fraction\n";
    for (const auto& r : st.rows) {
        const auto& sc = st.scales[std::size_t(r.size_index)];
        os << r.size_index << ',' << sc.side_small << ',' << sc.side_big << ',' << r.trial << ','
           << r.fraction << '\n';
    }
    os.precision(old);
}

void write_hoeffding_csv(std::ostream& os, const std::vector<HoeffdingRow>& rows) {
    const auto old = os.precision(17);
    os << "n,A,threshold,bound,exact,empirical,stderr,trials\n";
    for (const auto& r : rows)
        os << r.n << ',' << r.A << ',' << r.threshold << ',' << r.bound << ',' << r.exact << ','
           << r.empirical << ',' << r.stderr_ << ',' << r.trials << '\n';
    os.precision(old);
}

}  // namespace rfio
