#include "rfio/lattice_mc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"

namespace rfio {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Neumaier-compensated running sum.
struct Accumulator {
    double sum = 0.0;
    double c = 0.0;

    void add(double x) {
        const double t = sum + x;
        c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    double value() const { return sum + c; }
};

struct LinearOffset {
    std::ptrdiff_t off;
    int dx, dy;
    double w;
};

std::vector<LinearOffset> linear_offsets(const KacKernel& kernel, int side, bool skip_self) {
    std::vector<LinearOffset> out;
    out.reserve(kernel.offsets.size());
    for (const auto& o : kernel.offsets) {
        if (skip_self && o.dx == 0 && o.dy == 0) continue;
        out.push_back({std::ptrdiff_t(o.dy) * side + o.dx, o.dx, o.dy, o.w});
    }
    return out;
}

void require_site_kernel(const KacKernel& kernel, const SpinLattice& lattice) {
    if (kernel.dim != 2 || kernel.cell != 1)
        throw DomainError("lattice: the site kernel (dim 2, cell 1) is required");
    if (lattice.collar < kernel.reach)
        throw DomainError("lattice: collar narrower than the interaction range");
}

void require_field(const DisorderField& field, const SpinLattice& lattice) {
    if (field.N != lattice.N) throw DomainError("lattice: disorder field size differs from N");
}

}  // namespace

const char* to_string(BoundaryKind kind) {
    switch (kind) {
        case BoundaryKind::horizontal: return "horizontal";
        case BoundaryKind::reflected: return "reflected";
        case BoundaryKind::staggered: return "staggered";
        case BoundaryKind::custom: return "custom";
    }
    return "?";
}

BoundaryKind boundary_kind_from_string(const std::string& name) {
    if (name == "horizontal") return BoundaryKind::horizontal;
    if (name == "reflected" || name == "reflected-horizontal") return BoundaryKind::reflected;
    if (name == "staggered") return BoundaryKind::staggered;
    if (name == "custom") return BoundaryKind::custom;
    throw ConfigError("unknown boundary kind '" + name + "'");
}

BoundaryCondition BoundaryCondition::horizontal(Vec2 v) {
    BoundaryCondition bc;
    bc.kind = BoundaryKind::horizontal;
    bc.value = v;
    bc.validate();
    return bc;
}

BoundaryCondition BoundaryCondition::reflected(Vec2 v) {
    BoundaryCondition bc = horizontal(v);
    bc.kind = BoundaryKind::reflected;
    return bc;
}

BoundaryCondition BoundaryCondition::staggered(double a) {
    BoundaryCondition bc;
    bc.kind = BoundaryKind::staggered;
    bc.value = {a, 0.0};
    bc.validate();
    return bc;
}

BoundaryCondition BoundaryCondition::from(std::function<Vec2(int, int)> fn) {
    BoundaryCondition bc;
    bc.kind = BoundaryKind::custom;
    bc.custom = std::move(fn);
    bc.validate();
    return bc;
}

void BoundaryCondition::validate() const {
    switch (kind) {
        case BoundaryKind::horizontal:
        case BoundaryKind::reflected:
            if (!(norm(value) <= 1.0 + 1e-12)) throw DomainError("boundary: |value| must be <= 1");
            break;
        case BoundaryKind::staggered:
            if (!(std::abs(value.x) <= 1.0)) throw DomainError("boundary: staggered a must lie in [-1, 1]");
            break;
        case BoundaryKind::custom:
            if (!custom) throw DomainError("boundary: custom kind needs a function");
            break;
    }
}

Vec2 BoundaryCondition::at(int x, int y) const {
    switch (kind) {
        case BoundaryKind::horizontal: return value;
        case BoundaryKind::reflected: return reflect_y(value);
        case BoundaryKind::staggered: {
            const double b = std::sqrt(std::max(0.0, 1.0 - value.x * value.x));
            return {value.x, ((x + y) % 2 == 0) ? b : -b};
        }
        case BoundaryKind::custom: return custom(x, y);
    }
    return {};
}

int collar_width(const Scales& s) {
    const int need = s.L + s.side_small;
    return s.side_big * ((need + s.side_big - 1) / s.side_big);
}

SpinLattice SpinLattice::make(int N, int collar, const BoundaryCondition& bc, double initial_angle) {
    if (N < 1 || collar < 0) throw DomainError("SpinLattice: bad extent");
    bc.validate();
    SpinLattice l;
    l.N = N;
    l.collar = collar;
    l.boundary = bc;
    l.spin.resize(std::size_t(l.side()) * l.side());
    const Vec2 u = unit_at(initial_angle);
    for (int y = -collar; y < N + collar; ++y)
        for (int x = -collar; x < N + collar; ++x) l.spin[l.idx(x, y)] = l.inside(x, y) ? u : bc.at(x, y);
    return l;
}

double SpinLattice::angle(int x, int y) const {
    const Vec2& s = at(x, y);
    double a = std::atan2(s.y, s.x);
    if (a < 0.0) a += kTwoPi;
    return a >= kTwoPi ? 0.0 : a;
}

void SpinLattice::set_angle(int x, int y, double a) { spin[idx(x, y)] = unit_at(a); }

void SpinLattice::reflect_all() {
    for (auto& s : spin) s = reflect_y(s);
    const BoundaryCondition old = boundary;
    boundary = BoundaryCondition::from([old](int x, int y) { return reflect_y(old.at(x, y)); });
}

EnergyParts energy_parts(const SpinLattice& l, const DisorderField& field, const KacKernel& kernel,
                         const MFParams& params) {
    require_site_kernel(kernel, l);
    require_field(field, l);
    const auto offs = linear_offsets(kernel, l.side(), false);
    Accumulator coupling, boundary, fld;
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) {
            const std::size_t k = l.idx(x, y);
            const Vec2& s = l.spin[k];
            double in = 0.0, out = 0.0;
            for (const auto& o : offs) {
                const Vec2& t = l.spin[std::size_t(std::ptrdiff_t(k) + o.off)];
                if (l.inside(x + o.dx, y + o.dy)) in += o.w * dot(s, t);
                else out += o.w * (dot(s, t) - 0.5 * norm2(t));
            }
            coupling.add(in);
            boundary.add(out);
            fld.add(field(x, y) * s.y);
        }
    EnergyParts e;
    e.coupling = -0.5 * coupling.value();
    e.boundary = -boundary.value();
    e.field = -params.eps * fld.value();
    return e;
}

double energy(const SpinLattice& l, const DisorderField& field, const KacKernel& kernel,
              const MFParams& params) {
    return energy_parts(l, field, kernel, params).total();
}

double sample_von_mises(Rng& rng, double kappa) {
    if (!(kappa >= 0.0)) throw DomainError("sample_von_mises: kappa must be >= 0");
    if (kappa < 1e-12) return kPi * (2.0 * uniform01(rng) - 1.0);
    // Best and Fisher (1979); rho in a cancellation-free form.
    const double s = std::sqrt(1.0 + 4.0 * kappa * kappa);
    const double tau = 1.0 + s;
    const double tau_minus_2 = 4.0 * kappa * kappa / (s + 1.0);
    const double rho = tau * tau_minus_2 / (tau + std::sqrt(2.0 * tau)) / (2.0 * kappa);
    const double r = (1.0 + rho * rho) / (2.0 * rho);
    for (;;) {
        const double z = std::cos(kPi * uniform01(rng));
        const double f = (1.0 + r * z) / (r + z);
        const double c = kappa * (r - f);
        const double u2 = uniform01(rng);
        if (c * (2.0 - c) - u2 > 0.0 || (u2 > 0.0 && std::log(c / u2) + 1.0 - c >= 0.0)) {
            const double t = std::acos(std::clamp(f, -1.0, 1.0));
            return uniform01(rng) > 0.5 ? t : -t;
        }
    }
}

Vec2 local_field(const SpinLattice& l, const DisorderField& field, const KacKernel& kernel, double eps,
                 int x, int y) {
    require_site_kernel(kernel, l);
    require_field(field, l);
    Vec2 h{0.0, eps * field(x, y)};
    for (const auto& o : kernel.offsets)
        if (o.dx || o.dy) h += o.w * l.at(x + o.dx, y + o.dy);
    return h;
}

void heat_bath_sweep(SpinLattice& l, const DisorderField& field, const KacKernel& kernel,
                     const MFParams& params, Rng& rng) {
    require_site_kernel(kernel, l);
    require_field(field, l);
    if (!(params.beta >= 0.0)) throw DomainError("heat_bath_sweep: beta must be >= 0");
    // Fields are summed afresh at every update, so no cached sums can drift.
    const auto offs = linear_offsets(kernel, l.side(), true);
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) {
            const std::size_t k = l.idx(x, y);
            double hx = 0.0, hy = params.eps * field(x, y);
            for (const auto& o : offs) {
                const Vec2& t = l.spin[std::size_t(std::ptrdiff_t(k) + o.off)];
                hx += o.w * t.x;
                hy += o.w * t.y;
            }
            const double kappa = params.beta * std::hypot(hx, hy);
            const double mean_dir = kappa > 0.0 ? std::atan2(hy, hx) : 0.0;
            l.spin[k] = unit_at(mean_dir + sample_von_mises(rng, kappa));
        }
}

bool BlockObservables::small_interior(int i, int j) const {
    const int n = small.nx - 2 * ring_small;
    return i >= ring_small && i < ring_small + n && j >= ring_small && j < ring_small + n;
}

namespace {

BlockAverage average_block(const SpinLattice& l, const DisorderField* field, int x0, int y0, int side) {
    BlockAverage b;
    Vec2 sp, sm, s;
    for (int y = y0; y < y0 + side; ++y)
        for (int x = x0; x < x0 + side; ++x) {
            const Vec2& v = l.at(x, y);
            s += v;
            if (!field) continue;
            if ((*field)(x, y) > 0) {
                sp += v;
                ++b.n_plus;
            } else {
                sm += v;
                ++b.n_minus;
            }
        }
    b.plain = (1.0 / (double(side) * side)) * s;
    if (b.n_plus) b.plus = (1.0 / b.n_plus) * sp;
    if (b.n_minus) b.minus = (1.0 / b.n_minus) * sm;
    return b;
}

}  // namespace

BlockObservables block_observables(const SpinLattice& l, const DisorderField& field, const Scales& s) {
    require_field(field, l);
    if (s.N != l.N) throw DomainError("block_observables: scales and lattice disagree on N");
    if (l.collar < s.side_big) throw DomainError("block_observables: collar narrower than a big block");
    BlockObservables obs;
    obs.small_side = s.side_small;
    obs.big_side = s.side_big;
    obs.ring_small = s.small_per_big();
    const int ns = s.small_per_axis() + 2 * obs.ring_small;
    obs.small = BlockGrid<BlockAverage>(ns, ns);
    for (int J = 0; J < ns; ++J)
        for (int I = 0; I < ns; ++I) {
            const int x0 = (I - obs.ring_small) * s.side_small, y0 = (J - obs.ring_small) * s.side_small;
            const bool in = obs.small_interior(I, J);
            obs.small(I, J) = average_block(l, in ? &field : nullptr, x0, y0, s.side_small);
        }
    const int nb = s.big_per_axis();
    obs.big = BlockGrid<BlockAverage>(nb, nb);
    for (int J = 0; J < nb; ++J)
        for (int I = 0; I < nb; ++I) obs.big(I, J) = average_block(l, &field, I * s.side_big, J * s.side_big, s.side_big);
    return obs;
}

std::int8_t classify_pair(const PairMagnetization& block, const PairMagnetization& minimizer, double xi) {
    const double dp = pair_distance(block, minimizer);
    const double dm = pair_distance(block, reflect_y(minimizer));
    const bool p = dp <= xi, m = dm <= xi;
    if (p && m) return dp <= dm ? 1 : -1;
    return p ? 1 : (m ? -1 : 0);
}

std::int8_t classify_single(const Vec2& block, const Vec2& mbar, double xi) {
    const double dp = dist(block, mbar);
    const double dm = dist(block, reflect_y(mbar));
    const bool p = dp <= xi, m = dm <= xi;
    if (p && m) return dp <= dm ? 1 : -1;
    return p ? 1 : (m ? -1 : 0);
}

BlockGrid<std::int8_t> neighborhood_unanimity(const BlockGrid<std::int8_t>& theta) {
    BlockGrid<std::int8_t> out(theta.nx, theta.ny, 0);
    for (int j = 0; j < theta.ny; ++j)
        for (int i = 0; i < theta.nx; ++i) {
            const std::int8_t v = theta(i, j);
            if (!v) continue;
            bool same = true;
            for (int dj = -1; dj <= 1 && same; ++dj)
                for (int di = -1; di <= 1 && same; ++di)
                    if (theta.contains(i + di, j + dj)) same = theta(i + di, j + dj) == v;
            out(i, j) = same ? v : 0;
        }
    return out;
}

PhaseMaps phase_fields(const BlockObservables& obs, const PairMagnetization& minimizer, double xi) {
    if (!(xi > 0.0)) throw DomainError("phase_fields: xi must be positive");
    PhaseMaps m;
    m.ring_small = obs.ring_small;
    m.small_per_big = obs.big_side / obs.small_side;
    const Vec2 mbar = minimizer.bar();
    m.eta = BlockGrid<std::int8_t>(obs.small.nx, obs.small.ny, 0);
    for (int j = 0; j < obs.small.ny; ++j)
        for (int i = 0; i < obs.small.nx; ++i) {
            const auto& b = obs.small(i, j);
            m.eta(i, j) = obs.small_interior(i, j) ? classify_pair({b.plus, b.minus}, minimizer, xi)
                                                   : classify_single(b.plain, mbar, xi);
        }
    const int r = m.small_per_big;
    const int nb = obs.small.nx / r;
    m.theta = BlockGrid<std::int8_t>(nb, nb, 0);
    for (int J = 0; J < nb; ++J)
        for (int I = 0; I < nb; ++I) {
            const std::int8_t first = m.eta(I * r, J * r);
            bool same = first != 0;
            for (int j = J * r; j < (J + 1) * r && same; ++j)
                for (int i = I * r; i < (I + 1) * r && same; ++i) same = m.eta(i, j) == first;
            m.theta(I, J) = same ? first : 0;
        }
    m.Theta = neighborhood_unanimity(m.theta);
    return m;
}

namespace {

int count_components4(const Mask& mask) {
    BlockGrid<int> seen(mask.nx, mask.ny, 0);
    int n = 0;
    std::vector<std::pair<int, int>> stack;
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i) {
            if (!mask(i, j) || seen(i, j)) continue;
            ++n;
            seen(i, j) = 1;
            stack.emplace_back(i, j);
            while (!stack.empty()) {
                const auto [x, y] = stack.back();
                stack.pop_back();
                const int nbr[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
                for (const auto& d : nbr) {
                    const int u = x + d[0], v = y + d[1];
                    if (mask.contains(u, v) && mask(u, v) && !seen(u, v)) {
                        seen(u, v) = 1;
                        stack.emplace_back(u, v);
                    }
                }
            }
        }
    return n;
}

}  // namespace

std::vector<Contour> extract_contours(const PhaseMaps& maps, const CleanMap* clean, double p_dirty) {
    const int n = maps.Theta.nx;
    Mask zero(n, n, 0);
    for (int j = 1; j + 1 < n; ++j)
        for (int i = 1; i + 1 < n; ++i) zero(i, j) = maps.Theta(i, j) == 0;
    int ncomp = 0;
    const auto labels = label_components(zero, &ncomp);
    std::vector<Contour> out(static_cast<std::size_t>(ncomp));
    std::vector<Mask> support(out.size(), Mask(n, n, 0));
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (const int l = labels(i, j)) {
                auto& c = out[std::size_t(l - 1)];
                c.support.emplace_back(i - 1, j - 1);
                support[std::size_t(l - 1)](i, j) = 1;
                const int r = maps.small_per_big;
                for (int y = j * r; y < (j + 1) * r; ++y)
                    for (int x = i * r; x < (i + 1) * r; ++x) c.theta_on_support.push_back(maps.eta(x, y));
            }

    for (std::size_t k = 0; k < out.size(); ++k) {
        auto& c = out[k];
        c.delta = dilate(support[k]);
        c.interior = holes(support[k]);
        c.interior_components = count_components4(c.interior);
        c.N_Gamma = int(count(c.delta));
        int plus = 0, minus = 0, other = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                if (!c.delta(i, j) || support[k](i, j) || c.interior(i, j)) continue;
                const auto t = maps.Theta(i, j);
                (t > 0 ? plus : t < 0 ? minus : other) += 1;
            }
        c.type = (plus && !minus && !other) ? 1 : (minus && !plus && !other) ? -1 : 0;

        if (!clean) continue;
        const int nb = n - 2;
        if (clean->xi_big.nx != nb || clean->dirty.nx != nb)
            throw DomainError("extract_contours: clean map does not match the block grid");
        int clean_blocks = 0, closure = 0, closure_dirty = 0;
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const bool in = i >= 1 && j >= 1 && i <= nb && j <= nb;
                if (c.delta(i, j)) clean_blocks += in ? clean->xi_big(i - 1, j - 1) != 0 : 1;
                if (c.delta(i, j) || c.interior(i, j)) {
                    ++closure;
                    closure_dirty += in && clean->dirty(i - 1, j - 1);
                }
            }
        const bool delta_clean = double(clean_blocks) / c.N_Gamma > 1.0 - p_dirty;
        const bool strictly_inside = closure_dirty == closure && int(count(clean->dirty)) > closure;
        c.clean = delta_clean && !strictly_inside;
    }
    return out;
}

MeanError batch_mean(const std::vector<double>& xs, int batches) {
    MeanError r;
    if (xs.empty()) return r;
    Accumulator all;
    for (double x : xs) all.add(x);
    r.mean = all.value() / double(xs.size());
    const int B = std::min<int>(batches, int(xs.size()));
    if (B < 2) return r;
    const std::size_t m = xs.size() / std::size_t(B);
    std::vector<double> means(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
        Accumulator a;
        for (std::size_t k = 0; k < m; ++k) a.add(xs[std::size_t(b) * m + k]);
        means[std::size_t(b)] = a.value() / double(m);
    }
    Accumulator mu;
    for (double x : means) mu.add(x);
    const double mb = mu.value() / B;
    Accumulator v;
    for (double x : means) v.add((x - mb) * (x - mb));
    r.stderr_ = std::sqrt(v.value() / (B - 1) / B);
    return r;
}

void ChainConfig::validate() const {
    params.validate();
    boundary.validate();
    if (sweeps < 1 || burn_in < 0 || thin < 1) throw ConfigError("chain: sweeps >= 1, burn_in >= 0, thin >= 1 required");
    if (burn_in >= sweeps) throw ConfigError("chain: burn_in must be smaller than sweeps");
    if (!(xi > 0.0)) throw ConfigError("chain: xi must be positive");
    const int margin = bulk_margin < 0 ? scales.L : bulk_margin;
    if (2 * margin >= scales.N) throw ConfigError("chain: bulk margin leaves no bulk");
}

namespace {

BulkAverages bulk_averages(const SpinLattice& l, const DisorderField& field, int margin) {
    Accumulator px, py, mx, my, sx, sy;
    int np = 0, nm = 0, n = 0;
    for (int y = margin; y < l.N - margin; ++y)
        for (int x = margin; x < l.N - margin; ++x) {
            const Vec2& v = l.at(x, y);
            sx.add(v.x);
            sy.add(v.y);
            ++n;
            if (field(x, y) > 0) {
                px.add(v.x);
                py.add(v.y);
                ++np;
            } else {
                mx.add(v.x);
                my.add(v.y);
                ++nm;
            }
        }
    BulkAverages b;
    b.plain = {sx.value() / n, sy.value() / n};
    if (np) b.plus = {px.value() / np, py.value() / np};
    if (nm) b.minus = {mx.value() / nm, my.value() / nm};
    return b;
}

}  // namespace

ChainResult run_chain(const ChainConfig& cfg, const DisorderField& field) {
    cfg.validate();
    const Scales& s = cfg.scales;
    if (field.N != s.N) throw ConfigError("chain: disorder field size differs from N");
    ChainResult res;
    res.config = cfg;
    res.minimizer = minimizers(cfg.params).first.pair;
    const auto kernel = KacKernel::make(2, s.L, 1);
    SpinLattice l = SpinLattice::make(s.N, collar_width(s), cfg.boundary, cfg.initial_angle);
    const int margin = cfg.bulk_margin < 0 ? s.L : cfg.bulk_margin;
    Rng rng = make_rng(cfg.seed, "chain");
    for (int sweep = 1; sweep <= cfg.sweeps; ++sweep) {
        heat_bath_sweep(l, field, kernel, cfg.params, rng);
        if (sweep <= cfg.burn_in || (sweep - cfg.burn_in) % cfg.thin) continue;
        SampleRecord r;
        r.sweep = sweep;
        r.energy = energy(l, field, kernel, cfg.params);
        r.bulk = bulk_averages(l, field, margin);
        const auto obs = block_observables(l, field, s);
        r.blocks = obs.big.data;
        const auto contours = extract_contours(phase_fields(obs, res.minimizer, cfg.xi));
        r.contours = int(contours.size());
        for (const auto& c : contours) r.contour_volume += c.N_Gamma;
        res.samples.push_back(std::move(r));
    }
    res.final_state = std::move(l);
    return res;
}

OrderReport measure_order(const ChainResult& chain, const CleanMap& clean) {
    OrderReport rep;
    const auto& samples = chain.samples;
    if (samples.empty()) throw DomainError("measure_order: no samples");
    const int nb = chain.config.scales.big_per_axis();
    if (clean.dirty.nx != nb) throw DomainError("measure_order: clean map does not match the block grid");
    const double xi = chain.config.xi;
    const auto& mz = chain.minimizer;

    auto series = [&](auto get) {
        std::vector<double> v;
        v.reserve(samples.size());
        for (const auto& s : samples) v.push_back(get(s));
        return batch_mean(v);
    };

    int close_pair = 0, close_mean = 0;
    for (int J = 0; J < nb; ++J)
        for (int I = 0; I < nb; ++I) {
            const std::size_t k = std::size_t(J) * nb + I;
            BlockOrder b;
            b.plus_x = series([&](const SampleRecord& s) { return s.blocks[k].plus.x; });
            b.plus_y = series([&](const SampleRecord& s) { return s.blocks[k].plus.y; });
            b.minus_x = series([&](const SampleRecord& s) { return s.blocks[k].minus.x; });
            b.minus_y = series([&](const SampleRecord& s) { return s.blocks[k].minus.y; });
            b.plain_x = series([&](const SampleRecord& s) { return s.blocks[k].plain.x; });
            b.plain_y = series([&](const SampleRecord& s) { return s.blocks[k].plain.y; });
            b.away_from_dirty = true;
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if (clean.dirty.contains(I + di, J + dj) && clean.dirty(I + di, J + dj)) b.away_from_dirty = false;
            const Vec2 mp{b.plus_x.mean, b.plus_y.mean}, mm{b.minus_x.mean, b.minus_y.mean};
            const Vec2 m{b.plain_x.mean, b.plain_y.mean};
            b.close_pair = dist(mp, mz.m_plus) <= xi && dist(mm, mz.m_minus) <= xi;
            b.close_mean = dist(m, mz.bar()) <= xi;
            if (b.away_from_dirty) {
                ++rep.flagged;
                close_pair += b.close_pair;
                close_mean += b.close_mean;
            }
            rep.blocks.push_back(b);
        }
    if (rep.flagged) {
        rep.flagged_close_pair = double(close_pair) / rep.flagged;
        rep.flagged_close_mean = double(close_mean) / rep.flagged;
    }

    rep.bulk_plain_x = series([](const SampleRecord& s) { return s.bulk.plain.x; });
    rep.bulk_plain_y = series([](const SampleRecord& s) { return s.bulk.plain.y; });
    rep.bulk_plus_x = series([](const SampleRecord& s) { return s.bulk.plus.x; });
    rep.bulk_plus_y = series([](const SampleRecord& s) { return s.bulk.plus.y; });
    rep.bulk_minus_x = series([](const SampleRecord& s) { return s.bulk.minus.x; });
    rep.bulk_minus_y = series([](const SampleRecord& s) { return s.bulk.minus.y; });
    rep.contour_count = series([](const SampleRecord& s) { return double(s.contours); });
    rep.contour_volume = series([](const SampleRecord& s) { return double(s.contour_volume); });
    for (const auto& s : samples) {
        if (std::size_t(s.contour_volume) >= rep.volume_histogram.size())
            rep.volume_histogram.resize(std::size_t(s.contour_volume) + 1, 0);
        ++rep.volume_histogram[std::size_t(s.contour_volume)];
    }

    const std::size_t half = samples.size() / 2;
    if (half >= 2) {
        std::vector<double> a, b;
        for (std::size_t k = 0; k < samples.size(); ++k) (k < half ? a : b).push_back(samples[k].energy);
        const auto ma = batch_mean(a, 10), mb = batch_mean(b, 10);
        const double pooled = std::hypot(ma.stderr_, mb.stderr_);
        rep.equilibrated = std::abs(ma.mean - mb.mean) < 2.0 * pooled || ma.mean == mb.mean;
    }
    return rep;
}

EnergyApproxReport energy_approximation_check(const SpinLattice& l, const DisorderField& field,
                                              const Scales& s, const KacKernel& site_kernel,
                                              const MFParams& params) {
    require_site_kernel(site_kernel, l);
    require_field(field, l);
    if (s.N != l.N) throw DomainError("energy_approximation_check: scales and lattice disagree on N");
    const int b = s.side_small;
    const auto cell_kernel = KacKernel::make(2, s.L, b);
    const int cc = cell_kernel.reach;
    if (l.collar < cc * b) throw DomainError("energy_approximation_check: collar narrower than the coarse kernel");
    const int nb = s.small_per_axis();
    ProfileGrid g = ProfileGrid::make(2, nb, nb, cc, double(b) * b);

    std::vector<std::size_t> plus_sites, minus_sites;
    Accumulator u_field;
    for (int J = -cc; J < nb + cc; ++J)
        for (int I = -cc; I < nb + cc; ++I) {
            const auto k = g.idx(I, J);
            if (!g.interior(I, J)) {
                const auto avg = average_block(l, nullptr, I * b, J * b, b).plain;
                g.plus[k] = g.minus[k] = avg;
                continue;
            }
            // Equal splitting coupled to the field.
            plus_sites.clear();
            minus_sites.clear();
            for (int y = J * b; y < (J + 1) * b; ++y)
                for (int x = I * b; x < (I + 1) * b; ++x) (field(x, y) > 0 ? plus_sites : minus_sites).push_back(l.idx(x, y));
            const std::size_t half = std::size_t(b) * b / 2;
            const bool plus_minor = plus_sites.size() <= minus_sites.size();
            auto& minor = plus_minor ? plus_sites : minus_sites;
            auto& major = plus_minor ? minus_sites : plus_sites;
            while (minor.size() < half) {
                minor.push_back(major.front());
                major.erase(major.begin());
            }
            Vec2 sp, sm;
            for (auto q : plus_sites) sp += l.spin[q];
            for (auto q : minus_sites) sm += l.spin[q];
            const double scale = 2.0 / (double(b) * b);
            g.plus[k] = scale * sp;
            g.minus[k] = scale * sm;
            u_field.add(-0.5 * params.eps * g.cell_measure * dot(e2, g.plus[k] - g.minus[k]));
        }

    const EnergyParts h = energy_parts(l, field, site_kernel, params);
    const double u_total = continuum_energy(g, cell_kernel, params);
    const double uf = u_field.value();
    const double sites = double(l.N) * l.N;

    EnergyApproxReport rep;
    rep.sites = l.N * l.N;
    rep.per_site_total = std::abs(h.total() - u_total) / sites;
    rep.per_site_coupling = std::abs(h.coupling + h.boundary - (u_total - uf)) / sites;
    rep.per_site_field = std::abs(h.field - uf) / sites;
    const auto cm = xi_and_dirty(field, s);
    rep.clean_fraction = double(count(cm.xi_big)) / double(cm.xi_big.size());
    rep.clean = rep.clean_fraction > 1.0 - s.p_dirty;
    return rep;
}

void fill_texture(SpinLattice& l, double base, double amplitude, double wavelength) {
    if (!(wavelength > 0.0)) throw DomainError("fill_texture: wavelength must be positive");
    const double k = kTwoPi / wavelength;
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) l.set_angle(x, y, base + amplitude * std::sin(k * x) * std::sin(k * y));
}

void fill_product_state(SpinLattice& l, const DisorderField& field, const PairMagnetization& pair, Rng& rng) {
    require_field(field, l);
    const double kp = norm(pair.m_plus) > 0.0 ? inverse_bessel_ratio(norm(pair.m_plus)) : 0.0;
    const double km = norm(pair.m_minus) > 0.0 ? inverse_bessel_ratio(norm(pair.m_minus)) : 0.0;
    const double ap = std::atan2(pair.m_plus.y, pair.m_plus.x);
    const double am = std::atan2(pair.m_minus.y, pair.m_minus.x);
    for (int y = 0; y < l.N; ++y)
        for (int x = 0; x < l.N; ++x) {
            const bool plus = field(x, y) > 0;
            l.set_angle(x, y, (plus ? ap : am) + sample_von_mises(rng, plus ? kp : km));
        }
}

void write_blocks_csv(std::ostream& os, const ChainResult& chain, const OrderReport& rep) {
    const auto old = os.precision(17);
    os << "# scales: " << chain.config.scales.describe() << '\n';
    os << "block_id,i,j,Mx,My,Mpx,Mpy,Mmx,Mmy,Mx_se,My_se,Mpx_se,Mpy_se,Mmx_se,Mmy_se,away_from_dirty\n";
    const int nb = chain.config.scales.big_per_axis();
    for (std::size_t k = 0; k < rep.blocks.size(); ++k) {
        const auto& b = rep.blocks[k];
        os << k << ',' << int(k) % nb << ',' << int(k) / nb << ',' << b.plain_x.mean << ',' << b.plain_y.mean << ','
           << b.plus_x.mean << ',' << b.plus_y.mean << ',' << b.minus_x.mean << ',' << b.minus_y.mean << ','
           << b.plain_x.stderr_ << ',' << b.plain_y.stderr_ << ',' << b.plus_x.stderr_ << ',' << b.plus_y.stderr_
           << ',' << b.minus_x.stderr_ << ',' << b.minus_y.stderr_ << ',' << int(b.away_from_dirty) << '\n';
    }
    os.precision(old);
}

void write_contours_json(std::ostream& os, const std::vector<Contour>& contours) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : contours) {
        nlohmann::json sup = nlohmann::json::array();
        for (auto [i, j] : c.support) sup.push_back({i, j});
        arr.push_back({{"support", sup},
                       {"N_Gamma", c.N_Gamma},
                       {"type", c.type},
                       {"clean", c.clean},
                       {"interior_components", c.interior_components}});
    }
    os << arr.dump(2) << '\n';
}

}  // namespace rfio
