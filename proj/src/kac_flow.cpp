#include "rfio/kac_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "rfio/circle_calculus.hpp"
#include "rfio/errors.hpp"

namespace rfio {
namespace {

void require_compatible(const KacKernel& kernel, const ProfileGrid& grid) {
    if (kernel.dim != grid.dim) throw DomainError("kernel and profile dimensions differ");
    if (grid.collar < kernel.reach) {
        std::ostringstream os;
        os << "collar of " << grid.collar << " cells is narrower than the kernel reach of "
           << kernel.reach << " cells";
        throw DomainError(os.str());
    }
}

void require_flow_scale(const KacKernel& kernel) {
    if (kernel.range_L < 4.0 * kernel.cell) {
        std::ostringstream os;
        os << "flow needs L >= 4 cells; got L = " << kernel.range_L << ", cell = " << kernel.cell;
        throw DomainError(os.str());
    }
}

std::vector<Vec2> bars(const ProfileGrid& g) {
    std::vector<Vec2> out(g.plus.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = 0.5 * (g.plus[k] + g.minus[k]);
    return out;
}

std::vector<Vec2> convolve_bars(const KacKernel& kernel, const ProfileGrid& g,
                                const std::vector<Vec2>& bar) {
    std::vector<Vec2> out(static_cast<std::size_t>(g.interior_cells()));
    std::size_t n = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            Vec2 acc;
            for (const auto& o : kernel.offsets) acc += o.w * bar[g.idx(i + o.dx, j + o.dy)];
            out[n++] = acc;
        }
    return out;
}

double residual_from(const ProfileGrid& g, const std::vector<Vec2>& conv, const MFParams& params) {
    double r = 0.0;
    std::size_t n = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i, ++n) {
            const auto k = g.idx(i, j);
            const Vec2 tp = magnetization(params.beta * (conv[n] + params.eps * e2));
            const Vec2 tm = magnetization(params.beta * (conv[n] - params.eps * e2));
            r = std::max({r, dist(g.plus[k], tp), dist(g.minus[k], tm)});
        }
    return r;
}

// One relaxation step; also returns the residual of the input profile.
ProfileGrid step_from(const ProfileGrid& g, const std::vector<Vec2>& conv, const MFParams& params,
                      double dt, double* residual = nullptr) {
    ProfileGrid out = g;
    double r = 0.0;
    std::size_t n = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i, ++n) {
            const auto k = g.idx(i, j);
            const Vec2 tp = magnetization(params.beta * (conv[n] + params.eps * e2));
            const Vec2 tm = magnetization(params.beta * (conv[n] - params.eps * e2));
            r = std::max({r, dist(g.plus[k], tp), dist(g.minus[k], tm)});
            out.plus[k] = dt == 1.0 ? tp : g.plus[k] + dt * (tp - g.plus[k]);
            out.minus[k] = dt == 1.0 ? tm : g.minus[k] + dt * (tm - g.minus[k]);
        }
    if (residual) *residual = r;
    return out;
}

}  // namespace

double kac_profile(double r) {
    r = std::abs(r);
    if (r >= 1.0) return 0.0;
    return std::exp(-1.0 / ((1.0 - r) * (1.0 + r)));
}

KacKernel KacKernel::make(int dim, double range_L, int cell) {
    if (dim != 1 && dim != 2) throw DomainError("KacKernel: dim must be 1 or 2");
    if (!(range_L > 1.0)) throw DomainError("KacKernel: range must exceed one lattice spacing");
    if (cell < 1) throw DomainError("KacKernel: cell size must be >= 1");

    const int r = static_cast<int>(std::ceil(range_L));
    std::vector<Offset> sites;
    double total = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double w = kac_profile(std::hypot(dx, dy) / range_L);
            if (w > 0.0) {
                sites.push_back({dx, dy, w});
                total += w;
            }
        }
    for (auto& s : sites) s.w /= total;

    // Overlap count of a site offset with a cell offset along one axis.
    auto tri = [cell](int u) { return std::max(0, cell - std::abs(u)); };
    std::map<std::pair<int, int>, double> acc;
    for (const auto& s : sites) {
        const int kx0 = (s.dx - cell) / cell - 1, kx1 = (s.dx + cell) / cell + 1;
        const int ky0 = (s.dy - cell) / cell - 1, ky1 = (s.dy + cell) / cell + 1;
        for (int kx = kx0; kx <= kx1; ++kx) {
            const int ox = tri(s.dx - kx * cell);
            if (!ox) continue;
            if (dim == 1) {
                acc[{0, kx}] += s.w * ox / cell;
                continue;
            }
            for (int ky = ky0; ky <= ky1; ++ky) {
                const int oy = tri(s.dy - ky * cell);
                if (oy) acc[{ky, kx}] += s.w * ox * oy / (double(cell) * cell);
            }
        }
    }

    KacKernel k;
    k.range_L = range_L;
    k.cell = cell;
    k.dim = dim;
    for (const auto& [key, w] : acc) {
        if (w <= 0.0) continue;
        k.offsets.push_back({key.second, key.first, w});
        k.reach = std::max({k.reach, std::abs(key.first), std::abs(key.second)});
    }
    return k;
}

double KacKernel::total_weight() const {
    double s = 0.0;
    for (const auto& o : offsets) s += o.w;
    return s;
}

double KacKernel::weight(int dx, int dy) const {
    for (const auto& o : offsets)
        if (o.dx == dx && o.dy == dy) return o.w;
    return 0.0;
}

ProfileGrid ProfileGrid::make(int dim, int nx, int ny, int collar, double cell_measure) {
    if (dim != 1 && dim != 2) throw DomainError("ProfileGrid: dim must be 1 or 2");
    if (nx < 1 || ny < 1 || collar < 0) throw DomainError("ProfileGrid: bad extent");
    if (dim == 1 && ny != 1) throw DomainError("ProfileGrid: strips have ny == 1");
    ProfileGrid g;
    g.dim = dim;
    g.nx = nx;
    g.ny = ny;
    g.collar = collar;
    g.cell_measure = cell_measure;
    const std::size_t n = static_cast<std::size_t>(g.ext_x()) * g.ext_y();
    g.plus.assign(n, Vec2{});
    g.minus.assign(n, Vec2{});
    return g;
}

std::size_t ProfileGrid::idx(int i, int j) const {
    const int cy = dim == 2 ? collar : 0;
    return static_cast<std::size_t>(j + cy) * ext_x() + static_cast<std::size_t>(i + collar);
}

void ProfileGrid::fill_interior(const PairMagnetization& pair) {
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            plus[idx(i, j)] = pair.m_plus;
            minus[idx(i, j)] = pair.m_minus;
        }
}

void ProfileGrid::fill_collar(const PairMagnetization& pair) {
    const int cy = dim == 2 ? collar : 0;
    for (int j = -cy; j < ny + cy; ++j)
        for (int i = -collar; i < nx + collar; ++i)
            if (!interior(i, j)) {
                plus[idx(i, j)] = pair.m_plus;
                minus[idx(i, j)] = pair.m_minus;
            }
}

std::vector<Vec2> convolve(const KacKernel& kernel, const ProfileGrid& grid) {
    require_compatible(kernel, grid);
    return convolve_bars(kernel, grid, bars(grid));
}

double continuum_energy(const ProfileGrid& g, const KacKernel& kernel, const MFParams& params) {
    require_compatible(kernel, g);
    const auto bar = bars(g);
    double total = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const auto k = g.idx(i, j);
            double inner = 0.0, outer = 0.0;
            for (const auto& o : kernel.offsets) {
                const Vec2& b = bar[g.idx(i + o.dx, j + o.dy)];
                if (g.interior(i + o.dx, j + o.dy)) inner += o.w * dot(bar[k], b);
                else outer += o.w * (dot(bar[k], b) - 0.5 * norm2(b));
            }
            total += -0.5 * inner - outer - 0.5 * params.eps * dot(e2, g.plus[k] - g.minus[k]);
        }
    return g.cell_measure * total;
}

double free_energy(const ProfileGrid& g, const KacKernel& kernel, const MFParams& params) {
    double s = 0.0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const auto k = g.idx(i, j);
            s += entropy(g.plus[k]) + entropy(g.minus[k]);
        }
    return continuum_energy(g, kernel, params) - g.cell_measure * s / (2.0 * params.beta);
}

double flow_residual(const ProfileGrid& g, const KacKernel& kernel, const MFParams& params) {
    return residual_from(g, convolve(kernel, g), params);
}

ProfileGrid flow_step(const ProfileGrid& g, const KacKernel& kernel, const MFParams& params,
                      double dt) {
    if (!(dt > 0.0 && dt <= 1.0)) throw DomainError("flow_step: dt must lie in (0, 1]");
    require_flow_scale(kernel);
    return step_from(g, convolve(kernel, g), params, dt);
}

bool admissible(const ProfileGrid& g, const Vec2& center, double xi) {
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            const auto k = g.idx(i, j);
            const Vec2& p = g.plus[k];
            const Vec2& m = g.minus[k];
            if (!(dist(0.5 * (p + m), center) < xi)) return false;
            if (!(norm(p) < 1.0 && norm(m) < 1.0)) return false;
            if (!(p.x > 0.0 && m.x > 0.0)) return false;
        }
    return true;
}

FlowResult evolve_to_stationary(const ProfileGrid& start, const KacKernel& kernel,
                                const MFParams& params, const FlowOptions& opt) {
    if (!(opt.dt > 0.0 && opt.dt <= 1.0)) throw DomainError("evolve: dt must lie in (0, 1]");
    require_flow_scale(kernel);
    require_compatible(kernel, start);
    const bool check = opt.xi > 0.0;
    if (check && !admissible(start, opt.center, opt.xi))
        throw DomainError("evolve: initial profile is outside the admissible set");

    FlowResult res;
    res.profile = start;
    auto& diag = res.diagnostics;
    double f = free_energy(start, kernel, params);
    diag.free_energy_trace.push_back(f);
    diag.max_energy_increase = -std::numeric_limits<double>::infinity();

    for (int step = 0;; ++step) {
        const auto conv = convolve_bars(kernel, res.profile, bars(res.profile));
        double r = 0.0;
        ProfileGrid next = step_from(res.profile, conv, params, opt.dt, &r);
        diag.stationarity_residual = r;
        diag.wall_steps = step;
        if (r <= opt.tol) break;
        if (step >= opt.max_steps) {
            std::ostringstream os;
            os << "flow did not reach tol " << opt.tol << " in " << opt.max_steps
               << " steps; residual " << r;
            throw ConvergenceError(os.str());
        }
        res.profile = std::move(next);
        const double fn = free_energy(res.profile, kernel, params);
        diag.max_energy_increase = std::max(diag.max_energy_increase, fn - f);
        diag.free_energy_trace.push_back(fn);
        f = fn;
        if (check && !admissible(res.profile, opt.center, opt.xi)) {
            std::ostringstream os;
            os << "flow left the admissible set at step " << step + 1;
            throw InvariantViolation(os.str());
        }
    }
    return res;
}

std::vector<DecayBand> decay_profile(const ProfileGrid& g, const KacKernel& kernel,
                                     const MFParams& params, const Vec2& center, double tol) {
    const double r = flow_residual(g, kernel, params);
    if (r > tol) {
        std::ostringstream os;
        os << "decay_profile: profile is not stationary (residual " << r << ")";
        throw DomainError(os.str());
    }
    const double c = kernel.cell;
    std::vector<DecayBand> bands;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i) {
            double d = std::min((i + 0.5) * c, (g.nx - i - 0.5) * c);
            if (g.dim == 2) d = std::min({d, (j + 0.5) * c, (g.ny - j - 0.5) * c});
            const auto band = static_cast<std::size_t>(d / kernel.range_L);
            if (bands.size() <= band) bands.resize(band + 1);
            bands[band].sup_deviation = std::max(bands[band].sup_deviation, dist(g.bar(i, j), center));
        }
    for (std::size_t b = 0; b < bands.size(); ++b) bands[b].distance = b * kernel.range_L;
    return bands;
}

DecaySummary summarize_decay(const std::vector<DecayBand>& bands, double floor) {
    DecaySummary s;
    std::size_t last = 0;
    for (std::size_t b = 0; b + 1 < bands.size(); ++b) {
        if (!(bands[b + 1].sup_deviation > floor)) break;
        s.ratios.push_back(bands[b + 1].sup_deviation / bands[b].sup_deviation);
        last = b + 1;
    }
    if (!s.ratios.empty())
        s.mean_ratio = std::pow(bands[last].sup_deviation / bands[0].sup_deviation,
                                1.0 / static_cast<double>(s.ratios.size()));
    return s;
}

ProfileGrid make_strip(const KacKernel& kernel, int n_cells, const PairMagnetization& interior,
                       const Vec2& boundary) {
    if (kernel.dim != 1) throw DomainError("make_strip: needs a strip kernel");
    ProfileGrid g = ProfileGrid::make(1, n_cells, 1, kernel.reach, kernel.cell);
    g.fill_interior(interior);
    g.fill_collar({boundary, boundary});
    return g;
}

void write_profile_csv(std::ostream& os, const ProfileGrid& g) {
    const auto old = os.precision(17);
    os << "cell,m_plus_x,m_plus_y,m_minus_x,m_minus_y\n";
    int n = 0;
    for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i, ++n) {
            const auto k = g.idx(i, j);
            os << n << ',' << g.plus[k].x << ',' << g.plus[k].y << ',' << g.minus[k].x << ','
               << g.minus[k].y << '\n';
        }
    os.precision(old);
}

}  // namespace rfio
