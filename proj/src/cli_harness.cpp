#include "rfio/cli_harness.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfio/circle_calculus.hpp"
#include "rfio/disorder_field.hpp"
#include "rfio/entropy_check.hpp"
#include "rfio/errors.hpp"
#include "rfio/kac_flow.hpp"
#include "rfio/lattice_mc.hpp"
#include "rfio/mean_field.hpp"
#include "rfio/rng.hpp"
#include "rfio/self_consistency.hpp"

#ifndef RFIO_VERSION
#define RFIO_VERSION "0.0.0"
#endif
#ifndef RFIO_REVISION
#define RFIO_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace rfio {
namespace {

enum class Type { real, real_or_auto, integer, seed, reals, integers, text };

struct KeySpec {
    std::string key;
    Type type;
    std::optional<std::string> fallback;  // nullopt: required
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

std::optional<double> to_real(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (*end != '\0' || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<long long> to_integer(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (*end != '\0') return std::nullopt;
    return v;
}

std::optional<std::uint64_t> to_seed(const std::string& s) {
    if (s.empty() || s[0] == '-') return std::nullopt;
    char* end = nullptr;
    const auto v = std::strtoull(s.c_str(), &end, 10);
    if (*end != '\0') return std::nullopt;
    return std::uint64_t(v);
}

bool well_typed(const std::string& v, Type t) {
    switch (t) {
        case Type::real: return bool(to_real(v));
        case Type::real_or_auto: return v == "auto" || bool(to_real(v));
        case Type::integer: return bool(to_integer(v));
        case Type::seed: return bool(to_seed(v));
        case Type::text: return !v.empty();
        case Type::reals:
        case Type::integers: {
            const auto items = split_list(v);
            if (items.empty()) return false;
            for (const auto& i : items)
                if (t == Type::reals ? !to_real(i) : !to_integer(i)) return false;
            return true;
        }
    }
    return false;
}

const char* type_name(Type t) {
    switch (t) {
        case Type::real: return "a real number";
        case Type::real_or_auto: return "a real number or 'auto'";
        case Type::integer: return "an integer";
        case Type::seed: return "an unsigned 64-bit integer";
        case Type::reals: return "a comma-separated list of reals";
        case Type::integers: return "a comma-separated list of integers";
        case Type::text: return "a non-empty string";
    }
    return "?";
}

std::vector<KeySpec> schema(const std::string& kind) {
    std::vector<KeySpec> s{
        {"experiment.kind", Type::text, kind},
        {"run.seed", Type::seed, "1"},
        {"run.threads", Type::integer, "1"},
        {"output.dir", Type::text, "rfio-" + kind},
    };
    auto add = [&](std::initializer_list<KeySpec> more) { s.insert(s.end(), more); };
    const std::optional<std::string> req;
    if (kind == "mf-scan" || kind == "barrier") {
        add({{"physics.beta", Type::reals, req}, {"physics.eps", Type::reals, req}});
    } else if (kind == "contraction") {
        add({{"physics.beta", Type::reals, req},
             {"physics.eps", Type::reals, req},
             {"contraction.radius", Type::real, "0.02"},
             {"contraction.samples", Type::integer, "2000"}});
    } else if (kind == "flow-strip") {
        add({{"physics.beta", Type::real, req},
             {"physics.eps", Type::reals, req},
             {"flow.L", Type::real, "16"},
             {"flow.cell", Type::integer, "4"},
             {"flow.cells", Type::integer, "64"},
             {"flow.xi", Type::real, "0.05"},
             {"flow.boundary_offset", Type::real, "0.045"},
             {"flow.dt", Type::real, "0.5"},
             {"flow.tol", Type::real, "1e-8"},
             {"flow.max_steps", Type::integer, "200000"},
             {"flow.decay_floor", Type::real, "1e-6"}});
    } else if (kind == "mc-run") {
        add({{"physics.beta", Type::real, req},
             {"physics.eps", Type::real, req},
             {"geometry.N", Type::integer, req},
             {"geometry.L", Type::integer, req},
             {"geometry.lambda", Type::real, "0.2"},
             {"geometry.kappa", Type::real, "0.2"},
             {"geometry.p_dirty", Type::real_or_auto, "auto"},
             {"phases.xi", Type::real, "0.1"},
             {"chain.sweeps", Type::integer, "1000"},
             {"chain.burn_in", Type::integer, "200"},
             {"chain.thin", Type::integer, "10"},
             {"chain.boundary", Type::text, "horizontal"},
             {"chain.bulk_margin", Type::integer, "-1"}});
    } else if (kind == "disorder-stats") {
        add({{"geometry.N", Type::integers, req},
             {"geometry.L", Type::integers, req},
             {"geometry.lambda", Type::real, "0.2"},
             {"geometry.kappa", Type::real, "0.2"},
             {"disorder.trials", Type::integer, "100"},
             {"hoeffding.sizes", Type::integers, "64,128,256"},
             {"hoeffding.A", Type::reals, "2,3,4"},
             {"hoeffding.trials", Type::integer, "100000"}});
    } else if (kind == "entropy-check") {
        add({{"entropy.rho", Type::reals, req},
             {"entropy.delta", Type::reals, req},
             {"entropy.N", Type::integers, req},
             {"entropy.samples", Type::integer, "100000"},
             {"entropy.bootstrap", Type::integer, "200"},
             {"entropy.bound_constant", Type::real, "5"}});
    } else if (kind == "energy-approx") {
        add({{"physics.beta", Type::real, req},
             {"physics.eps", Type::real, req},
             {"geometry.N", Type::integers, req},
             {"geometry.L", Type::integers, req},
             {"geometry.lambda", Type::real, "0.2"},
             {"geometry.kappa", Type::real, "0.2"},
             {"energy.configs", Type::integer, "3"}});
    } else {
        throw ConfigError("unknown experiment kind '" + kind + "'");
    }
    return s;
}

std::string env_name(const std::string& key) {
    std::string out = "RFIO_";
    for (char c : key) out += c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// CSV rows with %.17g for reals.
class Csv {
public:
    explicit Csv(std::ostream& os) : os_(os) {}
    Csv& comment(const std::string& line) {
        os_ << "# " << line << '\n';
        return *this;
    }
    Csv& header(std::initializer_list<const char*> cols) {
        bool first = true;
        for (const char* c : cols) {
            os_ << (first ? "" : ",") << c;
            first = false;
        }
        os_ << '\n';
        return *this;
    }
    template <class... Ts>
    void row(const Ts&... vs) {
        bool first = true;
        ((os_ << (first ? "" : ",") << cell(vs), first = false), ...);
        os_ << '\n';
    }

private:
    static std::string cell(double v) { return format_real(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long long v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "1" : "0"; }
    static std::string cell(const std::string& v) { return v; }
    std::ostream& os_;
};

class Artifacts {
public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}
    std::ofstream open(const std::string& name) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
        files_.push_back(name);
        return f;
    }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

struct Plan {
    ojson scales = ojson::array();
    std::vector<std::string> streams;
    std::function<ojson(Artifacts&, std::ostream&)> execute;
};

ojson scales_json(const Scales& s) {
    return {{"N", s.N},           {"L", s.L},
            {"lambda", s.lambda}, {"ell_small", s.ell_small},
            {"ell_big", s.ell_big}, {"side_small", s.side_small},
            {"side_big", s.side_big}, {"kappa", s.kappa},
            {"p_dirty", s.p_dirty}};
}

std::vector<Scales> paired_scales(const ExperimentConfig& c) {
    const auto Ns = c.integers("geometry.N");
    const auto Ls = c.integers("geometry.L");
    if (Ns.size() != Ls.size())
        throw ConfigError("geometry.N and geometry.L must list the same number of sizes");
    std::vector<Scales> out;
    for (std::size_t i = 0; i < Ns.size(); ++i)
        out.push_back(Scales::realize(int(Ns[i]), int(Ls[i]), c.real("geometry.lambda"), c.real("geometry.kappa")));
    return out;
}

MFParams mf_params(double beta, double eps) {
    MFParams p;
    p.beta = beta;
    p.eps = eps;
    p.validate();
    return p;
}

Plan plan_mf_scan(const ExperimentConfig& c) {
    std::vector<MFParams> grid;
    for (double b : c.reals("physics.beta"))
        for (double e : c.reals("physics.eps")) grid.push_back(mf_params(b, e));
    Plan plan;
    plan.execute = [grid](Artifacts& art, std::ostream& log) {
        auto f = art.open("mf_scan.csv");
        Csv csv(f);
        csv.comment("scales: none (mean field)")
            .header({"beta", "eps", "solution", "rho", "theta", "m_plus_x", "m_plus_y", "m_minus_x", "m_minus_y", "phi",
                     "residual", "field_relation", "radius_deviation"});
        double worst = 0.0;
        for (const auto& p : grid) {
            const auto [a, b] = minimizers(p);
            const double rb = rho_beta(p.beta);
            int k = 0;
            for (const auto* s : {&a, &b}) {
                const double rel = std::abs(s->rho * std::sin(std::abs(s->theta)) - p.eps);
                worst = std::max({worst, rel, std::abs(s->rho - rb)});
                csv.row(p.beta, p.eps, k++, s->rho, s->theta, s->pair.m_plus.x, s->pair.m_plus.y, s->pair.m_minus.x,
                        s->pair.m_minus.y, s->phi_value, s->residual, rel, std::abs(s->rho - rb));
            }
        }
        log << "mf-scan: " << grid.size() << " parameter pairs, worst relation " << worst << '\n';
        return ojson{{"points", grid.size()}, {"worst_relation", worst}};
    };
    return plan;
}

Plan plan_barrier(const ExperimentConfig& c) {
    std::vector<MFParams> grid;
    for (double b : c.reals("physics.beta"))
        for (double e : c.reals("physics.eps")) grid.push_back(mf_params(b, e));
    Plan plan;
    plan.execute = [grid](Artifacts& art, std::ostream&) {
        auto f = art.open("barrier.csv");
        Csv csv(f);
        csv.comment("scales: none (mean field)").header({"beta", "eps", "barrier", "half_eps_sq", "deviation"});
        double worst = 0.0;
        for (const auto& p : grid) {
            const double b = barrier(p), ref = 0.5 * p.eps * p.eps;
            worst = std::max(worst, std::abs(b - ref));
            csv.row(p.beta, p.eps, b, ref, b - ref);
        }
        return ojson{{"points", grid.size()}, {"worst_deviation", worst}};
    };
    return plan;
}

Plan plan_contraction(const ExperimentConfig& c) {
    const auto betas = c.reals("physics.beta"), epss = c.reals("physics.eps");
    for (double b : betas)
        for (double e : epss) mf_params(b, e);
    const double radius = c.real("contraction.radius");
    const auto samples = c.integer("contraction.samples");
    if (!(radius > 0.0)) throw ConfigError("contraction.radius must be positive");
    if (samples < 1) throw ConfigError("contraction.samples must be positive");
    Plan plan;
    plan.streams = {"contraction"};
    plan.execute = [=, seed = c.seed, threads = c.threads](Artifacts& art, std::ostream&) {
        auto f = art.open("contraction.csv");
        Csv csv(f);
        csv.comment("scales: none (mean field)")
            .header({"beta", "eps", "radius", "samples", "factor", "one_minus_factor"});
        auto g = art.open("contraction_fit.csv");
        Csv fit(g);
        fit.comment("scales: none (mean field)").header({"beta", "n_eps", "slope"});
        ojson slopes = ojson::array();
        for (double b : betas) {
            std::vector<double> om;
            for (double e : epss) {
                const auto rep = contraction_factor(mf_params(b, e), radius, int(samples), seed, threads);
                om.push_back(1.0 - rep.factor);
                csv.row(b, e, radius, rep.samples, rep.factor, 1.0 - rep.factor);
            }
            if (epss.size() >= 2 && std::all_of(om.begin(), om.end(), [](double v) { return v > 0.0; })) {
                const double s = loglog_slope(epss, om);
                fit.row(b, epss.size(), s);
                slopes.push_back(s);
            }
        }
        return ojson{{"slopes", slopes}};
    };
    return plan;
}

Plan plan_flow_strip(const ExperimentConfig& c) {
    const double beta = c.real("physics.beta");
    const auto epss = c.reals("physics.eps");
    for (double e : epss) mf_params(beta, e);
    const double L = c.real("flow.L");
    const auto cell = c.integer("flow.cell"), cells = c.integer("flow.cells");
    FlowOptions opt;
    opt.xi = c.real("flow.xi");
    opt.dt = c.real("flow.dt");
    opt.tol = c.real("flow.tol");
    opt.max_steps = int(c.integer("flow.max_steps"));
    const double offset = c.real("flow.boundary_offset"), decay_floor = c.real("flow.decay_floor");
    if (cell < 1 || cells < 2) throw ConfigError("flow.cell must be >= 1 and flow.cells >= 2");
    if (!(opt.xi > 0.0) || !(opt.dt > 0.0) || !(opt.tol > 0.0) || opt.max_steps < 1)
        throw ConfigError("flow.xi, flow.dt, flow.tol and flow.max_steps must be positive");
    if (!(std::abs(offset) < opt.xi)) throw ConfigError("flow.boundary_offset must be smaller than flow.xi");
    const auto kernel = KacKernel::make(1, L, int(cell));
    Plan plan;
    std::ostringstream sc;
    sc << "L=" << format_real(L) << " cell=" << cell << " cells=" << cells << " collar=" << kernel.reach;
    plan.scales.push_back({{"L", L}, {"cell", cell}, {"cells", cells}, {"collar", kernel.reach}});
    plan.execute = [=, scales = sc.str()](Artifacts& art, std::ostream& log) {
        auto ft = art.open("flow_trace.csv");
        auto fp = art.open("flow_profile.csv");
        auto fd = art.open("decay.csv");
        auto fs_ = art.open("flow_summary.csv");
        Csv trace(ft), prof(fp), decay(fd), sum(fs_);
        trace.comment("scales: " + scales).header({"eps", "step", "free_energy"});
        prof.comment("scales: " + scales)
            .header({"eps", "cell", "m_plus_x", "m_plus_y", "m_minus_x", "m_minus_y"});
        decay.comment("scales: " + scales).header({"eps", "band", "distance", "sup_deviation"});
        sum.comment("scales: " + scales)
            .header({"eps", "steps", "residual", "tol", "max_energy_increase", "n_ratios", "max_ratio", "mean_ratio"});
        ojson out = ojson::array();
        for (double e : epss) {
            const auto params = mf_params(beta, e);
            const auto mz = minimizers(params).first.pair;
            FlowOptions o = opt;
            o.center = mz.bar();
            auto start = make_strip(kernel, int(cells), mz, mz.bar() + offset * e2);
            const auto res = evolve_to_stationary(start, kernel, params, o);
            const auto& d = res.diagnostics;
            for (std::size_t t = 0; t < d.free_energy_trace.size(); ++t) trace.row(e, t, d.free_energy_trace[t]);
            const auto& g = res.profile;
            for (int i = 0; i < g.nx; ++i) {
                const auto k = g.idx(i);
                prof.row(e, i, g.plus[k].x, g.plus[k].y, g.minus[k].x, g.minus[k].y);
            }
            const auto bands = decay_profile(g, kernel, params, o.center, o.tol);
            for (std::size_t b = 0; b < bands.size(); ++b) decay.row(e, b, bands[b].distance, bands[b].sup_deviation);
            const auto s = summarize_decay(bands, decay_floor);
            const double mx = s.ratios.empty() ? 0.0 : *std::max_element(s.ratios.begin(), s.ratios.end());
            sum.row(e, d.wall_steps, d.stationarity_residual, o.tol, d.max_energy_increase, s.ratios.size(), mx,
                    s.mean_ratio);
            log << "flow-strip eps=" << e << ": " << d.wall_steps << " steps, residual " << d.stationarity_residual
                << '\n';
            out.push_back({{"eps", e}, {"steps", d.wall_steps}, {"mean_ratio", s.mean_ratio}});
        }
        return out;
    };
    return plan;
}

BoundaryCondition boundary_from(const std::string& name, const Vec2& mbar) {
    switch (boundary_kind_from_string(name)) {
        case BoundaryKind::horizontal: return BoundaryCondition::horizontal(mbar);
        case BoundaryKind::reflected: return BoundaryCondition::reflected(mbar);
        case BoundaryKind::staggered: return BoundaryCondition::staggered(norm(mbar));
        case BoundaryKind::custom: break;
    }
    throw ConfigError("chain.boundary: custom boundaries are not available from a config file");
}

Plan plan_mc_run(const ExperimentConfig& c) {
    const auto p_dirty = c.real_or_auto("geometry.p_dirty");
    ChainConfig cc;
    cc.scales = Scales::realize(int(c.integer("geometry.N")), int(c.integer("geometry.L")), c.real("geometry.lambda"),
                                c.real("geometry.kappa"), p_dirty);
    cc.params = mf_params(c.real("physics.beta"), c.real("physics.eps"));
    const auto mz = minimizers(cc.params).first.pair;
    cc.boundary = boundary_from(c.text("chain.boundary"), mz.bar());
    cc.initial_angle = cc.boundary.kind == BoundaryKind::reflected ? std::numbers::pi : 0.0;
    cc.sweeps = int(c.integer("chain.sweeps"));
    cc.burn_in = int(c.integer("chain.burn_in"));
    cc.thin = int(c.integer("chain.thin"));
    cc.bulk_margin = int(c.integer("chain.bulk_margin"));
    cc.xi = c.real("phases.xi");
    cc.seed = c.seed;
    cc.validate();
    Plan plan;
    plan.scales.push_back(scales_json(cc.scales));
    plan.streams = {"disorder", "chain"};
    plan.execute = [cc](Artifacts& art, std::ostream& log) {
        const auto& s = cc.scales;
        const auto field = sample_disorder(s.N, 0.5, cc.seed);
        const auto clean = xi_and_dirty(field, s);
        const auto chain = run_chain(cc, field);
        const auto rep = measure_order(chain, clean);
        const std::string sc = "scales: " + s.describe();

        auto fb = art.open("blocks.csv");
        write_blocks_csv(fb, chain, rep);

        auto fsm = art.open("samples.csv");
        Csv samples(fsm);
        samples.comment(sc).header(
            {"sweep", "energy", "Mx", "My", "Mpx", "Mpy", "Mmx", "Mmy", "contours", "contour_volume"});
        for (const auto& r : chain.samples)
            samples.row(r.sweep, r.energy, r.bulk.plain.x, r.bulk.plain.y, r.bulk.plus.x, r.bulk.plus.y,
                        r.bulk.minus.x, r.bulk.minus.y, r.contours, r.contour_volume);

        auto fo = art.open("order.csv");
        Csv order(fo);
        order.comment(sc).comment("boundary: " + std::string(to_string(cc.boundary.kind)));
        order.header({"quantity", "value", "stderr"});
        auto me = [&](const char* n, const MeanError& m) { order.row(std::string(n), m.mean, m.stderr_); };
        me("bulk_Mx", rep.bulk_plain_x);
        me("bulk_My", rep.bulk_plain_y);
        me("bulk_Mpx", rep.bulk_plus_x);
        me("bulk_Mpy", rep.bulk_plus_y);
        me("bulk_Mmx", rep.bulk_minus_x);
        me("bulk_Mmy", rep.bulk_minus_y);
        me("contour_count", rep.contour_count);
        me("contour_volume", rep.contour_volume);
        order.row(std::string("flagged_blocks"), double(rep.flagged), 0.0);
        order.row(std::string("flagged_close_pair"), rep.flagged_close_pair, 0.0);
        order.row(std::string("flagged_close_mean"), rep.flagged_close_mean, 0.0);
        order.row(std::string("dirty_fraction"), clean.dirty_fraction(), 0.0);
        order.row(std::string("equilibrated"), rep.equilibrated ? 1.0 : 0.0, 0.0);
        order.row(std::string("boundary_sign"), cc.boundary.kind == BoundaryKind::reflected ? -1.0 : 1.0, 0.0);

        const auto obs = block_observables(chain.final_state, field, s);
        const auto maps = phase_fields(obs, chain.minimizer, cc.xi);
        auto fc = art.open("contours.json");
        write_contours_json(fc, extract_contours(maps, &clean, s.p_dirty));

        log << "mc-run: bulk Mx = " << rep.bulk_plain_x.mean << " +- " << rep.bulk_plain_x.stderr_ << '\n';
        return ojson{{"bulk_Mx", rep.bulk_plain_x.mean},
                     {"bulk_Mx_stderr", rep.bulk_plain_x.stderr_},
                     {"equilibrated", rep.equilibrated}};
    };
    return plan;
}

Plan plan_disorder_stats(const ExperimentConfig& c) {
    const auto sizes = paired_scales(c);
    const auto trials = c.integer("disorder.trials"), htrials = c.integer("hoeffding.trials");
    std::vector<int> hsizes;
    for (auto n : c.integers("hoeffding.sizes")) {
        if (n < 1) throw ConfigError("hoeffding.sizes must be positive");
        hsizes.push_back(int(n));
    }
    const auto As = c.reals("hoeffding.A");
    if (trials < 2 || htrials < 1) throw ConfigError("disorder.trials must be >= 2 and hoeffding.trials >= 1");
    Plan plan;
    for (const auto& s : sizes) plan.scales.push_back(scales_json(s));
    plan.streams = {"dirty-trial/0", "hoeffding"};
    plan.execute = [=, seed = c.seed, threads = c.threads](Artifacts& art, std::ostream& log) {
        const auto st = dirty_fraction_stats(sizes, int(trials), seed, threads);
        auto fd = art.open("dirty.csv");
        write_dirty_csv(fd, st);
        auto fs_ = art.open("dirty_summary.csv");
        Csv sum(fs_);
        for (std::size_t i = 0; i < sizes.size(); ++i) sum.comment("scales[" + std::to_string(i) + "]: " + sizes[i].describe());
        sum.header({"size_index", "N", "L", "side_small", "side_big", "p_dirty", "trials", "mean", "variance", "stderr"});
        for (std::size_t i = 0; i < sizes.size(); ++i)
            sum.row(i, sizes[i].N, sizes[i].L, sizes[i].side_small, sizes[i].side_big, sizes[i].p_dirty,
                    int(trials), st.mean[i], st.variance[i], std::sqrt(st.variance[i] / double(trials)));

        const auto rows = hoeffding_check(hsizes, As, htrials, seed, threads);
        auto fh = art.open("hoeffding.csv");
        std::string ns;
        for (int n : hsizes) ns += (ns.empty() ? "" : ",") + std::to_string(n);
        fh << "# scales: block sizes n=" << ns << '\n';
        write_hoeffding_csv(fh, rows);
        log << "disorder-stats: " << sizes.size() << " sizes x " << trials << " trials\n";
        return ojson{{"dirty_mean", st.mean}};
    };
    return plan;
}

Plan plan_entropy_check(const ExperimentConfig& c) {
    struct Point {
        double rho, delta;
        int N;
    };
    std::vector<Point> pts;
    for (double r : c.reals("entropy.rho"))
        for (double d : c.reals("entropy.delta"))
            for (auto n : c.integers("entropy.N")) {
                if (!(r >= 0.0 && r < 1.0) || !(d > 0.0) || n < 2)
                    throw ConfigError("entropy: need 0 <= rho < 1, delta > 0 and N >= 2");
                pts.push_back({r, d, int(n)});
            }
    const auto samples = c.integer("entropy.samples");
    EntropyOptions eo;
    eo.bootstrap = int(c.integer("entropy.bootstrap"));
    eo.threads = c.threads;
    const double C = c.real("entropy.bound_constant");
    if (samples < 1 || eo.bootstrap < 2) throw ConfigError("entropy.samples must be >= 1 and entropy.bootstrap >= 2");
    Plan plan;
    plan.streams = {"entropy", "estimator"};
    plan.execute = [=, seed = c.seed](Artifacts& art, std::ostream& log) {
        std::vector<EntropyEstimate> rows;
        for (const auto& p : pts) {
            rows.push_back(finite_volume_entropy(p.rho, p.delta, p.N, int(samples), seed, eo));
            log << "entropy-check rho=" << p.rho << " delta=" << p.delta << " N=" << p.N << ": "
                << rows.back().estimate << " +- " << rows.back().stderr_ << '\n';
        }
        auto f = art.open("entropy.csv");
        f << "# scales: none (independent spins)\n";
        write_entropy_csv(f, rows, C);
        return ojson{{"points", rows.size()}};
    };
    return plan;
}

Plan plan_energy_approx(const ExperimentConfig& c) {
    const auto sizes = paired_scales(c);
    const auto params = mf_params(c.real("physics.beta"), c.real("physics.eps"));
    const auto configs = c.integer("energy.configs");
    if (configs < 1) throw ConfigError("energy.configs must be positive");
    Plan plan;
    for (const auto& s : sizes) plan.scales.push_back(scales_json(s));
    plan.streams = {"energy-config", "disorder", "state"};
    plan.execute = [=, seed = c.seed](Artifacts& art, std::ostream& log) {
        const auto mz = minimizers(params).first.pair;
        auto f = art.open("energy_approx.csv");
        Csv csv(f);
        for (std::size_t i = 0; i < sizes.size(); ++i) csv.comment("scales[" + std::to_string(i) + "]: " + sizes[i].describe());
        csv.header({"size_index", "N", "L", "side_small", "side_big", "config", "per_site_total", "per_site_coupling",
                    "per_site_field", "clean_fraction", "clean"});
        ojson means = ojson::array();
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            const auto& s = sizes[i];
            const auto kernel = KacKernel::make(2, s.L, 1);
            double total = 0.0;
            for (long long k = 0; k < configs; ++k) {
                const auto field = sample_disorder(s.N, 0.5, derive_seed(seed, "energy-config", std::uint64_t(k)));
                auto lat = SpinLattice::make(s.N, collar_width(s), BoundaryCondition::horizontal(mz.bar()), 0.0);
                Rng rng = make_rng(seed, "state", std::uint64_t(k));
                fill_product_state(lat, field, mz, rng);
                const auto r = energy_approximation_check(lat, field, s, kernel, params);
                csv.row(i, s.N, s.L, s.side_small, s.side_big, k, r.per_site_total, r.per_site_coupling,
                        r.per_site_field, r.clean_fraction, r.clean);
                total += r.per_site_total;
            }
            means.push_back(total / double(configs));
            log << "energy-approx L=" << s.L << ": mean per-site discrepancy " << total / double(configs) << '\n';
        }
        return ojson{{"mean_per_site_total", means}};
    };
    return plan;
}

Plan make_plan(const ExperimentConfig& c) {
    if (c.kind == "mf-scan") return plan_mf_scan(c);
    if (c.kind == "barrier") return plan_barrier(c);
    if (c.kind == "contraction") return plan_contraction(c);
    if (c.kind == "flow-strip") return plan_flow_strip(c);
    if (c.kind == "mc-run") return plan_mc_run(c);
    if (c.kind == "disorder-stats") return plan_disorder_stats(c);
    if (c.kind == "entropy-check") return plan_entropy_check(c);
    if (c.kind == "energy-approx") return plan_energy_approx(c);
    throw ConfigError("unknown experiment kind '" + c.kind + "'");
}

const std::map<std::string, std::vector<std::string>>& expected_artifacts() {
    static const std::map<std::string, std::vector<std::string>> m{
        {"mf-scan", {"mf_scan.csv"}},
        {"barrier", {"barrier.csv"}},
        {"contraction", {"contraction.csv", "contraction_fit.csv"}},
        {"flow-strip", {"flow_trace.csv", "flow_profile.csv", "decay.csv", "flow_summary.csv"}},
        {"mc-run", {"blocks.csv", "samples.csv", "order.csv", "contours.json"}},
        {"disorder-stats", {"dirty.csv", "dirty_summary.csv", "hoeffding.csv"}},
        {"entropy-check", {"entropy.csv"}},
        {"energy-approx", {"energy_approx.csv"}},
    };
    return m;
}

// Header plus rows of a CSV artifact, '#' lines skipped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw std::runtime_error("column '" + name + "' missing");
        return std::size_t(it - header.begin());
    }
    double num(std::size_t r, const std::string& name) const {
        const auto v = to_real(rows[r][col(name)]);
        if (!v) throw std::runtime_error("non-numeric value in column '" + name + "'");
        return *v;
    }
};

Table read_table(const fs::path& path) {
    std::ifstream in(path);
    Table t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_list(line);
        if (t.header.empty()) t.header = std::move(cells);
        else t.rows.push_back(std::move(cells));
    }
    return t;
}

ojson check(const std::string& name, bool pass, ojson detail = ojson::object()) {
    ojson j{{"name", name}, {"pass", pass}};
    j.update(detail);
    return j;
}

ojson summarize(const std::string& kind, const fs::path& dir, const ojson& manifest) {
    ojson checks = ojson::array();
    ojson metrics = ojson::object();
    if (kind == "mf-scan") {
        const auto t = read_table(dir / "mf_scan.csv");
        double res = 0, rel = 0, rad = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            res = std::max(res, t.num(r, "residual"));
            rel = std::max(rel, t.num(r, "field_relation"));
            rad = std::max(rad, t.num(r, "radius_deviation"));
        }
        metrics = {{"max_equation_residual", res}, {"max_field_relation", rel}, {"max_radius_deviation", rad}};
        checks.push_back(check("field_relation<=1e-9", rel <= 1e-9, {{"value", rel}}));
        checks.push_back(check("radius_deviation<=1e-9", rad <= 1e-9, {{"value", rad}}));
    } else if (kind == "barrier") {
        const auto t = read_table(dir / "barrier.csv");
        double w = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) w = std::max(w, std::abs(t.num(r, "deviation")));
        metrics = {{"max_barrier_deviation", w}};
        checks.push_back(check("barrier=eps^2/2 within 1e-9", w <= 1e-9, {{"value", w}}));
    } else if (kind == "contraction") {
        const auto t = read_table(dir / "contraction.csv");
        double mx = 0;
        for (std::size_t r = 0; r < t.rows.size(); ++r) mx = std::max(mx, t.num(r, "factor"));
        metrics["max_factor"] = mx;
        checks.push_back(check("factor<1", mx < 1.0, {{"value", mx}}));
        const auto f = read_table(dir / "contraction_fit.csv");
        for (std::size_t r = 0; r < f.rows.size(); ++r) {
            const double s = f.num(r, "slope");
            checks.push_back(check("loglog slope 2+-0.3", std::abs(s - 2.0) <= 0.3, {{"beta", f.num(r, "beta")}, {"value", s}}));
        }
    } else if (kind == "flow-strip") {
        const auto t = read_table(dir / "flow_summary.csv");
        double inc = -1e300, res = 0, ratio = 0;
        bool ordered = true;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            inc = std::max(inc, t.num(r, "max_energy_increase"));
            res = std::max(res, t.num(r, "residual") / t.num(r, "tol"));
            ratio = std::max(ratio, t.num(r, "max_ratio"));
            if (r && t.num(r, "eps") > t.num(r - 1, "eps") && !(t.num(r, "mean_ratio") < t.num(r - 1, "mean_ratio")))
                ordered = false;
        }
        metrics = {{"max_energy_increase", inc}, {"max_residual_over_tol", res}, {"max_decay_ratio", ratio}};
        checks.push_back(check("free energy non-increasing (1e-12)", inc <= 1e-12, {{"value", inc}}));
        checks.push_back(check("stationary within tol", res <= 1.0, {{"value", res}}));
        checks.push_back(check("decay ratios < 1", ratio < 1.0, {{"value", ratio}}));
        checks.push_back(check("faster decay for larger eps", ordered));
    } else if (kind == "mc-run") {
        const auto t = read_table(dir / "order.csv");
        std::map<std::string, std::pair<double, double>> q;
        for (std::size_t r = 0; r < t.rows.size(); ++r) q[t.rows[r][0]] = {t.num(r, "value"), t.num(r, "stderr")};
        const double sign = q.count("boundary_sign") ? q["boundary_sign"].first : 1.0;
        for (const char* k : {"bulk_Mx", "bulk_My", "bulk_Mpy", "bulk_Mmy", "contour_volume"})
            metrics[k] = {{"mean", q[k].first}, {"stderr", q[k].second}};
        checks.push_back(check("bulk Mx along boundary >= 0.5", sign * q["bulk_Mx"].first >= 0.5));
        checks.push_back(check("|bulk My| <= 0.1 (3 sigma)", std::abs(q["bulk_My"].first) - 3 * q["bulk_My"].second <= 0.1));
        checks.push_back(check("M+y > 0 > M-y", q["bulk_Mpy"].first > 0.0 && q["bulk_Mmy"].first < 0.0));
        checks.push_back(check("equilibrated", q["equilibrated"].first == 1.0));
    } else if (kind == "disorder-stats") {
        const auto t = read_table(dir / "dirty_summary.csv");
        bool dec = true;
        ojson means = ojson::array();
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            means.push_back(t.num(r, "mean"));
            if (r && !(t.num(r, "mean") < t.num(r - 1, "mean"))) dec = false;
        }
        metrics["dirty_mean"] = means;
        checks.push_back(check("dirty fraction strictly decreasing", dec));
        const auto h = read_table(dir / "hoeffding.csv");
        bool below = true, match = true;
        for (std::size_t r = 0; r < h.rows.size(); ++r) {
            const double ex = h.num(r, "exact"), em = h.num(r, "empirical"), n = h.num(r, "trials");
            const double se = std::max(h.num(r, "stderr"), std::sqrt(ex * (1.0 - ex) / n));
            below = below && em <= h.num(r, "bound") + 3 * se;
            match = match && std::abs(em - ex) <= 3 * se;
        }
        checks.push_back(check("tails below 2exp(-A^2/4) (3 se)", below));
        checks.push_back(check("tails match exact binomial (3 se)", match));
    } else if (kind == "entropy-check") {
        const auto t = read_table(dir / "entropy.csv");
        bool ok = true;
        ojson rows = ojson::array();
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            const double dev = std::abs(t.num(r, "estimate") - t.num(r, "S_ref"));
            ok = ok && dev <= t.num(r, "bound") + 3 * t.num(r, "stderr");
            rows.push_back({{"rho", t.num(r, "rho")}, {"delta", t.num(r, "delta")}, {"N", t.num(r, "N")}, {"deviation", dev},
                            {"bound", t.num(r, "bound")}});
        }
        metrics["rows"] = rows;
        checks.push_back(check("|S_delta,N - S| <= bound (3 se)", ok));
    } else if (kind == "energy-approx") {
        const auto t = read_table(dir / "energy_approx.csv");
        std::map<int, std::pair<double, int>> acc;
        for (std::size_t r = 0; r < t.rows.size(); ++r) {
            auto& a = acc[int(t.num(r, "size_index"))];
            a.first += t.num(r, "per_site_total");
            a.second += 1;
        }
        ojson means = ojson::array();
        bool dec = true;
        double prev = 1e300;
        for (const auto& [k, a] : acc) {
            const double m = a.first / a.second;
            means.push_back(m);
            dec = dec && m < prev;
            prev = m;
        }
        metrics["mean_per_site_total"] = means;
        checks.push_back(check("discrepancy decreases with L", dec));
    }
    bool all = true;
    for (const auto& c : checks) all = all && c["pass"].get<bool>();
    return {{"kind", kind},
            {"run_status", manifest.value("status", "unknown")},
            {"metrics", metrics},
            {"checks", checks},
            {"all_pass", all}};
}

}  // namespace

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k{"mf-scan",        "barrier",       "contraction",   "flow-strip",
                                            "mc-run",         "disorder-stats", "entropy-check", "energy-approx"};
    return k;
}

RawConfig parse_config(std::istream& in, const std::string& origin) {
    RawConfig out;
    std::string line, section = "run";
    std::vector<std::string> errors;
    for (int n = 1; std::getline(in, line); ++n) {
        const auto t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        const std::string where = origin + ":" + std::to_string(n) + ": ";
        if (t.front() == '[') {
            if (t.back() != ']' || t.size() < 3) errors.push_back(where + "malformed section header");
            else section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            errors.push_back(where + "expected key = value");
            continue;
        }
        const auto key = trim(t.substr(0, eq));
        auto value = trim(t.substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
        if (key.empty()) {
            errors.push_back(where + "empty key");
            continue;
        }
        const auto full = section + "." + key;
        if (out.count(full)) errors.push_back(where + "duplicate key " + full);
        out[full] = value;
    }
    if (!errors.empty()) {
        std::string msg = "config syntax errors:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return out;
}

RawConfig read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    return parse_config(in, path);
}

EnvLookup process_environment() {
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    };
}

double ExperimentConfig::real(const std::string& key) const { return *to_real(text(key)); }

std::optional<double> ExperimentConfig::real_or_auto(const std::string& key) const {
    const auto& v = text(key);
    if (v == "auto") return std::nullopt;
    return *to_real(v);
}

long long ExperimentConfig::integer(const std::string& key) const { return *to_integer(text(key)); }

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : split_list(text(key))) out.push_back(*to_real(s));
    return out;
}

std::vector<long long> ExperimentConfig::integers(const std::string& key) const {
    std::vector<long long> out;
    for (const auto& s : split_list(text(key))) out.push_back(*to_integer(s));
    return out;
}

const std::string& ExperimentConfig::text(const std::string& key) const {
    const auto it = values.find(key);
    if (it == values.end()) throw ConfigError("internal: key " + key + " not in the resolved config");
    return it->second;
}

ExperimentConfig resolve_config(const std::string& kind, const RawConfig& raw, const CommandLine& cli,
                                const EnvLookup& env) {
    const auto spec = schema(kind);
    RawConfig merged = raw;
    std::vector<std::string> unknown, missing, badtype;
    for (const auto& [k, v] : raw) {
        (void)v;
        if (std::none_of(spec.begin(), spec.end(), [&](const KeySpec& s) { return s.key == k; })) unknown.push_back(k);
    }
    for (const auto& s : spec)
        if (auto v = env(env_name(s.key))) merged[s.key] = trim(*v);
    if (cli.seed) merged["run.seed"] = std::to_string(*cli.seed);
    if (cli.out_dir) merged["output.dir"] = *cli.out_dir;
    if (cli.threads) merged["run.threads"] = std::to_string(*cli.threads);

    ExperimentConfig c;
    c.kind = kind;
    for (const auto& s : spec) {
        auto it = merged.find(s.key);
        if (it == merged.end()) {
            if (!s.fallback) {
                missing.push_back(s.key);
                continue;
            }
            c.values[s.key] = *s.fallback;
        } else {
            c.values[s.key] = it->second;
        }
        if (!well_typed(c.values[s.key], s.type))
            badtype.push_back(s.key + " = '" + c.values[s.key] + "' is not " + type_name(s.type));
    }
    if (!unknown.empty() || !missing.empty() || !badtype.empty()) {
        std::string msg = "invalid configuration for " + kind + ":";
        auto list = [&](const char* title, const std::vector<std::string>& xs) {
            if (xs.empty()) return;
            msg += std::string("\n  ") + title + ":";
            for (const auto& x : xs) msg += "\n    " + x;
        };
        list("unknown keys", unknown);
        list("missing required keys", missing);
        list("malformed values", badtype);
        throw ConfigError(msg);
    }
    if (c.text("experiment.kind") != kind)
        throw ConfigError("config declares experiment.kind = " + c.text("experiment.kind") + " but " + kind +
                          " was requested");
    c.seed = *to_seed(c.text("run.seed"));
    const auto threads = c.integer("run.threads");
    if (threads < 1) throw ConfigError("run.threads must be >= 1");
    c.threads = unsigned(threads);
    c.out_dir = c.text("output.dir");
    return c;
}

int run_experiment(const ExperimentConfig& config, std::ostream& log) {
    Plan plan;
    try {
        plan = make_plan(config);
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const DomainError& e) {
        log << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    const fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        log << "cannot create output directory " << dir << ": " << ec.message() << '\n';
        return kExitFailure;
    }

    ojson manifest;
    manifest["tool"] = "rfio";
    manifest["version"] = RFIO_VERSION;
    manifest["revision"] = RFIO_REVISION;
    manifest["kind"] = config.kind;
    manifest["config"] = ojson::object();
    for (const auto& [k, v] : config.values) manifest["config"][k] = v;
    ojson streams = ojson::object();
    for (const auto& s : plan.streams) streams[s] = derive_seed(config.seed, s);
    manifest["seeds"] = {{"root", config.seed}, {"streams", streams}};
    manifest["realized_scales"] = plan.scales;
    manifest["threads"] = config.threads;
    manifest["started_utc"] = utc_now();

    Artifacts art(dir);
    int code = kExitOk;
    try {
        manifest["results"] = plan.execute(art, log);
        manifest["status"] = "ok";
    } catch (const ConfigError& e) {
        code = kExitConfig;
        manifest["status"] = "config-error";
        manifest["error"] = e.what();
    } catch (const DomainError& e) {
        code = kExitConfig;
        manifest["status"] = "config-error";
        manifest["error"] = e.what();
    } catch (const ConvergenceError& e) {
        code = kExitNumerical;
        manifest["status"] = "non-convergence";
        manifest["error"] = e.what();
    } catch (const InvariantViolation& e) {
        code = kExitNumerical;
        manifest["status"] = "invariant-violation";
        manifest["error"] = e.what();
    } catch (const InfeasibleError& e) {
        code = kExitNumerical;
        manifest["status"] = "infeasible";
        manifest["error"] = e.what();
    } catch (const std::exception& e) {
        code = kExitFailure;
        manifest["status"] = "failure";
        manifest["error"] = e.what();
    }
    if (code != kExitOk) log << manifest["status"].get<std::string>() << ": " << manifest["error"].get<std::string>() << '\n';
    manifest["artifacts"] = art.files();
    manifest["exit_code"] = code;
    manifest["finished_utc"] = utc_now();
    std::ofstream mf(dir / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    return code;
}

int report(const std::string& dir_name, std::ostream& out, std::ostream& log) {
    const fs::path dir(dir_name);
    if (!fs::exists(dir / "manifest.json")) {
        log << "missing artifacts in " << dir << ":\n  manifest.json\n"
            << "a completed run also holds, per experiment kind:\n";
        for (const auto& [k, files] : expected_artifacts()) {
            log << "  " << k << ":";
            for (const auto& f : files) log << ' ' << f;
            log << '\n';
        }
        return kExitMissingArtifacts;
    }
    ojson manifest;
    try {
        std::ifstream in(dir / "manifest.json");
        manifest = ojson::parse(in);
    } catch (const std::exception& e) {
        log << "unreadable manifest.json: " << e.what() << '\n';
        return kExitMissingArtifacts;
    }
    const std::string kind = manifest.value("kind", "");
    const auto it = expected_artifacts().find(kind);
    if (it == expected_artifacts().end()) {
        log << "manifest.json names unknown experiment kind '" << kind << "'\n";
        return kExitMissingArtifacts;
    }
    std::vector<std::string> missing;
    for (const auto& f : it->second)
        if (!fs::exists(dir / f)) missing.push_back(f);
    if (!missing.empty()) {
        log << "missing artifacts in " << dir << ":\n";
        for (const auto& f : missing) log << "  " << f << '\n';
        return kExitMissingArtifacts;
    }
    ojson summary;
    try {
        summary = summarize(kind, dir, manifest);
    } catch (const std::exception& e) {
        log << "malformed artifact: " << e.what() << '\n';
        return kExitMissingArtifacts;
    }
    std::ofstream sf(dir / "summary.json", std::ios::binary);
    sf << summary.dump(2) << '\n';
    out << summary.dump(2) << '\n';
    return kExitOk;
}

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& log, const EnvLookup& env) {
    CLI::App app{"Random-field XY experiment driver"};
    app.require_subcommand(1);
    std::string config_path, report_dir;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::map<std::string, CLI::App*> subs;
    for (const auto& k : experiment_kinds()) {
        auto* sub = app.add_subcommand(k, "run the " + k + " experiment");
        sub->add_option("--config", config_path, "key = value config with [section] headers")->required();
        sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
        sub->add_option("--seed", seed, "root seed (overrides run.seed)");
        sub->add_option("--threads", threads, "worker threads (overrides run.threads)")->check(CLI::PositiveNumber);
        subs[k] = sub;
    }
    auto* rep = app.add_subcommand("report", "summarize a finished run directory");
    rep->add_option("dir", report_dir, "run directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, log) == 0 ? kExitOk : kExitConfig;
    }

    if (rep->parsed()) return report(report_dir, out, log);
    for (const auto& [k, sub] : subs) {
        if (!sub->parsed()) continue;
        try {
            const auto raw = read_config_file(config_path);
            const auto cfg = resolve_config(k, raw, {out_dir, seed, threads}, env);
            return run_experiment(cfg, log);
        } catch (const ConfigError& e) {
            log << "config error: " << e.what() << '\n';
            return kExitConfig;
        }
    }
    return kExitFailure;
}

}  // namespace rfio
