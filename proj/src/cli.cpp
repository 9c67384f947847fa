#include "tfim/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <set>
#include <sstream>

#include "tfim/cache.hpp"
#include "tfim/csv.hpp"
#include "tfim/dynamics.hpp"
#include "tfim/ed.hpp"
#include "tfim/errors.hpp"
#include "tfim/phase.hpp"
#include "tfim/qmc.hpp"
#include "tfim/quench.hpp"

namespace fs = std::filesystem;

namespace tfim::cli {

namespace {

// Keys that name input files; resolved against the config file's directory.
const std::set<std::pair<std::string, std::string>> kPathKeys{{"fss", "input"}, {"critical_line", "input"}};

const std::map<std::string, std::set<std::string>> kSchema{
    {"run", {"seed", "output_dir", "cache_dir", "threads", "label"}},
    {"lattice", {"L", "J"}},
    {"qmc", {"n_thermalization", "n_measure", "n_bins", "n_chains"}},
    {"equilibrium", {"engine", "h", "T"}},
    {"quench", {"h_i", "T_i", "ground_state", "h_f", "engine", "bracket_lo", "bracket_hi"}},
    {"critical_line", {"h", "L_small", "L_large", "n_thermalization", "n_measure", "input"}},
    {"phase_diagram", {"h_i", "T_i", "h_f", "engine"}},
    {"fss", {"input"}},
    {"dynamics", {"h_i", "T_i", "ground_state", "h_f", "observables", "t_max", "n_times", "tail_start", "T_f"}},
};

const std::map<std::string, std::set<std::string>> kCommandSections{
    {"equilibrium", {"run", "lattice", "qmc", "equilibrium"}},
    {"tf-curve", {"run", "lattice", "qmc", "quench"}},
    {"critical-line", {"run", "lattice", "qmc", "critical_line"}},
    {"phase-diagram", {"run", "lattice", "qmc", "critical_line", "phase_diagram"}},
    {"fss", {"run", "fss"}},
    {"dynamics", {"run", "lattice", "dynamics"}},
    {"cache", {"run"}},
};

std::string field(const std::string& section, const std::string& key) { return "[" + section + "] " + key; }

[[noreturn]] void bad(const std::string& section, const std::string& key, const std::string& what) {
    throw ConfigError("config error: " + field(section, key) + ": " + what);
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Typed, validating view of a RunConfig.
class Reader {
public:
    explicit Reader(const RunConfig& c) : c_(c) {}

    const std::string* raw(const std::string& s, const std::string& k) const { return c_.find(s, k); }

    std::string text(const std::string& s, const std::string& k, std::optional<std::string> def = {}) const {
        if (auto v = raw(s, k)) return *v;
        if (def) return *def;
        bad(s, k, "missing");
    }

    double number(const std::string& s, const std::string& k, std::optional<double> def = {}) const {
        const auto* v = raw(s, k);
        if (!v) {
            if (def) return *def;
            bad(s, k, "missing");
        }
        return parse(s, k, *v);
    }

    long long integer(const std::string& s, const std::string& k, std::optional<long long> def = {}) const {
        const auto* v = raw(s, k);
        if (!v) {
            if (def) return *def;
            bad(s, k, "missing");
        }
        long long out = 0;
        const auto t = trim(*v);
        const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        if (ec != std::errc() || p != t.data() + t.size()) bad(s, k, "'" + *v + "' is not an integer");
        return out;
    }

    bool boolean(const std::string& s, const std::string& k, bool def) const {
        const auto* v = raw(s, k);
        if (!v) return def;
        const auto t = trim(*v);
        if (t == "true" || t == "1" || t == "yes") return true;
        if (t == "false" || t == "0" || t == "no") return false;
        bad(s, k, "'" + *v + "' is not a boolean");
    }

    // "a, b, c" or an inclusive range "start:stop:step".
    std::vector<double> list(const std::string& s, const std::string& k) const {
        const auto v = text(s, k);
        std::vector<double> out;
        if (v.find(':') != std::string::npos) {
            std::vector<double> parts;
            std::stringstream ss(v);
            for (std::string item; std::getline(ss, item, ':');) parts.push_back(parse(s, k, item));
            if (parts.size() != 3 || !(parts[2] > 0.0) || parts[1] < parts[0])
                bad(s, k, "range must be start:stop:step with step > 0 and stop >= start");
            const auto n = static_cast<long>(std::floor((parts[1] - parts[0]) / parts[2] + 1e-9));
            for (long i = 0; i <= n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[2]);
        } else {
            std::stringstream ss(v);
            for (std::string item; std::getline(ss, item, ',');) out.push_back(parse(s, k, item));
        }
        if (out.empty()) bad(s, k, "empty list");
        return out;
    }

private:
    static double parse(const std::string& s, const std::string& k, const std::string& v) {
        try {
            const double x = parse_number(trim(v));
            if (!std::isfinite(x)) bad(s, k, "'" + v + "' is not finite");
            return x;
        } catch (const InvalidArgument&) {
            bad(s, k, "'" + v + "' is not a number");
        }
    }

    const RunConfig& c_;
};

void require(bool ok, const std::string& s, const std::string& k, const std::string& what) {
    if (!ok) bad(s, k, what);
}

void strictly_increasing(const std::vector<double>& v, const std::string& s, const std::string& k) {
    for (std::size_t i = 1; i < v.size(); ++i) require(v[i] > v[i - 1], s, k, "values must be strictly increasing");
}

// ---- typed parameter sets -------------------------------------------------

struct RunParams {
    std::uint64_t seed = 1;
    fs::path output_dir;
    fs::path cache_dir;
    int threads = 1;
};

RunParams read_run(const Reader& r) {
    RunParams p;
    const auto seed = r.integer("run", "seed", 1);
    require(seed >= 0, "run", "seed", "must be >= 0");
    p.seed = static_cast<std::uint64_t>(seed);
    p.output_dir = r.text("run", "output_dir", std::string("tfim_out"));
    p.cache_dir = r.text("run", "cache_dir", std::string());
    p.threads = static_cast<int>(r.integer("run", "threads", 1));
    require(p.threads >= 1, "run", "threads", "must be >= 1");
    return p;
}

struct LatticeParams {
    int L = 0;
    double J = 1.0;
};

LatticeParams read_lattice(const Reader& r) {
    LatticeParams p;
    p.L = static_cast<int>(r.integer("lattice", "L"));
    require(p.L >= 2, "lattice", "L", "must be >= 2");
    p.J = r.number("lattice", "J", 1.0);
    require(p.J >= 0.0, "lattice", "J", "must be >= 0");
    return p;
}

quench::QmcSettings read_qmc(const Reader& r, const RunParams& run, double J) {
    quench::QmcSettings s;
    s.n_thermalization = r.integer("qmc", "n_thermalization", 10'000);
    s.n_measure = r.integer("qmc", "n_measure", 100'000);
    s.n_bins = static_cast<int>(r.integer("qmc", "n_bins", 32));
    s.n_chains = static_cast<int>(r.integer("qmc", "n_chains", 1));
    require(s.n_thermalization >= 0, "qmc", "n_thermalization", "must be >= 0");
    require(s.n_bins >= 2, "qmc", "n_bins", "must be >= 2");
    require(s.n_measure >= s.n_bins && s.n_measure % s.n_bins == 0, "qmc", "n_measure", "must be a multiple of n_bins");
    require(s.n_chains >= 1, "qmc", "n_chains", "must be >= 1");
    s.master_seed = run.seed;
    s.J = J;
    return s;
}

std::string engine(const Reader& r, const std::string& section) {
    const auto e = r.text(section, "engine", std::string("qmc"));
    require(e == "qmc" || e == "ed", section, "engine", "must be qmc or ed");
    return e;
}

struct EquilibriumParams {
    std::string engine;
    std::vector<double> h, T;
};

EquilibriumParams read_equilibrium(const Reader& r) {
    EquilibriumParams p;
    p.engine = engine(r, "equilibrium");
    p.h = r.list("equilibrium", "h");
    p.T = r.list("equilibrium", "T");
    for (double h : p.h) require(h >= 0.0, "equilibrium", "h", "must be >= 0");
    for (double T : p.T) require(T > 0.0, "equilibrium", "T", "must be > 0");
    return p;
}

struct QuenchParams {
    std::string engine;
    double h_i = 0.0;
    double T_i = 0.0;
    bool ground_state = false;
    std::vector<double> h_f;
    std::optional<std::pair<double, double>> bracket;
};

QuenchParams read_quench(const Reader& r, const LatticeParams& lat) {
    QuenchParams p;
    p.engine = engine(r, "quench");
    p.h_i = r.number("quench", "h_i");
    require(p.h_i >= 0.0, "quench", "h_i", "must be >= 0");
    p.ground_state = r.boolean("quench", "ground_state", false);
    if (!p.ground_state) {
        p.T_i = r.number("quench", "T_i");
        require(p.T_i > 0.0, "quench", "T_i", "must be > 0 (set ground_state = true for T_i = 0)");
    } else {
        require(p.engine == "ed", "quench", "ground_state", "needs engine = ed");
    }
    p.h_f = r.list("quench", "h_f");
    for (double h : p.h_f) require(h >= 0.0, "quench", "h_f", "must be >= 0");
    strictly_increasing(p.h_f, "quench", "h_f");
    if (r.raw("quench", "bracket_lo") || r.raw("quench", "bracket_hi")) {
        p.bracket = {r.number("quench", "bracket_lo"), r.number("quench", "bracket_hi")};
        require(0.0 < p.bracket->first && p.bracket->first < p.bracket->second, "quench", "bracket_hi",
                "need 0 < bracket_lo < bracket_hi");
    }
    if (p.engine == "ed") require(lat.L <= 4, "lattice", "L", "engine = ed supports L <= 4");
    return p;
}

struct LineParams {
    std::optional<fs::path> input;
    std::vector<double> h;
    int L_small = 0;
    int L_large = 0;
    quench::QmcSettings settings;
};

LineParams read_line(const Reader& r, const LatticeParams& lat, const quench::QmcSettings& base) {
    LineParams p;
    if (r.raw("critical_line", "input")) {
        p.input = r.text("critical_line", "input");
        return p;
    }
    p.h = r.list("critical_line", "h");
    for (double h : p.h) require(h >= 0.0 && h <= 3.0, "critical_line", "h", "must lie in [0, 3]");
    strictly_increasing(p.h, "critical_line", "h");
    p.L_large = static_cast<int>(r.integer("critical_line", "L_large", lat.L));
    p.L_small = static_cast<int>(r.integer("critical_line", "L_small", std::max(2, lat.L - 4)));
    require(p.L_small >= 2, "critical_line", "L_small", "must be >= 2");
    require(p.L_large > p.L_small, "critical_line", "L_large", "must exceed L_small");
    p.settings = base;
    p.settings.n_thermalization = r.integer("critical_line", "n_thermalization", base.n_thermalization);
    p.settings.n_measure = r.integer("critical_line", "n_measure", base.n_measure);
    require(p.settings.n_measure >= p.settings.n_bins && p.settings.n_measure % p.settings.n_bins == 0, "critical_line",
            "n_measure", "must be a multiple of n_bins");
    return p;
}

struct DiagramParams {
    std::string engine;
    double h_i = 0.0;
    std::vector<double> T_i, h_f;
};

DiagramParams read_diagram(const Reader& r, const LatticeParams& lat) {
    DiagramParams p;
    p.engine = engine(r, "phase_diagram");
    p.h_i = r.number("phase_diagram", "h_i");
    require(p.h_i >= 0.0, "phase_diagram", "h_i", "must be >= 0");
    p.T_i = r.list("phase_diagram", "T_i");
    p.h_f = r.list("phase_diagram", "h_f");
    strictly_increasing(p.h_f, "phase_diagram", "h_f");
    for (double T : p.T_i) require(T >= 1.0 / lat.L - 1e-12, "phase_diagram", "T_i", "must be >= 1/L");
    if (p.engine == "ed") require(lat.L <= 4, "lattice", "L", "engine = ed supports L <= 4");
    return p;
}

struct DynamicsParams {
    QuenchSpec quench;
    std::vector<ed::Observable> observables;
    double t_max = 10.0;
    int n_times = 201;
    double tail_start = 5.0;
    std::optional<double> T_f;
};

DynamicsParams read_dynamics(const Reader& r, const LatticeParams& lat) {
    DynamicsParams p;
    require(lat.L <= 4, "lattice", "L", "dynamics needs exact diagonalization, L <= 4");
    p.quench.h_i = r.number("dynamics", "h_i");
    p.quench.h_f = r.number("dynamics", "h_f");
    p.quench.ground_state = r.boolean("dynamics", "ground_state", false);
    require(p.quench.h_i >= 0.0, "dynamics", "h_i", "must be >= 0");
    require(p.quench.h_f >= 0.0, "dynamics", "h_f", "must be >= 0");
    if (!p.quench.ground_state) {
        p.quench.T_i = r.number("dynamics", "T_i");
        require(p.quench.T_i > 0.0, "dynamics", "T_i", "must be > 0 (set ground_state = true for T_i = 0)");
    }
    std::stringstream ss(r.text("dynamics", "observables", std::string("M2, C_nn")));
    for (std::string item; std::getline(ss, item, ',');) {
        try {
            p.observables.push_back(ed::observable_from_name(trim(item)));
        } catch (const InvalidArgument&) {
            bad("dynamics", "observables", "unknown observable '" + trim(item) + "'");
        }
    }
    p.t_max = r.number("dynamics", "t_max", 10.0);
    require(p.t_max > 0.0, "dynamics", "t_max", "must be > 0");
    p.n_times = static_cast<int>(r.integer("dynamics", "n_times", 201));
    require(p.n_times >= 2, "dynamics", "n_times", "must be >= 2");
    p.tail_start = r.number("dynamics", "tail_start", 0.5 * p.t_max);
    require(p.tail_start >= 0.0 && p.tail_start <= p.t_max, "dynamics", "tail_start", "must lie in [0, t_max]");
    if (r.raw("dynamics", "T_f")) {
        p.T_f = r.number("dynamics", "T_f");
        require(*p.T_f >= 0.0, "dynamics", "T_f", "must be >= 0");
    }
    return p;
}

// ---- shared plumbing --------------------------------------------------------

struct Context {
    RunConfig config;
    RunParams run;
    std::ostream& log;
    std::unique_ptr<CacheDir> disk;
    std::unique_ptr<quench::EvaluationCache> cache;
    CommandOutcome outcome;
    nlohmann::json extra_seeds = nlohmann::json::object();

    Context(const RunConfig& c, std::ostream& l) : config(c), run(read_run(Reader(c))), log(l) {
        if (!run.cache_dir.empty()) disk = std::make_unique<CacheDir>(run.cache_dir);
        cache = std::make_unique<quench::EvaluationCache>(disk.get());
    }

    void write(const std::string& name, const std::string& bytes) {
        const auto path = run.output_dir / name;
        write_file_atomic(path, bytes);
        outcome.files.push_back(path);
    }
};

void write_manifest(Context& ctx, double wall_time) {
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& f : ctx.outcome.files) outputs[f.filename().string()] = sha256_file(f);
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& [key, seed] : ctx.cache->seeds()) seeds.push_back({{"key", key}, {"seed", seed}});
    const nlohmann::json manifest{{"schema_version", kCsvSchemaVersion},
                                  {"tool", "tfim_dyn"},
                                  {"tool_version", kToolVersion},
                                  {"engine_version", kEngineVersion},
                                  {"command", ctx.config.command},
                                  {"config", to_json(ctx.config)},
                                  {"master_seed", ctx.run.seed},
                                  {"seeds", std::move(seeds)},
                                  {"other_seeds", ctx.extra_seeds},
                                  {"wall_time_s", wall_time},
                                  {"outputs", std::move(outputs)}};
    ctx.outcome.manifest = ctx.run.output_dir / "manifest.json";
    write_file_atomic(ctx.outcome.manifest, manifest.dump(2) + "\n");
}

std::shared_ptr<const ed::Spectrum> spectrum(int L, double J, double h) {
    return std::make_shared<const ed::Spectrum>(ed::diagonalize(build_lattice(L), {J, h}, true));
}

// ---- commands ----------------------------------------------------------------

void cmd_equilibrium(Context& ctx) {
    const Reader r(ctx.config);
    const auto lat = read_lattice(r);
    const auto settings = read_qmc(r, ctx.run, lat.J);
    const auto p = read_equilibrium(r);
    CsvTable table({"schema_version", "engine", "L", "J", "h", "T", "observable", "value", "error", "n_bins", "tau_int"});
    nlohmann::json sets = nlohmann::json::array();
    for (double h : p.h) {
        std::shared_ptr<const ed::Spectrum> spec;
        if (p.engine == "ed") spec = spectrum(lat.L, lat.J, h);
        for (double T : p.T) {
            ctx.log << "equilibrium L=" << lat.L << " h=" << h << " T=" << T << " (" << p.engine << ")\n";
            qmc::EstimateSet set;
            if (p.engine == "ed") {
                set = quench::exact_estimates(*spec, T);
            } else {
                auto config = settings.config(lat.L, h, T, quench::Precision::full);
                config.threads = ctx.run.threads;
                set = ctx.cache->run(config);
            }
            for (auto e : qmc::kAllEstimators) {
                if (!set.has(e)) continue;
                const auto& est = set.at(e);
                table.row({std::to_string(kCsvSchemaVersion), p.engine, std::to_string(lat.L), format_number(lat.J),
                           format_number(h), format_number(T), std::string(qmc::name(e)), format_number(est.mean),
                           format_number(est.error), std::to_string(est.n_bins), format_number(est.tau_int)});
            }
            sets.push_back(qmc::to_json(set));
        }
    }
    ctx.write("equilibrium.csv", table.str());
    ctx.write("equilibrium.json", nlohmann::json{{"engine", p.engine}, {"results", std::move(sets)}}.dump(1) + "\n");
}

quench::EvaluatorFactory evaluator_factory(Context& ctx, const std::string& eng, const LatticeParams& lat,
                                           const quench::QmcSettings& settings) {
    if (eng == "ed")
        return [L = lat.L, J = lat.J](double h_f) { return quench::ed_evaluator(spectrum(L, J, h_f)); };
    auto* cache = ctx.cache.get();
    return [L = lat.L, settings, cache](double h_f) { return quench::qmc_evaluator(L, h_f, settings, *cache); };
}

qmc::EstimateSet initial_ensemble(Context& ctx, const std::string& eng, const LatticeParams& lat,
                                  const quench::QmcSettings& settings, double h_i, double T_i) {
    if (eng == "ed") return quench::exact_estimates(*spectrum(lat.L, lat.J, h_i), T_i);
    auto config = settings.config(lat.L, h_i, T_i, quench::Precision::full);
    config.threads = ctx.run.threads;
    return ctx.cache->run(config);
}

bool all_failed(const quench::TfCurve& c) {
    for (const auto& p : c.points)
        if (p.result) return false;
    return !c.points.empty();
}

void cmd_tf_curve(Context& ctx) {
    const Reader r(ctx.config);
    const auto lat = read_lattice(r);
    const auto settings = read_qmc(r, ctx.run, lat.J);
    const auto p = read_quench(r, lat);
    ctx.log << "tf-curve L=" << lat.L << " h_i=" << p.h_i << " T_i=" << p.T_i << " over " << p.h_f.size()
            << " h_f points (" << p.engine << ")\n";
    const auto initial = initial_ensemble(ctx, p.engine, lat, settings, p.h_i, p.T_i);
    quench::CurveOptions options;
    options.threads = ctx.run.threads;
    options.bracket = p.bracket;
    const auto curve = quench::tf_curve(lat.L, lat.J, p.h_i, p.T_i, initial, p.h_f,
                                        evaluator_factory(ctx, p.engine, lat, settings), options);
    ctx.write("tf_curve.csv", quench::tf_curve_csv(curve));
    ctx.write("tf_curve.json", quench::tf_curve_json(curve).dump(1) + "\n");
    if (all_failed(curve)) {
        ctx.outcome.exit_code = kExitRuntime;
        ctx.outcome.message = "every h_f point failed: " + curve.points.front().error;
    }
}

phase::CriticalLine critical_line(Context& ctx, const LineParams& p) {
    if (p.input) {
        ctx.log << "critical line from " << p.input->string() << "\n";
        return phase::critical_line_from_json(nlohmann::json::parse(read_file(*p.input)));
    }
    ctx.log << "critical line from Binder crossings L=" << p.L_small << "," << p.L_large << " at " << p.h.size()
            << " fields\n";
    auto* cache = ctx.cache.get();
    auto factory = [settings = p.settings, cache](double h) { return phase::qmc_binder_evaluator(h, settings, *cache); };
    phase::LineOptions options;
    options.threads = ctx.run.threads;
    return phase::build_critical_line(p.h, p.L_small, p.L_large, factory, options);
}

void cmd_critical_line(Context& ctx) {
    const Reader r(ctx.config);
    const auto lat = read_lattice(r);
    const auto settings = read_qmc(r, ctx.run, lat.J);
    const auto line = critical_line(ctx, read_line(r, lat, settings));
    ctx.write("critical_line.csv", phase::critical_line_csv(line));
    ctx.write("critical_line.json", phase::critical_line_json(line).dump(1) + "\n");
}

void cmd_phase_diagram(Context& ctx) {
    const Reader r(ctx.config);
    const auto lat = read_lattice(r);
    const auto settings = read_qmc(r, ctx.run, lat.J);
    const auto lp = read_line(r, lat, settings);
    const auto p = read_diagram(r, lat);
    const auto line = critical_line(ctx, lp);
    if (!lp.input) {
        ctx.write("critical_line.csv", phase::critical_line_csv(line));
        ctx.write("critical_line.json", phase::critical_line_json(line).dump(1) + "\n");
    }
    phase::InitialFactory initial = [&](double T_i) {
        ctx.log << "phase-diagram T_i=" << T_i << "\n";
        return initial_ensemble(ctx, p.engine, lat, settings, p.h_i, T_i);
    };
    phase::DiagramOptions options;
    options.curve.threads = ctx.run.threads;
    const auto d = phase::phase_diagram(lat.L, lat.J, p.h_i, p.T_i, p.h_f, line, initial,
                                        evaluator_factory(ctx, p.engine, lat, settings), options);
    ctx.write("phase_diagram.csv", phase::phase_diagram_csv(d));
    ctx.write("phase_boundary.csv", phase::phase_boundary_csv(d));
    ctx.write("phase_diagram.json", phase::phase_diagram_json(d).dump(1) + "\n");
    bool any = false;
    for (const auto& c : d.cells) any = any || c.phase.has_value();
    if (!any) {
        ctx.outcome.exit_code = kExitRuntime;
        ctx.outcome.message = "no phase-diagram cell could be classified";
    }
}

void cmd_fss(Context& ctx) {
    const Reader r(ctx.config);
    const fs::path input = r.text("fss", "input");
    const auto data = parse_csv(read_file(input));
    std::vector<phase::FssPoint> pts;
    try {
        const auto cL = data.column("L"), cT = data.column("T_f"), cs = data.column("sigma");
        for (const auto& row : data.rows)
            pts.push_back({static_cast<int>(parse_number(row[cL])), parse_number(row[cT]), parse_number(row[cs])});
    } catch (const InvalidArgument& e) {
        throw ConfigError("config error: " + field("fss", "input") + ": " + input.string() + ": " + e.what());
    }
    ctx.log << "fss fit over " << pts.size() << " points from " << input.string() << "\n";
    try {
        const auto fit = phase::fss_fit(pts);
        ctx.write("fss.csv", phase::fss_csv(fit, pts));
        ctx.write("fss.json", phase::fss_json(fit).dump(1) + "\n");
    } catch (const FitFailure& e) {
        ctx.outcome.exit_code = kExitRuntime;
        ctx.outcome.message = std::string(e.what()) + "\n" + e.trace();
    }
}

void cmd_dynamics(Context& ctx) {
    const Reader r(ctx.config);
    const auto lat = read_lattice(r);
    const auto p = read_dynamics(r, lat);
    ed::EdOptions options;
    options.threads = ctx.run.threads;
    ctx.log << "dynamics L=" << lat.L << " h_i=" << p.quench.h_i << " -> h_f=" << p.quench.h_f << "\n";
    const dynamics::QuenchPropagator prop(build_lattice(lat.L), lat.J, p.quench, options);
    std::vector<double> times;
    for (int k = 0; k < p.n_times; ++k) times.push_back(p.t_max * k / (p.n_times - 1));
    const auto source = p.T_f ? dynamics::TfSource::imported(*p.T_f, "imported") : dynamics::TfSource::exact();
    std::vector<dynamics::ComparisonReport> reports;
    nlohmann::json series = nlohmann::json::array();
    for (auto obs : p.observables) {
        const auto s = prop.evolve(obs, times);
        const double de = prop.diagonal_ensemble(obs);
        const auto pred = dynamics::steady_state_prediction(prop, obs, source);
        reports.push_back(dynamics::compare(s, de, pred, p.tail_start));
        ctx.write("dynamics_" + std::string(ed::name(obs)) + ".csv", dynamics::time_series_csv(s));
        auto meta = dynamics::time_series_json(s);
        meta["diagonal_ensemble"] = de;
        meta["prediction"] = dynamics::prediction_json(pred);
        series.push_back(std::move(meta));
    }
    ctx.write("dynamics_comparison.csv", dynamics::comparison_csv(reports));
    ctx.write("dynamics.json", nlohmann::json{{"series", std::move(series)}}.dump(1) + "\n");
}

void check_sections(const RunConfig& c) {
    const auto it = kCommandSections.find(c.command);
    if (it == kCommandSections.end()) throw ConfigError("config error: unknown command '" + c.command + "'");
    for (const auto& [section, keys] : c.sections) {
        if (!it->second.count(section)) {
            // Sections for other commands are tolerated so one file can drive several.
            if (!kSchema.count(section)) throw ConfigError("config error: unknown section [" + section + "]");
            continue;
        }
        const auto& allowed = kSchema.at(section);
        for (const auto& [key, value] : keys)
            if (!allowed.count(key)) bad(section, key, "unknown key");
    }
}

} // namespace

bool RunConfig::has(const std::string& section, const std::string& key) const { return find(section, key) != nullptr; }

const std::string* RunConfig::find(const std::string& section, const std::string& key) const {
    const auto s = sections.find(section);
    if (s == sections.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
}

void RunConfig::set(const std::string& section, const std::string& key, std::string value) {
    sections[section][key] = std::move(value);
}

RunConfig parse_ini(const std::string& text, const fs::path& base_dir) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config error: line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig c;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("config error: key '" + section + "' outside any [section]");
        for (const auto& [key, value] : body) {
            std::string v = trim(value.data());
            if (kPathKeys.count({section, key}) && !v.empty() && !base_dir.empty() && fs::path(v).is_relative())
                v = (base_dir / v).lexically_normal().string();
            c.set(section, key, v);
        }
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError("config error: " + std::string(e.what()));
    }
    if (path.extension() == ".json") {
        const auto j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.contains("config"))
            throw ConfigError("config error: " + path.string() + " is not a run manifest");
        return config_from_json(j.at("config"));
    }
    return parse_ini(text, fs::absolute(path).parent_path());
}

void apply_override(RunConfig& config, std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
        throw ConfigError("config error: override '" + std::string(assignment) + "' is not section.key=value");
    config.set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
               trim(assignment.substr(eq + 1)));
}

void apply_environment(RunConfig& config) {
    if (const char* v = std::getenv(kOutputDirEnv); v && *v) config.set("run", "output_dir", v);
    if (const char* v = std::getenv(kCacheDirEnv); v && *v) config.set("run", "cache_dir", v);
}

std::string to_ini(const RunConfig& config) {
    std::ostringstream out;
    for (const auto& [section, keys] : config.sections) {
        out << "[" << section << "]\n";
        for (const auto& [key, value] : keys) out << key << " = " << value << "\n";
        out << "\n";
    }
    return out.str();
}

nlohmann::json to_json(const RunConfig& config) {
    return {{"command", config.command}, {"sections", config.sections}};
}

RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.command = j.value("command", "");
    c.sections = j.at("sections").get<std::map<std::string, std::map<std::string, std::string>>>();
    return c;
}

const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"equilibrium", "tf-curve", "critical-line",
                                                "phase-diagram", "fss", "dynamics"};
    return names;
}

void validate(const RunConfig& config) {
    check_sections(config);
    const Reader r(config);
    const auto run = read_run(r);
    const auto& c = config.command;
    if (c == "fss") {
        r.text("fss", "input");
        return;
    }
    if (c == "cache") return;
    const auto lat = read_lattice(r);
    if (c == "dynamics") {
        read_dynamics(r, lat);
        return;
    }
    const auto settings = read_qmc(r, run, lat.J);
    if (c == "equilibrium") read_equilibrium(r);
    if (c == "tf-curve") read_quench(r, lat);
    if (c == "critical-line" || c == "phase-diagram") read_line(r, lat, settings);
    if (c == "phase-diagram") read_diagram(r, lat);
}

CommandOutcome run_command(const RunConfig& config, std::ostream& log) {
    validate(config);
    Context ctx(config, log);
    const auto start = std::chrono::steady_clock::now();
    try {
        const auto& c = config.command;
        if (c == "equilibrium") cmd_equilibrium(ctx);
        else if (c == "tf-curve") cmd_tf_curve(ctx);
        else if (c == "critical-line") cmd_critical_line(ctx);
        else if (c == "phase-diagram") cmd_phase_diagram(ctx);
        else if (c == "fss") cmd_fss(ctx);
        else if (c == "dynamics") cmd_dynamics(ctx);
        else throw ConfigError("config error: command '" + c + "' produces no data files");
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        ctx.outcome.exit_code = kExitRuntime;
        ctx.outcome.message = e.what();
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ctx.outcome.exit_code == kExitOk || !ctx.outcome.files.empty()) write_manifest(ctx, wall);
    return std::move(ctx.outcome);
}

int cache_command(const std::string& action, const RunConfig& config, std::ostream& out) {
    const auto run = read_run(Reader(config));
    if (run.cache_dir.empty()) throw ConfigError("config error: [run] cache_dir: missing (or set TFIM_CACHE_DIR)");
    if (!fs::is_directory(run.cache_dir)) throw ConfigError("config error: [run] cache_dir: no such directory");
    CacheDir dir(run.cache_dir);
    if (action == "list") {
        for (const auto& name : dir.list()) out << name << "\n";
        return kExitOk;
    }
    if (action == "verify") {
        int failures = 0;
        for (const auto& s : dir.verify()) {
            out << (s.ok ? "ok      " : "FAILED  ") << s.name << (s.ok ? "" : " (" + s.detail + ")") << "\n";
            failures += s.ok ? 0 : 1;
        }
        return failures ? kExitRuntime : kExitOk;
    }
    if (action == "purge") {
        out << "removed " << dir.purge() << " entries\n";
        return kExitOk;
    }
    throw ConfigError("config error: unknown cache action '" + action + "' (list, verify, purge)");
}

} // namespace tfim::cli
