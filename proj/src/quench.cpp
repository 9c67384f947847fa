#include "tfim/quench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "tfim/csv.hpp"
#include "tfim/errors.hpp"
#include "tfim/parallel.hpp"

namespace tfim::quench {

namespace {

ed::Observable ed_counterpart(qmc::Estimator e) {
    switch (e) {
    case qmc::Estimator::total_energy: return ed::Observable::total_energy;
    case qmc::Estimator::zz_bond_sum: return ed::Observable::zz_bond_sum;
    case qmc::Estimator::x_sum: return ed::Observable::x_sum;
    case qmc::Estimator::M2: return ed::Observable::M2;
    case qmc::Estimator::M4: return ed::Observable::M4;
    case qmc::Estimator::C_nn: return ed::Observable::C_nn;
    case qmc::Estimator::binder_U: break;
    }
    throw InvalidArgument("estimator has no single-observable counterpart");
}

std::uint64_t bits(double x) { return std::bit_cast<std::uint64_t>(x); }

} // namespace

QuenchEnergy quench_energy(const qmc::EstimateSet& initial, double h_f, double J) {
    if (!initial.has(qmc::Estimator::zz_bond_sum) || !initial.has(qmc::Estimator::x_sum))
        throw InvalidArgument("quench_energy needs zz_bond_sum and x_sum estimates");
    const auto& zz = initial.at(qmc::Estimator::zz_bond_sum);
    const auto& x = initial.at(qmc::Estimator::x_sum);
    QuenchEnergy q;
    q.E_q = -J * zz.mean - h_f * x.mean;
    q.dE_q = std::hypot(J * zz.error, h_f * x.error);
    q.h_i = initial.config.params.h;
    q.T_i = initial.config.T;
    q.h_f = h_f;
    q.zz_mean = zz.mean;
    q.x_mean = x.mean;
    return q;
}

qmc::EstimateSet exact_estimates(const ed::Spectrum& spectrum, double T) {
    if (!(T >= 0.0)) throw InvalidArgument("exact_estimates: T must be non-negative");
    qmc::EstimateSet set;
    set.config.L = spectrum.lattice.L();
    set.config.params = spectrum.params;
    set.config.T = T;
    set.config.rng_seed = 0;
    auto value = [&](ed::Observable obs) {
        return T == 0.0 ? ed::ground_state_expectation(spectrum, obs).value
                        : ed::thermal_expectation(spectrum, T, obs);
    };
    for (auto e : qmc::kAllEstimators) {
        Estimate est;
        est.tau_int = std::numeric_limits<double>::quiet_NaN();
        if (e == qmc::Estimator::binder_U) {
            const double m2 = value(ed::Observable::M2);
            est.mean = 1.0 - value(ed::Observable::M4) / (3.0 * m2 * m2);
        } else {
            est.mean = value(ed_counterpart(e));
        }
        set.set(e, est);
    }
    return set;
}

std::pair<double, double> default_bracket(double T_i, int L) {
    return {std::max(T_i / 4.0, 1.0 / L), 4.0 * std::max(T_i, 1.0)};
}

TfResult solve_tf(double h_f, const QuenchEnergy& eq, const Evaluator& evaluator, std::pair<double, double> bracket,
                  const SolveOptions& options) {
    auto [T1, T2] = bracket;
    if (!(T1 > 0.0) || !(T1 < T2)) throw InvalidArgument("solve_tf: bracket must satisfy 0 < T1 < T2");
    if (!std::isfinite(eq.E_q) || eq.dE_q < 0.0) throw InvalidArgument("solve_tf: invalid quench energy");

    TfResult r;
    auto eval = [&](double T, Precision p) {
        auto e = evaluator(T, p);
        r.trail.push_back(e);
        return e;
    };
    auto check_order = [&](const Evaluation& a, const Evaluation& b) {
        if (a.E - b.E > a.dE + b.dE)
            throw DataQualityError("energy decreases with temperature between T=" + format_number(a.T) +
                                   " and T=" + format_number(b.T) + " at h_f=" + format_number(h_f));
    };

    Precision precision = Precision::coarse;
    auto e1 = eval(T1, precision);
    auto e2 = eval(T2, precision);
    for (int lower = 0, upper = 0;;) {
        check_order(e1, e2);
        if (eq.E_q < e1.E) {
            if (lower++ == options.max_expansions)
                throw BracketFailure("quench energy " + format_number(eq.E_q) + " below E(T=" + format_number(e1.T) +
                                     ") = " + format_number(e1.E) + " at h_f=" + format_number(h_f));
            T1 /= 2.0;
            e1 = eval(T1, precision);
        } else if (eq.E_q > e2.E) {
            if (upper++ == options.max_expansions)
                throw BracketFailure("quench energy " + format_number(eq.E_q) + " above E(T=" + format_number(e2.T) +
                                     ") = " + format_number(e2.E) + " at h_f=" + format_number(h_f));
            T2 *= 2.0;
            e2 = eval(T2, precision);
        } else {
            break;
        }
    }

    const bool exact = eq.dE_q == 0.0 && e1.dE == 0.0 && e2.dE == 0.0;
    auto within = [&](const Evaluation& e) { return std::abs(e.E - eq.E_q) <= e.dE + eq.dE_q; };
    Evaluation last = e1;
    while (r.n_steps < options.max_steps) {
        const double Tm = 0.5 * (T1 + T2);
        auto em = eval(Tm, precision);
        ++r.n_steps;
        bool stop = within(em);
        if (stop && precision == Precision::coarse && !exact) {
            // confirm the coarse verdict at full precision; once refuted, the
            // remaining steps stay at full precision
            precision = Precision::full;
            em = eval(Tm, precision);
            stop = within(em);
        }
        last = em;
        if (stop) {
            r.stop_rule_fired = true;
            break;
        }
        // interval exhausted at double precision
        if (Tm <= T1 || Tm >= T2) break;
        if ((e1.E - eq.E_q) * (em.E - eq.E_q) < 0.0) {
            T2 = Tm;
            e2 = em;
        } else {
            T1 = Tm;
            e1 = em;
        }
    }
    r.T_f = last.T;
    r.interval_lo = T1;
    r.interval_hi = T2;

    for (double sign : {-1.0, 1.0}) r.extra_runs.push_back(evaluator(r.T_f * (1.0 + sign * options.extra_offset), Precision::full));
    std::tie(r.T_lo, r.T_hi) = tf_bounds(r, eq, r.extra_runs, options);
    return r;
}

std::pair<double, double> local_slope(double T_f, std::span<const Evaluation> extra) {
    if (extra.size() < 2) throw InvalidArgument("local slope needs at least two evaluations");
    std::vector<Evaluation> sorted(extra.begin(), extra.end());
    std::sort(sorted.begin(), sorted.end(),
              [T_f](const Evaluation& a, const Evaluation& b) { return std::abs(a.T - T_f) < std::abs(b.T - T_f); });
    const auto& a = sorted[0];
    auto it = std::find_if(sorted.begin() + 1, sorted.end(), [&](const Evaluation& e) { return e.T != a.T; });
    if (it == sorted.end()) throw InvalidArgument("local slope needs two distinct temperatures");
    const auto& b = *it;
    const double dT = b.T - a.T;
    return {(b.E - a.E) / dT, std::hypot(a.dE, b.dE) / std::abs(dT)};
}

std::pair<double, double> tf_bounds(const TfResult& result, const QuenchEnergy& eq, std::span<const Evaluation> extra,
                                    const SolveOptions& options) {
    if (extra.size() < 2) throw InvalidArgument("tf_bounds needs at least two extra runs");
    const auto [s, ds] = local_slope(result.T_f, extra);
    double dE_mid = 0.0;
    for (auto it = result.trail.rbegin(); it != result.trail.rend(); ++it)
        if (it->T == result.T_f) {
            dE_mid = it->dE;
            break;
        }
    const double numerator = eq.dE_q + dE_mid;
    if (numerator == 0.0) return {result.T_f, result.T_f};
    if (!(s > options.zero_slope_sigmas * ds))
        return {std::min(result.interval_lo, result.T_f), std::max(result.interval_hi, result.T_f)};
    const double half = numerator / s;
    return {result.T_f - half, result.T_f + half};
}

Evaluator ed_evaluator(std::shared_ptr<const ed::Spectrum> spectrum) {
    return [spectrum](double T, Precision) {
        return Evaluation{T, ed::thermal_expectation(*spectrum, T, ed::Observable::total_energy), 0.0, true};
    };
}

double EvaluationCache::round_temperature(double T) { return std::round(T * 1e6) / 1e6; }

std::uint64_t EvaluationCache::derived_seed(const qmc::QmcConfig& c, std::uint64_t master_seed) {
    return hash_words({master_seed, static_cast<std::uint64_t>(c.L), bits(c.params.J), bits(c.params.h), bits(c.T),
                       static_cast<std::uint64_t>(c.n_thermalization), static_cast<std::uint64_t>(c.n_measure),
                       static_cast<std::uint64_t>(c.n_bins), static_cast<std::uint64_t>(c.n_chains)});
}

std::string EvaluationCache::key(const qmc::QmcConfig& c) {
    std::string k = std::string(kEngineVersion) + "|qmc|L=" + std::to_string(c.L) + "|J=" + format_number(c.params.J) +
                    "|h=" + format_number(c.params.h) + "|T=" + format_number(c.T) +
                    "|therm=" + std::to_string(c.n_thermalization) + "|meas=" + std::to_string(c.n_measure) +
                    "|bins=" + std::to_string(c.n_bins) + "|chains=" + std::to_string(c.n_chains) +
                    "|seed=" + std::to_string(c.rng_seed);
    return k;
}

qmc::EstimateSet EvaluationCache::run(const qmc::QmcConfig& config) {
    const auto k = key(config);
    const auto file = "qmc_" + sha256_hex(k).substr(0, 32) + ".json";
    {
        std::lock_guard lock(mutex_);
        if (auto it = memory_.find(k); it != memory_.end()) {
            ++hits_;
            return it->second;
        }
    }
    if (disk_) {
        if (auto bytes = disk_->load(file)) {
            auto j = nlohmann::json::parse(*bytes, nullptr, false);
            if (!j.is_discarded() && j.value("key", "") == k) {
                auto set = qmc::estimate_set_from_json(j.at("result"));
                set.config.threads = config.threads;
                std::lock_guard lock(mutex_);
                ++hits_;
                memory_.emplace(k, set);
                return set;
            }
        }
    }
    auto set = qmc::run_qmc(config);
    if (disk_) disk_->store(file, nlohmann::json{{"key", k}, {"result", qmc::to_json(set)}}.dump());
    std::lock_guard lock(mutex_);
    memory_.insert_or_assign(k, set);
    return set;
}

std::size_t EvaluationCache::size() const {
    std::lock_guard lock(mutex_);
    return memory_.size();
}

std::size_t EvaluationCache::hits() const {
    std::lock_guard lock(mutex_);
    return hits_;
}

std::vector<std::pair<std::string, std::uint64_t>> EvaluationCache::seeds() const {
    std::lock_guard lock(mutex_);
    std::vector<std::pair<std::string, std::uint64_t>> out;
    for (const auto& [key, set] : memory_) out.emplace_back(key, set.config.rng_seed);
    return out;
}

qmc::QmcConfig QmcSettings::config(int L, double h, double T, Precision precision) const {
    qmc::QmcConfig c;
    c.L = L;
    c.params = {J, h};
    c.T = EvaluationCache::round_temperature(T);
    c.n_bins = n_bins;
    c.n_chains = n_chains;
    c.n_thermalization = n_thermalization;
    c.n_measure = n_measure;
    if (precision == Precision::coarse) {
        c.n_thermalization = n_thermalization / 4;
        c.n_measure = std::max<long>(1, n_measure / n_bins / 4) * n_bins;
    }
    c.rng_seed = EvaluationCache::derived_seed(c, master_seed);
    return c;
}

Evaluator qmc_evaluator(int L, double h_f, const QmcSettings& settings, EvaluationCache& cache) {
    return [L, h_f, settings, &cache](double T, Precision precision) {
        const auto config = settings.config(L, h_f, T, precision);
        const auto set = cache.run(config);
        const auto& e = set.at(qmc::Estimator::total_energy);
        return Evaluation{config.T, e.mean, e.error, precision == Precision::full};
    };
}

TfCurve tf_curve(int L, double J, double h_i, double T_i, const qmc::EstimateSet& initial,
                 std::span<const double> h_f_grid, const EvaluatorFactory& factory, const CurveOptions& options) {
    for (std::size_t i = 1; i < h_f_grid.size(); ++i)
        if (!(h_f_grid[i] > h_f_grid[i - 1])) throw InvalidArgument("tf_curve: h_f grid must be strictly increasing");
    TfCurve curve;
    curve.L = L;
    curve.J = J;
    curve.h_i = h_i;
    curve.T_i = T_i;
    curve.base = quench_energy(initial, h_i, J);
    curve.points.resize(h_f_grid.size());
    const auto bracket = options.bracket.value_or(default_bracket(T_i, L));
    parallel_for(h_f_grid.size(), options.threads, [&](std::size_t i) {
        auto& p = curve.points[i];
        p.h_f = h_f_grid[i];
        p.identity = p.h_f == h_i;
        try {
            const auto eq = quench_energy(initial, p.h_f, J);
            p.result = solve_tf(p.h_f, eq, factory(p.h_f), bracket, options.solve);
            p.cooling = !p.identity && p.result->T_f < T_i;
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    });
    return curve;
}

std::string tf_curve_csv(const TfCurve& curve) {
    CsvTable table({"schema_version", "h_f", "T_f", "T_lo", "T_hi", "cooling_flag", "identity_flag", "n_steps",
                    "status"});
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& p : curve.points) {
        const auto* r = p.result ? &*p.result : nullptr;
        table.row({std::to_string(kCsvSchemaVersion), format_number(p.h_f), format_number(r ? r->T_f : nan),
                   format_number(r ? r->T_lo : nan), format_number(r ? r->T_hi : nan), p.cooling ? "1" : "0",
                   p.identity ? "1" : "0", std::to_string(r ? r->n_steps : 0), p.error.empty() ? "ok" : p.error});
    }
    return table.str();
}

nlohmann::json tf_curve_json(const TfCurve& curve) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : curve.points) {
        nlohmann::json jp{{"h_f", p.h_f}, {"cooling", p.cooling}, {"identity", p.identity}};
        if (p.result) {
            nlohmann::json trail = nlohmann::json::array();
            for (const auto& e : p.result->trail)
                trail.push_back({{"T", e.T}, {"E", e.E}, {"dE", e.dE}, {"full", e.full_precision}});
            nlohmann::json extra = nlohmann::json::array();
            for (const auto& e : p.result->extra_runs) extra.push_back({{"T", e.T}, {"E", e.E}, {"dE", e.dE}});
            jp["T_f"] = p.result->T_f;
            jp["T_lo"] = p.result->T_lo;
            jp["T_hi"] = p.result->T_hi;
            jp["n_steps"] = p.result->n_steps;
            jp["stop_rule_fired"] = p.result->stop_rule_fired;
            jp["trail"] = std::move(trail);
            jp["extra_runs"] = std::move(extra);
        } else {
            jp["error"] = p.error;
        }
        points.push_back(std::move(jp));
    }
    return {{"L", curve.L},     {"J", curve.J},
            {"h_i", curve.h_i}, {"T_i", curve.T_i},
            {"E_i", curve.base.E_q}, {"dE_i", curve.base.dE_q},
            {"x_i", curve.base.x_mean}, {"zz_i", curve.base.zz_mean},
            {"points", std::move(points)}};
}

} // namespace tfim::quench
