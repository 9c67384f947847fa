#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "tfim/errors.hpp"
#include "tfim/parallel.hpp"
#include "tfim/qmc.hpp"

namespace tfim::qmc {

namespace {

constexpr std::size_t index_of(Estimator e) { return static_cast<std::size_t>(e); }

void require(bool ok, const std::string& message) {
    if (!ok) throw InvalidArgument("QmcConfig: " + message);
}

nlohmann::json estimate_json(const Estimate& e) {
    nlohmann::json j{{"mean", e.mean}, {"stderr", e.error}, {"n_bins", e.n_bins}};
    j["tau_int"] = std::isfinite(e.tau_int) ? nlohmann::json(e.tau_int) : nlohmann::json(nullptr);
    return j;
}

Estimate estimate_from(const nlohmann::json& j) {
    Estimate e;
    e.mean = j.at("mean").get<double>();
    e.error = j.at("stderr").get<double>();
    e.n_bins = j.at("n_bins").get<int>();
    e.tau_int = j.at("tau_int").is_null() ? std::nan("") : j.at("tau_int").get<double>();
    return e;
}

double binder_from_moments(double m2, double m4) { return 1.0 - m4 / (3.0 * m2 * m2); }

struct Accumulators {
    explicit Accumulators(long per_bin) : energy(per_bin), zz(per_bin), x(per_bin), m2(per_bin), m4(per_bin), cnn(per_bin) {}
    BinAccumulator energy, zz, x, m2, m4, cnn;

    void add(const Sample& s, double n_sites) {
        energy.add(s.total_energy);
        zz.add(s.zz_bond_sum);
        x.add(s.x_sum);
        m2.add(s.m2);
        m4.add(s.m4);
        cnn.add(s.zz_bond_sum / n_sites);
    }
};

EstimateSet summarize(const QmcConfig& config, const Accumulators& acc) {
    EstimateSet out;
    out.config = config;
    const long per_bin = config.n_measure / config.n_bins;
    auto put = [&](Estimator e, const BinAccumulator& a) {
        out.set(e, binned_estimate(a.bin_means(), a.raw_variance(), per_bin));
        out.bins[index_of(e)] = a.bin_means();
    };
    put(Estimator::total_energy, acc.energy);
    put(Estimator::zz_bond_sum, acc.zz);
    put(Estimator::x_sum, acc.x);
    put(Estimator::M2, acc.m2);
    put(Estimator::M4, acc.m4);
    put(Estimator::C_nn, acc.cnn);

    const auto& m2 = acc.m2.bin_means();
    const auto& m4 = acc.m4.bin_means();
    out.set(Estimator::binder_U,
            jackknife({std::span<const double>(m2), std::span<const double>(m4)},
                      [](std::span<const double> a) { return binder_from_moments(a[0], a[1]); }));
    auto& ub = out.bins[index_of(Estimator::binder_U)];
    ub.resize(m2.size());
    for (std::size_t i = 0; i < m2.size(); ++i) ub[i] = binder_from_moments(m2[i], m4[i]);
    return out;
}

void checked(const SseState& state, bool enabled, const char* stage) {
    if (!enabled) return;
    if (auto msg = state.check_invariants(); !msg.empty())
        throw DiagnosticsError(std::string("SSE invariant violated after ") + stage + ": " + msg);
}

EstimateSet run_sse_chain(const QmcConfig& config, const LatticeSpec& lattice, Rng& rng) {
    const double beta = 1.0 / config.T;
    SseState state(lattice, config.params, beta, rng);
    const double bound = std::max(static_cast<double>(config.cutoff_floor),
                                  config.cutoff_factor * beta * state.total_weight());

    for (long sweep = 0; sweep < config.n_thermalization; ++sweep) {
        diagonal_update(state, rng);
        checked(state, config.check_invariants, "diagonal update");
        cluster_update(state, rng);
        checked(state, config.check_invariants, "cluster update");
        const auto wanted = static_cast<std::size_t>(std::ceil(1.3 * static_cast<double>(state.n_operators())));
        if (wanted > state.cutoff()) {
            if (static_cast<double>(wanted) > bound)
                throw DiagnosticsError("SSE cutoff " + std::to_string(wanted) + " exceeds safety bound " +
                                       std::to_string(static_cast<long>(bound)));
            state.grow_cutoff(wanted);
        }
    }

    Accumulators acc(config.n_measure / config.n_bins);
    const double n_sites = lattice.n_sites();
    for (long sweep = 0; sweep < config.n_measure; ++sweep) {
        diagonal_update(state, rng);
        checked(state, config.check_invariants, "diagonal update");
        cluster_update(state, rng);
        checked(state, config.check_invariants, "cluster update");
        acc.add(measure(state), n_sites);
    }
    return summarize(config, acc);
}

EstimateSet run_classical_chain(const QmcConfig& config, const LatticeSpec& lattice, Rng& rng) {
    ClassicalIsing model(lattice, config.params.J, 1.0 / config.T, rng);
    // Aim for about n_sites flipped spins per sweep, recalibrating every 100
    // thermalization sweeps; frozen during measurement.
    long flipped = 0, clusters = 0;
    for (long sweep = 0; sweep < config.n_thermalization; ++sweep) {
        flipped += model.sweep(rng);
        clusters += model.clusters_per_sweep();
        if ((sweep + 1) % 100 == 0 && flipped > 0) {
            const double mean_size = static_cast<double>(flipped) / static_cast<double>(clusters);
            model.set_clusters_per_sweep(static_cast<int>(std::ceil(lattice.n_sites() / mean_size)));
            flipped = clusters = 0;
        }
    }
    Accumulators acc(config.n_measure / config.n_bins);
    const double n_sites = lattice.n_sites();
    for (long sweep = 0; sweep < config.n_measure; ++sweep) {
        model.sweep(rng);
        acc.add(model.measure(), n_sites);
    }
    return summarize(config, acc);
}

} // namespace

std::string_view name(Estimator e) {
    switch (e) {
    case Estimator::total_energy: return "total_energy";
    case Estimator::zz_bond_sum: return "zz_bond_sum";
    case Estimator::x_sum: return "x_sum";
    case Estimator::M2: return "M2";
    case Estimator::M4: return "M4";
    case Estimator::binder_U: return "binder_U";
    case Estimator::C_nn: return "C_nn";
    }
    return "?";
}

void QmcConfig::validate() const {
    require(L >= 2, "L must be at least 2");
    require(std::isfinite(T) && T > 0.0, "T must be positive and finite");
    require(std::isfinite(params.J) && params.J >= 0.0, "J must be non-negative");
    require(std::isfinite(params.h) && params.h >= 0.0, "h must be non-negative");
    require(n_thermalization >= 0, "n_thermalization must be non-negative");
    require(n_bins >= 16, "n_bins must be at least 16");
    require(n_measure > 0 && n_measure % n_bins == 0, "n_measure must be a positive multiple of n_bins");
    require(n_chains >= 1, "n_chains must be at least 1");
    require(threads >= 1, "threads must be at least 1");
    require(cutoff_factor > 0.0 && cutoff_floor > 0, "cutoff bound must be positive");
}

bool QmcConfig::same_physics(const QmcConfig& o) const {
    return L == o.L && params.J == o.params.J && params.h == o.params.h && T == o.T &&
           n_thermalization == o.n_thermalization && n_measure == o.n_measure && n_bins == o.n_bins;
}

nlohmann::json to_json(const QmcConfig& c) {
    return {{"L", c.L},
            {"J", c.params.J},
            {"h", c.params.h},
            {"T", c.T},
            {"n_thermalization", c.n_thermalization},
            {"n_measure", c.n_measure},
            {"n_bins", c.n_bins},
            {"rng_seed", c.rng_seed},
            {"n_chains", c.n_chains}};
}

QmcConfig config_from_json(const nlohmann::json& j) {
    QmcConfig c;
    c.L = j.at("L").get<int>();
    c.params.J = j.at("J").get<double>();
    c.params.h = j.at("h").get<double>();
    c.T = j.at("T").get<double>();
    c.n_thermalization = j.at("n_thermalization").get<long>();
    c.n_measure = j.at("n_measure").get<long>();
    c.n_bins = j.at("n_bins").get<int>();
    c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    c.n_chains = j.at("n_chains").get<int>();
    return c;
}

const Estimate& EstimateSet::at(Estimator e) const {
    const auto& v = values[index_of(e)];
    if (!v) throw InvalidArgument("estimate set has no value for " + std::string(name(e)));
    return *v;
}

nlohmann::json to_json(const EstimateSet& set) {
    nlohmann::json est = nlohmann::json::object();
    for (auto e : kAllEstimators)
        if (set.has(e)) est[std::string(name(e))] = estimate_json(set.at(e));
    return {{"config", to_json(set.config)}, {"estimates", est}};
}

EstimateSet estimate_set_from_json(const nlohmann::json& j) {
    EstimateSet set;
    set.config = config_from_json(j.at("config"));
    const auto& est = j.at("estimates");
    for (auto e : kAllEstimators)
        if (auto it = est.find(std::string(name(e))); it != est.end()) set.set(e, estimate_from(*it));
    return set;
}

std::string bins_csv(const EstimateSet& set) {
    std::ostringstream out;
    out.precision(17);
    out << "bin_index,observable,value\n";
    for (auto e : kAllEstimators) {
        const auto& b = set.bins[index_of(e)];
        for (std::size_t i = 0; i < b.size(); ++i) out << i << ',' << name(e) << ',' << b[i] << '\n';
    }
    return out.str();
}

EstimateSet run_qmc(const QmcConfig& config) {
    config.validate();
    const auto lattice = build_lattice(config.L);
    QmcConfig chain_config = config;
    chain_config.n_chains = 1;

    std::vector<EstimateSet> chains(static_cast<std::size_t>(config.n_chains));
    parallel_for(chains.size(), config.threads, [&](std::size_t c) {
        Rng rng(split_seed(config.rng_seed, c));
        chains[c] = config.params.h == 0.0 ? run_classical_chain(chain_config, lattice, rng)
                                           : run_sse_chain(chain_config, lattice, rng);
    });
    if (chains.size() == 1) {
        chains.front().config = config;
        return std::move(chains.front());
    }
    auto merged = merge_chains(chains);
    merged.config = config;
    return merged;
}

EstimateSet merge_chains(std::span<const EstimateSet> chains) {
    if (chains.empty()) throw InvalidArgument("merge_chains: no chains given");
    const auto& ref = chains.front();
    if (chains.size() == 1) return ref;
    for (const auto& c : chains)
        if (!c.config.same_physics(ref.config))
            throw InvalidArgument("merge_chains: chain configurations differ beyond rng_seed");

    EstimateSet out;
    out.config = ref.config;
    out.config.n_chains = 0;
    for (const auto& c : chains) out.config.n_chains += c.config.n_chains;
    const auto k = static_cast<double>(chains.size());
    for (auto e : kAllEstimators) {
        if (!std::all_of(chains.begin(), chains.end(), [e](const EstimateSet& c) { return c.has(e); })) continue;
        Estimate m;
        double var = 0.0, tau = 0.0;
        for (const auto& c : chains) {
            const auto& x = c.at(e);
            m.mean += x.mean;
            var += x.error * x.error;
            m.n_bins += x.n_bins;
            tau += x.tau_int;
        }
        m.mean /= k;
        m.error = std::sqrt(var) / k;
        m.tau_int = tau / k;
        out.set(e, m);
    }
    return out;
}

} // namespace tfim::qmc
