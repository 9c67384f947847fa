#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tfim/lattice.hpp"
#include "tfim/rng.hpp"
#include "tfim/stats.hpp"

namespace tfim::qmc {

enum class Estimator { total_energy, zz_bond_sum, x_sum, M2, M4, binder_U, C_nn };

inline constexpr std::array kAllEstimators{Estimator::total_energy, Estimator::zz_bond_sum, Estimator::x_sum,
                                           Estimator::M2,           Estimator::M4,          Estimator::binder_U,
                                           Estimator::C_nn};

std::string_view name(Estimator e);

struct QmcConfig {
    int L = 4;
    ModelParams params{1.0, 1.0};
    double T = 1.0;
    long n_thermalization = 10'000;
    long n_measure = 100'000;
    int n_bins = 32;
    std::uint64_t rng_seed = 1;
    int n_chains = 1;
    int threads = 1;
    // Runs the SseState invariant check after every update (slow).
    bool check_invariants = false;
    // Cutoff growth beyond max(cutoff_floor, cutoff_factor * beta * total weight) is a diagnostics error.
    double cutoff_factor = 20.0;
    long cutoff_floor = 10'000;

    // Throws InvalidArgument naming the offending field.
    void validate() const;
    // Equal in everything except rng_seed.
    bool same_physics(const QmcConfig& other) const;
};

nlohmann::json to_json(const QmcConfig& config);
QmcConfig config_from_json(const nlohmann::json& j);

class EstimateSet {
public:
    QmcConfig config;
    std::array<std::optional<Estimate>, kAllEstimators.size()> values;
    // Bin means per estimator (binder_U bins are per-bin ratios); empty for
    // merged or exact sets.
    std::array<std::vector<double>, kAllEstimators.size()> bins;

    bool has(Estimator e) const { return values[static_cast<std::size_t>(e)].has_value(); }
    // Throws InvalidArgument when the estimator is missing.
    const Estimate& at(Estimator e) const;
    void set(Estimator e, const Estimate& value) { values[static_cast<std::size_t>(e)] = value; }
};

nlohmann::json to_json(const EstimateSet& set);
EstimateSet estimate_set_from_json(const nlohmann::json& j);
// Long-format bin dump: bin_index,observable,value.
std::string bins_csv(const EstimateSet& set);

// One measurement of every raw estimator.
struct Sample {
    double total_energy = 0.0;
    double zz_bond_sum = 0.0;
    double x_sum = 0.0;
    double m2 = 0.0;
    double m4 = 0.0;
};

// Stochastic series expansion configuration for
// H = -J sum_<ij> sz sz - h sum_i sx, written as -sum of positive operators
//   bond  b:  J (sz_a sz_b + 1)            (diagonal)
//   site  i:  h                            (diagonal, constant)
//   site  i:  h sx_i                       (off-diagonal flip)
// plus the constant J*n_bonds + h*n_sites, which the energy estimator adds back.
class SseState {
public:
    // Operator codes: kIdentity; 2*i (constant site op), 2*i + 1 (flip op) for
    // site i; 2*n_sites + b for bond b.
    static constexpr std::int32_t kIdentity = -1;

    SseState(const LatticeSpec& lattice, const ModelParams& params, double beta, Rng& rng);

    const LatticeSpec& lattice() const noexcept { return *lattice_; }
    const ModelParams& params() const noexcept { return params_; }
    double beta() const noexcept { return beta_; }

    std::span<const std::int8_t> spins() const noexcept { return spins_; }
    std::span<const std::int32_t> operators() const noexcept { return ops_; }
    std::size_t cutoff() const noexcept { return ops_.size(); }
    std::size_t n_operators() const noexcept { return n_; }

    // Constant added to H so every operator weight is non-negative.
    double energy_shift() const noexcept;
    // Sum of diagonal weights available for insertion: n_sites*h + n_bonds*2J.
    double total_weight() const noexcept;

    bool is_site_op(std::int32_t code) const noexcept { return code >= 0 && code < 2 * n_sites_; }
    bool is_bond_op(std::int32_t code) const noexcept { return code >= 2 * n_sites_; }

    // Appends identities so the cutoff is at least `size`.
    void grow_cutoff(std::size_t size);

    // Returns an empty string when the state is valid, else a description of
    // the first violated invariant.
    std::string check_invariants() const;

    // Direct access for tests that need to build specific configurations.
    void set_configuration(std::vector<std::int8_t> spins, std::vector<std::int32_t> ops);

private:
    friend void diagonal_update(SseState&, Rng&);
    friend void cluster_update(SseState&, Rng&);

    const LatticeSpec* lattice_;
    ModelParams params_;
    double beta_;
    int n_sites_;
    std::vector<std::int8_t> spins_;
    std::vector<std::int32_t> ops_;
    std::size_t n_ = 0;

    // cluster-update workspace
    std::vector<std::int32_t> positions_;
    std::vector<std::int32_t> links_;
    std::vector<std::int8_t> flags_;
    std::vector<std::int32_t> first_;
    std::vector<std::int32_t> last_;
    std::vector<std::int32_t> stack_;
};

// Metropolis insertion/removal of diagonal operators at inverse temperature beta.
void diagonal_update(SseState& state, Rng& rng);
// Swendsen-Wang-style flip of clusters bounded by site operators; toggles
// constant <-> flip site operators at cluster boundaries.
void cluster_update(SseState& state, Rng& rng);
// Diagonal observables averaged over the propagated states of the operator
// string; energy from the operator count; x_sum from the flip-operator count.
Sample measure(const SseState& state);

// Classical 2D Ising model (h = 0) with Metropolis sweeps and Wolff clusters.
class ClassicalIsing {
public:
    ClassicalIsing(const LatticeSpec& lattice, double J, double beta, Rng& rng);

    void metropolis_sweep(Rng& rng);
    // Returns the cluster size.
    int wolff_update(Rng& rng);
    // One Metropolis sweep plus clusters_per_sweep() Wolff clusters. Returns
    // the number of spins flipped by the clusters. The cluster count must not
    // depend on the current configuration, so it is only recalibrated
    // explicitly (during thermalization).
    long sweep(Rng& rng);
    int clusters_per_sweep() const noexcept { return clusters_per_sweep_; }
    void set_clusters_per_sweep(int n) noexcept { clusters_per_sweep_ = n < 1 ? 1 : n; }
    Sample measure() const;

    std::span<const std::int8_t> spins() const noexcept { return spins_; }

private:
    const LatticeSpec* lattice_;
    double J_;
    double beta_;
    double add_probability_;
    std::array<double, 5> accept_{};
    int clusters_per_sweep_ = 1;
    std::vector<std::int8_t> spins_;
    std::vector<std::int32_t> stack_;
};

// Thermal estimates at (L, J, h, T); routes h = 0 to ClassicalIsing.
// Deterministic given the config, including the seed.
EstimateSet run_qmc(const QmcConfig& config);

// Pools independent chains with identical physics; stderr combines as
// sqrt(sum err^2) / n_chains.
EstimateSet merge_chains(std::span<const EstimateSet> chains);

} // namespace tfim::qmc
