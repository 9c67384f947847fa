#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tfim/cache.hpp"
#include "tfim/ed.hpp"
#include "tfim/lattice.hpp"
#include "tfim/qmc.hpp"

namespace tfim::quench {

// Conserved post-quench energy Tr(rho_i H_f).
struct QuenchEnergy {
    double E_q = 0.0;
    double dE_q = 0.0;
    // provenance
    double h_i = 0.0;
    double T_i = 0.0;
    double h_f = 0.0;
    double zz_mean = 0.0;
    double x_mean = 0.0;
};

// E_q = -J <zz_bond_sum>_i - h_f <x_sum>_i, errors added in quadrature.
// Throws InvalidArgument if either estimator is missing.
QuenchEnergy quench_energy(const qmc::EstimateSet& initial, double h_f, double J);

// Exact thermal estimates (zero error) from a spectrum, in EstimateSet form.
// T = 0 selects the ground-state manifold average.
qmc::EstimateSet exact_estimates(const ed::Spectrum& spectrum, double T);

enum class Precision { coarse, full };

struct Evaluation {
    double T = 0.0;
    double E = 0.0;
    double dE = 0.0;
    bool full_precision = true;
};

// Energy of H_f at temperature T with its 1-sigma error.
using Evaluator = std::function<Evaluation(double T, Precision precision)>;

struct SolveOptions {
    int max_steps = 60;
    // bracket expansions: halvings of T1 and doublings of T2
    int max_expansions = 3;
    // Extra runs for the bounds at T_f * (1 -/+ offset).
    double extra_offset = 0.05;
    // Slope is treated as zero when |s| < zero_slope_sigmas * ds.
    double zero_slope_sigmas = 2.0;
};

struct TfResult {
    double T_f = 0.0;
    double T_lo = 0.0;
    double T_hi = 0.0;
    int n_steps = 0;
    // Final surviving bisection interval.
    double interval_lo = 0.0;
    double interval_hi = 0.0;
    // Endpoint and midpoint evaluations in order.
    std::vector<Evaluation> trail;
    std::vector<Evaluation> extra_runs;
    bool stop_rule_fired = false;
};

// Initial bracket (max(T_i/4, 1/L), 4 max(T_i, 1)).
std::pair<double, double> default_bracket(double T_i, int L);

// Bisection on E(T) - E_q with the stopping rule |E_mid - E_q| <= dE_mid + dE_q.
// Midpoints are sampled at coarse precision until the rule first fires; that
// midpoint is then rerun at full precision, which is kept for all later steps.
// Throws BracketFailure if E_q stays outside [E(T1), E(T2)] after expansion and
// DataQualityError if E(T1) > E(T2) beyond their errors.
TfResult solve_tf(double h_f, const QuenchEnergy& eq, const Evaluator& evaluator, std::pair<double, double> bracket,
                  const SolveOptions& options = {});

// Local slope dE/dT and its error from the two extra runs nearest T_f.
std::pair<double, double> local_slope(double T_f, std::span<const Evaluation> extra);

// T_f -/+ (dE_q + dE(T_f)) / s; the surviving bisection interval when s is
// consistent with zero. Throws InvalidArgument for fewer than two extra runs.
std::pair<double, double> tf_bounds(const TfResult& result, const QuenchEnergy& eq, std::span<const Evaluation> extra,
                                    const SolveOptions& options = {});

// Exact evaluator from a spectrum of H_f (zero error).
Evaluator ed_evaluator(std::shared_ptr<const ed::Spectrum> spectrum);

// Thread-safe in-memory map of QMC runs keyed by
// (L, J, h, T rounded to 1e-6, sweep counts, bins, master seed), optionally
// backed by a CacheDir. Seeds are derived from the key, so results do not
// depend on evaluation order.
class EvaluationCache {
public:
    EvaluationCache() = default;
    explicit EvaluationCache(CacheDir* disk) : disk_(disk) {}

    qmc::EstimateSet run(const qmc::QmcConfig& config);

    static double round_temperature(double T);
    static std::uint64_t derived_seed(const qmc::QmcConfig& config, std::uint64_t master_seed);
    static std::string key(const qmc::QmcConfig& config);

    std::size_t size() const;
    std::size_t hits() const;
    // Key and derived seed of every run held in memory, in key order.
    std::vector<std::pair<std::string, std::uint64_t>> seeds() const;

private:
    CacheDir* disk_ = nullptr;
    mutable std::mutex mutex_;
    std::map<std::string, qmc::EstimateSet> memory_;
    std::size_t hits_ = 0;
};

// Sweep counts and seed for QMC evaluations; coarse runs use a quarter of the
// measurement sweeps.
struct QmcSettings {
    long n_thermalization = 10'000;
    long n_measure = 100'000;
    int n_bins = 32;
    int n_chains = 1;
    std::uint64_t master_seed = 1;
    double J = 1.0;

    qmc::QmcConfig config(int L, double h, double T, Precision precision) const;
};

// QMC evaluator for H_f = H(J, h_f) at size L; temperatures rounded to 1e-6.
Evaluator qmc_evaluator(int L, double h_f, const QmcSettings& settings, EvaluationCache& cache);

struct TfPoint {
    double h_f = 0.0;
    std::optional<TfResult> result;
    // empty on success
    std::string error;
    bool cooling = false;
    bool identity = false;
};

struct TfCurve {
    int L = 0;
    double J = 1.0;
    double h_i = 0.0;
    double T_i = 0.0;
    QuenchEnergy base;
    std::vector<TfPoint> points;
};

// Builds the evaluator for a given h_f.
using EvaluatorFactory = std::function<Evaluator(double h_f)>;

struct CurveOptions {
    SolveOptions solve;
    std::optional<std::pair<double, double>> bracket;
    int threads = 1;
};

// T_f for every h_f in a strictly increasing grid, reusing one initial
// estimate set. Per-point solver failures are recorded, not thrown.
TfCurve tf_curve(int L, double J, double h_i, double T_i, const qmc::EstimateSet& initial,
                 std::span<const double> h_f_grid, const EvaluatorFactory& factory, const CurveOptions& options = {});

// CSV columns: schema_version,h_f,T_f,T_lo,T_hi,cooling_flag,identity_flag,n_steps,status
std::string tf_curve_csv(const TfCurve& curve);
nlohmann::json tf_curve_json(const TfCurve& curve);

} // namespace tfim::quench
