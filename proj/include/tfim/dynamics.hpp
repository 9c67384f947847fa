#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfim/ed.hpp"
#include "tfim/lattice.hpp"

namespace tfim::dynamics {

struct TimeSeries {
    ed::Observable observable = ed::Observable::M2;
    std::vector<double> times;
    std::vector<double> values;
    int L = 0;
    double J = 1.0;
    QuenchSpec quench;
    // largest imaginary part dropped from the values
    double max_imaginary = 0.0;
};

// Exact real-time evolution of a quench from the Gibbs state of H(J, h_i) at
// T_i (or its ground manifold) under H(J, h_f), carried out sector by sector in
// the eigenbasis of H_f. Construction diagonalizes both Hamiltonians; queries
// are read-only and may run concurrently.
class QuenchPropagator {
public:
    QuenchPropagator(const LatticeSpec& lattice, double J, const QuenchSpec& quench, const ed::EdOptions& options = {});

    // Throws DiagnosticsError when an imaginary part exceeds 1e-10.
    TimeSeries evolve(ed::Observable obs, std::span<const double> times) const;

    // Infinite-time average; coherences within degenerate H_f clusters
    // (relative gap 1e-10) are kept.
    double diagonal_ensemble(ed::Observable obs, double cluster_tol = 1e-10) const;

    // Tr(rho_i O); for total_energy this is the quench energy under H_f.
    double initial_value(ed::Observable obs) const;

    // Sum of the unnormalized sector traces of rho_i.
    double normalization() const noexcept { return norm_; }
    const ed::Spectrum& final_spectrum() const noexcept { return final_; }
    const QuenchSpec& quench() const noexcept { return quench_; }
    int L() const noexcept { return final_.lattice.L(); }
    double J() const noexcept { return J_; }

private:
    struct Sector {
        // rho_i in the H_f eigenbasis, unnormalized
        Eigen::MatrixXcd rho;
    };
    // A_mn = rho_mn O_nm in the H_f eigenbasis of sector q.
    Eigen::MatrixXcd weighted(std::size_t q, ed::Observable obs) const;

    QuenchSpec quench_;
    double J_;
    ed::Spectrum final_;
    std::vector<Sector> sectors_;
    double norm_ = 0.0;
    int threads_ = 1;
};

TimeSeries evolve(const QuenchSpec& quench, const LatticeSpec& lattice, double J, ed::Observable obs,
                  std::span<const double> times, const ed::EdOptions& options = {});
double diagonal_ensemble(const QuenchSpec& quench, const LatticeSpec& lattice, double J, ed::Observable obs,
                         const ed::EdOptions& options = {});

// Trapezoidal time average of a series over [times.front(), times.back()].
double time_average(const TimeSeries& series);

// Where T_f comes from: exact inversion of the H_f energy curve, or an
// imported result (for example a QMC solve).
struct TfSource {
    enum class Kind { ed_exact, imported };
    Kind kind = Kind::ed_exact;
    double T_f = 0.0;
    std::string label = "ed_exact";

    static TfSource exact() { return {}; }
    static TfSource imported(double T_f, std::string label) { return {Kind::imported, T_f, std::move(label)}; }
};

struct SteadyStatePrediction {
    ed::Observable observable = ed::Observable::M2;
    double h_f = 0.0;
    double T_f = 0.0;
    double value = 0.0;
    double E_q = 0.0;
    std::string source;
};

// T_f with E_f(T_f) = Tr(rho_i H_f); 0 when E_q sits in the ground manifold.
double exact_final_temperature(const ed::Spectrum& final, double E_q);

SteadyStatePrediction steady_state_prediction(const QuenchPropagator& propagator, ed::Observable obs,
                                              const TfSource& source = TfSource::exact());

struct ComparisonReport {
    ed::Observable observable = ed::Observable::M2;
    double tail_start = 0.0;
    double tail_mean = 0.0;
    double tail_std = 0.0;
    double diagonal_ensemble = 0.0;
    SteadyStatePrediction prediction;
    // |diagonal ensemble - prediction|
    double eth_gap = 0.0;
    // |tail mean - prediction|
    double tail_gap = 0.0;
};

// Tail statistics are taken over times >= tail_start.
ComparisonReport compare(const TimeSeries& series, double diagonal_value, const SteadyStatePrediction& prediction,
                         double tail_start);

// CSV columns: schema_version,t,value
std::string time_series_csv(const TimeSeries& series);
nlohmann::json time_series_json(const TimeSeries& series);
nlohmann::json prediction_json(const SteadyStatePrediction& p);
// CSV columns: schema_version,observable,tail_start,tail_mean,tail_std,diagonal_ensemble,T_f,prediction,tf_source,eth_gap,tail_gap
std::string comparison_csv(std::span<const ComparisonReport> reports);

} // namespace tfim::dynamics
