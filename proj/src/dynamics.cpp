#include "tfim/dynamics.hpp"

#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>

#include "tfim/csv.hpp"
#include "tfim/errors.hpp"
#include "tfim/parallel.hpp"

namespace tfim::dynamics {

namespace {

constexpr double kImaginaryTolerance = 1e-10;

} // namespace

QuenchPropagator::QuenchPropagator(const LatticeSpec& lattice, double J, const QuenchSpec& quench,
                                   const ed::EdOptions& options)
    : quench_(quench), J_(J), threads_(options.threads) {
    validate(quench);
    const auto bases = ed::build_bases(lattice, true, options);
    const auto initial = ed::diagonalize(bases, {J, quench.h_i}, options.threads);
    final_ = ed::diagonalize(bases, {J, quench.h_f}, options.threads);

    const double e0 = initial.ground_energy();
    const double ground_tol = 1e-10 * std::max(1.0, std::abs(e0));
    sectors_.resize(initial.sectors.size());
    std::vector<double> traces(initial.sectors.size(), 0.0);
    parallel_for(initial.sectors.size(), threads_, [&](std::size_t q) {
        const auto& si = initial.sectors[q];
        const auto& sf = final_.sectors[q];
        const auto& Ei = si.energies();
        Eigen::VectorXd w(Ei.size());
        for (Eigen::Index n = 0; n < Ei.size(); ++n) {
            if (quench.ground_state)
                w[n] = Ei[n] - e0 <= ground_tol ? 1.0 : 0.0;
            else
                w[n] = std::exp(-(Ei[n] - e0) / quench.T_i);
        }
        traces[q] = w.sum();
        // rho in the H_f eigenbasis: R diag(w) R^dagger with R = V_f^dagger V_i
        const Eigen::MatrixXcd R = sf.vectors().adjoint() * si.vectors();
        sectors_[q].rho = R * w.cast<ed::Complex>().asDiagonal() * R.adjoint();
    });
    for (double t : traces) norm_ += t;
}

Eigen::MatrixXcd QuenchPropagator::weighted(std::size_t q, ed::Observable obs) const {
    const auto& sf = final_.sectors[q];
    const Eigen::MatrixXcd O = sf.vectors().adjoint() * sf.observable_matrix(obs) * sf.vectors();
    return sectors_[q].rho.cwiseProduct(O.transpose());
}

TimeSeries QuenchPropagator::evolve(ed::Observable obs, std::span<const double> times) const {
    TimeSeries out;
    out.observable = obs;
    out.times.assign(times.begin(), times.end());
    out.L = L();
    out.J = J_;
    out.quench = quench_;
    std::vector<Eigen::VectorXcd> per_sector(sectors_.size());
    parallel_for(sectors_.size(), threads_, [&](std::size_t q) {
        const Eigen::MatrixXcd A = weighted(q, obs);
        const auto& E = final_.sectors[q].energies();
        Eigen::VectorXcd acc(static_cast<Eigen::Index>(times.size()));
        for (std::size_t k = 0; k < times.size(); ++k) {
            const Eigen::VectorXcd phase = (E * ed::Complex(0.0, -times[k])).array().exp();
            acc[static_cast<Eigen::Index>(k)] = phase.transpose() * A * phase.conjugate();
        }
        per_sector[q] = std::move(acc);
    });
    for (std::size_t k = 0; k < times.size(); ++k) {
        ed::Complex v = 0.0;
        for (const auto& s : per_sector) v += s[static_cast<Eigen::Index>(k)];
        v /= norm_;
        const double imag = std::abs(v.imag());
        if (imag > kImaginaryTolerance * std::max(1.0, std::abs(v.real())))
            throw DiagnosticsError("evolved " + std::string(ed::name(obs)) + " has imaginary part " +
                                   format_number(v.imag()) + " at t=" + format_number(times[k]));
        out.max_imaginary = std::max(out.max_imaginary, imag);
        out.values.push_back(v.real());
    }
    return out;
}

double QuenchPropagator::diagonal_ensemble(ed::Observable obs, double cluster_tol) const {
    std::vector<double> parts(sectors_.size(), 0.0);
    parallel_for(sectors_.size(), threads_, [&](std::size_t q) {
        const Eigen::MatrixXcd A = weighted(q, obs);
        const auto& E = final_.sectors[q].energies();
        ed::Complex acc = 0.0;
        for (Eigen::Index begin = 0; begin < E.size();) {
            Eigen::Index end = begin + 1;
            while (end < E.size() && E[end] - E[end - 1] <= cluster_tol * std::max(1.0, std::abs(E[end]))) ++end;
            const Eigen::Index n = end - begin;
            acc += A.block(begin, begin, n, n).sum();
            begin = end;
        }
        parts[q] = acc.real();
    });
    double total = 0.0;
    for (double p : parts) total += p;
    return total / norm_;
}

double QuenchPropagator::initial_value(ed::Observable obs) const {
    double total = 0.0;
    for (std::size_t q = 0; q < sectors_.size(); ++q) total += weighted(q, obs).sum().real();
    return total / norm_;
}

TimeSeries evolve(const QuenchSpec& quench, const LatticeSpec& lattice, double J, ed::Observable obs,
                  std::span<const double> times, const ed::EdOptions& options) {
    return QuenchPropagator(lattice, J, quench, options).evolve(obs, times);
}

double diagonal_ensemble(const QuenchSpec& quench, const LatticeSpec& lattice, double J, ed::Observable obs,
                         const ed::EdOptions& options) {
    return QuenchPropagator(lattice, J, quench, options).diagonal_ensemble(obs);
}

double time_average(const TimeSeries& series) {
    const auto& t = series.times;
    const auto& v = series.values;
    if (t.size() < 2) throw InvalidArgument("time average needs at least two samples");
    double acc = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) acc += 0.5 * (v[k] + v[k - 1]) * (t[k] - t[k - 1]);
    return acc / (t.back() - t.front());
}

double exact_final_temperature(const ed::Spectrum& final, double E_q) {
    const double e0 = final.ground_energy();
    if (E_q - e0 <= 1e-10 * std::max(1.0, std::abs(e0))) return 0.0;
    auto f = [&](double T) { return ed::thermal_expectation(final, T, ed::Observable::total_energy) - E_q; };
    double lo = 1e-2, hi = 10.0;
    while (f(lo) > 0.0 && lo > 1e-6) lo *= 0.5;
    while (f(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e8) throw BracketFailure("quench energy " + format_number(E_q) + " above the infinite-temperature energy");
    }
    if (f(lo) > 0.0) return lo;
    std::uintmax_t iterations = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50),
                                                          iterations);
    return 0.5 * (a + b);
}

SteadyStatePrediction steady_state_prediction(const QuenchPropagator& propagator, ed::Observable obs,
                                              const TfSource& source) {
    SteadyStatePrediction p;
    p.observable = obs;
    p.h_f = propagator.quench().h_f;
    p.E_q = propagator.initial_value(ed::Observable::total_energy);
    p.source = source.label;
    const auto& final = propagator.final_spectrum();
    p.T_f = source.kind == TfSource::Kind::ed_exact ? exact_final_temperature(final, p.E_q) : source.T_f;
    if (!(p.T_f >= 0.0) || !std::isfinite(p.T_f)) throw InvalidArgument("final temperature must be finite and >= 0");
    p.value = p.T_f > 0.0 ? ed::thermal_expectation(final, p.T_f, obs) : ed::ground_state_expectation(final, obs).value;
    return p;
}

ComparisonReport compare(const TimeSeries& series, double diagonal_value, const SteadyStatePrediction& prediction,
                         double tail_start) {
    ComparisonReport r;
    r.observable = series.observable;
    r.tail_start = tail_start;
    r.diagonal_ensemble = diagonal_value;
    r.prediction = prediction;
    std::vector<double> tail;
    for (std::size_t k = 0; k < series.times.size(); ++k)
        if (series.times[k] >= tail_start) tail.push_back(series.values[k]);
    if (tail.empty()) throw InvalidArgument("no samples at or after the tail start");
    double mean = 0.0;
    for (double v : tail) mean += v;
    mean /= static_cast<double>(tail.size());
    double var = 0.0;
    for (double v : tail) var += (v - mean) * (v - mean);
    r.tail_mean = mean;
    r.tail_std = tail.size() > 1 ? std::sqrt(var / static_cast<double>(tail.size() - 1)) : 0.0;
    r.eth_gap = std::abs(diagonal_value - prediction.value);
    r.tail_gap = std::abs(mean - prediction.value);
    return r;
}

std::string time_series_csv(const TimeSeries& series) {
    CsvTable t({"schema_version", "t", "value"});
    for (std::size_t k = 0; k < series.times.size(); ++k)
        t.row({std::to_string(kCsvSchemaVersion), format_number(series.times[k]), format_number(series.values[k])});
    return t.str();
}

nlohmann::json time_series_json(const TimeSeries& series) {
    return {{"schema_version", kCsvSchemaVersion},
            {"observable", ed::name(series.observable)},
            {"L", series.L},
            {"J", series.J},
            {"h_i", series.quench.h_i},
            {"T_i", series.quench.ground_state ? 0.0 : series.quench.T_i},
            {"ground_state", series.quench.ground_state},
            {"h_f", series.quench.h_f},
            {"n_times", series.times.size()},
            {"max_imaginary", series.max_imaginary}};
}

nlohmann::json prediction_json(const SteadyStatePrediction& p) {
    return {{"observable", ed::name(p.observable)}, {"h_f", p.h_f},      {"T_f", p.T_f},
            {"E_q", p.E_q},                         {"value", p.value}, {"tf_source", p.source}};
}

std::string comparison_csv(std::span<const ComparisonReport> reports) {
    CsvTable t({"schema_version", "observable", "tail_start", "tail_mean", "tail_std", "diagonal_ensemble", "T_f",
                "prediction", "tf_source", "eth_gap", "tail_gap"});
    for (const auto& r : reports)
        t.row({std::to_string(kCsvSchemaVersion), std::string(ed::name(r.observable)), format_number(r.tail_start),
               format_number(r.tail_mean), format_number(r.tail_std), format_number(r.diagonal_ensemble),
               format_number(r.prediction.T_f), format_number(r.prediction.value), r.prediction.source,
               format_number(r.eth_gap), format_number(r.tail_gap)});
    return t.str();
}

} // namespace tfim::dynamics
