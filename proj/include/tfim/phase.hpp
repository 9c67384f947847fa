#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tfim/quench.hpp"
#include "tfim/stats.hpp"

namespace tfim::phase {

// Critical temperature of the classical square-lattice Ising model, 2/ln(1+sqrt 2).
inline const double kClassicalTc = 2.0 / std::log(1.0 + std::sqrt(2.0));
// Zero-temperature critical field of the square-lattice TFIM.
inline constexpr double kQuantumCriticalField = 3.044;

// Shape-preserving piecewise cubic through (x, y) with x strictly increasing
// (boost pchip for four or more points, linear for two or three). Evaluation
// outside [x.front(), x.back()] clamps to the end values.
class MonotoneCubic {
public:
    MonotoneCubic(std::vector<double> x, std::vector<double> y);

    double operator()(double x) const;
    double x_min() const noexcept { return x_.front(); }
    double x_max() const noexcept { return x_.back(); }

private:
    std::vector<double> x_, y_;
    std::function<double(double)> impl_;
};

// ---- Binder crossings -------------------------------------------------------

// U(L, T) with its error at a fixed field.
using BinderEvaluator = std::function<Estimate(int L, double T)>;

BinderEvaluator qmc_binder_evaluator(double h, const quench::QmcSettings& settings, quench::EvaluationCache& cache);

struct CrossingScanPoint {
    double T = 0.0;
    double U_small = 0.0;
    double U_large = 0.0;
    // U_large - U_small and its error
    double D = 0.0;
    double dD = 0.0;
};

struct CrossingOptions {
    int n_scan = 6;
    // A scan point counts as ordered/disordered when |D| exceeds this many sigma.
    double significance = 3.0;
    int max_range_shifts = 3;
    int max_steps = 30;
    // bisection stops when the interval is below this fraction of T
    double relative_tolerance = 1e-3;
};

struct CrossingResult {
    double h = 0.0;
    bool found = false;
    double T_c = 0.0;
    double dT_c = 0.0;
    std::vector<CrossingScanPoint> scan;
    std::string diagnostics;
};

// Temperature at which U(L_small, T) = U(L_large, T), by scanning [T_lo, T_hi]
// for a significant sign change of D = U_large - U_small followed by bisection.
CrossingResult binder_crossing_Tc(double h, int L_small, int L_large, double T_lo, double T_hi,
                                  const BinderEvaluator& evaluator, const CrossingOptions& options = {});

// ---- Critical line ---------------------------------------------------------

struct LinePoint {
    double h = 0.0;
    double T_c = 0.0;
    double dT_c = 0.0;
};

class CriticalLine {
public:
    // Points in ascending h including the anchors (0, kClassicalTc) and
    // (kQuantumCriticalField, 0). Throws DataQualityError if T_c is not
    // strictly decreasing.
    explicit CriticalLine(std::vector<LinePoint> points);

    double T_c(double h) const;
    // Linearly interpolated point uncertainty.
    double uncertainty(double h) const;
    const std::vector<LinePoint>& points() const noexcept { return points_; }

    // Crossings behind the line (including any at h = 0 or beyond the
    // anchors) and grid points with no crossing, for the record.
    std::vector<CrossingResult> crossings;

private:
    std::vector<LinePoint> points_;
    std::shared_ptr<MonotoneCubic> curve_;
};

// Pool-adjacent-violators fit to a non-increasing sequence with weights
// 1/dT^2; pooled blocks become a single point at their weighted mean h.
std::vector<LinePoint> enforce_decreasing(std::vector<LinePoint> points);

struct LineOptions {
    CrossingOptions crossing;
    int threads = 1;
};

// Crossings on h_grid (within [0, 3]) for the L pair, merged with the anchors.
// Non-monotone neighbours are pooled when they agree within their joint
// uncertainty and rejected (DataQualityError) otherwise.
CriticalLine build_critical_line(std::span<const double> h_grid, int L_small, int L_large,
                                 const std::function<BinderEvaluator(double h)>& factory,
                                 const LineOptions& options = {});

// Scan window used by build_critical_line at field h.
std::pair<double, double> crossing_window(double h);

std::string critical_line_csv(const CriticalLine& line);
nlohmann::json critical_line_json(const CriticalLine& line);
CriticalLine critical_line_from_json(const nlohmann::json& j);

enum class Phase { FM, PM, boundary };
std::string_view name(Phase p);

Phase classify(const ThermalPoint& point, const CriticalLine& line);

// ---- Dynamical critical points --------------------------------------------

struct DynamicalCriticalPoint {
    double h_c = 0.0;
    double h_lo = 0.0;
    double h_hi = 0.0;
    // 1-based, ascending in h_f
    int branch = 0;
    // true when T_f - T_c changes from negative (FM) to positive (PM) with
    // increasing h_f
    bool fm_to_pm = true;
};

// Sign changes of T_f(h_f) - T_c(h_f) along the interpolated curve, refined by
// bisection; bounds from the T_lo and T_hi interpolants.
std::vector<DynamicalCriticalPoint> dynamical_critical_points(const quench::TfCurve& curve, const CriticalLine& line);

// ---- Phase diagram ---------------------------------------------------------

struct PhaseCell {
    double T_i = 0.0;
    double h_f = 0.0;
    std::optional<Phase> phase;
    double T_f = 0.0;
    std::string error;
};

struct DynamicalPhaseDiagram {
    int L = 0;
    double h_i = 0.0;
    std::vector<double> T_i_grid;
    std::vector<double> h_f_grid;
    std::vector<PhaseCell> cells; // row-major in (T_i, h_f)
    std::vector<quench::TfCurve> curves;
    std::vector<std::vector<DynamicalCriticalPoint>> critical_points; // per T_i
};

struct DiagramOptions {
    quench::CurveOptions curve;
};

// Initial ensemble for a given T_i.
using InitialFactory = std::function<qmc::EstimateSet(double T_i)>;

// One T_f curve per T_i with classified cells. Throws InvalidArgument when a
// T_i is below 1/L.
DynamicalPhaseDiagram phase_diagram(int L, double J, double h_i, std::span<const double> T_i_grid,
                                    std::span<const double> h_f_grid, const CriticalLine& line,
                                    const InitialFactory& initial, const quench::EvaluatorFactory& evaluators,
                                    const DiagramOptions& options = {});

std::string phase_diagram_csv(const DynamicalPhaseDiagram& d);
std::string phase_boundary_csv(const DynamicalPhaseDiagram& d);
nlohmann::json phase_diagram_json(const DynamicalPhaseDiagram& d);

// ---- Finite-size scaling ---------------------------------------------------

struct FssPoint {
    int L = 0;
    double T_f = 0.0;
    double sigma = 0.0;
};

struct FssFit {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    // covariance of (a, b, c); infinite variance of b when unidentifiable
    std::array<std::array<double, 3>, 3> covariance{};
    double rmse = 0.0;
    double chi2 = 0.0;
    int iterations = 0;
    bool b_identifiable = true;
    bool accepted = false;

    double sigma_a() const { return std::sqrt(covariance[0][0]); }
    double sigma_b() const { return std::sqrt(covariance[1][1]); }
    double sigma_c() const { return std::sqrt(covariance[2][2]); }
};

// Weighted least squares fit of T_f(L) = a L^-b + c, multistart over
// b in {0.5, 1, 2}. Throws InvalidArgument for fewer than 4 distinct L and
// FitFailure when no start converges.
FssFit fss_fit(std::span<const FssPoint> points);

std::string fss_csv(const FssFit& fit, std::span<const FssPoint> points);
nlohmann::json fss_json(const FssFit& fit);

} // namespace tfim::phase
